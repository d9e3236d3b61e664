"""Jump-adapted time grids and cadlag trajectories stored on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .measure import JumpPath

DEFAULT_STEPS = 512


class GridError(ValueError):
    pass


def jump_adapted_grid(T: float, n_steps: int = DEFAULT_STEPS, jump_times=()) -> np.ndarray:
    """``n_steps`` uniform intervals on ``[0, T]`` refined by every jump time."""
    if n_steps < 1:
        raise GridError("need at least one uniform step")
    return np.union1d(np.linspace(0.0, T, n_steps + 1), np.asarray(jump_times, dtype=float))


def check_grid(times: np.ndarray, path: JumpPath | None = None) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise GridError("grid must start at 0 and be strictly increasing")
    if path is not None:
        if times[-1] != path.horizon:
            raise GridError("grid must end at the path horizon")
        missing = np.setdiff1d(path.times, times)
        if missing.size:
            raise GridError(f"grid is missing jump time(s) {missing[:3].tolist()}")
    return times


def jump_indices(times: np.ndarray, path: JumpPath) -> np.ndarray:
    return np.searchsorted(times, path.times)


@dataclass
class PathGrid:
    """Cadlag trajectory: right values and left limits at each grid time.

    ``left_values[i] == values[i]`` wherever ``jumps[i]`` is false.
    """

    times: np.ndarray
    values: np.ndarray
    left_values: np.ndarray
    jumps: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    @property
    def jump_sizes(self) -> np.ndarray:
        return self.values[self.jumps] - self.left_values[self.jumps]

    def at(self, t: float) -> np.ndarray:
        """Right value at a grid time."""
        i = int(np.searchsorted(self.times, t))
        if i >= self.times.size or self.times[i] != t:
            raise GridError(f"{t} is not a grid time")
        return self.values[i]

    def sup_norm(self) -> float:
        from .hilbert import norm

        return float(max(norm(self.values).max(), norm(self.left_values).max()))


@dataclass
class BatchGrid:
    """Per-path jump-adapted grids padded to a common length.

    Padding repeats the horizon, giving zero-length steps that every scheme
    treats as the identity.
    """

    times: np.ndarray       # (P, L)
    jumps: np.ndarray       # (P, L) bool
    marks: np.ndarray       # (P, L, m)
    lengths: np.ndarray     # (P,)
    uniform: np.ndarray     # (P, n_steps + 1) indices of the uniform points
    horizon: float
    paths: Sequence[JumpPath]

    @property
    def n_paths(self) -> int:
        return self.times.shape[0]

    @property
    def n_points(self) -> int:
        return self.times.shape[1]

    @property
    def uniform_times(self) -> np.ndarray:
        return self.times[0, self.uniform[0]]

    def unpad(self, values: np.ndarray, left: np.ndarray) -> list[PathGrid]:
        out = []
        for j in range(self.n_paths):
            n = self.lengths[j]
            out.append(PathGrid(self.times[j, :n].copy(), values[j, :n].copy(),
                                left[j, :n].copy(), self.jumps[j, :n].copy()))
        return out

    def at_uniform(self, values: np.ndarray) -> np.ndarray:
        """Values at the shared uniform times, shape ``(P, n_steps + 1, ...)``."""
        return np.take_along_axis(values, self.uniform.reshape(self.uniform.shape + (1,) * (values.ndim - 2)), axis=1)


def build_batch(paths: Sequence[JumpPath], n_steps: int = DEFAULT_STEPS) -> BatchGrid:
    if not paths:
        raise GridError("need at least one path")
    T = paths[0].horizon
    m = paths[0].marks.shape[1]
    uni = np.linspace(0.0, T, n_steps + 1)
    grids = [jump_adapted_grid(T, n_steps, p.times) for p in paths]
    L = max(g.size for g in grids)
    P = len(paths)
    times = np.full((P, L), T)
    jumps = np.zeros((P, L), dtype=bool)
    marks = np.zeros((P, L, m))
    lengths = np.empty(P, dtype=int)
    uniform = np.empty((P, n_steps + 1), dtype=int)
    for j, (g, path) in enumerate(zip(grids, paths)):
        if path.horizon != T:
            raise GridError("all paths in a batch must share the horizon")
        lengths[j] = g.size
        times[j, : g.size] = g
        idx = np.searchsorted(g, path.times)
        jumps[j, idx] = True
        marks[j, idx] = path.marks
        uniform[j] = np.searchsorted(g, uni)
    return BatchGrid(times, jumps, marks, lengths, uniform, T, list(paths))
