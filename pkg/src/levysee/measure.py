"""Finite-activity Poisson random measures and elementary integrals against them.

An :class:`IntensityMeasure` is ``nu = total_mass * law`` for a probability
law on marks in ``R^m``. Realizations are :class:`JumpPath` objects: the
finitely many atoms ``(tau_i, xi_i)`` of ``N`` on ``(0, T] x E``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .quadrature import composite_nodes, gauss_legendre

MARK_NODES = 32


def _nodes_per_piece(m: int) -> int:
    # keep tensor-product rules small in higher mark dimensions
    return {1: MARK_NODES, 2: 16}.get(m, 8)


def _abs_power_antiderivative(x, q):
    return np.sign(x) * np.abs(x) ** (q + 1) / (q + 1)


def _split_nodes(lo: float, hi: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    # split at 0 so |xi|**q is smooth on every piece
    breaks = [lo, 0.0, hi] if lo < 0.0 < hi else [lo, hi]
    return composite_nodes(breaks, n)


def _tensor(nodes_1d: list[np.ndarray], weights_1d: list[np.ndarray]):
    grids = np.meshgrid(*nodes_1d, indexing="ij")
    wgrids = np.meshgrid(*weights_1d, indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


class MarkLaw:
    """Probability law of a single mark; subclasses give closed-form moments."""

    dim: int
    n_uniforms: int

    def transform(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def abs_moment(self, q: float, coord: int = 0) -> float:
        raise NotImplementedError

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def second_moments(self) -> np.ndarray:
        """``E[xi xi^T]`` for independent coordinates."""
        mu = np.asarray(self.mean(), dtype=float)
        q = np.outer(mu, mu)
        q[np.diag_indices(self.dim)] = [self.abs_moment(2.0, j) for j in range(self.dim)]
        return q

    def norm_moment(self, q: float) -> float:
        if self.dim == 1:
            return self.abs_moment(q, 0)
        nodes, w = self.quadrature()
        return float(w @ np.linalg.norm(nodes, axis=-1) ** q)


@dataclass(frozen=True)
class AtomLaw(MarkLaw):
    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        probs = np.array(self.probs, dtype=float).reshape(-1)
        if atoms.shape[0] != probs.size or probs.size == 0:
            raise ValueError("need one weight per atom")
        if np.any(probs < 0) or not np.all(np.isfinite(atoms)):
            raise ValueError("atom weights must be non-negative and atoms finite")
        probs = probs / probs.sum()
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    n_uniforms = 1

    def transform(self, u):
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf, u[:, 0] * cdf[-1], side="right")
        return self.atoms[np.minimum(idx, self.probs.size - 1)]

    def quadrature(self):
        return self.atoms, self.probs

    def abs_moment(self, q, coord=0):
        return float(self.probs @ np.abs(self.atoms[:, coord]) ** q)

    def norm_moment(self, q):
        return float(self.probs @ np.linalg.norm(self.atoms, axis=-1) ** q)

    def mean(self):
        return self.probs @ self.atoms

    def second_moments(self):
        return np.einsum("k,ki,kj->ij", self.probs, self.atoms, self.atoms)


@dataclass(frozen=True)
class UniformBoxLaw(MarkLaw):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.array(self.lo, dtype=float))
        hi = np.atleast_1d(np.array(self.hi, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(hi <= lo):
            raise ValueError("uniform box needs hi > lo in every coordinate")
        object.__setattr__(self, "lo", lo.copy())
        object.__setattr__(self, "hi", hi.copy())

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def n_uniforms(self) -> int:
        return self.dim

    def transform(self, u):
        return self.lo + (self.hi - self.lo) * u

    def quadrature(self):
        ns, ws = [], []
        for a, b in zip(self.lo, self.hi):
            x, w = _split_nodes(a, b, _nodes_per_piece(self.dim))
            ns.append(x)
            ws.append(w / (b - a))
        return _tensor(ns, ws)

    def abs_moment(self, q, coord=0):
        a, b = self.lo[coord], self.hi[coord]
        return float((_abs_power_antiderivative(b, q) - _abs_power_antiderivative(a, q)) / (b - a))

    def mean(self):
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class TruncatedGaussianLaw(MarkLaw):
    """Independent centred normals with scale ``sigma``, each cut at ``cutoff*sigma``."""

    sigma: np.ndarray
    cutoff: float = 3.0

    def __post_init__(self):
        s = np.atleast_1d(np.array(self.sigma, dtype=float))
        if np.any(s <= 0) or self.cutoff <= 0:
            raise ValueError("sigma and cutoff must be positive")
        object.__setattr__(self, "sigma", s)

    @property
    def dim(self) -> int:
        return self.sigma.size

    @property
    def n_uniforms(self) -> int:
        return self.dim

    @property
    def _inside(self) -> float:
        return float(special.erf(self.cutoff / math.sqrt(2.0)))

    def transform(self, u):
        lo = special.ndtr(-self.cutoff)
        z = special.ndtri(lo + (1.0 - 2.0 * lo) * u)
        return self.sigma * np.clip(z, -self.cutoff, self.cutoff)

    def quadrature(self):
        ns, ws = [], []
        for s in self.sigma:
            x, w = _split_nodes(-self.cutoff, self.cutoff, _nodes_per_piece(self.dim))
            dens = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
            w = w * dens
            ns.append(s * x)
            ws.append(w / w.sum())
        return _tensor(ns, ws)

    def abs_moment(self, q, coord=0):
        c = self.cutoff
        a = 0.5 * (q + 1.0)
        trunc = 2.0 ** (q / 2.0) * special.gamma(a) / math.sqrt(math.pi) * special.gammainc(a, 0.5 * c * c)
        return float(self.sigma[coord] ** q * trunc / self._inside)

    def mean(self):
        return np.zeros(self.dim)


@dataclass(frozen=True)
class IntensityMeasure:
    """``nu(d xi) = total_mass * law(d xi)`` with ``0 < total_mass < inf``."""

    total_mass: float
    law: MarkLaw
    _quad: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        mass = float(self.total_mass)
        if not math.isfinite(mass) or mass <= 0.0:
            raise ValueError(f"total_mass must be finite and positive, got {self.total_mass!r}")
        object.__setattr__(self, "total_mass", mass)
        nodes, w = self.law.quadrature()
        object.__setattr__(self, "_quad", (np.asarray(nodes, float), mass * np.asarray(w, float)))

    @property
    def mark_dim(self) -> int:
        return self.law.dim

    def sample_marks(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random((n, self.law.n_uniforms))
        return self.law.transform(u).reshape(n, self.mark_dim)

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and nu-weights (summing to ``total_mass``)."""
        return self._quad

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Deterministic ``int_E fn(xi) nu(d xi)``; ``fn`` maps ``(q, m)`` marks to ``(q, ...)``."""
        nodes, w = self._quad
        vals = np.asarray(fn(nodes), dtype=float)
        return np.tensordot(w, vals, axes=(0, 0))

    def moment(self, q: float) -> float:
        """``int ||xi||**q nu(d xi)``."""
        return self.total_mass * self.law.norm_moment(q)

    def coord_moment(self, q: float, coord: int = 0) -> float:
        """``int |xi_coord|**q nu(d xi)`` in closed form."""
        return self.total_mass * self.law.abs_moment(q, coord)

    def mean(self) -> np.ndarray:
        """``int xi nu(d xi)``."""
        return self.total_mass * np.asarray(self.law.mean(), dtype=float)

    def second_moments(self) -> np.ndarray:
        """``int xi xi^T nu(d xi)``."""
        return self.total_mass * self.law.second_moments()


def atoms(points, weights) -> IntensityMeasure:
    """``nu = sum_i weights[i] * delta(points[i])``; weights are nu-masses."""
    w = np.asarray(weights, dtype=float)
    return IntensityMeasure(float(w.sum()), AtomLaw(points, w))


def uniform_box(rate: float, lo, hi) -> IntensityMeasure:
    return IntensityMeasure(rate, UniformBoxLaw(lo, hi))


def truncated_gaussian(rate: float, sigma, cutoff: float = 3.0) -> IntensityMeasure:
    return IntensityMeasure(rate, TruncatedGaussianLaw(sigma, cutoff))


@dataclass(frozen=True)
class JumpPath:
    """Atoms of one realization of ``N`` on ``(0, horizon]``."""

    horizon: float
    times: np.ndarray
    marks: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        mk = np.asarray(self.marks, dtype=float)
        mk = mk.reshape(t.size, mk.shape[-1] if mk.ndim > 1 else (mk.size // t.size if t.size else 1))
        if t.size and (t[0] <= 0.0 or t[-1] > self.horizon or np.any(np.diff(t) <= 0)):
            raise ValueError("jump times must be strictly increasing in (0, horizon]")
        t.setflags(write=False)
        mk.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "marks", mk)

    def __len__(self) -> int:
        return self.times.size

    @property
    def events(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.times.tolist(), self.marks))

    def upto(self, t_end: float) -> slice:
        return slice(0, int(np.searchsorted(self.times, t_end, side="right")))


def sample_jump_path(nu: IntensityMeasure, T: float, seed: int) -> JumpPath:
    """Draw a Poisson(nu(E) T) number of i.i.d. uniform times with i.i.d. marks."""
    if not T > 0:
        raise ValueError("horizon must be positive")
    rng = np.random.default_rng(seed)
    count = int(rng.poisson(nu.total_mass * T))
    # 1 - U lies in (0, 1]
    times = np.sort(T * (1.0 - rng.random(count)))
    marks = nu.sample_marks(rng, count)
    return JumpPath(horizon=float(T), times=times, marks=marks, seed=int(seed))


def merge_jump_paths(a: JumpPath, b: JumpPath) -> JumpPath:
    """Superposition of two independent realizations on the same horizon."""
    if a.horizon != b.horizon or a.marks.shape[1] != b.marks.shape[1]:
        raise ValueError("can only superpose paths with equal horizon and mark dimension")
    t = np.concatenate([a.times, b.times])
    order = np.argsort(t, kind="stable")
    return JumpPath(a.horizon, t[order], np.concatenate([a.marks, b.marks])[order], seed=None)


def _check_t_end(path: JumpPath, t_end: float) -> None:
    if not 0.0 <= t_end <= path.horizon:
        raise ValueError(f"t_end={t_end} outside [0, {path.horizon}]")


def _as_vectors(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return v[..., None] if v.ndim == 1 else v


def compensator_integral(nu: IntensityMeasure, integrand, t0: float, t1: float, breaks=()) -> np.ndarray:
    """``int_{t0}^{t1} int_E integrand(s, xi) nu(d xi) ds``.

    Gauss-Legendre in time on each piece between ``breaks``; the mark
    integral uses the measure's deterministic quadrature.
    """
    pts = np.unique(np.concatenate([[t0, t1], np.asarray(breaks, float)]))
    pts = pts[(pts >= t0) & (pts <= t1)]
    s, ws = composite_nodes(pts)
    if s.size == 0:
        sample = _as_vectors(integrand(np.zeros(1), nu.quadrature()[0][:1]))
        return np.zeros(sample.shape[-1])
    xi, wx = nu.quadrature()
    vals = _as_vectors(integrand(s[:, None], xi[None, :, :]))
    return np.einsum("k,q,kqd->d", ws, wx, vals)


def compensated_integral(path: JumpPath, nu: IntensityMeasure, integrand, t_end: float) -> np.ndarray:
    """``int_0^t_end int_E integrand(s, xi) Ntilde(ds, d xi)`` for a state-free integrand.

    ``integrand(t, xi)`` must broadcast over leading axes and return vectors.
    """
    _check_t_end(path, t_end)
    sl = path.upto(t_end)
    comp = compensator_integral(nu, integrand, 0.0, t_end, path.times[sl])
    if path.times[sl].size == 0:
        return -comp
    jumps = _as_vectors(integrand(path.times[sl], path.marks[sl]))
    return jumps.sum(axis=0) - comp


def quadratic_variation(path: JumpPath, integrand, t_end: float) -> float:
    """``[M](t_end) = sum_{tau_i <= t_end} ||integrand(tau_i, xi_i)||**2``."""
    _check_t_end(path, t_end)
    sl = path.upto(t_end)
    if path.times[sl].size == 0:
        return 0.0
    jumps = _as_vectors(integrand(path.times[sl], path.marks[sl]))
    return float(np.sum(jumps * jumps))


def continuous_quadratic_variation(path: JumpPath, integrand, t_end: float) -> float:
    """``[M]^c`` of a pure-jump martingale, which is identically zero."""
    _check_t_end(path, t_end)
    return 0.0
