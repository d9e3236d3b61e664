"""Finite-dimensional Galerkin stand-in for the state space and its semigroup.

States are plain ``numpy`` arrays whose last axis has length ``d``; leading
axes are batch axes (paths, grid points, samples). The generator is diagonal
in the Galerkin basis, so ``S_t`` acts coordinatewise as ``exp(lambda_i t)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def as_state(coords, dim: int | None = None) -> np.ndarray:
    """Validate and copy ``coords`` into a float state vector."""
    x = np.array(coords, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if dim is not None and x.shape[-1] != dim:
        raise ValueError(f"state has dimension {x.shape[-1]}, expected {dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("state vector has non-finite entries")
    return x


def norm(x) -> np.ndarray:
    """Euclidean norm over the last axis."""
    return np.sqrt(np.sum(np.square(x), axis=-1))


def inner(x, y) -> np.ndarray:
    return np.sum(np.multiply(x, y), axis=-1)


def norm_pow(x, q: float) -> np.ndarray:
    """``||x||**q`` with the convention ``||0||**0 == 1``."""
    n = norm(x)
    if q == 0:
        return np.ones_like(n)
    return n**q


@dataclass(frozen=True)
class SpectralSemigroup:
    """``S_t = exp(tA)`` for ``A = diag(eigenvalues)``.

    ``alpha`` is the growth bound ``max(eigenvalues)``, so that
    ``||S_t|| <= exp(alpha t)`` holds with equality.
    """

    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=float).reshape(-1)
        if lam.size == 0:
            raise ValueError("semigroup needs at least one eigenvalue")
        if not np.all(np.isfinite(lam)):
            raise ValueError("eigenvalues must be finite")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def alpha(self) -> float:
        return float(np.max(self.eigenvalues))

    @property
    def is_contraction(self) -> bool:
        return self.alpha <= 0.0

    def factor(self, t) -> np.ndarray:
        """Diagonal of ``S_t``; ``t`` may be an array, giving shape ``t.shape + (d,)``."""
        t = np.asarray(t, dtype=float)
        return np.exp(t[..., None] * self.eigenvalues)

    def apply(self, t, x) -> np.ndarray:
        return semigroup_apply(self, t, x)

    def shifted(self, shift: float) -> "SpectralSemigroup":
        """Semigroup of ``A - shift*I``, i.e. ``exp(-shift t) S_t``."""
        return SpectralSemigroup(self.eigenvalues - shift)


def semigroup_apply(sg: SpectralSemigroup, t, x) -> np.ndarray:
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("semigroup time must be non-negative")
    return sg.factor(t_arr) * np.asarray(x, dtype=float)
