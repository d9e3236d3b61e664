"""Monte Carlo estimates with an associative merge, plus per-path seeding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class IncompatibleEstimates(ValueError):
    pass


@dataclass(frozen=True)
class MonteCarloEstimate:
    """Sample mean with its standard error.

    Internally carries ``(n, mean, m2)`` where ``m2`` is the sum of squared
    deviations, so two estimates merge exactly as if the samples had been
    pooled (Chan et al. pairwise update).
    """

    mean: float
    stderr: float
    n: int
    seed: int | None = None
    m2: float = 0.0

    @classmethod
    def empty(cls, seed: int | None = None) -> "MonteCarloEstimate":
        return cls(mean=0.0, stderr=0.0, n=0, seed=seed, m2=0.0)

    @classmethod
    def from_samples(cls, samples, seed: int | None = None) -> "MonteCarloEstimate":
        x = np.asarray(samples, dtype=float).ravel()
        n = x.size
        if n == 0:
            return cls.empty(seed)
        mean = float(np.mean(x))
        m2 = float(np.sum((x - mean) ** 2))
        return cls(mean=mean, stderr=_stderr(n, m2), n=n, seed=seed, m2=m2)

    @classmethod
    def exact(cls, value: float, n: int = 1, seed: int | None = None) -> "MonteCarloEstimate":
        """A deterministic quantity dressed as an estimate (zero spread)."""
        return cls(mean=float(value), stderr=0.0, n=n, seed=seed, m2=0.0)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    def upper(self, sigmas: float = 3.0) -> float:
        return self.mean + sigmas * self.stderr

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n, "seed": self.seed}


def _stderr(n: int, m2: float) -> float:
    if n < 2:
        return 0.0
    return math.sqrt(max(m2, 0.0) / (n - 1) / n)


def merge_estimates(a: MonteCarloEstimate, b: MonteCarloEstimate) -> MonteCarloEstimate:
    """Pool two estimates. Zero-count estimates are identities."""
    if a.seed is not None and b.seed is not None and a.seed != b.seed:
        raise IncompatibleEstimates(f"cannot merge estimates from seeds {a.seed} and {b.seed}")
    seed = a.seed if a.seed is not None else b.seed
    if b.n == 0:
        return MonteCarloEstimate(a.mean, a.stderr, a.n, seed, a.m2)
    if a.n == 0:
        return MonteCarloEstimate(b.mean, b.stderr, b.n, seed, b.m2)
    n = a.n + b.n
    delta = b.mean - a.mean
    mean = a.mean + delta * b.n / n
    m2 = a.m2 + b.m2 + delta * delta * a.n * b.n / n
    return MonteCarloEstimate(mean=mean, stderr=_stderr(n, m2), n=n, seed=seed, m2=m2)


def reduce_estimates(parts: Sequence[MonteCarloEstimate]) -> MonteCarloEstimate:
    """Merge along a fixed balanced binary tree over ``parts`` in order.

    The tree shape depends only on ``len(parts)``, so the result is
    reproducible no matter which worker produced which part.
    """
    parts = list(parts)
    if not parts:
        return MonteCarloEstimate.empty()
    while len(parts) > 1:
        nxt = [merge_estimates(parts[i], parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def path_seed(seed: int, index: int) -> int:
    """64-bit seed for path ``index`` of an experiment keyed by ``seed``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def path_seeds(seed: int, n: int, offset: int = 0) -> list[int]:
    return [path_seed(seed, offset + j) for j in range(n)]


def blocks(n: int, size: int) -> Iterable[range]:
    for start in range(0, n, size):
        yield range(start, min(n, start + size))
