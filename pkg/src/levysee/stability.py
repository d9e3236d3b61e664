"""Exponential stability in the p-th moment: the rate constant and measured decay."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coefficients import InitialLaw, SystemSpec
from .estimates import MonteCarloEstimate, path_seeds, reduce_estimates
from .hilbert import as_state, norm_pow
from .measure import sample_jump_path
from .parallel import BLOCK_SIZE, ordered_map
from .paths import build_batch
from .solver import DEFAULT_SETTINGS, SolverSettings, _direct_sweep


def _check(p: float, C: float, F: float) -> None:
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    if C < 0 or F < 0:
        raise ValueError("C and F must be non-negative")


def gamma_constant(p: float, alpha: float, M: float, C: float, F: float) -> float:
    """``p alpha + p M + p(p-1)/2 C + p(p-1)/2 ((2^{p-2} + 1) C + 2^{p-2} F)``.

    A negative value means solutions started from different initial data
    approach each other exponentially fast in the p-th moment.
    """
    _check(p, C, F)
    half = 0.5 * p * (p - 1.0)
    w = 2.0 ** (p - 2.0)
    return p * alpha + p * M + half * C + half * ((w + 1.0) * C + w * F)


def gamma_proof(p: float, M: float, C: float, F: float) -> float:
    """The same exponent as derived for a contraction semigroup (no ``p alpha`` term).

    Reported next to :func:`gamma_constant` as a diagnostic only.
    """
    return gamma_constant(p, 0.0, M, C, F)


@dataclass(frozen=True)
class HypothesisConstants:
    p: float
    alpha: float
    M: float
    C: float
    F: float

    def __post_init__(self):
        _check(self.p, self.C, self.F)

    @classmethod
    def from_system(cls, sys: SystemSpec) -> "HypothesisConstants":
        return cls(sys.p, sys.alpha, sys.M, sys.C, sys.F)

    @property
    def gamma(self) -> float:
        return gamma_constant(self.p, self.alpha, self.M, self.C, self.F)

    @property
    def gamma_proof(self) -> float:
        return gamma_proof(self.p, self.M, self.C, self.F)


@dataclass
class DecayCurve:
    times: np.ndarray
    moment: list[MonteCarloEstimate]
    fitted_rate: float
    fit_stderr: float
    gamma: float
    gamma_proof: float
    p: float

    @property
    def moment0(self) -> float:
        return self.moment[0].mean

    @property
    def means(self) -> np.ndarray:
        return np.array([m.mean for m in self.moment])

    @property
    def stderrs(self) -> np.ndarray:
        return np.array([m.stderr for m in self.moment])

    @property
    def paper_bound(self) -> np.ndarray:
        return np.exp(self.gamma * self.times) * self.moment0

    def within_bound(self, sigmas: float = 3.0) -> np.ndarray:
        return self.means <= self.paper_bound + sigmas * self.stderrs

    def rows(self) -> list[tuple[float, float, float, float]]:
        b = self.paper_bound
        return [(float(t), m.mean, m.stderr, float(bj)) for t, m, bj in zip(self.times, self.moment, b)]

    def to_dict(self) -> dict:
        finite = math.isfinite(self.fitted_rate)
        return {"p": self.p, "gamma": self.gamma, "gamma_proof": self.gamma_proof, "moment0": self.moment0,
                "fitted_rate": self.fitted_rate if finite else None,
                "fit_stderr": self.fit_stderr if math.isfinite(self.fit_stderr) else None,
                "bound_holds": bool(np.all(self.within_bound()))}


def _as_law(x, d: int) -> InitialLaw:
    return x if isinstance(x, InitialLaw) else InitialLaw(as_state(x, d))


def fit_log_rate(times: np.ndarray, moment: list[MonteCarloEstimate], start: float) -> tuple[float, float]:
    """Least-squares slope of ``log E||X_t - Y_t||^p`` over ``t >= start`` and its delta-method error."""
    sel = times >= start
    t = times[sel]
    m = np.array([e.mean for e in moment])[sel]
    se = np.array([e.stderr for e in moment])[sel]
    if np.any(m <= 0):
        return -math.inf, math.nan
    c = (t - t.mean()) / np.sum((t - t.mean()) ** 2)
    slope = float(c @ np.log(m))
    return slope, float(math.sqrt(np.sum((c * se / m) ** 2)))


def coupled_decay(sys: SystemSpec, X0, Y0, n_paths: int, seed: int, settings: SolverSettings = DEFAULT_SETTINGS,
                  workers: int | None = None) -> DecayCurve:
    """``E||X_t - Y_t||^p`` at the uniform grid times for two solutions driven by the same noise.

    Random initial laws are coupled by drawing the same uniform variate for
    both, so they must share the box radius; the initial difference is then
    deterministic and ``moment[0]`` is exact.
    """
    d, p, T = sys.dim, sys.p, sys.horizon
    lx, ly = _as_law(X0, d), _as_law(Y0, d)
    if lx.radius != ly.radius:
        raise ValueError("coupled initial laws must have the same box radius")
    m0 = float(norm_pow(lx.center - ly.center, p))
    seeds = path_seeds(seed, n_paths)
    chunks = [seeds[i:i + BLOCK_SIZE] for i in range(0, n_paths, BLOCK_SIZE)]

    def run(chunk):
        paths = [sample_jump_path(sys.nu, T, s) for s in chunk]
        b = build_batch(paths, settings.n_steps)
        u = np.zeros((len(chunk), d))
        if lx.radius > 0:
            for j, s in enumerate(chunk):
                u[j] = np.random.default_rng(np.random.SeedSequence([int(s), 1])).uniform(-1.0, 1.0, d)
        z0 = np.concatenate([lx.center + lx.radius * u, ly.center + ly.radius * u])
        two = lambda a: np.concatenate([a, a])
        X, _ = _direct_sweep(sys, two(b.times), two(b.jumps), two(b.marks), z0, settings)
        P = len(chunk)
        diff = b.at_uniform(X[:P]) - b.at_uniform(X[P:])
        return norm_pow(diff, p)                 # (P, n_steps + 1)

    parts = ordered_map(run, chunks, workers)
    times = np.linspace(0.0, T, settings.n_steps + 1)
    moment = [MonteCarloEstimate.exact(m0, n_paths, seed)]
    for j in range(1, times.size):
        moment.append(reduce_estimates([MonteCarloEstimate.from_samples(v[:, j], seed) for v in parts]))
    rate, rate_se = fit_log_rate(times, moment, 0.25 * T)
    hc = HypothesisConstants.from_system(sys)
    return DecayCurve(times, moment, rate, rate_se, hc.gamma, hc.gamma_proof, p)
