"""Mild solutions by Picard iteration and by a direct jump-adapted scheme.

Both solvers step with the integrating-factor (Lawson) trapezoid rule: the
linear part is the exact flow ``exp(lambda h)`` and the nonlinear drift is
averaged between the two ends of each interval. Jumps are applied at grid
points, the compensator enters the drift. The rule commutes exactly with the
``exp(-a t)`` rescaling, so rescaled and original solutions agree to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coefficients import SystemSpec
from .convolution import Decomposition, ResidualSeries, ito_pth_residual, stochastic_convolution
from .estimates import MonteCarloEstimate, path_seeds, reduce_estimates
from .hilbert import as_state, norm, norm_pow
from .measure import JumpPath, sample_jump_path
from .parallel import BLOCK_SIZE, ordered_map
from .paths import DEFAULT_STEPS, BatchGrid, GridError, PathGrid, build_batch, check_grid


class SkeletonDidNotConverge(RuntimeError):
    """The implicit drift equation of a step did not converge; the step is too large."""


class StepRejected(RuntimeError):
    """The drift correction kept failing to contract after the maximum number of halvings."""


class PicardDiverged(RuntimeError):
    """Successive Picard differences grew three times in a row."""


class SkeletonCheckFailed(AssertionError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    n_steps: int = DEFAULT_STEPS
    tol: float = 1e-13
    max_iter: int = 50
    max_halvings: int = 20

    def __post_init__(self):
        if self.n_steps < 1 or self.max_iter < 1 or self.max_halvings < 0:
            raise ValueError("solver settings must be positive")
        if not self.tol > 0:
            raise ValueError("solver tolerance must be positive")


DEFAULT_SETTINGS = SolverSettings()


def initial_states(sys: SystemSpec, seeds: Sequence[int]) -> np.ndarray:
    """One initial state per path; random laws draw from a stream separate from the noise."""
    d = sys.dim
    if sys.initial.is_point:
        return np.broadcast_to(sys.initial.center, (len(seeds), d)).copy()
    out = np.empty((len(seeds), d))
    for j, s in enumerate(seeds):
        rng = np.random.default_rng(np.random.SeedSequence([int(s), 1]))
        out[j] = sys.initial.sample(rng, 1)[0]
    return out


def _implicit_solve(drift, t1, R, half, settings: SolverSettings):
    """Solve ``Y - half * f(t1, Y) = R`` row-wise (``half`` has one entry per row)."""
    hc = half[:, None]
    Y = R + hc * drift(t1, R)
    for _ in range(settings.max_iter):
        fY = drift(t1, Y)
        if drift.jac_diag is not None:
            step = (Y - hc * fY - R) / (1.0 - hc * drift.jac_diag(t1, Y))
            Y_new = Y - step
        else:
            Y_new = R + hc * fY
        if not np.all(np.isfinite(Y_new)):
            break
        done = np.abs(Y_new - Y) <= settings.tol * (1.0 + np.abs(Y_new))
        Y = Y_new
        if np.all(done):
            return Y
    raise SkeletonDidNotConverge(
        f"implicit drift step did not converge in {settings.max_iter} iterations; reduce the step size")


def _skeleton_sweep(sys: SystemSpec, times, X0, Vr, Vl, settings: SolverSettings):
    """Batched skeleton ``X = S X0 + int S f(X) ds + V`` on padded grids ``times`` (P, L)."""
    lam = sys.semigroup.eigenvalues
    P, L = times.shape
    X = np.empty(Vr.shape)
    XL = np.empty(Vr.shape)
    X[:, 0] = X0 + Vr[:, 0]
    XL[:, 0] = X0 + Vl[:, 0]
    f_i = sys.drift(times[:, 0], X[:, 0])
    for i in range(L - 1):
        t1 = times[:, i + 1]
        h = t1 - times[:, i]
        E = np.exp(h[:, None] * lam)
        R = E * (X[:, i] + 0.5 * h[:, None] * f_i) + Vl[:, i + 1] - E * Vr[:, i]
        Y = _implicit_solve(sys.drift, t1, R, 0.5 * h, settings)
        XL[:, i + 1] = Y
        X[:, i + 1] = Y + (Vr[:, i + 1] - Vl[:, i + 1])
        f_i = sys.drift(t1, X[:, i + 1])
    return X, XL


def _noise_sweep(sys: SystemSpec, times, jumps, marks, Xr, Xl):
    """Compensated jump convolution with the integrand frozen at a previous iterate."""
    lam = sys.semigroup.eigenvalues
    P, L, d = Xr.shape
    kbar_r = sys.jump.mean(sys.nu, times, Xr)
    kbar_l = sys.jump.mean(sys.nu, times, Xl)
    sizes = np.zeros((P, L, d))
    if jumps.any():
        sizes[jumps] = sys.jump(times[jumps], marks[jumps], Xl[jumps])
    Vr = np.empty((P, L, d))
    Vl = np.empty((P, L, d))
    Vr[:, 0] = Vl[:, 0] = 0.0
    h = np.diff(times, axis=1)[..., None]
    E = np.exp(h * lam)
    for i in range(L - 1):
        Vl[:, i + 1] = E[:, i] * (Vr[:, i] - 0.5 * h[:, i] * kbar_r[:, i]) - 0.5 * h[:, i] * kbar_l[:, i + 1]
        Vr[:, i + 1] = Vl[:, i + 1] + sizes[:, i + 1]
    return Vr, Vl


def skeleton_residual(sys: SystemSpec, X: PathGrid, V: PathGrid, X0) -> float:
    """Sup-norm defect of the discrete fixed-point equation, by explicit convolution sums.

    Independent of the recursion used by the solver: every grid value is
    rebuilt as ``S_t X0 + sum_i S_{t - s} (trapezoid weight) f + V``.
    """
    lam = sys.semigroup.eigenvalues
    t = X.times
    x0 = as_state(X0, sys.dim)
    h = np.diff(t)
    f_r = sys.drift(t[:-1], X.values[:-1])
    f_l = sys.drift(t[1:], X.left_values[1:])
    lag0 = t[:, None] - t[None, :-1]
    lag1 = t[:, None] - t[None, 1:]
    mask = (lag1 >= 0)[..., None]
    w0 = np.where(mask, np.exp(np.maximum(lag0, 0.0)[..., None] * lam), 0.0) * (0.5 * h)[None, :, None]
    w1 = np.where(mask, np.exp(np.maximum(lag1, 0.0)[..., None] * lam), 0.0) * (0.5 * h)[None, :, None]
    conv = np.sum(w0 * f_r[None] + w1 * f_l[None], axis=1)
    left = np.exp(t[:, None] * lam) * x0 + conv + V.left_values
    right = left + (V.values - V.left_values)
    scale = 1.0 + max(float(np.max(np.abs(X.values))), float(np.max(np.abs(X.left_values))))
    return max(float(np.max(np.abs(X.left_values - left))), float(np.max(np.abs(X.values - right)))) / scale


@dataclass
class AprioriCheck:
    lhs: np.ndarray
    bound: np.ndarray
    bound_initial_norm: np.ndarray   # same, with ||X0|| in place of ||S_t X0||

    @property
    def holds(self) -> bool:
        return bool(np.all(self.lhs <= self.bound * (1.0 + 1e-9) + 1e-12))

    @property
    def holds_initial_norm(self) -> bool:
        return bool(np.all(self.lhs <= self.bound_initial_norm * (1.0 + 1e-9) + 1e-12))


def skeleton_apriori_bound(sys: SystemSpec, X: PathGrid, V: PathGrid, X0) -> AprioriCheck:
    """``||X(t)|| <= ||S_t X0|| + ||V(t)|| + int_0^t e^{(alpha+M)(t-s)} ||f(s, S_s X0 + V(s))|| ds``.

    The integral uses the trapezoid rule on each grid interval with the right
    value at the left end and the left limit at the right end.
    """
    lam = sys.semigroup.eigenvalues
    t = X.times
    x0 = as_state(X0, sys.dim)
    flow = np.exp(t[:, None] * lam) * x0
    g_r = norm(sys.drift(t, flow + V.values))
    g_l = norm(sys.drift(t, flow + V.left_values))
    rate = sys.alpha + sys.M
    h = np.diff(t)
    I = np.zeros(t.size)
    for i in range(h.size):
        e = math.exp(rate * h[i])
        I[i + 1] = e * I[i] + 0.5 * h[i] * (e * g_r[i] + g_l[i + 1])
    sv = norm(flow)
    lhs = np.maximum(norm(X.values), norm(X.left_values))
    vmax = np.maximum(norm(V.values), norm(V.left_values))
    return AprioriCheck(lhs, sv + vmax + I, float(norm(x0)) + vmax + I)


def solve_deterministic_skeleton(sys: SystemSpec, V: PathGrid, X0, settings: SolverSettings = DEFAULT_SETTINGS,
                                 check: bool = True) -> PathGrid:
    """Solve ``X_t = S_t X0 + int_0^t S_{t-s} f(s, X_s) ds + V(t)`` on the grid of ``V``.

    With ``check`` the discrete fixed-point defect must be below 1e-10 and
    the a priori growth bound must hold at every grid point.
    """
    times = check_grid(V.times)
    x0 = as_state(X0, sys.dim)
    X, XL = _skeleton_sweep(sys, times[None], x0[None], V.values[None], V.left_values[None], settings)
    out = PathGrid(times, X[0], XL[0], V.jumps.copy())
    if check:
        res = skeleton_residual(sys, out, V, x0)
        if res > 1e-10:
            raise SkeletonCheckFailed(f"skeleton fixed-point defect {res:.3e} exceeds 1e-10")
        if not skeleton_apriori_bound(sys, out, V, x0).holds:
            raise SkeletonCheckFailed("a priori growth bound of the skeleton equation violated")
    return out


# ----------------------------------------------------------------- Picard


@dataclass
class PicardTrace:
    """``h[n]`` estimates ``E||X^{n+1}_T - X^n_T||^p``; ``bound[n] = C0 C1^n T^n / n!``."""

    n_iters: int
    h: list[MonteCarloEstimate]
    bound: np.ndarray
    C0: float
    C1: float
    beta: float
    gamma_lemma: float
    p: float
    horizon: float
    h_sup: list[MonteCarloEstimate] = field(default_factory=list)
    C0_estimate: MonteCarloEstimate | None = None
    stopped_early: bool = False

    @property
    def h_mean(self) -> np.ndarray:
        return np.array([e.mean for e in self.h])

    @property
    def h_stderr(self) -> np.ndarray:
        return np.array([e.stderr for e in self.h])

    def within_bound(self, sigmas: float = 3.0) -> np.ndarray:
        return self.h_mean <= self.bound[: len(self.h)] + sigmas * self.h_stderr

    def rows(self) -> list[tuple[int, float, float]]:
        return [(n, e.mean, float(self.bound[n])) for n, e in enumerate(self.h)]

    def to_dict(self) -> dict:
        return {"n_iters": self.n_iters, "p": self.p, "T": self.horizon, "C0": self.C0, "C1": self.C1,
                "beta": self.beta, "gamma_lemma": self.gamma_lemma, "stopped_early": self.stopped_early,
                "h": [e.to_dict() for e in self.h], "h_sup": [e.to_dict() for e in self.h_sup],
                "bound": [float(b) for b in self.bound]}


def picard_constants(sys: SystemSpec) -> tuple[float, float, float]:
    """``(beta, gamma_lemma, C1)`` of the iteration rate, from declared constants."""
    p, M, C, F = sys.p, sys.M, sys.C, sys.F
    beta = p * M + 0.5 * (p - 1.0) * (p - 2.0) * C
    gamma_lemma = 0.5 * (p - 1.0) * (2.0 * C + p * F)
    return beta, gamma_lemma, gamma_lemma * math.exp(beta * sys.horizon)


def picard_bound(C0: float, C1: float, T: float, n_terms: int, growth: float = 1.0) -> np.ndarray:
    n = np.arange(n_terms)
    logs = n * math.log(C1 * T) if C1 * T > 0 else np.where(n == 0, 0.0, -np.inf)
    return growth * C0 * np.exp(logs - np.array([math.lgamma(k + 1.0) for k in n]))


@dataclass
class _PicardBlock:
    batch: BatchGrid
    X0: np.ndarray
    prev: tuple[np.ndarray, np.ndarray]
    cur: tuple[np.ndarray, np.ndarray] | None = None


def picard_solve(sys: SystemSpec, n_iters: int, n_paths: int, seed: int, settings: SolverSettings = DEFAULT_SETTINGS,
                 tol: float = 0.0, iteration_seed: int | None = None, start_perturbation: float = 0.0,
                 workers: int | None = None) -> tuple[list[PathGrid], PicardTrace]:
    """Picard iterates ``X^0 = S_t X0``, ``X^n = skeleton(V^n)`` with ``V^n`` the
    compensated jump convolution of ``k(s, xi, X^{n-1}_{s-})``.

    Each Monte Carlo path keeps one jump realization for all iterates.
    ``n_iters`` iterates ``X^1 .. X^N`` are computed (fewer if
    ``h[n] < tol * h[0]``). A nonzero ``start_perturbation`` displaces ``X^0``
    by a random multiple of ``S_t z`` drawn from ``iteration_seed``.
    """
    if n_iters < 1 or n_paths < 1:
        raise ValueError("n_iters and n_paths must be positive")
    p, T = sys.p, sys.horizon
    lam = sys.semigroup.eigenvalues
    seeds = path_seeds(seed, n_paths)
    chunks = [seeds[i:i + BLOCK_SIZE] for i in range(0, n_paths, BLOCK_SIZE)]

    def start(chunk_seeds):
        paths = [sample_jump_path(sys.nu, T, s) for s in chunk_seeds]
        batch = build_batch(paths, settings.n_steps)
        X0 = initial_states(sys, chunk_seeds)
        Xr = np.exp(batch.times[..., None] * lam) * X0[:, None, :]
        if start_perturbation:
            rng = np.random.default_rng(np.random.SeedSequence([int(iteration_seed or 0), int(chunk_seeds[0])]))
            z = rng.standard_normal(X0.shape) * start_perturbation
            Xr = Xr + np.exp(batch.times[..., None] * lam) * z[:, None, :]
        return _PicardBlock(batch, X0, (Xr, Xr.copy()))

    blocks_ = ordered_map(start, chunks, workers)

    def advance(b: _PicardBlock):
        Vr, Vl = _noise_sweep(sys, b.batch.times, b.batch.jumps, b.batch.marks, *b.prev)
        b.cur = _skeleton_sweep(sys, b.batch.times, b.X0, Vr, Vl, settings)
        dT = b.cur[0][:, -1] - b.prev[0][:, -1]
        diff_sup = np.maximum(norm(b.cur[0] - b.prev[0]), norm(b.cur[1] - b.prev[1])).max(axis=1)
        return norm_pow(dT, p), diff_sup**p

    h: list[MonteCarloEstimate] = []
    h_sup: list[MonteCarloEstimate] = []
    C0_est = None
    stopped = False
    for n in range(n_iters):
        out = ordered_map(advance, blocks_, workers)
        h.append(reduce_estimates([MonteCarloEstimate.from_samples(a, seed) for a, _ in out]))
        h_sup.append(reduce_estimates([MonteCarloEstimate.from_samples(b_, seed) for _, b_ in out]))
        if n == 0:
            sups = []
            for b in blocks_:
                s1 = np.maximum(norm_pow(b.cur[0], p), norm_pow(b.cur[1], p))
                s0 = np.maximum(norm_pow(b.prev[0], p), norm_pow(b.prev[1], p))
                sups.append(MonteCarloEstimate.from_samples(2.0**p * np.max(s1 + s0, axis=1), seed))
            C0_est = reduce_estimates(sups)
        for b in blocks_:
            b.prev, b.cur = b.cur, None
        if len(h) >= 4 and all(h[-j].mean > h[-j - 1].mean > 0 for j in (1, 2, 3)):
            raise PicardDiverged(f"Picard differences increased three times in a row (n = {n})")
        if n + 1 < n_iters and h[-1].mean < tol * h[0].mean:
            stopped = True
            break

    beta, gamma_lemma, C1 = picard_constants(sys)
    growth = math.exp(p * max(sys.alpha, 0.0) * T)
    bound = picard_bound(C0_est.mean, C1, T, len(h), growth)
    trace = PicardTrace(len(h), h, bound, C0_est.mean, C1, beta, gamma_lemma, p, T, h_sup, C0_est, stopped)
    solution = []
    for b in blocks_:
        solution.extend(b.batch.unpad(*b.prev))
    return solution, trace


# ----------------------------------------------------------------- direct scheme


def _heun(sys: SystemSpec, t0, t1, X, g0=None):
    """One Lawson-Heun step; returns predictor, corrected value and a second correction."""
    lam = sys.semigroup.eigenvalues
    h = (t1 - t0)[:, None]
    E = np.exp(h * lam)
    if g0 is None:
        g0 = sys.generator_drift(t0, X)
    base = E * (X + 0.5 * h * g0)
    Xs = E * (X + h * g0)
    Xc = base + 0.5 * h * sys.generator_drift(t1, Xs)
    Xcc = base + 0.5 * h * sys.generator_drift(t1, Xc)
    return Xs, Xc, Xcc


def _contracts(Xs, Xc, Xcc):
    return norm(Xcc - Xc) <= 0.5 * norm(Xc - Xs) + 1e-13 * (1.0 + norm(Xc))


def _substep(sys: SystemSpec, t0, t1, X, settings: SolverSettings):
    for k in range(1, settings.max_halvings + 1):
        n = 2**k
        Y = X.copy()
        ok = True
        for j in range(n):
            a = t0 + (t1 - t0) * (j / n)
            b = t0 + (t1 - t0) * ((j + 1) / n)
            Xs, Xc, Xcc = _heun(sys, a, b, Y)
            if not np.all(_contracts(Xs, Xc, Xcc)):
                ok = False
                break
            Y = Xc
        if ok:
            return Y
    raise StepRejected(f"drift correction failed to contract after {settings.max_halvings} halvings")


def _direct_sweep(sys: SystemSpec, times, jumps, marks, X0, settings: SolverSettings):
    P, L = times.shape
    X = np.empty((P, L, sys.dim))
    XL = np.empty((P, L, sys.dim))
    X[:, 0] = XL[:, 0] = X0
    cur = X0
    for i in range(L - 1):
        t0, t1 = times[:, i], times[:, i + 1]
        Xs, Xc, Xcc = _heun(sys, t0, t1, cur)
        bad = ~_contracts(Xs, Xc, Xcc)
        if np.any(bad):
            Xc[bad] = _substep(sys, t0[bad], t1[bad], cur[bad], settings)
        XL[:, i + 1] = Xc
        cur = Xc.copy()
        jm = jumps[:, i + 1]
        if np.any(jm):
            cur[jm] = Xc[jm] + sys.jump(t1[jm], marks[jm, i + 1], Xc[jm])
        X[:, i + 1] = cur
    return X, XL


def direct_scheme(sys: SystemSpec, path: JumpPath, grid, X0=None, settings: SolverSettings = DEFAULT_SETTINGS) -> PathGrid:
    """Jump-adapted Lawson-Heun scheme on ``grid`` for one noise realization.

    Between grid points: predictor with the exact flow, then one trapezoid
    correction of the drift ``f - int k dnu``. At a jump time
    ``X(tau) = X(tau-) + k(tau, xi, X(tau-))``. A step whose correction does
    not contract is retried with 2, 4, ... substeps.
    """
    times = check_grid(grid, path)
    x0 = sys.initial.mean() if X0 is None else as_state(X0, sys.dim)
    jumps = np.zeros(times.size, dtype=bool)
    marks = np.zeros((times.size, path.marks.shape[1]))
    idx = np.searchsorted(times, path.times)
    jumps[idx] = True
    marks[idx] = path.marks
    X, XL = _direct_sweep(sys, times[None], jumps[None], marks[None], x0[None], settings)
    return PathGrid(times, X[0], XL[0], jumps)


@dataclass
class SimulationBlock:
    batch: BatchGrid
    values: np.ndarray
    left: np.ndarray

    def paths(self) -> list[PathGrid]:
        return self.batch.unpad(self.values, self.left)


def simulate_block(sys: SystemSpec, seeds: Sequence[int], settings: SolverSettings = DEFAULT_SETTINGS,
                   X0: np.ndarray | None = None) -> SimulationBlock:
    paths = [sample_jump_path(sys.nu, sys.horizon, s) for s in seeds]
    batch = build_batch(paths, settings.n_steps)
    x0 = initial_states(sys, seeds) if X0 is None else np.asarray(X0, float)
    X, XL = _direct_sweep(sys, batch.times, batch.jumps, batch.marks, x0, settings)
    return SimulationBlock(batch, X, XL)


def simulate(sys: SystemSpec, n_paths: int, seed: int, settings: SolverSettings = DEFAULT_SETTINGS,
             workers: int | None = None) -> list[SimulationBlock]:
    """Direct-scheme paths in blocks; block ``j`` holds path indices ``j*BLOCK_SIZE ...``."""
    seeds = path_seeds(seed, n_paths)
    chunks = [seeds[i:i + BLOCK_SIZE] for i in range(0, n_paths, BLOCK_SIZE)]
    return ordered_map(lambda c: simulate_block(sys, c, settings), chunks, workers)


def moment_curve(blocks_: Sequence[SimulationBlock], q: float, seed: int | None = None) -> tuple[np.ndarray, list[MonteCarloEstimate]]:
    """``E||X_t||^q`` at the shared uniform times."""
    times = blocks_[0].batch.uniform_times
    parts = [b.batch.at_uniform(b.values) for b in blocks_]
    ests = []
    for j in range(times.size):
        ests.append(reduce_estimates([MonteCarloEstimate.from_samples(norm_pow(v[:, j], q), seed) for v in parts]))
    return times, ests


# ----------------------------------------------------------------- pathwise check


def decomposition_from_path(sys: SystemSpec, pg: PathGrid) -> Decomposition:
    """Semimartingale driving a solver path: drift ``f - int k dnu`` interpolated
    linearly across each interval, plus the solver's own jumps."""
    t = pg.times
    a = sys.generator_drift(t[:-1], pg.values[:-1])
    b = sys.generator_drift(t[1:], pg.left_values[1:])
    return Decomposition.piecewise_linear(t, a, b, t[pg.jumps], pg.jump_sizes)


def rebuild_from_decomposition(sys: SystemSpec, pg: PathGrid, dec: Decomposition) -> PathGrid:
    """Exact mild convolution of ``dec`` on the grid of ``pg``."""
    sizes = dec.jump_sizes
    path = JumpPath(pg.times[-1], dec.jump_times, np.arange(dec.jump_times.size, dtype=float)[:, None])

    def jump_map(tau, idx):
        return sizes[np.asarray(idx, dtype=int).reshape(-1)]

    return stochastic_convolution(sys.semigroup, pg.values[0], dec.drift, path, jump_map, pg.times)


def ito_residual_for_path(sys: SystemSpec, pg: PathGrid, p: float | Sequence[float]):
    """Pathwise ``p``-th power residual for a solver trajectory.

    The trajectory is re-convolved from its own decomposition so that the
    residual measures the inequality, not the scheme's local error.
    """
    dec = decomposition_from_path(sys, pg)
    xh = rebuild_from_decomposition(sys, pg, dec)
    return ito_pth_residual(sys.semigroup, xh, dec, p)
