"""Stochastic convolution integrals and the inequalities that control them.

All evaluators work on jump-adapted grids: between grid points a path follows
the exact diagonal flow plus a deterministic forcing, so time integrals are
done by Gauss-Legendre quadrature per interval and jump integrals are exact
sums over events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .estimates import MonteCarloEstimate, path_seeds
from .hilbert import SpectralSemigroup, as_state, inner, norm, norm_pow
from .measure import IntensityMeasure, JumpPath, sample_jump_path
from .paths import DEFAULT_STEPS, GridError, PathGrid, build_batch, check_grid, jump_adapted_grid
from .quadrature import TIME_NODES, composite_nodes, gauss_legendre, interval_nodes

BLOCK = 256


def _vectors(values, n: int, d: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim == 1 and d == 1:
        v = v[:, None]
    return np.broadcast_to(v, (n, d))


def mark_compensator(nu: IntensityMeasure, jump_map: Callable) -> Callable:
    """``s -> int_E jump_map(s, xi) nu(d xi)`` by the measure's quadrature."""
    nodes, w = nu.quadrature()

    def comp(s):
        s = np.asarray(s, dtype=float)
        vals = np.asarray(jump_map(s[:, None], nodes[None, :, :]), dtype=float)
        if vals.ndim == 2:
            vals = vals[..., None]
        vals = np.broadcast_to(vals, (s.size, nodes.shape[0], vals.shape[-1]))
        return np.einsum("q,nqd->nd", w, vals)

    return comp


def stochastic_convolution(sg: SpectralSemigroup, X0, drift_path: Callable | None, jump_path: JumpPath,
                           jump_map: Callable | None, grid, nu: IntensityMeasure | None = None,
                           compensator: Callable | None = None) -> PathGrid:
    """``X(t) = S_t X0 + int S_{t-s} v(s) ds + int int S_{t-s} k(s, xi) Ntilde(ds, d xi)`` on ``grid``.

    ``drift_path(s)`` maps an array of times to ``(n, d)`` forcing values.
    The jump sum uses ``jump_map(tau, xi)`` at each event. The compensator
    ``int_E jump_map(s, xi) nu(d xi)`` is subtracted when ``nu`` (or an
    explicit ``compensator(s)``) is given; otherwise jumps enter uncompensated.
    """
    times = check_grid(grid, jump_path)
    x0 = as_state(X0, sg.dim)
    d = sg.dim
    if compensator is None and nu is not None and jump_map is not None:
        compensator = mark_compensator(nu, jump_map)

    h = np.diff(times)
    s, w = interval_nodes(times[:-1], h)                       # (N, q)
    forcing = np.zeros(s.shape + (d,))
    if drift_path is not None:
        forcing += _vectors(drift_path(s.ravel()), s.size, d).reshape(forcing.shape)
    if compensator is not None:
        forcing -= _vectors(compensator(s.ravel()), s.size, d).reshape(forcing.shape)
    weights = w[..., None] * np.exp((times[1:, None] - s)[..., None] * sg.eigenvalues)
    local = np.sum(weights * forcing, axis=1)                  # (N, d)

    jumps = np.zeros(times.size, dtype=bool)
    sizes = np.zeros((times.size, d))
    if len(jump_path) and jump_map is not None:
        idx = np.searchsorted(times, jump_path.times)
        jumps[idx] = True
        sizes[idx] = _vectors(jump_map(jump_path.times, jump_path.marks), idx.size, d)

    flow = np.exp(h[:, None] * sg.eigenvalues)
    values = np.empty((times.size, d))
    left = np.empty((times.size, d))
    values[0] = left[0] = x0
    for i in range(times.size - 1):
        left[i + 1] = flow[i] * values[i] + local[i]
        values[i + 1] = left[i + 1] + sizes[i + 1]
    return PathGrid(times, values, left, jumps)


# ----------------------------------------------------------------- inequalities


def _binomial_remainder(z: np.ndarray, r: float) -> np.ndarray:
    """``(1 + z)**r - 1 - r z`` without cancellation for small ``|z|``."""
    out = np.empty_like(z)
    small = np.abs(z) < 1e-2
    zl = z[~small]
    out[~small] = np.expm1(r * np.log1p(zl)) - r * zl
    zs = z[small]
    coef = r * (r - 1.0) / 2.0
    term = coef * zs * zs
    acc = term.copy()
    for k in range(3, 12):
        coef *= (r - k + 1.0) / k
        term = coef * zs**k
        acc += term
    out[small] = acc
    return out


def pth_power_gap_bound(x, y, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Second-order remainder of ``||.||**p`` at ``x`` in direction ``y`` and its bound.

    ``lhs = ||x+y||**p - ||x||**p - p ||x||**(p-2) <x, y>``,
    ``rhs = p (p-1) / 2 * (||x||**(p-2) + ||x+y||**(p-2)) ||y||**2``;
    ``lhs <= rhs`` for every ``p >= 2``. Broadcasts over leading axes.

    ``lhs`` is evaluated as ``a**r phi(z) + r a**(r-1) ||y||**2`` with
    ``a = ||x||**2``, ``z = (2<x,y> + ||y||**2) / a``, ``r = p/2`` and
    ``phi(z) = (1+z)**r - 1 - r z``, which stays accurate when ``||y|| << ||x||``
    and is exactly ``||y||**2`` for ``p = 2``.
    """
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    r = 0.5 * p
    a = np.sum(x * x, axis=-1)
    yy = np.sum(y * y, axis=-1)
    xy_inner = np.sum(x * y, axis=-1)
    zero = a == 0.0
    a_safe = np.where(zero, 1.0, a)
    z = np.maximum((2.0 * xy_inner + yy) / a_safe, -1.0)
    lhs = a_safe**r * _binomial_remainder(z, r) + r * a_safe ** (r - 1.0) * yy
    # x = 0: ||y||**p, with ||0||**0 = 1 in the linear term when p = 2
    lhs = np.where(zero, yy**r if p > 2 else yy, lhs)
    rhs = 0.5 * p * (p - 1) * (norm_pow(x, p - 2) + norm_pow(x + y, p - 2)) * yy
    return lhs, rhs


@dataclass
class Decomposition:
    """Semimartingale ``Z = V + M`` driving a convolution.

    ``drift(s)`` is the density of the finite-variation part (including the
    compensator), ``jump_times``/``jump_sizes`` are the jumps of ``M``.
    """

    drift: Callable | None
    jump_times: np.ndarray
    jump_sizes: np.ndarray

    @classmethod
    def piecewise_linear(cls, times, left_rates, right_rates, jump_times, jump_sizes) -> "Decomposition":
        """Drift density linear on each grid interval between given end rates.

        ``left_rates[i]`` is the rate just after ``times[i]``, ``right_rates[i]``
        the rate just before ``times[i+1]``.
        """
        times = np.asarray(times, float)
        a = np.asarray(left_rates, float)
        b = np.asarray(right_rates, float)

        def drift(s):
            s = np.asarray(s, float)
            i = np.clip(np.searchsorted(times, s, side="right") - 1, 0, times.size - 2)
            h = times[i + 1] - times[i]
            theta = ((s - times[i]) / np.where(h > 0, h, 1.0))[:, None]
            return (1.0 - theta) * a[i] + theta * b[i]

        return cls(drift, np.asarray(jump_times, float), np.asarray(jump_sizes, float))


@dataclass
class ResidualSeries:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    jump_times: np.ndarray
    jump_contributions: np.ndarray

    @property
    def scale(self) -> float:
        return 1.0 + float(np.max(self.lhs))

    @property
    def min_relative(self) -> float:
        return float(np.min(self.residual)) / self.scale

    def holds(self, tol: float = 1e-9) -> bool:
        return bool(np.min(self.residual) >= -tol * self.scale)


def _node_states(sg: SpectralSemigroup, pg: PathGrid, drift: Callable):
    """``X`` and the drift density at Gauss-Legendre nodes of every grid interval.

    ``X(s)`` is rebuilt from the right value at the interval start by a nested
    rule, so it is exact up to quadrature error for smooth drift densities.
    """
    times, d, lam = pg.times, pg.dim, sg.eigenvalues
    h = np.diff(times)
    N = h.size
    theta, wt = gauss_legendre(TIME_NODES)
    s = times[:-1, None] + h[:, None] * theta                                          # (N, q)
    r = times[:-1, None, None] + h[:, None, None] * theta[:, None] * theta[None, :]    # (N, q, q)
    v_s = _vectors(drift(s.ravel()), s.size, d).reshape(N, TIME_NODES, d)
    v_r = _vectors(drift(r.ravel()), r.size, d).reshape(N, TIME_NODES, TIME_NODES, d)
    inner_w = (h[:, None] * theta)[..., None] * wt
    decay = np.exp((s[..., None] - r)[..., None] * lam)
    x_s = (np.exp((s - times[:-1, None])[..., None] * lam) * pg.values[:-1, None, :]
           + np.sum(inner_w[..., None] * decay * v_r, axis=2))
    return s, h[:, None] * wt, x_s, v_s


def ito_pth_residual(sg: SpectralSemigroup, pg: PathGrid, decomposition: Decomposition, p):
    """Right side minus left side of the pathwise ``p``-th power inequality.

    With ``X = S X0 + S * dZ`` the right side at ``t`` is
    ``e^{p a t}||X0||^p + p int e^{p a (t-s)} ||X(s-)||^{p-2} <X(s-), dZ(s)>``
    ``+ sum_{s<=t} e^{p a (t-s)} (||X(s)||^p - ||X(s-)||^p - p ||X(s-)||^{p-2} <X(s-), dZ(s)>)``
    (no continuous-martingale term, since ``M`` is pure jump). The ``ds``
    integral uses nested Gauss-Legendre so ``X`` is exact at the nodes.
    A sequence of exponents returns one series per exponent.
    """
    ps = [float(q) for q in np.atleast_1d(p)]
    if min(ps) < 2:
        raise ValueError(f"p must be >= 2, got {min(ps)}")
    times = pg.times
    jt = np.asarray(decomposition.jump_times, float)
    idx = np.searchsorted(times, jt)
    if jt.size and (np.any(idx >= times.size) or np.any(times[np.minimum(idx, times.size - 1)] != jt)):
        raise GridError("decomposition jump times are not on the path grid")
    if not np.array_equal(np.flatnonzero(pg.jumps), idx):
        raise GridError("decomposition jumps do not match the path grid jumps")
    a = sg.alpha
    h = np.diff(times)
    nodes = _node_states(sg, pg, decomposition.drift) if decomposition.drift is not None else None
    if jt.size:
        xl, xr = pg.left_values[idx], pg.values[idx]
        dz = np.asarray(decomposition.jump_sizes, float).reshape(idx.size, pg.dim)

    out = []
    for q in ps:
        integral = np.zeros(h.size)
        if nodes is not None:
            s, w, x_s, v_s = nodes
            dens = q * norm_pow(x_s, q - 2) * inner(x_s, v_s)
            integral = np.sum(np.exp(q * a * (times[1:, None] - s)) * w * dens, axis=1)
        jump_rhs = np.zeros(times.size)
        contrib = np.zeros(0)
        if jt.size:
            nl_p, nr_p = norm_pow(xl, q), norm_pow(xr, q)
            drift_part = q * norm_pow(xl, q - 2) * inner(xl, dz)
            correction = nr_p - nl_p - drift_part
            jump_rhs[idx] = drift_part + correction
            contrib = jump_rhs[idx] - (nr_p - nl_p)
        rhs = np.empty(times.size)
        rhs[0] = norm_pow(pg.values[0], q)
        growth = np.exp(q * a * h)
        for i in range(h.size):
            rhs[i + 1] = growth[i] * rhs[i] + integral[i] + jump_rhs[i + 1]
        lhs = norm_pow(pg.values, q)
        out.append(ResidualSeries(times, lhs, rhs, rhs - lhs, jt, contrib))
    return out[0] if np.ndim(p) == 0 else out


# ----------------------------------------------------------------- maximal inequalities


def deterministic_convolution(sg: SpectralSemigroup, rate: Callable, T: float, query, n_steps: int = DEFAULT_STEPS):
    """``D(t) = int_0^t S_{t-s} rate(s) ds`` at the query times.

    Computed on a uniform reference grid, then carried to off-grid queries by
    one more Gauss-Legendre panel.
    """
    q = np.asarray(query, dtype=float)
    u = np.linspace(0.0, T, n_steps + 1)
    h = np.diff(u)
    s, w = interval_nodes(u[:-1], h)
    vals = _vectors(rate(s.ravel()), s.size, sg.dim).reshape(s.shape + (sg.dim,))
    local = np.sum(w[..., None] * np.exp((u[1:, None] - s)[..., None] * sg.eigenvalues) * vals, axis=1)
    Du = np.zeros((u.size, sg.dim))
    flow = np.exp(h[:, None] * sg.eigenvalues)
    for i in range(n_steps):
        Du[i + 1] = flow[i] * Du[i] + local[i]
    i = np.clip(np.searchsorted(u, q, side="right") - 1, 0, n_steps)
    out = Du[i].copy()
    off = q > u[i]
    if np.any(off):
        a, b = u[i[off]], q[off]
        s2, w2 = interval_nodes(a, b - a)
        v2 = _vectors(rate(s2.ravel()), s2.size, sg.dim).reshape(s2.shape + (sg.dim,))
        part = np.sum(w2[..., None] * np.exp((b[:, None] - s2)[..., None] * sg.eigenvalues) * v2, axis=1)
        out[off] = np.exp((b - a)[:, None] * sg.eigenvalues) * Du[i[off]] + part
    return out


def _jump_martingale_block(sg, jump_map, comp, T, p, paths, n_steps):
    """Per-path ``sup ||int S dM||^p`` (over right values and left limits) and ``[M]_T``."""
    batch = build_batch(paths, n_steps)
    P, L = batch.times.shape
    d = sg.dim
    D = deterministic_convolution(sg, comp, T, batch.times.ravel(), n_steps).reshape(P, L, d)
    sizes = np.zeros((P, L, d))
    if batch.jumps.any():
        sizes[batch.jumps] = _vectors(jump_map(batch.times[batch.jumps], batch.marks[batch.jumps]),
                                      int(batch.jumps.sum()), d)
    qv = np.sum(sizes * sizes, axis=(1, 2))
    flow = np.exp(np.diff(batch.times, axis=1)[..., None] * sg.eigenvalues)
    J = np.zeros((P, d))
    sup = np.zeros(P)
    for i in range(L - 1):
        J = flow[:, i] * J
        sup = np.maximum(sup, norm(J - D[:, i + 1]))
        J = J + sizes[:, i + 1]
        sup = np.maximum(sup, norm(J - D[:, i + 1]))
    return sup**p, qv


def _jump_martingale_samples(sg, jump_map, nu, T, p, n_paths, seed, n_steps, compensator=None):
    comp = compensator if compensator is not None else mark_compensator(nu, jump_map)
    seeds = path_seeds(seed, n_paths)
    sups, qvs = [], []
    for start in range(0, n_paths, BLOCK):
        paths = [sample_jump_path(nu, T, s) for s in seeds[start:start + BLOCK]]
        a, b = _jump_martingale_block(sg, jump_map, comp, T, p, paths, n_steps)
        sups.append(a)
        qvs.append(b)
    return np.concatenate(sups), np.concatenate(qvs)


@dataclass
class BurkholderResult:
    lhs: MonteCarloEstimate
    rhs: MonteCarloEstimate
    ratio: float
    p: float

    def to_dict(self) -> dict:
        return {"lhs": self.lhs.to_dict(), "rhs": self.rhs.to_dict(), "ratio": self.ratio, "p": self.p}


def burkholder_ratio(sg: SpectralSemigroup, jump_map: Callable, nu: IntensityMeasure, T: float, p: float,
                     n_paths: int, seed: int, n_steps: int = DEFAULT_STEPS,
                     compensator: Callable | None = None) -> BurkholderResult:
    """``E sup_t ||int_0^t S_{t-s} dM_s||^p`` against ``E [M]_T^{p/2}``.

    ``M = int int jump_map(s, xi) Ntilde(ds, d xi)``; the semigroup must be a
    contraction. The ratio is an empirical lower bound for any admissible
    constant; it is reported as 0 when both sides vanish.
    """
    if sg.alpha > 0:
        raise ValueError("the maximal inequality needs a contraction semigroup (alpha <= 0)")
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    sup_p, qv = _jump_martingale_samples(sg, jump_map, nu, T, p, n_paths, seed, n_steps, compensator)
    lhs = MonteCarloEstimate.from_samples(sup_p, seed)
    rhs = MonteCarloEstimate.from_samples(qv ** (p / 2.0), seed)
    ratio = 0.0 if rhs.mean == 0.0 else lhs.mean / rhs.mean
    return BurkholderResult(lhs, rhs, ratio, p)


def _space_time_integral(jump_map, nu, T, power: float, n_steps: int = 64) -> float:
    """``int_0^T int_E ||jump_map(s, xi)||**power nu(d xi) ds`` (deterministic)."""
    s, ws = composite_nodes(np.linspace(0.0, T, n_steps + 1))
    nodes, wx = nu.quadrature()
    vals = np.asarray(jump_map(s[:, None], nodes[None, :, :]), dtype=float)
    if vals.ndim == 2:
        vals = vals[..., None]
    vals = np.broadcast_to(vals, (s.size, nodes.shape[0], vals.shape[-1]))
    return float(ws @ (norm(vals) ** power) @ wx)


@dataclass
class BichtelerJacodResult:
    lhs: MonteCarloEstimate
    first_moment_term: MonteCarloEstimate    # E (int int |k| dnu ds)^p
    pth_moment_term: MonteCarloEstimate      # E int int |k|^p dnu ds
    isometry_term: float                     # int int |k|^2 dnu ds
    p: float

    @property
    def rhs(self) -> float:
        return self.first_moment_term.mean + self.pth_moment_term.mean

    @property
    def implied_constant(self) -> float:
        """``lhs / (term1 + term2)``: the smallest constant consistent with this sample."""
        return 0.0 if self.rhs == 0.0 else self.lhs.mean / self.rhs

    @property
    def basis_constant(self) -> float:
        """``lhs / term2``, the constant in the ``1 <= p < 2`` form of the bound."""
        t2 = self.pth_moment_term.mean
        return 0.0 if t2 == 0.0 else self.lhs.mean / t2

    def doob_isometry_holds(self, sigmas: float = 3.0) -> bool:
        """``p = 2``: ``E sup |M|^2 <= 4 E [M]_T = 4 int int |k|^2``."""
        return self.lhs.mean <= 4.0 * self.isometry_term + sigmas * self.lhs.stderr

    def to_dict(self) -> dict:
        return {"p": self.p, "lhs": self.lhs.to_dict(), "first_moment_term": self.first_moment_term.to_dict(),
                "pth_moment_term": self.pth_moment_term.to_dict(), "isometry_term": self.isometry_term,
                "implied_constant": self.implied_constant, "basis_constant": self.basis_constant}


def bichteler_jacod_check(jump_map: Callable, nu: IntensityMeasure, T: float, p: float, n_paths: int, seed: int,
                          n_steps: int = DEFAULT_STEPS, compensator: Callable | None = None) -> BichtelerJacodResult:
    """Monte Carlo left side and exact right-side terms of the ``L^p`` bound for
    ``sup_t |int_0^t int_E k dNtilde|`` with a deterministic integrand ``k(s, xi)``.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    probe = np.asarray(jump_map(np.zeros(1), nu.quadrature()[0][:1]), dtype=float)
    d = 1 if probe.ndim < 2 else probe.shape[-1]
    sg = SpectralSemigroup(np.zeros(d))
    sup_p, _ = _jump_martingale_samples(sg, jump_map, nu, T, p, n_paths, seed, n_steps, compensator)
    first = _space_time_integral(jump_map, nu, T, 1.0) ** p
    pth = _space_time_integral(jump_map, nu, T, p)
    iso = _space_time_integral(jump_map, nu, T, 2.0)
    return BichtelerJacodResult(MonteCarloEstimate.from_samples(sup_p, seed),
                                MonteCarloEstimate.exact(first, n_paths, seed),
                                MonteCarloEstimate.exact(pth, n_paths, seed), iso, p)
