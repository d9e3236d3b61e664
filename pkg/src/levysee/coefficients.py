"""Drift and jump coefficients, problem instances and the builtin families.

Coefficients are deterministic functions that broadcast over leading axes:
``drift(t, x)`` with ``x`` of shape ``(..., d)`` and ``t`` broadcastable to
``x.shape[:-1]``; ``jump(t, xi, x)`` additionally takes marks ``(..., m)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping

import numpy as np

from .hilbert import SpectralSemigroup, as_state, inner, norm
from .measure import IntensityMeasure, atoms, truncated_gaussian, uniform_box

BUILTIN_SYSTEMS = ("linear-ou-jump", "cubic-dissipative", "saturating-drift")


def _tcol(t, x):
    """Broadcast ``t`` against the batch axes of ``x`` and add a coordinate axis."""
    return np.asarray(t, dtype=float)[..., None]


@dataclass(frozen=True)
class DriftCoefficient:
    """``f(t, x)`` with semimonotonicity constant ``M`` and growth share ``D_f``.

    ``jac_diag`` (optional) returns the diagonal of ``df/dx`` for drifts that
    act coordinatewise; the implicit solvers use Newton when it is present.
    """

    func: Callable
    M: float
    D_f: float
    jac_diag: Callable | None = None
    name: str = "drift"

    def __call__(self, t, x):
        return self.func(t, x)


@dataclass(frozen=True)
class JumpCoefficient:
    """``k(t, xi, x)`` with the Lipschitz/growth constants ``C``, ``F``, ``D_k``.

    ``compensator(t, x)`` is the closed form of ``int_E k(t, xi, x) nu(d xi)``
    when the family provides one.
    """

    func: Callable
    C: float
    F: float
    D_k: float
    compensator: Callable | None = None
    state_free: bool = False
    name: str = "jump"

    def __call__(self, t, xi, x):
        return self.func(t, xi, x)

    def mean(self, nu: IntensityMeasure, t, x) -> np.ndarray:
        """``int_E k(t, xi, x) nu(d xi)``, closed form if available."""
        if self.compensator is not None:
            return self.compensator(t, x)
        nodes, w = nu.quadrature()
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        vals = self.func(t[..., None], nodes.reshape((1,) * t.ndim + nodes.shape), x[..., None, :])
        vals = np.broadcast_to(vals, x.shape[:-1] + (nodes.shape[0], x.shape[-1]))
        return np.einsum("q,...qd->...d", w, vals)


@dataclass(frozen=True)
class InitialLaw:
    """Point mass at ``center`` (``radius == 0``) or uniform on the box ``center +- radius``."""

    center: np.ndarray
    radius: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", as_state(self.center))
        if self.radius < 0:
            raise ValueError("initial radius must be non-negative")

    @property
    def is_point(self) -> bool:
        return self.radius == 0.0

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.is_point:
            return np.broadcast_to(self.center, (n, self.center.size)).copy()
        u = rng.uniform(-1.0, 1.0, size=(n, self.center.size))
        return self.center + self.radius * u

    def mean(self) -> np.ndarray:
        return self.center.copy()

    def second_moments_diag(self) -> np.ndarray:
        return self.center**2 + self.radius**2 / 3.0


@dataclass(frozen=True)
class SystemSpec:
    semigroup: SpectralSemigroup
    drift: DriftCoefficient
    jump: JumpCoefficient
    nu: IntensityMeasure
    initial: InitialLaw
    p: float = 2.0
    horizon: float = 1.0
    name: str = "custom"
    params: Mapping[str, Any] = field(default_factory=dict)
    second_moment: Callable | None = None

    def __post_init__(self):
        if self.p < 2:
            raise ValueError(f"p must be >= 2, got {self.p}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.initial.center.size != self.semigroup.dim:
            raise ValueError("initial law and semigroup disagree on the dimension")

    @property
    def dim(self) -> int:
        return self.semigroup.dim

    @property
    def alpha(self) -> float:
        return self.semigroup.alpha

    @property
    def M(self) -> float:
        return self.drift.M

    @property
    def C(self) -> float:
        return self.jump.C

    @property
    def F(self) -> float:
        return self.jump.F

    @property
    def D(self) -> float:
        return self.drift.D_f + self.jump.D_k

    def generator_drift(self, t, x) -> np.ndarray:
        """Drift of the jump-free flow: ``f(t, x) - int_E k(t, xi, x) nu(d xi)``."""
        return self.drift(t, x) - self.jump.mean(self.nu, t, x)

    def constants(self) -> dict:
        return {"p": self.p, "alpha": self.alpha, "M": self.M, "C": self.C, "F": self.F,
                "D": self.D, "D_f": self.drift.D_f, "D_k": self.jump.D_k, "T": self.horizon}


def rescale_system(sys: SystemSpec, shift: float | None = None) -> SystemSpec:
    """Conjugate by ``exp(-shift t)``; the default shift is the growth bound.

    With ``shift = alpha`` the returned semigroup is a contraction with growth
    bound exactly 0, and ``exp(-alpha t) X_t`` solves the returned system
    whenever ``X_t`` solves ``sys`` under the same noise.
    """
    a = sys.alpha if shift is None else float(shift)
    if a == 0.0:
        return sys
    T = sys.horizon
    f, k = sys.drift, sys.jump

    def f_new(t, x):
        e = np.exp(a * _tcol(t, x))
        return f(t, e * x) / e

    jac = None
    if f.jac_diag is not None:
        def jac(t, x):
            return f.jac_diag(t, np.exp(a * _tcol(t, x)) * x)

    def k_new(t, xi, x):
        e = np.exp(a * _tcol(t, x))
        return k(t, xi, e * x) / e

    comp = None
    if k.compensator is not None:
        def comp(t, x):
            e = np.exp(a * _tcol(t, x))
            return k.compensator(t, e * x) / e

    grow2 = max(1.0, math.exp(-2.0 * a * T))
    growp = max(1.0, math.exp(-sys.p * a * T))
    drift = DriftCoefficient(f_new, f.M, f.D_f * grow2, jac, name=f"{f.name}~")
    jump = JumpCoefficient(k_new, k.C, k.F * growp, k.D_k * grow2, comp, k.state_free, name=f"{k.name}~")
    second = None
    if sys.second_moment is not None:
        def second(t):
            return np.exp(-2.0 * a * np.asarray(t, float)) * sys.second_moment(t)
    params = dict(sys.params)
    params["rescale_shift"] = params.get("rescale_shift", 0.0) + a
    return replace(sys, semigroup=sys.semigroup.shifted(a), drift=drift, jump=jump,
                   name=sys.name, params=params, second_moment=second)


# --------------------------------------------------------------- families


def linear_drift(rate: float) -> DriftCoefficient:
    """``f(x) = rate * x``; exactly ``rate``-semimonotone."""
    return DriftCoefficient(lambda t, x: rate * np.asarray(x), M=rate, D_f=rate * rate,
                            jac_diag=lambda t, x: np.full(np.shape(x), rate), name="linear")


def cubic_drift(kappa: float = 1.0, radius: float = 10.0) -> DriftCoefficient:
    """``f(x) = -kappa x**3`` coordinatewise.

    Dissipative (``M = 0``) but only locally of linear growth: on the ball of
    the given radius ``||f(x)||**2 <= kappa**2 radius**4 ||x||**2``.
    """
    return DriftCoefficient(lambda t, x: -kappa * np.asarray(x) ** 3, M=0.0,
                            D_f=kappa * kappa * radius**4,
                            jac_diag=lambda t, x: -3.0 * kappa * np.asarray(x) ** 2, name="cubic")


def tanh_drift(scale: float) -> DriftCoefficient:
    """``f(x) = scale * tanh(x)`` coordinatewise; ``M = max(scale, 0)``."""
    return DriftCoefficient(lambda t, x: scale * np.tanh(x), M=max(scale, 0.0), D_f=scale * scale,
                            jac_diag=lambda t, x: scale / np.cosh(x) ** 2, name="tanh")


def affine_jump(nu: IntensityMeasure, shift_matrix, gain: float, p: float) -> JumpCoefficient:
    """``k(t, xi, x) = G xi + gain * xi_0 * x``.

    Constants follow from closed-form mark moments: ``C = gain**2 nu(xi_0**2)``;
    with ``a = ||G|| nu(||xi||**p)**(1/p)`` and ``b = |gain| nu(|xi_0|**p)**(1/p)``,
    Minkowski and Hoelder give ``F = (a**q + b**q)**(p-1)``, ``q = p/(p-1)``,
    and likewise ``D_k = ||G||**2 nu(||xi||**2) + gain**2 nu(xi_0**2)``.
    """
    G = np.atleast_2d(np.asarray(shift_matrix, dtype=float))
    if G.shape[1] != nu.mark_dim:
        raise ValueError("shift matrix columns must match the mark dimension")
    gnorm = float(np.linalg.norm(G, 2)) if G.size else 0.0
    c = float(gain)
    m0_2 = nu.coord_moment(2.0, 0)
    C = c * c * m0_2
    a = gnorm * nu.moment(p) ** (1.0 / p)
    b = abs(c) * nu.coord_moment(p, 0) ** (1.0 / p)
    q = p / (p - 1.0)
    F = (a**q + b**q) ** (p - 1.0)
    D_k = gnorm**2 * nu.moment(2.0) + c * c * m0_2
    shift_mean = G @ nu.mean()
    mark0_mean = float(nu.mean()[0])

    def func(t, xi, x):
        xi = np.asarray(xi, dtype=float)
        return xi @ G.T + c * xi[..., :1] * np.asarray(x, dtype=float)

    def comp(t, x):
        x = np.asarray(x, dtype=float)
        return shift_mean + c * mark0_mean * x

    return JumpCoefficient(func, C=C, F=F, D_k=D_k, compensator=comp,
                           state_free=(c == 0.0), name="affine")


def zero_jump(dim: int) -> JumpCoefficient:
    def func(t, xi, x):
        shape = np.broadcast_shapes(np.shape(xi)[:-1], np.shape(x)[:-1])
        return np.zeros(shape + (dim,))

    return JumpCoefficient(func, 0.0, 0.0, 0.0, compensator=lambda t, x: np.zeros(np.shape(x)),
                           state_free=True, name="none")


def spread_matrix(d: int, m: int, scale: float) -> np.ndarray:
    """``d x m`` matrix with orthogonal columns of norm ``scale``."""
    P = np.zeros((d, m))
    for j in range(d):
        P[j, j % m] = 1.0
    cols = np.linalg.norm(P, axis=0)
    cols[cols == 0] = 1.0
    return scale * P / cols


def _exp_diff(x, y, t):
    """``(exp(x t) - exp(y t)) / (x - y)``, continuous at ``x == y``."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    t = np.asarray(t, float)
    dx = x - y
    small = np.abs(dx * t) < 1e-12
    safe = np.where(small, 1.0, dx)
    out = np.exp(y * t) * np.expm1(dx * t) / safe
    return np.where(small, t * np.exp(y * t), out)


def linear_second_moment(lam, rate, G, gain, nu: IntensityMeasure, initial: InitialLaw) -> Callable:
    """Closed-form ``E||X_t||**2`` for the linear family ``dX = (lam + rate) X dt + int k dNtilde``.

    Per coordinate ``m' = (2 l + gain**2 Q00) m + 2 gain (G Q)_{j0} mu + (G Q G^T)_jj``
    with ``mu = exp(l t) mu_0`` and ``Q = int xi xi^T nu(d xi)``.
    """
    l = np.asarray(lam, float) + rate
    Q = nu.second_moments()
    G = np.atleast_2d(G)
    a = 2.0 * l + gain * gain * Q[0, 0]
    beta = 2.0 * gain * (G @ Q)[:, 0] * initial.mean()
    const = np.einsum("ij,jk,ik->i", G, Q, G)
    m0 = initial.second_moments_diag()

    def second_moment(t):
        t = np.asarray(t, float)[..., None]
        m = np.exp(a * t) * m0 + beta * _exp_diff(l, a, t) + const * _exp_diff(a, 0.0, t)
        return m.sum(axis=-1)

    return second_moment


# --------------------------------------------------------------- builtins


_DEFAULTS: dict[str, dict[str, Any]] = {
    "linear-ou-jump": dict(dim=1, eigenvalues=None, p=2.0, T=1.0, x0=1.0, x0_radius=0.0,
                           drift_rate=0.0, mark_law="atoms", rate=None, atoms=[0.5, -0.5], atom_weights=[1.0, 1.0],
                           jump="affine", jump_shift=0.05, jump_gain=0.1),
    "cubic-dissipative": dict(dim=8, eigenvalues=None, p=2.0, T=1.0, x0=None, x0_radius=0.0,
                              cubic=1.0, growth_radius=10.0, mark_law="uniform", rate=1.0,
                              box_lo=[-1.0], box_hi=[1.0], jump="affine", jump_shift=0.3, jump_gain=0.3),
    "saturating-drift": dict(dim=8, eigenvalues=None, p=2.0, T=1.0, x0=None, x0_radius=0.0,
                             drift_scale=0.5, mark_law="gaussian", rate=2.0, sigma=[0.5, 0.5],
                             cutoff=3.0, jump="affine", jump_shift=0.3, jump_gain=0.3),
}


def _default_eigenvalues(name: str, d: int) -> np.ndarray:
    j = np.arange(1, d + 1, dtype=float)
    if name == "linear-ou-jump":
        return -np.ones(d)
    if name == "cubic-dissipative":
        return -(j**2)
    return -j


def _default_x0(name: str, d: int) -> np.ndarray:
    j = np.arange(1, d + 1, dtype=float)
    if name == "linear-ou-jump":
        return np.ones(d)
    if name == "cubic-dissipative":
        return 1.0 / j
    return 0.5 * (-1.0) ** j


def _vector(value, d: int, what: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.size == 1:
        v = np.full(d, float(v[0]))
    if v.size != d:
        raise ValueError(f"{what} has length {v.size}, expected {d}")
    return v


def _mark_measure(cfg: Mapping[str, Any]) -> IntensityMeasure:
    law = cfg["mark_law"]
    if law == "atoms":
        pts = np.asarray(cfg["atoms"], dtype=float)
        w = np.asarray(cfg["atom_weights"], dtype=float)
        if cfg.get("rate") is not None:
            w = w / w.sum() * float(cfg["rate"])
        return atoms(pts, w)
    if law == "uniform":
        return uniform_box(float(cfg["rate"]), cfg["box_lo"], cfg["box_hi"])
    if law == "gaussian":
        return truncated_gaussian(float(cfg["rate"]), cfg["sigma"], float(cfg["cutoff"]))
    raise ValueError(f"unknown mark_law {law!r}")


def builtin_system(name: str, overrides: Mapping[str, Any] | None = None) -> SystemSpec:
    """Construct one of :data:`BUILTIN_SYSTEMS` with analytically declared constants."""
    if name not in _DEFAULTS:
        raise ValueError(f"unknown builtin system {name!r}; choose from {', '.join(BUILTIN_SYSTEMS)}")
    cfg = dict(_DEFAULTS[name])
    unknown = set(overrides or {}) - set(cfg)
    if unknown:
        raise ValueError(f"unknown override(s) for {name}: {', '.join(sorted(unknown))}")
    cfg.update(overrides or {})

    if cfg["eigenvalues"] is not None:
        lam = np.atleast_1d(np.asarray(cfg["eigenvalues"], dtype=float))
        if overrides and "dim" in overrides and lam.size != int(cfg["dim"]):
            raise ValueError("eigenvalues length disagrees with dim")
        d = lam.size
    else:
        d = int(cfg["dim"])
        if d < 1:
            raise ValueError("dim must be >= 1")
        lam = _default_eigenvalues(name, d)
    p = float(cfg["p"])
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    T = float(cfg["T"])
    x0 = _default_x0(name, d) if cfg["x0"] is None else _vector(cfg["x0"], d, "x0")
    initial = InitialLaw(x0, float(cfg["x0_radius"]))
    nu = _mark_measure(cfg)

    if name == "linear-ou-jump":
        drift = linear_drift(float(cfg["drift_rate"]))
    elif name == "cubic-dissipative":
        drift = cubic_drift(float(cfg["cubic"]), float(cfg["growth_radius"]))
    else:
        drift = tanh_drift(float(cfg["drift_scale"]))

    G = spread_matrix(d, nu.mark_dim, float(cfg["jump_shift"]))
    if cfg["jump"] == "none":
        jump = zero_jump(d)
        G = np.zeros_like(G)
        gain = 0.0
    elif cfg["jump"] == "affine":
        gain = float(cfg["jump_gain"])
        jump = affine_jump(nu, G, gain, p)
    else:
        raise ValueError(f"unknown jump family {cfg['jump']!r}")

    second = None
    if name == "linear-ou-jump":
        second = linear_second_moment(lam, float(cfg["drift_rate"]), G, gain, nu, initial)

    params = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in cfg.items()}
    params.update(dim=d, eigenvalues=lam.tolist())
    return SystemSpec(SpectralSemigroup(lam), drift, jump, nu, initial, p=p, horizon=T,
                      name=name, params=params, second_moment=second)


# --------------------------------------------------------------- validation


@dataclass
class ValidationReport:
    empirical: dict
    declared: dict
    passed: dict
    n_samples: int
    radius: float

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {"empirical": self.empirical, "declared": self.declared, "passed": self.passed,
                "ok": self.ok, "n_samples": self.n_samples, "radius": self.radius}


def _ball(rng, n, d, radius):
    g = rng.standard_normal((n, d))
    g /= np.maximum(norm(g)[:, None], 1e-300)
    r = radius * rng.random(n) ** (1.0 / d)
    return g * r[:, None]


def _finite(a, what):
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"{what} returned non-finite values")
    return a


def validate_hypothesis(sys: SystemSpec, n_samples: int = 10_000, radius: float = 10.0,
                        seed: int = 0, chunk: int = 512) -> ValidationReport:
    """Sample-maximum estimates of ``M, C, D, F`` over ``||x||, ||y|| <= radius``.

    Mark integrals use the intensity measure's deterministic quadrature, so
    the verdict depends only on ``seed``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    d, p = sys.dim, sys.p
    nodes, w = sys.nu.quadrature()
    chunk = max(1, min(chunk, 4_000_000 // (nodes.shape[0] * d)))
    best = dict(M=-np.inf, C=0.0, D=0.0, D_f=0.0, D_k=0.0, F_lip=0.0, F_growth=0.0)
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        done += n
        t = rng.uniform(0.0, sys.horizon, n)
        x = _ball(rng, n, d, radius)
        y = _ball(rng, n, d, radius)
        fx = _finite(sys.drift(t, x), "drift")
        fy = _finite(sys.drift(t, y), "drift")
        dxy = x - y
        d2 = np.sum(dxy * dxy, axis=-1)
        ok = d2 > 0
        best["M"] = max(best["M"], float(np.max(inner(fx - fy, dxy)[ok] / d2[ok], initial=-np.inf)))
        kx = _finite(sys.jump(t[:, None], nodes[None], x[:, None, :]), "jump coefficient")
        ky = _finite(sys.jump(t[:, None], nodes[None], y[:, None, :]), "jump coefficient")
        kx = np.broadcast_to(kx, (n, nodes.shape[0], d))
        ky = np.broadcast_to(ky, (n, nodes.shape[0], d))
        dk = norm(kx - ky)
        nkx = norm(kx)
        int_dk2 = (dk**2) @ w
        int_dkp = (dk**p) @ w
        int_k2 = (nkx**2) @ w
        int_kp = (nkx**p) @ w
        nx2 = np.sum(x * x, axis=-1)
        fx2 = np.sum(fx * fx, axis=-1)
        best["C"] = max(best["C"], float(np.max(int_dk2[ok] / d2[ok], initial=0.0)))
        best["F_lip"] = max(best["F_lip"], float(np.max(int_dkp[ok] / d2[ok] ** (p / 2), initial=0.0)))
        best["F_growth"] = max(best["F_growth"], float(np.max(int_kp / (1.0 + nx2 ** (p / 2)))))
        best["D_f"] = max(best["D_f"], float(np.max(fx2 / (1.0 + nx2))))
        best["D_k"] = max(best["D_k"], float(np.max(int_k2 / (1.0 + nx2))))
        best["D"] = max(best["D"], float(np.max((fx2 + int_k2) / (1.0 + nx2))))

    empirical = {"M": best["M"], "C": best["C"], "D": best["D"], "D_f": best["D_f"], "D_k": best["D_k"],
                 "F": max(best["F_lip"], best["F_growth"]), "F_lip": best["F_lip"],
                 "F_growth": best["F_growth"]}
    declared = {"M": sys.M, "C": sys.C, "D": sys.D, "D_f": sys.drift.D_f, "D_k": sys.jump.D_k,
                "F": sys.F, "F_lip": sys.F, "F_growth": sys.F}
    passed = {k: bool(empirical[k] <= declared[k] + 1e-9 * max(abs(declared[k]), 1.0)) for k in empirical}
    return ValidationReport(empirical, declared, passed, n_samples, radius)
