"""Run one configured experiment and write ``summary.json`` plus its CSV curves."""

from __future__ import annotations

import csv
import json
import math
import sys as _sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from .coefficients import SystemSpec, builtin_system, validate_hypothesis
from .config import ConfigError, ExperimentConfig
from .convolution import bichteler_jacod_check, burkholder_ratio
from .estimates import MonteCarloEstimate, reduce_estimates
from .hilbert import norm
from .solver import moment_curve, ito_residual_for_path, picard_solve, simulate
from .stability import coupled_decay

EXIT_OK, EXIT_CONFIG, EXIT_ASSERTION = 0, 1, 2
_SIGMAS = 3.0


@dataclass
class Outcome:
    results: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)     # file name -> (header, rows)

    def check(self, name: str, passed: bool, **detail) -> None:
        self.assertions.append({"name": name, "passed": bool(passed), **detail})

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)


def _clean(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _system(cfg: ExperimentConfig, p: float | None = None) -> SystemSpec:
    try:
        return builtin_system(cfg.system, cfg.system_overrides(p))
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"system: {exc}") from None


def _run_simulate(cfg: ExperimentConfig, out: Outcome) -> None:
    sys = _system(cfg)
    blocks = simulate(sys, cfg.n_paths, cfg.seed, cfg.settings)
    times, ests = moment_curve(blocks, 2.0, cfg.seed)
    exact = sys.second_moment(times) if sys.second_moment is not None else None
    rows = []
    for j, (t, e) in enumerate(zip(times, ests)):
        rows.append((float(t), e.mean, e.stderr, float(exact[j]) if exact is not None else ""))
    out.tables["moments.csv"] = (("t", "second_moment", "stderr", "closed_form"), rows)
    out.results["constants"] = sys.constants()
    out.results["terminal_second_moment"] = ests[-1].to_dict()
    if exact is not None:
        # checkpoints only: before the first jumps of a small sample the stderr is meaningless
        idx = [int(round(f * (times.size - 1))) for f in (0.25, 0.5, 1.0)]
        checks = {}
        for j in idx:
            e, x = ests[j], float(exact[j])
            checks[f"t={times[j]:g}"] = {"estimate": e.mean, "stderr": e.stderr, "closed_form": x,
                                         "relative_error": abs(e.mean - x) / abs(x),
                                         "ok": abs(e.mean - x) <= 4.0 * e.stderr + 1e-9 * abs(x)}
        out.results["closed_form_checkpoints"] = checks
        out.check("second moment equals closed-form moment equation (4 standard errors)",
                  all(c["ok"] for c in checks.values()))


def _run_picard(cfg: ExperimentConfig, out: Outcome) -> None:
    sys = _system(cfg)
    sol, trace = picard_solve(sys, cfg.n_iters, cfg.n_paths, cfg.seed, cfg.settings, tol=cfg.picard_tol)
    out.results["constants"] = sys.constants()
    out.results["trace"] = trace.to_dict()
    out.tables["picard.csv"] = (("n", "h_n", "bound_n"), trace.rows())
    within = trace.within_bound(_SIGMAS)
    out.check("Picard successive differences within factorial-rate bound", bool(np.all(within)),
              failing_n=[int(n) for n in np.flatnonzero(~within)])
    if cfg.compare_direct:
        blocks = simulate(sys, cfg.n_paths, cfg.seed, cfg.settings)
        direct = [pg for b in blocks for pg in b.paths()]
        samples = []
        for a, b in zip(direct, sol):
            samples.append(max(float(np.max(norm(a.values - b.values))),
                               float(np.max(norm(a.left_values - b.left_values))))**2)
        dist = MonteCarloEstimate.from_samples(samples, cfg.seed)
        last = trace.h[-1].mean
        out.results["direct_vs_picard_sup_sq"] = dist.to_dict()
        out.check("direct scheme agrees with Picard limit", dist.mean < 10.0 * last,
                  distance=dist.mean, h_last=last)


def _run_stability(cfg: ExperimentConfig, out: Outcome) -> None:
    curves = {}
    for q in cfg.exponents:
        sys = _system(cfg, q)
        x0 = sys.initial
        y0 = type(x0)(x0.center + cfg.y0_shift, x0.radius)
        dc = coupled_decay(sys, x0, y0, cfg.n_paths, cfg.seed, cfg.settings)
        curves[f"p={q:g}"] = dc.to_dict()
        name = "decay.csv" if len(cfg.exponents) == 1 else f"decay_p{q:g}.csv"
        out.tables[name] = (("t", "moment", "stderr", "paper_bound"), dc.rows())
        within = dc.within_bound(_SIGMAS)
        out.check(f"exponential stability bound on coupled p-th moment (p={q:g})", bool(np.all(within)),
                  gamma=dc.gamma, violations=int(np.sum(~within)))
        out.results.setdefault("constants", {})[f"p={q:g}"] = sys.constants()
    out.results["decay"] = curves


def _run_ito(cfg: ExperimentConfig, out: Outcome) -> None:
    sys = _system(cfg)
    ps = [float(q) for q in cfg.exponents]
    blocks = simulate(sys, cfg.n_paths, cfg.seed, cfg.settings)
    rows = []
    worst = {q: math.inf for q in ps}
    worst_jump = {q: 0.0 for q in ps}
    k = 0
    for b in blocks:
        for pg in b.paths():
            for q, r in zip(ps, ito_residual_for_path(sys, pg, ps)):
                worst[q] = min(worst[q], r.min_relative)
                if r.jump_contributions.size:
                    worst_jump[q] = max(worst_jump[q], float(np.max(np.abs(r.jump_contributions))) / r.scale)
                rows.extend((k, q, float(t), float(a), float(c), float(e))
                            for t, a, c, e in zip(r.times, r.lhs, r.rhs, r.residual))
            k += 1
    out.tables["residual.csv"] = (("path", "p", "t", "lhs", "rhs", "residual"), rows)
    out.results["constants"] = sys.constants()
    out.results["min_relative_residual"] = {f"p={q:g}": worst[q] for q in ps}
    out.results["max_relative_jump_contribution"] = {f"p={q:g}": worst_jump[q] for q in ps}
    for q in ps:
        out.check(f"pathwise p-th power inequality residual (p={q:g})", worst[q] >= -1e-9,
                  min_relative=worst[q])
        if q == 2.0:
            out.check("jump-time residual contributions vanish (p=2)", worst_jump[q] <= 1e-10,
                      max_relative=worst_jump[q])


def _state_free(sys: SystemSpec):
    k = sys.jump
    d = sys.dim

    def jump_map(t, xi):
        xi = np.asarray(xi, float)
        return k(t, xi, np.zeros(xi.shape[:-1] + (d,)))

    return jump_map


def _run_bj(cfg: ExperimentConfig, out: Outcome) -> None:
    sys = _system(cfg, 2.0)
    res = {}
    for q in cfg.exponents:
        r = bichteler_jacod_check(_state_free(sys), sys.nu, sys.horizon, float(q), cfg.n_paths, cfg.seed,
                                  cfg.n_steps)
        res[f"p={q:g}"] = r.to_dict()
        if q == 2.0:
            out.check("maximal second moment within Doob isometry bound", r.doob_isometry_holds(_SIGMAS),
                      lhs=r.lhs.mean, bound=4.0 * r.isometry_term)
    out.results["bichteler_jacod"] = res


def _run_burkholder(cfg: ExperimentConfig, out: Outcome) -> None:
    sys = _system(cfg)
    if sys.alpha > 0:
        raise ConfigError("system: the maximal convolution check needs eigenvalues <= 0")
    res = {}
    for q in cfg.exponents:
        r = burkholder_ratio(sys.semigroup, _state_free(sys), sys.nu, sys.horizon, float(q), cfg.n_paths,
                             cfg.seed, cfg.n_steps)
        res[f"p={q:g}"] = r.to_dict()
        if q == 2.0:
            # contraction semigroups dilate to unitary groups, so Doob's constant carries over
            ok = r.lhs.mean <= 4.0 * r.rhs.mean + _SIGMAS * (r.lhs.stderr + 4.0 * r.rhs.stderr)
            out.check("contraction convolution maximal inequality with Doob constant", ok, ratio=r.ratio)
    out.results["burkholder"] = res


def _run_validate(cfg: ExperimentConfig, out: Outcome) -> None:
    sys = _system(cfg)
    rep = validate_hypothesis(sys, cfg.validate_samples, cfg.validate_radius, cfg.seed)
    out.results["validation"] = rep.to_dict()
    for k, ok in rep.passed.items():
        out.check(f"declared constant {k} dominates sampled value", ok,
                  empirical=rep.empirical[k], declared=rep.declared[k])


RUNNERS = {"simulate": _run_simulate, "picard": _run_picard, "stability": _run_stability,
           "ito-check": _run_ito, "bj-check": _run_bj, "burkholder-check": _run_burkholder,
           "validate": _run_validate}


def execute(cfg: ExperimentConfig) -> Outcome:
    out = Outcome()
    RUNNERS[cfg.kind](cfg, out)
    return out


def summary_document(cfg: ExperimentConfig, out: Outcome) -> dict:
    return _clean({"kind": cfg.kind, "config": cfg.to_dict(), "results": out.results,
                   "assertions": out.assertions, "passed": out.passed,
                   "timestamp": datetime.now(timezone.utc).isoformat()})


def write_outputs(cfg: ExperimentConfig, out: Outcome, directory: str | Path | None = None) -> Path:
    d = Path(directory if directory is not None else cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "summary.json", "w") as fh:
        json.dump(summary_document(cfg, out), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, (header, rows) in out.tables.items():
        with open(d / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return d


def run_experiment(cfg: ExperimentConfig, directory: str | Path | None = None) -> int:
    """Run, persist, and return the exit status (0 pass, 2 assertion failure, 1 config error)."""
    try:
        out = execute(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    write_outputs(cfg, out, directory)
    return EXIT_OK if out.passed else EXIT_ASSERTION
