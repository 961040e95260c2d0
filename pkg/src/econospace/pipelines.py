"""The four batch pipelines behind the CLI subcommands.

Each takes a parsed :class:`~econospace.config.ScenarioConfig`, a metadata dict
(config hash and seed, stamped into every output) and an output directory,
and returns the list of files written.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from . import aggregate as agg
from . import fieldsolve as fs
from .config import ScenarioConfig, build_domain, build_dynamics, build_ensemble, build_population, build_window
from .dynamics import check_linearization, closed_form_disturbance, closed_form_trajectory
from .ensemble import run_ensemble
from .errors import ConfigError
from .espace import advance_agents
from .pricing import (decompose_series, exact_price_from_disturbances, horizon_steps,
                      partials_from_transactions, report_rows, trend_return, weights, write_report_csv)

log = logging.getLogger(__name__)


def meta_comment(meta: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in meta.items())


def _require(cfg, *sections):
    missing = [s for s in sections if getattr(cfg, s) is None]
    if missing:
        raise ConfigError(f"config is missing section(s): {', '.join(missing)}",
                          errors=[f"{s}: required by this subcommand" for s in missing])


def _dump_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def simulate(cfg: ScenarioConfig, meta: dict, out: Path, fmt: str = "csv") -> list[Path]:
    """Move agents for ``steps`` samples and aggregate each non-overlapping window."""
    _require(cfg, "domain", "agents", "simulation")
    domain, grid = build_domain(cfg)
    window = build_window(cfg)
    pop = build_population(cfg, domain)
    traj = [pop]
    for _ in range(cfg.simulation.steps - 1):
        traj.append(advance_agents(traj[-1], window.sample_step, domain))
    fields = agg.aggregate_windows(traj, window, grid, domain)
    log.info("simulate: %d agents, %d steps, %d windows", len(pop), len(traj), len(fields))
    if fmt == "csv":
        path = out / "fields.csv"
        with path.open("w", newline="") as fh:
            agg.write_fields_csv(fields, fh, meta_comment(meta))
    else:
        path = out / "fields.json"
        _dump_json(path, {"meta": meta, "rows": [r for w, f in enumerate(fields) for r in agg.field_rows(f, w)]})
    return [path]


def _initial_from_aggregate(cfg, domain, grid):
    pop = build_population(cfg, domain)
    window = build_window(cfg) if cfg.simulation else agg.TimeWindow(1.0, 1.0)
    traj = [pop]
    for _ in range(window.steps - 1):
        traj.append(advance_agents(traj[-1], window.sample_step, domain))
    field0 = agg.aggregate_field(traj, grid, domain)
    shape = grid.shape + (domain.n,)
    fields, vels = {}, {}
    for k in range(field0.K):
        for name, vel in (("Q", field0.v_Q), ("SV", field0.v_SV), ("Et_Q", field0.u_Q), ("Et_SV", field0.u_SV)):
            fields[f"{name}[{k}]"] = fs.density_from_cells(getattr(field0, name)[:, k], grid, domain)
            vels[f"{name}[{k}]"] = vel[:, k, :].reshape(shape)
        if cfg.field.include_impulses:
            for name, vel in (("P_Q", field0.v_Q), ("P_SV", field0.v_SV), ("Pi_Q", field0.u_Q), ("Pi_SV", field0.u_SV)):
                for j in range(domain.n):
                    key = f"{name}[{k}][{j}]"
                    fields[key] = fs.density_from_cells(getattr(field0, name)[:, k, j], grid, domain)
                    vels[key] = vel[:, k, :].reshape(shape)
    return fields, vels


def _initial_from_dynamics(cfg, domain, grid, allow_unstable):
    params = build_dynamics(cfg, allow_unstable)
    s0 = closed_form_disturbance(params, 0.0)
    volume = float(np.prod(domain.upper))
    shape = grid.shape + (domain.n,)
    v = np.zeros(domain.n) if cfg.field.velocity is None else np.asarray(cfg.field.velocity, dtype=float)
    if v.shape != (domain.n,):
        raise ConfigError(f"field.velocity: expected {domain.n} components")
    vel = np.broadcast_to(v, shape).copy()
    fields, vels, means = {}, {}, {}
    for k in range(params.K):
        for name, mean, dist in (("Q", params.Q0, s0.q), ("SV", params.SV0, s0.sv),
                                 ("Et_Q", params.Et0_q, s0.et_q), ("Et_SV", params.Et0_sv, s0.et_sv)):
            key = f"{name}[{k}]"
            means[key] = mean[k] / volume
            fields[key] = np.full(grid.shape, mean[k] * (1.0 + dist[k]) / volume)
            vels[key] = vel
    return fields, vels, means, params


def _closure(cfg, fields, means, params):
    c = cfg.field.closure
    if c.kind == "zero":
        return fs.ZeroClosure()
    if c.kind == "constant":
        unknown = sorted(set(c.values) - set(fields))
        if unknown:
            raise ConfigError(f"field.closure.values: unknown field names {unknown}; known: {sorted(fields)}")
        return fs.ConstantClosure(dict(c.values))
    coeffs = {}
    for name in ("a_q", "be_q", "a_sv", "be_sv"):
        given = getattr(c, name)
        coeffs[name] = np.asarray(given if given is not None else getattr(params, name), dtype=float)
    K = len(coeffs["a_q"])
    couplings = []
    for k in range(K):
        for carried, expected, a, be in (("Q", "Et_Q", coeffs["a_q"][k], coeffs["be_q"][k]),
                                         ("SV", "Et_SV", coeffs["a_sv"][k], coeffs["be_sv"][k])):
            ck, ek = f"{carried}[{k}]", f"{expected}[{k}]"
            if c.reference == "initial":
                cref = means.get(ck, fields[ck])
                eref = means.get(ek, fields[ek])
            else:
                cref = eref = 0.0
            couplings += fs.LinearCouplingClosure.for_pair(ck, ek, a, be, cref, eref).couplings
    return fs.LinearCouplingClosure(couplings)


def field(cfg: ScenarioConfig, meta: dict, out: Path, fmt: str = "csv", allow_unstable=None) -> list[Path]:
    """Step continuity equations and report the domain balance per field."""
    _require(cfg, "domain", "field")
    domain, grid = build_domain(cfg)
    f = cfg.field
    params = None
    means: dict = {}
    if f.initial == "aggregate":
        _require(cfg, "agents")
        fields, vels = _initial_from_aggregate(cfg, domain, grid)
        means = {k: v.copy() for k, v in fields.items()}
    else:
        _require(cfg, "dynamics")
        fields, vels, means, params = _initial_from_dynamics(cfg, domain, grid, allow_unstable)
    if f.closure.kind == "linear" and params is None and cfg.dynamics is not None:
        params = build_dynamics(cfg, allow_unstable)
    closure = _closure(cfg, fields, means, params)
    traj = fs.run_fields(fields, vels, closure, f.dt, f.steps, grid, domain, f.method, f.snapshot_every)
    report = fs.balance_report(traj)
    report["meta"] = meta
    report["method"] = f.method
    report["closure"] = f.closure.kind
    if params is not None and f.initial == "dynamics":
        t = f.dt * np.arange(f.steps + 1)
        cf = closed_form_disturbance(params, t)
        volume = float(np.prod(domain.upper))
        gaps = {}
        for k in range(params.K):
            for name, mean, series in (("Q", params.Q0, cf.q), ("SV", params.SV0, cf.sv)):
                key = f"{name}[{k}]"
                dist = traj.totals_array(key) / (means[key] * volume) - 1.0
                gaps[key] = float(np.max(np.abs(dist - series[:, k])))
        report["closed_form_max_gap"] = gaps
    written = []
    path = out / "balance.json"
    _dump_json(path, report)
    written.append(path)
    if f.snapshot_every:
        if fmt == "csv":
            p = out / "field_trajectory.csv"
            with p.open("w", newline="") as fh:
                fs.write_trajectory_csv(traj, fh, meta_comment(meta))
        else:
            p = out / "field_trajectory.json"
            p.write_text(fs.trajectory_json(traj, meta) + "\n")
        written.append(p)
    return written


def decompose(cfg: ScenarioConfig, meta: dict, out: Path, fmt: str = "csv", allow_unstable=None) -> list[Path]:
    """Closed-form disturbance series, then the price/return decomposition at every horizon."""
    _require(cfg, "dynamics", "pricing")
    params = build_dynamics(cfg, allow_unstable)
    p = cfg.pricing
    T = int(round(p.duration / p.sample_step))
    t = p.sample_step * np.arange(T + 1)
    traj = closed_form_trajectory(params, t)
    w = weights(params.Q0, params.SV0)
    pi_k = partials_from_transactions(traj.sv, traj.q)
    _, pi_exact = exact_price_from_disturbances(traj.q, traj.sv, params.Q0, params.SV0)
    rows = []
    audit = 0.0
    wsum = 0.0
    for d in p.horizons:
        lag = horizon_steps(d, p.sample_step)
        if lag > T:
            raise ConfigError(f"pricing.horizons: d={d} exceeds duration {p.duration}")
        if p.trend is None:
            dec = decompose_series(pi_k, traj.q, w, lag)
        else:
            tr = p.trend
            dec = trend_return(tr.alpha, tr.beta, tr.gamma, pi_k[:-lag], pi_k[lag:],
                               traj.q[:-lag], traj.q[lag:], w, t[lag:], d)
        audit = max(audit, float(np.max(np.abs(dec.r_direct - dec.r_decomposed))))
        wsum = max(wsum, float(np.max(np.abs(dec.weight_sum - 1.0))))
        rows.extend(report_rows(t[lag:], d, dec, pi_exact[lag:]))
    summary = {
        "meta": meta,
        "weights": w.as_dict(),
        "degenerate_equal_mean_prices": w.equal_mean_prices,
        "trend": None if p.trend is None else p.trend.model_dump(),
        "frequencies": {"omega_q": params.omega_q.tolist(), "omega_sv": params.omega_sv.tolist(),
                        "unstable_q": params.frequencies.unstable_q.tolist(),
                        "unstable_sv": params.frequencies.unstable_sv.tolist()},
        "linearization_warnings": check_linearization(params),
        "max_identity_residual": audit,
        "max_weight_sum_error": wsum,
    }
    for msg in summary["linearization_warnings"]:
        log.warning(msg)
    written = []
    if fmt == "csv":
        tp = out / "trajectory.csv"
        with tp.open("w", newline="") as fh:
            traj.write_csv(fh, meta_comment(meta))
        dp = out / "decomposition.csv"
        with dp.open("w", newline="") as fh:
            write_report_csv(rows, fh, meta_comment(meta))
        written += [tp, dp]
    else:
        dp = out / "decomposition.json"
        _dump_json(dp, {"meta": meta, "rows": rows})
        written.append(dp)
    sp = out / "summary.json"
    _dump_json(sp, summary)
    written.append(sp)
    return written


def _safe_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in name).strip("_")


def ensemble(cfg: ScenarioConfig, meta: dict, out: Path, fmt: str = "csv", seed=None) -> list[Path]:
    """Run the Monte Carlo study; JSON report plus per-observable histogram CSVs."""
    _require(cfg, "ensemble")
    ec = build_ensemble(cfg, seed)
    report = run_ensemble(ec)
    if report.excluded_runs:
        log.warning("ensemble: %d runs excluded on degeneracy", len(report.excluded_runs))
    path = out / "ensemble_report.json"
    path.write_text(report.to_json(meta) + "\n")
    written = [path]
    if fmt == "csv":
        hdir = out / "histograms"
        hdir.mkdir(exist_ok=True)
        for name in report.observables:
            hp = hdir / f"{_safe_name(name)}.csv"
            with hp.open("w", newline="") as fh:
                report.write_histogram_csv(name, fh, meta_comment(meta))
            written.append(hp)
    return written
