"""First-order upwind finite-volume stepping of continuity equations.

Solves ``df/dt + div(f v) = F`` for densities ``f`` on the grid of the
economic domain. Every exterior face carries zero flux, so interior fluxes
cancel pairwise and the domain integral changes only through the source.

Fields are plain arrays of shape ``grid.shape``; velocities have shape
``grid.shape + (n,)``. A coupled run carries several named fields (e.g. a
volume density and its expected-volume density) that share one step.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import _kernels
from .errors import NumericError, StabilityError
from .espace import EconomicDomain, GridSpec

SAFETY = 0.9


def density_from_cells(values, grid: GridSpec, domain: EconomicDomain) -> np.ndarray:
    """Cell totals (flat C order) to densities of shape ``grid.shape``."""
    return np.asarray(values, dtype=float).reshape(grid.shape) / grid.cell_volume(domain)


def integrate(f, grid: GridSpec, domain: EconomicDomain) -> float:
    return float(np.sum(f) * grid.cell_volume(domain))


def _axis_view(arr, axis, shape):
    pre = int(np.prod(shape[:axis]))
    post = int(np.prod(shape[axis + 1:]))
    return arr.reshape(pre, shape[axis], post)


def face_velocities(velocity, grid: GridSpec, axis: int) -> np.ndarray:
    """Normal velocity on the faces along ``axis`` as a (pre, N + 1, post) block.

    Interior faces take the mean of the two adjacent cells; undefined (NaN)
    cell velocities count as zero; both exterior faces are zero.
    """
    shape = grid.shape
    comp = np.nan_to_num(np.asarray(velocity, dtype=float)[..., axis], nan=0.0)
    block = _axis_view(comp, axis, shape)
    faces = np.zeros((block.shape[0], block.shape[1] + 1, block.shape[2]))
    faces[:, 1:-1, :] = 0.5 * (block[:, :-1, :] + block[:, 1:, :])
    return faces


def _check_velocity(velocity, grid):
    v = np.asarray(velocity, dtype=float)
    n = len(grid.shape)
    if v.shape != grid.shape + (n,):
        raise NumericError(f"velocity shape {v.shape} != {grid.shape + (n,)}", module="fieldsolve")
    if np.isinf(v).any():
        raise NumericError("non-finite velocity", module="fieldsolve", operation="step_continuity")
    return v


def stability_limit(velocity, grid: GridSpec, domain: EconomicDomain, safety: float = SAFETY) -> float:
    """Largest admissible dt: ``safety / max_cell(sum of outflow rates / dx)``.

    This bounds the fraction of a cell's content that may leave it in one step,
    which is what keeps the upwind update positivity-preserving in any
    dimension. For a uniform 1-D velocity it equals ``safety * dx / |v|``.
    """
    v = _check_velocity(velocity, grid)
    dx = grid.cell_extent(domain)
    shape = grid.shape
    rate = np.zeros(shape)
    for axis in range(len(shape)):
        faces = face_velocities(v, grid, axis)
        out = np.maximum(faces[:, 1:, :], 0.0) + np.maximum(-faces[:, :-1, :], 0.0)
        rate += out.reshape(shape) / dx[axis]
    peak = float(rate.max()) if rate.size else 0.0
    return np.inf if peak == 0.0 else safety / peak


def flux_divergence(f, velocity, grid: GridSpec, domain: EconomicDomain) -> np.ndarray:
    """``div(f v)`` with upwind face values and zero exterior flux."""
    shape = grid.shape
    dx = grid.cell_extent(domain)
    f = np.asarray(f, dtype=float)
    div = np.zeros(shape)
    for axis in range(len(shape)):
        faces = face_velocities(velocity, grid, axis)
        block = _axis_view(f, axis, shape)
        div += _kernels.upwind_divergence(block, faces, dx[axis]).reshape(shape)
    return div


def step_continuity(f, velocity, factor, dt, grid: GridSpec, domain: EconomicDomain, safety: float = SAFETY):
    """One explicit upwind step of ``df/dt + div(f v) = factor``.

    ``factor`` is a scalar or an array of shape ``grid.shape``.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise NumericError(f"field shape {f.shape} != grid {grid.shape}", module="fieldsolve")
    if not np.isfinite(f).all():
        raise NumericError("non-finite field value", module="fieldsolve", operation="step_continuity")
    source = np.broadcast_to(np.asarray(factor, dtype=float), grid.shape)
    if not np.isfinite(source).all():
        raise NumericError("non-finite source", module="fieldsolve", operation="step_continuity")
    v = _check_velocity(velocity, grid)
    limit = stability_limit(v, grid, domain, safety)
    if not 0 < dt <= limit:
        raise StabilityError(
            f"dt={dt} violates the stability bound dt <= {limit}",
            module="fieldsolve",
            operation="step_continuity",
        )
    return f + dt * (source - flux_divergence(f, v, grid, domain))


def step_vector(P, velocity, factor, dt, grid, domain, safety: float = SAFETY):
    """Advect each Cartesian component of an impulse field ``P`` (shape grid + (n,)) independently."""
    P = np.asarray(P, dtype=float)
    factor = np.broadcast_to(np.asarray(factor, dtype=float), P.shape)
    return np.stack(
        [
            step_continuity(P[..., j], velocity, factor[..., j], dt, grid, domain, safety)
            for j in range(P.shape[-1])
        ],
        axis=-1,
    )


# ---------------------------------------------------------------------------
# source closures
# ---------------------------------------------------------------------------

Fields = Mapping[str, np.ndarray]


class ZeroClosure:
    def __call__(self, fields: Fields) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(f) for name, f in fields.items()}


@dataclass
class ConstantClosure:
    """A fixed source per field (scalar or grid-shaped); unnamed fields get zero."""

    values: Mapping[str, float | np.ndarray]

    def __call__(self, fields):
        return {
            name: np.broadcast_to(np.asarray(self.values.get(name, 0.0), dtype=float), f.shape).copy()
            for name, f in fields.items()
        }


@dataclass(frozen=True)
class Coupling:
    """``source[target] = coeff * (fields[partner] - reference)`` pointwise."""

    target: str
    partner: str
    coeff: float
    reference: float | np.ndarray = 0.0


@dataclass
class LinearCouplingClosure:
    """Pointwise linear transaction/expectation coupling.

    With zero references this is ``F_Q = a * Et_Q`` and ``Fe_Q = be * Q``.
    Passing the mean-level densities as references gives the disturbance form
    whose domain integral is the oscillator system of :mod:`econospace.dynamics`.
    """

    couplings: list[Coupling] = field(default_factory=list)

    @classmethod
    def for_pair(cls, carried, expected, a, be, carried_ref=0.0, expected_ref=0.0):
        return cls([
            Coupling(carried, expected, a, expected_ref),
            Coupling(expected, carried, be, carried_ref),
        ])

    def __call__(self, fields):
        out = {name: np.zeros_like(f) for name, f in fields.items()}
        for c in self.couplings:
            out[c.target] = out[c.target] + c.coeff * (fields[c.partner] - c.reference)
        return out


# ---------------------------------------------------------------------------
# multi-field runs
# ---------------------------------------------------------------------------


@dataclass
class FieldTrajectory:
    """Record of a run: per-step domain integrals and effective integrated sources."""

    dt: float
    names: list[str]
    totals: dict[str, list[float]]
    sources: dict[str, list[float]]
    snapshots: list[dict[str, np.ndarray]]
    snapshot_steps: list[int]
    final: dict[str, np.ndarray] = field(default_factory=dict)

    def totals_array(self, name) -> np.ndarray:
        return np.asarray(self.totals[name])

    def sources_array(self, name) -> np.ndarray:
        return np.asarray(self.sources[name])


def _rhs(fields, velocities, closure, grid, domain):
    src = closure(fields)
    return (
        {name: src[name] - flux_divergence(f, velocities[name], grid, domain) for name, f in fields.items()},
        src,
    )


def step_system(fields: Fields, velocities: Fields, closure: Callable, dt, grid, domain,
                method: str = "euler", safety: float = SAFETY):
    """Advance several coupled fields one step; returns (new_fields, integrated_sources).

    ``method="euler"`` is the plain upwind step; ``"rk4"`` applies the classical
    4-stage scheme to the same semi-discrete upwind operator (each stage is
    conservative, so the flux balance is unchanged). ``integrated_sources``
    holds, per field, the domain integral of the source as the scheme
    actually applied it.
    """
    for name, f in fields.items():
        if not np.isfinite(f).all():
            raise NumericError(f"non-finite values in field {name!r}", module="fieldsolve")
        limit = stability_limit(velocities[name], grid, domain, safety)
        if not 0 < dt <= limit:
            raise StabilityError(
                f"dt={dt} violates the stability bound dt <= {limit} for field {name!r}",
                module="fieldsolve",
                operation="step_continuity",
            )
    dv = grid.cell_volume(domain)
    if method == "euler":
        k1, s1 = _rhs(fields, velocities, closure, grid, domain)
        new = {n: fields[n] + dt * k1[n] for n in fields}
        srcint = {n: float(np.sum(s1[n]) * dv) for n in fields}
        return new, srcint
    if method != "rk4":
        raise ValueError(f"unknown method {method!r}")
    k1, s1 = _rhs(fields, velocities, closure, grid, domain)
    k2, s2 = _rhs({n: fields[n] + 0.5 * dt * k1[n] for n in fields}, velocities, closure, grid, domain)
    k3, s3 = _rhs({n: fields[n] + 0.5 * dt * k2[n] for n in fields}, velocities, closure, grid, domain)
    k4, s4 = _rhs({n: fields[n] + dt * k3[n] for n in fields}, velocities, closure, grid, domain)
    new = {
        n: fields[n] + dt / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]) for n in fields
    }
    srcint = {
        n: float(np.sum(s1[n] + 2.0 * s2[n] + 2.0 * s3[n] + s4[n]) * dv / 6.0) for n in fields
    }
    return new, srcint


def run_fields(fields: Fields, velocities: Fields, closure: Callable, dt: float, steps: int,
               grid: GridSpec, domain: EconomicDomain, method: str = "euler",
               snapshot_every: int = 0, safety: float = SAFETY) -> FieldTrajectory:
    current = {n: np.asarray(f, dtype=float).copy() for n, f in fields.items()}
    names = list(current)
    totals = {n: [integrate(current[n], grid, domain)] for n in names}
    sources = {n: [] for n in names}
    snaps, snap_steps = [], []
    if snapshot_every:
        snaps.append({n: f.copy() for n, f in current.items()})
        snap_steps.append(0)
    for s in range(1, steps + 1):
        current, srcint = step_system(current, velocities, closure, dt, grid, domain, method, safety)
        for n in names:
            totals[n].append(integrate(current[n], grid, domain))
            sources[n].append(srcint[n])
        if snapshot_every and s % snapshot_every == 0:
            snaps.append({n: f.copy() for n, f in current.items()})
            snap_steps.append(s)
    return FieldTrajectory(dt, names, totals, sources, snaps, snap_steps, current)


def verify_domain_balance(totals, source_integrals, dt) -> np.ndarray:
    """Per-step residual ``|d(int f)/dt - int F|`` from a run's integrals.

    ``totals`` has one more entry than ``source_integrals``.
    """
    totals = np.asarray(totals, dtype=float)
    src = np.asarray(source_integrals, dtype=float)
    if totals.shape[0] != src.shape[0] + 1:
        raise ValueError("totals must have exactly one more entry than source integrals")
    return np.abs(np.diff(totals) / dt - src)


def balance_report(traj: FieldTrajectory) -> dict:
    report = {"dt": traj.dt, "steps": len(next(iter(traj.sources.values()), [])), "fields": {}}
    for n in traj.names:
        res = verify_domain_balance(traj.totals[n], traj.sources[n], traj.dt)
        scale = float(np.max(np.abs(traj.totals[n]))) or 1.0
        # residual of d/dt times dt is the per-step integral mismatch
        report["fields"][n] = {
            "initial_total": traj.totals[n][0],
            "final_total": traj.totals[n][-1],
            "max_residual": float(res.max()) if res.size else 0.0,
            "max_relative_residual": float((res * traj.dt).max() / scale) if res.size else 0.0,
        }
    return report


def write_trajectory_csv(traj: FieldTrajectory, handle, header_comment: str | None = None):
    """Rows ``(step, cell, quantity, value)`` for every recorded snapshot."""
    if header_comment:
        handle.write(f"# {header_comment}\n")
    w = csv.writer(handle, lineterminator="\n")
    w.writerow(["step", "cell", "quantity", "value"])
    for step, snap in zip(traj.snapshot_steps, traj.snapshots):
        for name, f in snap.items():
            for c, val in enumerate(f.ravel()):
                w.writerow([step, c, name, repr(float(val))])


def trajectory_json(traj: FieldTrajectory, meta: dict | None = None) -> str:
    doc = {
        "meta": meta or {},
        "dt": traj.dt,
        "totals": traj.totals,
        "sources": traj.sources,
        "snapshots": [
            {"step": s, "fields": {n: f.ravel().tolist() for n, f in snap.items()}}
            for s, snap in zip(traj.snapshot_steps, traj.snapshots)
        ],
    }
    return json.dumps(doc)
