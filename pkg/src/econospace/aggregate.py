"""Coarse-graining of agents into per-cell, per-expectation-type fields.

Every extensive entry is the forward-window mean of per-step cell sums:
``F(c) = (1/m) * sum_{s in window} sum_{agents in c at s} f_i`` with ``m``
steps per window. Ratios (velocities, expectations, prices) are derived from
the windowed sums afterwards and are NaN wherever the denominator is zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError
from .espace import AgentPopulation, EconomicDomain, GridSpec, flat_cell_index


@dataclass(frozen=True)
class TimeWindow:
    delta: float
    sample_step: float

    def __post_init__(self):
        if not (self.sample_step > 0 and self.delta > 0):
            raise ConfigError("window: delta and sample_step must be positive")
        ratio = self.delta / self.sample_step
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ConfigError(
                f"window: delta={self.delta} is not a positive integer multiple of sample_step={self.sample_step}"
            )

    @property
    def steps(self) -> int:
        return int(round(self.delta / self.sample_step))


def _ratio(num, den):
    den_b = den if num.ndim == den.ndim else den[..., None]
    out = np.full(np.broadcast_shapes(num.shape, den_b.shape), np.nan)
    np.divide(num, den_b, out=out, where=np.broadcast_to(den_b != 0, out.shape))
    return out


@dataclass(frozen=True)
class AggregateField:
    """Windowed per-cell fields. Cells are flattened in C order over ``grid.shape``.

    Scalars are (ncells, K); impulse vectors are (ncells, K, n).
    """

    domain: EconomicDomain
    grid: GridSpec
    Q: np.ndarray
    SV: np.ndarray
    P_Q: np.ndarray
    P_SV: np.ndarray
    Et_Q: np.ndarray
    Et_SV: np.ndarray
    Pi_Q: np.ndarray
    Pi_SV: np.ndarray
    t: float = 0.0

    @property
    def K(self) -> int:
        return self.Q.shape[1]

    @property
    def v_Q(self):
        return _ratio(self.P_Q, self.Q)

    @property
    def v_SV(self):
        return _ratio(self.P_SV, self.SV)

    @property
    def Ex_Q(self):
        return _ratio(self.Et_Q, self.Q)

    @property
    def Ex_SV(self):
        return _ratio(self.Et_SV, self.SV)

    @property
    def u_Q(self):
        """Velocity of expected volume, ``Pi_Q / Et_Q``."""
        return _ratio(self.Pi_Q, self.Et_Q)

    @property
    def u_SV(self):
        return _ratio(self.Pi_SV, self.Et_SV)

    @property
    def price(self):
        return _ratio(self.SV, self.Q)

    def restrict(self, k: int) -> "AggregateField":
        """The field for expectation type ``k`` alone, as a K=1 field."""
        sl = slice(k, k + 1)
        return AggregateField(
            self.domain, self.grid, self.Q[:, sl], self.SV[:, sl], self.P_Q[:, sl],
            self.P_SV[:, sl], self.Et_Q[:, sl], self.Et_SV[:, sl], self.Pi_Q[:, sl],
            self.Pi_SV[:, sl], self.t,
        )


_SCALARS = ("Q", "SV", "Et_Q", "Et_SV")
_VECTORS = ("P_Q", "P_SV", "Pi_Q", "Pi_SV")


def _step_columns(pop: AgentPopulation) -> np.ndarray:
    N, K, n = len(pop), pop.K, pop.n
    et_q = pop.ex_q * pop.Q
    et_sv = pop.ex_sv * pop.SV
    v = pop.v[:, None, :]
    return np.concatenate(
        [
            pop.Q,
            pop.SV,
            et_q,
            et_sv,
            (pop.Q[:, :, None] * v).reshape(N, K * n),
            (pop.SV[:, :, None] * v).reshape(N, K * n),
            (et_q[:, :, None] * v).reshape(N, K * n),
            (et_sv[:, :, None] * v).reshape(N, K * n),
        ],
        axis=1,
    )


def aggregate_field(
    snapshots: Sequence[AgentPopulation],
    grid: GridSpec,
    domain: EconomicDomain,
    t: float = 0.0,
) -> AggregateField:
    """Aggregate one window: ``snapshots`` are the populations at the window's steps."""
    if not snapshots:
        raise ConfigError("aggregation window has no steps")
    K, n = snapshots[0].K, domain.n
    ncells = grid.ncells
    width = 4 * K + 4 * K * n
    total = np.zeros((ncells, width))
    for pop in snapshots:
        if pop.K != K:
            raise ConfigError("expectation-type count changes inside a window")
        if len(pop) == 0:
            continue
        cells = flat_cell_index(pop.x, grid, domain)
        total += _kernels.scatter_add(cells, _step_columns(pop), ncells)
    total /= len(snapshots)

    parts = {}
    off = 0
    for name in _SCALARS:
        parts[name] = total[:, off:off + K]
        off += K
    for name in _VECTORS:
        parts[name] = total[:, off:off + K * n].reshape(ncells, K, n)
        off += K * n
    return AggregateField(domain=domain, grid=grid, t=t, **{k: v.copy() for k, v in parts.items()})


def aggregate_transactions(snapshots, grid, domain):
    """Windowed ``(Q_k, SV_k)`` per cell, each (ncells, K)."""
    f = aggregate_field(snapshots, grid, domain)
    return f.Q, f.SV


def aggregate_impulses(snapshots, grid, domain):
    """Windowed impulses ``P_kQ``, ``P_kSV`` and their velocities ``v_kQ``, ``v_kSV``."""
    f = aggregate_field(snapshots, grid, domain)
    return f.P_Q, f.P_SV, f.v_Q, f.v_SV


def aggregate_expected(snapshots, grid, domain):
    """Windowed expected transactions, expectations and expectation impulses."""
    f = aggregate_field(snapshots, grid, domain)
    return {
        "Et_Q": f.Et_Q, "Et_SV": f.Et_SV, "Ex_Q": f.Ex_Q, "Ex_SV": f.Ex_SV,
        "Pi_Q": f.Pi_Q, "Pi_SV": f.Pi_SV,
    }


def aggregate_windows(trajectory: Sequence[AgentPopulation], window: TimeWindow, grid, domain, t0=0.0):
    """One field per non-overlapping window ``[t, t + delta)``; a trailing partial window is dropped."""
    m = window.steps
    out = []
    for w in range(len(trajectory) // m):
        out.append(
            aggregate_field(trajectory[w * m:(w + 1) * m], grid, domain, t=t0 + w * window.delta)
        )
    return out


@dataclass(frozen=True)
class CellTotals:
    """Per-cell sums over expectation types. Scalars (ncells,), vectors (ncells, n)."""

    Q: np.ndarray
    SV: np.ndarray
    P_Q: np.ndarray
    P_SV: np.ndarray
    Et_Q: np.ndarray
    Et_SV: np.ndarray
    Pi_Q: np.ndarray
    Pi_SV: np.ndarray

    @property
    def price(self):
        return _ratio(self.SV, self.Q)

    @property
    def Ex_Q(self):
        return _ratio(self.Et_Q, self.Q)

    @property
    def Ex_SV(self):
        return _ratio(self.Et_SV, self.SV)


def totals_over_types(field: AggregateField) -> CellTotals:
    return CellTotals(**{name: getattr(field, name).sum(axis=1) for name in _SCALARS + _VECTORS})


def integrate_domain(field) -> dict[str, np.ndarray]:
    """Domain totals: the sum over cells (cell entries are already extensive).

    Works on an :class:`AggregateField` (per-type results, shape (K,) / (K, n))
    or on :class:`CellTotals` (type-summed results).
    """
    return {name: getattr(field, name).sum(axis=0) for name in _SCALARS + _VECTORS}


def _fmt(x) -> str:
    return "" if not math.isfinite(x) else repr(float(x))


def field_rows(field: AggregateField, window_index: int = 0):
    """Yield CSV rows (dicts) for one field, one per (cell, type)."""
    n = field.domain.n
    derived = {
        "v_Q": field.v_Q, "v_SV": field.v_SV, "u_Q": field.u_Q, "u_SV": field.u_SV,
    }
    ex_q, ex_sv, price = field.Ex_Q, field.Ex_SV, field.price
    for c in range(field.grid.ncells):
        multi = np.unravel_index(c, field.grid.shape)
        for k in range(field.K):
            row = {"window": window_index, "t": repr(float(field.t)), "cell": c}
            for ax in range(n):
                row[f"cell_{ax}"] = int(multi[ax])
            row["k"] = k
            for name in _SCALARS:
                row[name] = _fmt(getattr(field, name)[c, k])
            for name in _VECTORS:
                for ax in range(n):
                    row[f"{name}_{ax}"] = _fmt(getattr(field, name)[c, k, ax])
            row["Ex_Q"] = _fmt(ex_q[c, k])
            row["Ex_SV"] = _fmt(ex_sv[c, k])
            row["price"] = _fmt(price[c, k])
            for name, arr in derived.items():
                for ax in range(n):
                    row[f"{name}_{ax}"] = _fmt(arr[c, k, ax])
            yield row


def write_fields_csv(fields: Sequence[AggregateField], handle, header_comment: str | None = None):
    """Write field snapshots as CSV; undefined ratios become empty cells."""
    if header_comment:
        handle.write(f"# {header_comment}\n")
    writer = None
    for w, f in enumerate(fields):
        for row in field_rows(f, w):
            if writer is None:
                writer = csv.DictWriter(handle, fieldnames=list(row), lineterminator="\n")
                writer.writeheader()
            writer.writerow(row)
