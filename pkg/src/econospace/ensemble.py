"""Monte Carlo study of price and return statistics.

Each run draws means, frequencies and amplitudes from configured samplers,
builds harmonic disturbance series, and decomposes the return at every
configured horizon. Pooled samples of the price disturbance, the return, and
the return's two components (partial-return part ``sum eps r_k`` and
volume-return part ``sum eta w_k``) are summarised per observable.

Run ``i`` draws from its own substream ``SeedSequence(seed, spawn_key=(i,))``,
so results do not depend on execution order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dynamics import AMPLITUDE_LIMIT, harmonic
from .errors import ConfigError, DegeneracyError
from .pricing import decompose_series, horizon_steps, partials_from_transactions, price_from_partials, weights

POSITIVE = ("Q0", "SV0", "p0", "omega_q", "omega_sv")
AMPLITUDES = ("c_q", "d_q", "c_sv", "d_sv")
# draw order is part of the reproducibility contract
DRAW_ORDER = ("Q0", "SV0", "p0", "omega_q", "omega_sv", "c_q", "d_q", "c_sv", "d_sv")
MAX_BINS = 1000
NORMAL_SUPPORT_SIGMAS = 6.0

MOMENT_FORMULAS = {
    "mean": "sum(x) / n",
    "variance": "sum((x - mean)^2) / (n - 1)",
    "skewness": "m3 / m2^(3/2), m_j = sum((x - mean)^j) / n",
    "excess_kurtosis": "m4 / m2^2 - 3",
    "undefined": "skewness and kurtosis are null when m2 == 0",
}


@dataclass(frozen=True)
class Sampler:
    kind: str
    value: float | None = None
    low: float | None = None
    high: float | None = None
    mean: float | None = None
    std: float | None = None

    @classmethod
    def point(cls, value):
        return cls("point", value=float(value))

    @classmethod
    def uniform(cls, low, high):
        return cls("uniform", low=float(low), high=float(high))

    @classmethod
    def normal(cls, mean, std):
        return cls("normal", mean=float(mean), std=float(std))

    @classmethod
    def from_dict(cls, d: Mapping) -> "Sampler":
        return cls(**d)

    def problems(self) -> list[str]:
        if self.kind == "point":
            return [] if self.value is not None else ["point sampler needs 'value'"]
        if self.kind == "uniform":
            if self.low is None or self.high is None:
                return ["uniform sampler needs 'low' and 'high'"]
            return [] if self.low <= self.high else ["uniform sampler has low > high"]
        if self.kind == "normal":
            if self.mean is None or self.std is None:
                return ["normal sampler needs 'mean' and 'std'"]
            return [] if self.std >= 0 else ["normal sampler has negative std"]
        return [f"unknown sampler kind {self.kind!r}"]

    def support(self) -> tuple[float, float]:
        if self.kind == "point":
            return self.value, self.value
        if self.kind == "uniform":
            return self.low, self.high
        w = NORMAL_SUPPORT_SIGMAS * self.std
        return self.mean - w, self.mean + w

    def draw(self, rng: np.random.Generator, size: int, positive: bool = False) -> np.ndarray:
        if self.kind == "point":
            return np.full(size, self.value)
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size)
        out = rng.normal(self.mean, self.std, size)
        if positive:
            bad = out <= 0
            while bad.any():
                out[bad] = rng.normal(self.mean, self.std, int(bad.sum()))
                bad = out <= 0
        return out


@dataclass(frozen=True)
class EnsembleConfig:
    runs: int
    seed: int
    K: int
    samplers: Mapping[str, Sampler]
    horizons: tuple[float, ...]
    sample_step: float
    duration: float
    equal_mean_prices: bool = False
    allow_large_amplitudes: bool = False
    bins: str | int = "fd"

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems), errors=problems, module="ensemble")

    @property
    def samples_per_run(self) -> int:
        return int(round(self.duration / self.sample_step))

    def problems(self) -> list[str]:
        p = []
        if self.runs < 1:
            p.append("runs must be >= 1")
        if self.K < 1:
            p.append("K must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            p.append("seed must be an unsigned 64-bit integer")
        if not (self.sample_step > 0 and self.duration > 0):
            p.append("sample_step and duration must be positive")
        elif self.samples_per_run < 2:
            p.append("duration must span at least two samples")
        required = ["Q0", "omega_q", "omega_sv", *AMPLITUDES]
        required.append("p0" if self.equal_mean_prices else "SV0")
        for name in required:
            if name not in self.samplers:
                p.append(f"samplers.{name} is required")
        for name, s in self.samplers.items():
            if name not in DRAW_ORDER:
                p.append(f"samplers.{name}: unknown parameter")
                continue
            sp = s.problems()
            p.extend(f"samplers.{name}: {msg}" for msg in sp)
            if sp:
                continue
            lo, _ = s.support()
            if name in POSITIVE and lo <= 0:
                p.append(f"samplers.{name}: support must be strictly positive (lower end {lo!r})")
        if not self.allow_large_amplitudes and all(
            a in self.samplers and not self.samplers[a].problems() for a in AMPLITUDES
        ):
            def bound(name):
                lo, hi = self.samplers[name].support()
                return max(abs(lo), abs(hi))

            for line in ("q", "sv"):
                size = bound(f"c_{line}") + bound(f"d_{line}")
                if size >= AMPLITUDE_LIMIT:
                    p.append(
                        f"samplers.c_{line}/d_{line}: amplitude support |c|+|d| up to {size:.4g} "
                        f">= {AMPLITUDE_LIMIT}; set allow_large_amplitudes to override"
                    )
        for d in self.horizons:
            try:
                lag = horizon_steps(d, self.sample_step)
            except ConfigError as exc:
                p.append(f"horizons: {exc}")
                continue
            if self.sample_step > 0 and self.duration > 0 and lag >= self.samples_per_run:
                p.append(f"horizons: d={d} does not fit within duration {self.duration}")
        if not self.horizons:
            p.append("horizons must list at least one d")
        if not (self.bins == "fd" or (isinstance(self.bins, int) and self.bins >= 1)):
            p.append("bins must be 'fd' or a positive integer")
        return p


@dataclass(frozen=True)
class Scenario:
    Q0: np.ndarray
    SV0: np.ndarray
    omega_q: np.ndarray
    omega_sv: np.ndarray
    c_q: np.ndarray
    d_q: np.ndarray
    c_sv: np.ndarray
    d_sv: np.ndarray


def run_rng(seed: int, run: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run,)))


def sample_scenario(rng: np.random.Generator, config: EnsembleConfig) -> Scenario:
    """Draw one scenario; parameters are drawn K at a time in :data:`DRAW_ORDER` (``p0`` once)."""
    draws = {}
    for name in DRAW_ORDER:
        if name not in config.samplers:
            continue
        if name == "SV0" and config.equal_mean_prices:
            continue
        if name == "p0" and not config.equal_mean_prices:
            continue
        # one common mean price shared by every type
        size = 1 if name == "p0" else config.K
        draws[name] = config.samplers[name].draw(rng, size, positive=name in POSITIVE)
    if config.equal_mean_prices:
        draws["SV0"] = draws.pop("p0") * draws["Q0"]
    for name in POSITIVE:
        if name in draws and (draws[name] <= 0).any():
            raise ConfigError(f"sampled non-positive {name}", module="ensemble", operation="sample_scenario")
    return Scenario(**{k: draws[k] for k in Scenario.__dataclass_fields__})


def scenario_series(sc: Scenario, t: np.ndarray):
    """(T, K) series ``q_k`` and ``sv_k`` for one scenario."""
    q, _ = harmonic(sc.c_q, sc.d_q, sc.omega_q, t)
    sv, _ = harmonic(sc.c_sv, sc.d_sv, sc.omega_sv, t)
    return q, sv


def moments(samples) -> dict:
    """Mean, unbiased variance, skewness and excess kurtosis (see :data:`MOMENT_FORMULAS`)."""
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ConfigError("moments need at least two samples", module="ensemble", operation="moments")
    if np.all(x == x[0]):
        return {"n": n, "mean": float(x[0]), "variance": 0.0, "skewness": None, "excess_kurtosis": None}
    mean = math.fsum(x) / n
    dev = x - mean
    m2 = float(np.mean(dev ** 2))
    m3 = float(np.mean(dev ** 3))
    m4 = float(np.mean(dev ** 4))
    var = m2 * n / (n - 1)
    if m2 == 0.0:
        return {"n": n, "mean": mean, "variance": 0.0, "skewness": None, "excess_kurtosis": None}
    return {
        "n": n,
        "mean": mean,
        "variance": var,
        "skewness": m3 / m2 ** 1.5,
        "excess_kurtosis": m4 / m2 ** 2 - 3.0,
    }


def histogram(samples, bins="fd") -> tuple[np.ndarray, np.ndarray]:
    """Counts and edges; Freedman-Diaconis edges by default, capped at :data:`MAX_BINS`."""
    x = np.asarray(samples, dtype=float).ravel()
    edges = np.histogram_bin_edges(x, bins=bins)
    if len(edges) - 1 > MAX_BINS:
        edges = np.histogram_bin_edges(x, bins=MAX_BINS)
    counts, edges = np.histogram(x, bins=edges)
    return counts, edges


@dataclass
class DistributionReport:
    observables: dict[str, dict]
    runs: int
    excluded_runs: list[int]
    seed: int
    max_audit_residual: float
    max_weight_sum_error: float
    component_accounting: dict[str, float]
    formulas: dict = field(default_factory=lambda: dict(MOMENT_FORMULAS))

    def to_json(self, meta: dict | None = None) -> str:
        doc = {
            "meta": meta or {},
            "formulas": self.formulas,
            "runs": self.runs,
            "excluded_runs": self.excluded_runs,
            "excluded_count": len(self.excluded_runs),
            "seed": self.seed,
            "max_audit_residual": self.max_audit_residual,
            "max_weight_sum_error": self.max_weight_sum_error,
            "component_accounting": self.component_accounting,
            "observables": self.observables,
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    def write_histogram_csv(self, name, handle, header_comment: str | None = None):
        if header_comment:
            handle.write(f"# {header_comment}\n")
        h = self.observables[name]["histogram"]
        w = csv.writer(handle, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count"])
        edges = h["edges"]
        for i, c in enumerate(h["counts"]):
            w.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(c)])


def _summarise(samples, bins) -> dict:
    x = np.concatenate(samples) if samples else np.zeros(0)
    if x.size < 2:
        return {"n": int(x.size), "mean": None, "variance": None, "skewness": None,
                "excess_kurtosis": None, "min": None, "max": None,
                "histogram": {"edges": [], "counts": []}}
    out = moments(x)
    counts, edges = histogram(x, bins)
    out.update({
        "min": float(x.min()),
        "max": float(x.max()),
        "histogram": {"edges": edges.tolist(), "counts": counts.tolist()},
    })
    return out


def observable_names(config: EnsembleConfig) -> list[str]:
    names = ["pi"]
    for d in config.horizons:
        names += [f"r[d={d!r}]", f"r_partial[d={d!r}]", f"r_volume[d={d!r}]"]
    return names


def run_ensemble(config: EnsembleConfig) -> DistributionReport:
    T = config.samples_per_run
    t = config.sample_step * np.arange(T)
    lags = [horizon_steps(d, config.sample_step) for d in config.horizons]
    pools: dict[str, list[np.ndarray]] = {n: [] for n in observable_names(config)}
    excluded = []
    worst_audit = 0.0
    worst_wsum = 0.0
    for run in range(config.runs):
        rng = run_rng(config.seed, run)
        sc = sample_scenario(rng, config)
        w = weights(sc.Q0, sc.SV0)
        q, sv = scenario_series(sc, t)
        pi_k = partials_from_transactions(sv, q)
        pi = price_from_partials(pi_k, q, w)
        try:
            decs = [decompose_series(pi_k, q, w, lag) for lag in lags]
        except DegeneracyError:
            excluded.append(run)
            continue
        pools["pi"].append(pi)
        for d, dec in zip(config.horizons, decs):
            worst_audit = max(worst_audit, float(np.max(np.abs(dec.r_direct - dec.r_decomposed))))
            worst_wsum = max(worst_wsum, float(np.max(np.abs(dec.weight_sum - 1.0))))
            pools[f"r[d={d!r}]"].append(dec.r_decomposed)
            pools[f"r_partial[d={d!r}]"].append(dec.partial_component)
            pools[f"r_volume[d={d!r}]"].append(dec.volume_component)
    observables = {name: _summarise(s, config.bins) for name, s in pools.items()}
    accounting = {}
    for d in config.horizons:
        r, a, b = (observables[f"{p}[d={d!r}]"]["mean"] for p in ("r", "r_partial", "r_volume"))
        if r is not None:
            accounting[f"d={d!r}"] = abs(r - (a + b))
    return DistributionReport(observables, config.runs, excluded, config.seed, worst_audit, worst_wsum, accounting)
