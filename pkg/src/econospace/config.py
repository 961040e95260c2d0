"""Scenario configuration: JSON schema, strict parsing, and cross-section validation.

Unknown keys are errors. :func:`parse_config` reports every problem it finds
(schema and semantic) in one :class:`~econospace.errors.ConfigError`, each
prefixed with its dotted field path.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .aggregate import TimeWindow
from .dynamics import DisturbanceParams
from .ensemble import EnsembleConfig, Sampler
from .errors import ConfigError
from .espace import Agent, AgentPopulation, AgentSampler, EconomicDomain, GridSpec, TransactionPair, validate_domain
from .pricing import horizon_steps, trend_rate, weights


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainSection(_Strict):
    bounds: list[float]
    cells: list[int]


class AgentEntry(_Strict):
    id: int
    x: list[float]
    v: list[float]
    Q: list[float]
    SV: list[float]
    ex_q: list[float]
    ex_sv: list[float]


class AgentSamplerSection(_Strict):
    count: int = Field(ge=0)
    seed: Optional[int] = None
    velocity_scale: float = 0.01
    volume_range: tuple[float, float] = (1.0, 10.0)
    price_range: tuple[float, float] = (1.0, 5.0)
    expectation_range: tuple[float, float] = (0.5, 1.5)


class AgentsSection(_Strict):
    roster: Optional[list[AgentEntry]] = None
    sampler: Optional[AgentSamplerSection] = None


class WindowSection(_Strict):
    delta: float
    sample_step: float


class SimulationSection(_Strict):
    steps: int = Field(ge=1)
    window: WindowSection


class ClosureSection(_Strict):
    kind: Literal["zero", "constant", "linear"] = "zero"
    values: dict[str, float] = {}
    a_q: Optional[list[float]] = None
    be_q: Optional[list[float]] = None
    a_sv: Optional[list[float]] = None
    be_sv: Optional[list[float]] = None
    reference: Literal["zero", "initial"] = "initial"


class FieldSection(_Strict):
    dt: float
    steps: int = Field(ge=1)
    method: Literal["euler", "rk4"] = "euler"
    initial: Literal["aggregate", "dynamics"] = "aggregate"
    velocity: Optional[list[float]] = None
    include_impulses: bool = False
    snapshot_every: int = Field(default=0, ge=0)
    closure: ClosureSection = ClosureSection()


class DynamicsSection(_Strict):
    Q0: list[float]
    SV0: list[float]
    Et0_q: list[float]
    Et0_sv: list[float]
    a_q: list[float]
    be_q: list[float]
    a_sv: list[float]
    be_sv: list[float]
    c_q: list[float]
    d_q: list[float]
    c_sv: list[float]
    d_sv: list[float]


class TrendSection(_Strict):
    alpha: Optional[float] = None
    beta: list[float]
    gamma: list[float]


class PricingSection(_Strict):
    horizons: list[float]
    sample_step: float
    duration: float
    trend: Optional[TrendSection] = None


class SamplerSection(_Strict):
    kind: Literal["point", "uniform", "normal"]
    value: Optional[float] = None
    low: Optional[float] = None
    high: Optional[float] = None
    mean: Optional[float] = None
    std: Optional[float] = None


class EnsembleSection(_Strict):
    runs: int
    K: Optional[int] = None
    samplers: dict[str, SamplerSection]
    horizons: list[float]
    sample_step: float
    duration: float
    equal_mean_prices: bool = False
    allow_large_amplitudes: bool = False
    bins: Union[Literal["fd"], int] = "fd"


class OutputSection(_Strict):
    format: Literal["csv", "json"] = "csv"
    directory: Optional[str] = None


class ScenarioConfig(_Strict):
    seed: int = 0
    allow_unstable: bool = False
    types: Optional[int] = Field(default=None, ge=1)
    domain: Optional[DomainSection] = None
    agents: Optional[AgentsSection] = None
    simulation: Optional[SimulationSection] = None
    field: Optional[FieldSection] = None
    dynamics: Optional[DynamicsSection] = None
    pricing: Optional[PricingSection] = None
    ensemble: Optional[EnsembleSection] = None
    output: OutputSection = OutputSection()


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_domain(cfg: ScenarioConfig):
    d = cfg.domain
    domain, grid = EconomicDomain(tuple(d.bounds)), GridSpec(tuple(d.cells))
    validate_domain(domain, grid)
    return domain, grid


def build_population(cfg: ScenarioConfig, domain: EconomicDomain) -> AgentPopulation:
    a = cfg.agents
    if (a.roster is None) == (a.sampler is None):
        raise ConfigError("agents: give exactly one of 'roster' or 'sampler'")
    if a.sampler is not None:
        s = a.sampler
        return AgentSampler(
            count=s.count, K=cfg.types or 1, seed=cfg.seed if s.seed is None else s.seed,
            velocity_scale=s.velocity_scale, volume_range=s.volume_range,
            price_range=s.price_range, expectation_range=s.expectation_range,
        ).sample(domain)
    problems = []
    K = cfg.types or (len(a.roster[0].Q) if a.roster else 1)
    for i, e in enumerate(a.roster):
        for name in ("Q", "SV", "ex_q", "ex_sv"):
            if len(getattr(e, name)) != K:
                problems.append(f"agents.roster.{i}.{name}: expected {K} entries")
        for name in ("x", "v"):
            if len(getattr(e, name)) != domain.n:
                problems.append(f"agents.roster.{i}.{name}: expected {domain.n} coordinates")
        if any(c < 0 or c > b for c, b in zip(e.x, domain.bounds)):
            problems.append(f"agents.roster.{i}.x: outside the economic domain")
        if any(v < 0 for v in e.Q + e.SV):
            problems.append(f"agents.roster.{i}: trades must be non-negative")
    if len({e.id for e in a.roster}) != len(a.roster):
        problems.append("agents.roster: duplicate agent ids")
    if problems:
        raise ConfigError("; ".join(problems), errors=problems)
    if not a.roster:
        z = np.zeros((0, K))
        return AgentPopulation(np.zeros(0, dtype=np.int64), np.zeros((0, domain.n)), np.zeros((0, domain.n)),
                               z, z.copy(), z.copy(), z.copy())
    return AgentPopulation.from_agents([
        Agent(e.id, e.x, e.v, [TransactionPair(q, s) for q, s in zip(e.Q, e.SV)], list(zip(e.ex_q, e.ex_sv)))
        for e in a.roster
    ])


def build_window(cfg: ScenarioConfig) -> TimeWindow:
    w = cfg.simulation.window
    return TimeWindow(w.delta, w.sample_step)


def build_dynamics(cfg: ScenarioConfig, allow_unstable: bool | None = None) -> DisturbanceParams:
    d = cfg.dynamics
    flag = cfg.allow_unstable if allow_unstable is None else allow_unstable
    return DisturbanceParams(allow_unstable=flag, **d.model_dump())


def build_ensemble(cfg: ScenarioConfig, seed: int | None = None) -> EnsembleConfig:
    e = cfg.ensemble
    K = e.K or cfg.types or 1
    return EnsembleConfig(
        runs=e.runs,
        seed=cfg.seed if seed is None else seed,
        K=K,
        samplers={k: Sampler(**v.model_dump()) for k, v in e.samplers.items()},
        horizons=tuple(e.horizons),
        sample_step=e.sample_step,
        duration=e.duration,
        equal_mean_prices=e.equal_mean_prices,
        allow_large_amplitudes=e.allow_large_amplitudes,
        bins=e.bins,
    )


def _collect(problems, prefix, fn):
    try:
        return fn()
    except ConfigError as exc:
        msgs = exc.errors or [str(exc)]
        problems.extend(f"{prefix}: {m}" for m in msgs)
    return None


def validate_sections(cfg: ScenarioConfig, allow_unstable: bool | None = None, seed: int | None = None) -> list[str]:
    """Semantic checks of every present section; returns all problems found."""
    problems: list[str] = []
    domain = None
    if cfg.domain is not None:
        dg = _collect(problems, "domain", lambda: build_domain(cfg))
        domain = dg[0] if dg else None
    if cfg.agents is not None:
        if cfg.domain is None:
            problems.append("agents: requires a 'domain' section")
        elif domain is not None:
            _collect(problems, "agents", lambda: build_population(cfg, domain))
    if cfg.simulation is not None:
        _collect(problems, "simulation.window", lambda: build_window(cfg))
    params = None
    if cfg.dynamics is not None:
        params = _collect(problems, "dynamics", lambda: build_dynamics(cfg, allow_unstable))
    if cfg.pricing is not None:
        p = cfg.pricing
        if cfg.dynamics is None:
            problems.append("pricing: requires a 'dynamics' section")
        for d in p.horizons:
            _collect(problems, "pricing.horizons", lambda d=d: horizon_steps(d, p.sample_step))
        if not p.horizons:
            problems.append("pricing.horizons: list at least one horizon")
        if p.duration <= 0 or p.sample_step <= 0:
            problems.append("pricing: duration and sample_step must be positive")
        if p.trend is not None and params is not None:
            tr = p.trend

            def check_trend():
                w = weights(params.Q0, params.SV0)
                if tr.alpha is not None:
                    implied = trend_rate(tr.beta, tr.gamma, w)
                    if abs(implied - tr.alpha) > 1e-12:
                        raise ConfigError(f"alpha={tr.alpha} inconsistent with sum(mu*beta - lam*gamma)={implied}")

            _collect(problems, "pricing.trend", check_trend)
    if cfg.field is not None:
        f = cfg.field
        if f.initial == "aggregate" and (cfg.agents is None or cfg.domain is None):
            problems.append("field: initial='aggregate' needs 'domain' and 'agents'")
        if f.initial == "dynamics" and (cfg.dynamics is None or cfg.domain is None):
            problems.append("field: initial='dynamics' needs 'domain' and 'dynamics'")
        if f.dt <= 0:
            problems.append("field.dt: must be positive")
        c = f.closure
        if c.kind == "linear":
            K = cfg.types or (params.K if params is not None else None)
            for name in ("a_q", "be_q", "a_sv", "be_sv"):
                vals = getattr(c, name)
                if vals is None and params is None:
                    problems.append(f"field.closure.{name}: required for a linear closure without a dynamics section")
                elif vals is not None and K is not None and len(vals) != K:
                    problems.append(f"field.closure.{name}: expected {K} entries")
    if cfg.ensemble is not None:
        _collect(problems, "ensemble", lambda: build_ensemble(cfg, seed))
    return problems


def _format_pydantic(exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        out.append(f"{path}: {err['msg']}")
    return out


def parse_config(path, allow_unstable: bool | None = None, seed: int | None = None):
    """Read, schema-check and semantically validate a JSON scenario.

    Returns ``(config, sha256_of_file_bytes)``. Raises ConfigError listing every
    problem, or OSError if the file cannot be read.
    """
    raw = Path(path).read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"malformed JSON: {exc}", errors=[f"<root>: malformed JSON: {exc}"],
                          module="cli", operation="parse_config") from None
    try:
        cfg = ScenarioConfig.model_validate(doc)
    except ValidationError as exc:
        problems = _format_pydantic(exc)
        raise ConfigError("; ".join(problems), errors=problems, module="cli", operation="parse_config") from None
    problems = validate_sections(cfg, allow_unstable, seed)
    if problems:
        raise ConfigError("; ".join(problems), errors=problems, module="cli", operation="parse_config")
    return cfg, digest
