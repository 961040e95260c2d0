"""Economic domain, grid of unit volumes, and the agent population.

Agents live in the box ``0 <= x_i <= X_i`` whose axes are risk grades. A
population is stored column-wise (one array per attribute) because every
downstream consumer works on whole populations at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError

MAX_DIM = 3


@dataclass(frozen=True)
class EconomicDomain:
    bounds: tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.bounds)

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.bounds, dtype=float)


@dataclass(frozen=True)
class GridSpec:
    cells_per_axis: tuple[int, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(c) for c in self.cells_per_axis)

    @property
    def ncells(self) -> int:
        return int(np.prod(self.shape))

    def cell_extent(self, domain: EconomicDomain) -> np.ndarray:
        """Per-axis width ``dV_i = X_i / cells_i``."""
        return domain.upper / np.asarray(self.shape, dtype=float)

    def cell_volume(self, domain: EconomicDomain) -> float:
        return float(np.prod(self.cell_extent(domain)))

    def cell_centers(self, domain: EconomicDomain, axis: int) -> np.ndarray:
        dx = self.cell_extent(domain)[axis]
        return (np.arange(self.shape[axis]) + 0.5) * dx


def validate_domain(domain: EconomicDomain, grid: GridSpec) -> None:
    """Raise :class:`DomainError` listing every violated invariant."""
    problems = []
    n = len(domain.bounds)
    if not 1 <= n <= MAX_DIM:
        problems.append(f"dimension-out-of-range: n={n}, must be 1..{MAX_DIM}")
    for i, x in enumerate(domain.bounds):
        if not (np.isfinite(x) and x > 0):
            problems.append(f"non-positive bound: bounds[{i}]={x!r}")
    if len(grid.cells_per_axis) != n:
        problems.append(
            f"grid has {len(grid.cells_per_axis)} axes but domain has {n}"
        )
    for i, c in enumerate(grid.cells_per_axis):
        if int(c) != c or c < 1:
            problems.append(f"zero cells: cells_per_axis[{i}]={c!r}")
    if problems:
        raise DomainError(
            "; ".join(problems), errors=problems, module="espace", operation="validate_domain"
        )


def cell_multi_index(x, grid: GridSpec, domain: EconomicDomain) -> np.ndarray:
    """Per-axis cell indices ``floor(x_i / dV_i)``, upper edge folded into the last cell.

    ``x`` is reshaped to (N, n); the result is (N, n) integer indices.
    """
    pts = np.asarray(x, dtype=float).reshape(-1, domain.n)
    upper = domain.upper
    outside = ~np.all((pts >= 0.0) & (pts <= upper), axis=1)
    if outside.any():
        bad = pts[np.argmax(outside)]
        raise DomainError(
            f"coordinate outside domain: {bad.tolist()} not in [0, {upper.tolist()}]",
            module="espace",
            operation="cell_index",
        )
    idx = np.floor(pts / grid.cell_extent(domain)).astype(np.int64)
    return np.minimum(idx, np.asarray(grid.shape) - 1)


def cell_index(x, grid: GridSpec, domain: EconomicDomain):
    """Cell of one point: an int in 1-D, a tuple of ints otherwise."""
    row = cell_multi_index(x, grid, domain)
    if row.shape[0] != 1:
        raise DomainError("cell_index takes a single point; use flat_cell_index for arrays")
    if domain.n == 1:
        return int(row[0, 0])
    return tuple(int(i) for i in row[0])


def flat_cell_index(x, grid: GridSpec, domain: EconomicDomain) -> np.ndarray:
    """Flat C-order cell index for each row of an (N, n) coordinate array."""
    multi = cell_multi_index(x, grid, domain)
    return np.ravel_multi_index(tuple(multi.T), grid.shape).astype(np.int64)


@dataclass(frozen=True)
class TransactionPair:
    """Trade volume ``Q`` (asset units) and trade value ``SV`` (currency units)."""

    Q: float
    SV: float

    def __post_init__(self):
        if self.Q < 0 or self.SV < 0:
            raise DomainError(f"negative transaction pair ({self.Q}, {self.SV})")

    def __add__(self, other: "TransactionPair") -> "TransactionPair":
        return TransactionPair(self.Q + other.Q, self.SV + other.SV)

    @property
    def price(self) -> float | None:
        return self.SV / self.Q if self.Q > 0 else None

    @classmethod
    def total(cls, pairs) -> "TransactionPair":
        out = cls(0.0, 0.0)
        for p in pairs:
            out = out + p
        return out


@dataclass
class Agent:
    """One e-particle. ``trades``/``expectations`` hold one entry per expectation type."""

    id: int
    x: Sequence[float]
    v: Sequence[float]
    trades: Sequence[TransactionPair]
    expectations: Sequence[tuple[float, float]]


@dataclass(frozen=True)
class AgentPopulation:
    """Column store of N agents with K expectation types in n dimensions.

    ``x``, ``v``: (N, n); ``Q``, ``SV``, ``ex_q``, ``ex_sv``: (N, K).
    Rows are kept sorted by ``ids``; that order fixes the summation order.
    """

    ids: np.ndarray
    x: np.ndarray
    v: np.ndarray
    Q: np.ndarray
    SV: np.ndarray
    ex_q: np.ndarray
    ex_sv: np.ndarray

    def __post_init__(self):
        n_agents = len(self.ids)
        for name in ("x", "v", "Q", "SV", "ex_q", "ex_sv"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[0] != n_agents:
                raise DomainError(f"agent column {name!r} has shape {arr.shape}")
        if self.Q.shape != self.SV.shape or self.Q.shape != self.ex_q.shape:
            raise DomainError("per-type columns disagree on K")
        if (self.Q < 0).any() or (self.SV < 0).any():
            raise DomainError("agent trades must be non-negative")
        if n_agents > 1 and np.any(np.diff(self.ids) <= 0):
            raise DomainError("agent ids must be unique and sorted")

    def __len__(self):
        return len(self.ids)

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def K(self) -> int:
        return self.Q.shape[1]

    @classmethod
    def from_agents(cls, agents: Sequence[Agent]) -> "AgentPopulation":
        agents = sorted(agents, key=lambda a: a.id)
        return cls(
            ids=np.array([a.id for a in agents], dtype=np.int64),
            x=np.array([list(a.x) for a in agents], dtype=float).reshape(len(agents), -1),
            v=np.array([list(a.v) for a in agents], dtype=float).reshape(len(agents), -1),
            Q=np.array([[t.Q for t in a.trades] for a in agents], dtype=float).reshape(len(agents), -1),
            SV=np.array([[t.SV for t in a.trades] for a in agents], dtype=float).reshape(len(agents), -1),
            ex_q=np.array([[e[0] for e in a.expectations] for a in agents], dtype=float).reshape(len(agents), -1),
            ex_sv=np.array([[e[1] for e in a.expectations] for a in agents], dtype=float).reshape(len(agents), -1),
        )

    def to_agents(self) -> list[Agent]:
        return [
            Agent(
                id=int(self.ids[i]),
                x=self.x[i].tolist(),
                v=self.v[i].tolist(),
                trades=[TransactionPair(q, s) for q, s in zip(self.Q[i], self.SV[i])],
                expectations=list(zip(self.ex_q[i].tolist(), self.ex_sv[i].tolist())),
            )
            for i in range(len(self))
        ]

    def subset(self, mask) -> "AgentPopulation":
        return AgentPopulation(
            self.ids[mask], self.x[mask], self.v[mask], self.Q[mask],
            self.SV[mask], self.ex_q[mask], self.ex_sv[mask],
        )

    def with_motion(self, x: np.ndarray, v: np.ndarray) -> "AgentPopulation":
        return AgentPopulation(self.ids, x, v, self.Q, self.SV, self.ex_q, self.ex_sv)

    def check_inside(self, domain: EconomicDomain) -> None:
        if self.n != domain.n:
            raise DomainError(f"agents are {self.n}-D, domain is {domain.n}-D")
        if ((self.x < 0) | (self.x > domain.upper)).any():
            raise DomainError("agent outside economic domain", module="espace")


def advance_agents(pop: AgentPopulation, dt: float, domain: EconomicDomain) -> AgentPopulation:
    """Move agents by ``v * dt``.

    A coordinate that would leave the box is clamped to the boundary and the
    corresponding velocity component is zeroed.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}", module="espace", operation="advance_agents")
    upper = domain.upper
    x = pop.x + pop.v * dt
    low = x < 0.0
    high = x > upper
    hit = low | high
    x = np.clip(x, 0.0, upper)
    v = np.where(hit, 0.0, pop.v)
    return pop.with_motion(x, v)


@dataclass(frozen=True)
class AgentSampler:
    """Random population: uniform positions, normal velocities, uniform trades."""

    count: int
    K: int
    seed: int = 0
    velocity_scale: float = 0.01
    volume_range: tuple[float, float] = (1.0, 10.0)
    price_range: tuple[float, float] = (1.0, 5.0)
    expectation_range: tuple[float, float] = (0.5, 1.5)

    def sample(self, domain: EconomicDomain) -> AgentPopulation:
        rng = np.random.default_rng(self.seed)
        n, N, K = domain.n, self.count, self.K
        x = rng.uniform(0.0, 1.0, size=(N, n)) * domain.upper
        v = rng.normal(0.0, self.velocity_scale, size=(N, n))
        Q = rng.uniform(*self.volume_range, size=(N, K))
        SV = Q * rng.uniform(*self.price_range, size=(N, K))
        ex_q = rng.uniform(*self.expectation_range, size=(N, K))
        ex_sv = rng.uniform(*self.expectation_range, size=(N, K))
        return AgentPopulation(np.arange(N, dtype=np.int64), x, v, Q, SV, ex_q, ex_sv)
