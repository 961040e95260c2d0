"""Domain-integrated disturbance dynamics.

Totals are split into slow constant means and small dimensionless
disturbances, ``Q_k(t) = Q_k0 (1 + q_k(t))`` and ``Et_kQ(t) = Et_k0Q (1 + et_kq(t))``
(likewise for SV). With the linear coupling

    Q_k0 dq_k/dt = a_kq Et_k0Q et_kq,      Et_k0Q det_kq/dt = be_kq Q_k0 q_k

each type and each of the (q, sv) lines is a harmonic oscillator with
``omega^2 = -a * be``. Types never interact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericError

AMPLITUDE_LIMIT = 0.1
MAX_OMEGA_DT = 0.5


@dataclass(frozen=True)
class Frequencies:
    """Per-type rates. Where ``unstable`` is set the rate is an exponential growth rate, not an angular frequency."""

    omega_q: np.ndarray
    omega_sv: np.ndarray
    unstable_q: np.ndarray
    unstable_sv: np.ndarray


def _rate(a, be, label, allow_unstable):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    be = np.atleast_1d(np.asarray(be, dtype=float))
    prod = -a * be
    unstable = prod <= 0
    if unstable.any():
        degenerate = prod == 0
        if degenerate.any() or not allow_unstable:
            k = int(np.argmax(degenerate if degenerate.any() else unstable))
            raise ConfigError(
                f"non-oscillatory {label} parameters for type {k}: a*be = {-prod[k]!r}; "
                "oscillation requires omega^2 = -a*be > 0",
                module="dynamics",
                operation="oscillator_frequencies",
            )
    return np.sqrt(np.abs(prod)), unstable


def oscillator_frequencies(a_q, be_q, a_sv, be_sv, allow_unstable: bool = False) -> Frequencies:
    """``omega = sqrt(-a * be)`` for the volume and value lines of every type.

    ``a * be >= 0`` is rejected; with ``allow_unstable`` a strictly positive
    product is admitted and ``sqrt(a * be)`` is returned, flagged unstable.
    A zero product is always rejected.
    """
    wq, uq = _rate(a_q, be_q, "volume", allow_unstable)
    wsv, usv = _rate(a_sv, be_sv, "value", allow_unstable)
    return Frequencies(wq, wsv, uq, usv)


@dataclass(frozen=True)
class DisturbanceParams:
    """Per-type means, couplings and initial-phase amplitudes; every field is a length-K array."""

    Q0: np.ndarray
    SV0: np.ndarray
    Et0_q: np.ndarray
    Et0_sv: np.ndarray
    a_q: np.ndarray
    be_q: np.ndarray
    a_sv: np.ndarray
    be_sv: np.ndarray
    c_q: np.ndarray
    d_q: np.ndarray
    c_sv: np.ndarray
    d_sv: np.ndarray
    allow_unstable: bool = False

    def __post_init__(self):
        names = [f for f in self.__dataclass_fields__ if f != "allow_unstable"]
        for name in names:
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        K = self.Q0.shape[0]
        problems = [f"{n} has length {getattr(self, n).shape[0]}, expected {K}"
                    for n in names if getattr(self, n).shape != (K,)]
        if problems:
            raise ConfigError("; ".join(problems), errors=problems, module="dynamics")
        if (self.Q0 <= 0).any() or (self.SV0 <= 0).any():
            problems.append("mean levels Q0 and SV0 must be positive")
        if (self.Et0_q == 0).any() or (self.Et0_sv == 0).any():
            problems.append("mean expected transactions Et0 must be non-zero")
        try:
            freqs = oscillator_frequencies(self.a_q, self.be_q, self.a_sv, self.be_sv, self.allow_unstable)
        except ConfigError as exc:
            problems.append(str(exc))
            freqs = None
        if problems:
            raise ConfigError("; ".join(problems), errors=problems, module="dynamics")
        object.__setattr__(self, "_freqs", freqs)

    @property
    def K(self) -> int:
        return self.Q0.shape[0]

    @property
    def frequencies(self) -> Frequencies:
        return self._freqs

    @property
    def omega_q(self) -> np.ndarray:
        return self._freqs.omega_q

    @property
    def omega_sv(self) -> np.ndarray:
        return self._freqs.omega_sv

    def permuted(self, order) -> "DisturbanceParams":
        order = np.asarray(order)
        kw = {n: getattr(self, n)[order] for n in self.__dataclass_fields__ if n != "allow_unstable"}
        return DisturbanceParams(allow_unstable=self.allow_unstable, **kw)


@dataclass(frozen=True)
class DisturbanceState:
    """Dimensionless disturbances at time(s) ``t``; arrays are (K,) or (T, K)."""

    t: float | np.ndarray
    q: np.ndarray
    sv: np.ndarray
    et_q: np.ndarray
    et_sv: np.ndarray


def harmonic(c, d, omega, t, unstable=False):
    """``x = c sin(wt) + d cos(wt)`` and ``dx/dt``; hyperbolic functions where ``unstable``."""
    t = np.asarray(t, dtype=float)
    if np.ndim(t) == 1:
        t = t[:, None]
    phase = omega * t
    x = c * np.sin(phase) + d * np.cos(phase)
    dx = omega * (c * np.cos(phase) - d * np.sin(phase))
    unstable = np.asarray(unstable)
    if unstable.any():
        xh = c * np.sinh(phase) + d * np.cosh(phase)
        dxh = omega * (c * np.cosh(phase) + d * np.sinh(phase))
        x = np.where(unstable, xh, x)
        dx = np.where(unstable, dxh, dx)
    return x, dx


def closed_form_disturbance(params: DisturbanceParams, t) -> DisturbanceState:
    """Harmonic solution at time ``t`` (scalar or 1-D array).

    Expectation disturbances follow from the volume/value equations:
    ``et_kq = Q_k0 / (a_kq Et_k0Q) * dq_k/dt``.
    """
    f = params.frequencies
    q, dq = harmonic(params.c_q, params.d_q, f.omega_q, t, f.unstable_q)
    sv, dsv = harmonic(params.c_sv, params.d_sv, f.omega_sv, t, f.unstable_sv)
    et_q = params.Q0 / (params.a_q * params.Et0_q) * dq
    et_sv = params.SV0 / (params.a_sv * params.Et0_sv) * dsv
    return DisturbanceState(t, q, sv, et_q, et_sv)


@dataclass(frozen=True)
class DisturbanceTrajectory:
    t: np.ndarray
    q: np.ndarray
    sv: np.ndarray
    et_q: np.ndarray
    et_sv: np.ndarray

    def write_csv(self, handle, header_comment: str | None = None):
        if header_comment:
            handle.write(f"# {header_comment}\n")
        w = csv.writer(handle, lineterminator="\n")
        w.writerow(["t", "k", "q", "sv", "et_q", "et_sv"])
        for i, ti in enumerate(self.t):
            for k in range(self.q.shape[1]):
                w.writerow([repr(float(ti)), k, repr(float(self.q[i, k])), repr(float(self.sv[i, k])),
                            repr(float(self.et_q[i, k])), repr(float(self.et_sv[i, k]))])


def closed_form_trajectory(params: DisturbanceParams, t) -> DisturbanceTrajectory:
    s = closed_form_disturbance(params, np.asarray(t, dtype=float))
    return DisturbanceTrajectory(np.asarray(t, dtype=float), s.q, s.sv, s.et_q, s.et_sv)


def integrate_coupled(params: DisturbanceParams, state0: DisturbanceState, dt: float, steps: int,
                      t0: float = 0.0) -> DisturbanceTrajectory:
    """Fixed-step RK4 of the first-order coupled system, starting from ``state0``.

    ``dq/dt = a (Et0/Q0) et`` and ``det/dt = be (Q0/Et0) q`` for both lines of every type.
    """
    if not dt > 0:
        raise NumericError(f"dt must be positive, got {dt}", module="dynamics", operation="integrate_coupled")
    f = params.frequencies
    worst = float(max(f.omega_q.max(), f.omega_sv.max())) * dt
    if worst >= MAX_OMEGA_DT:
        raise NumericError(
            f"step too coarse: omega*dt = {worst:.3g} >= {MAX_OMEGA_DT}",
            module="dynamics",
            operation="integrate_coupled",
        )
    K = params.K
    a = np.concatenate([params.a_q * params.Et0_q / params.Q0, params.a_sv * params.Et0_sv / params.SV0])
    b = np.concatenate([params.be_q * params.Q0 / params.Et0_q, params.be_sv * params.SV0 / params.Et0_sv])
    x0 = np.concatenate([np.broadcast_to(state0.q, (K,)), np.broadcast_to(state0.sv, (K,))])
    y0 = np.concatenate([np.broadcast_to(state0.et_q, (K,)), np.broadcast_to(state0.et_sv, (K,))])
    xs, ys = _kernels.rk4_pairs(x0, y0, a, b, dt, steps)
    t = t0 + dt * np.arange(steps + 1)
    return DisturbanceTrajectory(t, xs[:, :K], xs[:, K:], ys[:, :K], ys[:, K:])


def oscillator_energy(x, dxdt, omega):
    """``omega^2 x^2 + (dx/dt)^2``, conserved by the harmonic solution."""
    return omega ** 2 * x ** 2 + dxdt ** 2


def check_linearization(params: DisturbanceParams, limit: float = AMPLITUDE_LIMIT) -> list[str]:
    """One warning per type and line whose ``|c| + |d|`` reaches ``limit``; never raises."""
    warnings = []
    for k in range(params.K):
        for line, c, d in (("q", params.c_q[k], params.d_q[k]), ("sv", params.c_sv[k], params.d_sv[k])):
            size = abs(c) + abs(d)
            if size >= limit:
                warnings.append(
                    f"type {k}: {line} amplitude |c|+|d| = {size:.4g} >= {limit}; linearization is doubtful"
                )
    return warnings
