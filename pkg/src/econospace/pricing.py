"""Price and return disturbances decomposed by expectation type.

Arrays carry the expectation type on the LAST axis, so a single instant is
(K,) and a time series is (T, K).

Composite price disturbance, linear in the per-type disturbances::

    pi = sum(mu_k sv_k) - sum(lam_k q_k) = sum(mu_k pi_k) + sum((mu_k - lam_k) q_k)

with ``lam_k = Q_k0 / Q_0``, ``mu_k = SV_k0 / SV_0`` and ``sv_k = pi_k + q_k``.
Taking the second form as the definition of ``pi``, the return over a
horizon ``d`` splits exactly into partial returns ``r_k`` and volume returns
``w_k``::

    r = sum(eps_k r_k) + sum(eta_k w_k),   sum(eps_k + eta_k) = 1

``exact_price`` keeps the unlinearised ratio SV/Q as a separate oracle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegeneracyError

DENOM_TOL = 1e-9
EQUAL_PRICE_RTOL = 1e-14
TREND_TOL = 1e-12


@dataclass(frozen=True)
class Weights:
    lam: np.ndarray
    mu: np.ndarray
    p_k0: np.ndarray
    p0: float
    equal_mean_prices: bool

    @property
    def K(self) -> int:
        return self.lam.shape[0]

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam.tolist(),
            "mu": self.mu.tolist(),
            "p_k0": self.p_k0.tolist(),
            "p0": self.p0,
            "mu_minus_lambda": (self.mu - self.lam).tolist(),
            "equal_mean_prices": self.equal_mean_prices,
        }


def weights(Q0, SV0) -> Weights:
    """Volume weights ``lam``, value weights ``mu`` and mean prices.

    When every ``p_k0`` equals ``p_0`` (to ``EQUAL_PRICE_RTOL``) the two weight
    vectors coincide analytically; ``mu`` is then set to ``lam`` so that the
    volume terms vanish exactly rather than to rounding.
    """
    Q0 = np.atleast_1d(np.asarray(Q0, dtype=float))
    SV0 = np.atleast_1d(np.asarray(SV0, dtype=float))
    if Q0.size == 0 or Q0.shape != SV0.shape or Q0.ndim != 1:
        raise ConfigError("weights need two equal-length, non-empty lists of means", module="pricing",
                          operation="weights")
    if (Q0 <= 0).any() or (SV0 <= 0).any() or not (np.isfinite(Q0).all() and np.isfinite(SV0).all()):
        raise ConfigError("mean volumes and values must be positive and finite", module="pricing",
                          operation="weights")
    Qt = math.fsum(Q0)
    SVt = math.fsum(SV0)
    lam = Q0 / Qt
    mu = SV0 / SVt
    p_k0 = SV0 / Q0
    p0 = SVt / Qt
    equal = bool(np.all(np.abs(p_k0 - p0) <= EQUAL_PRICE_RTOL * p0))
    if equal:
        mu = lam.copy()
    return Weights(lam, mu, p_k0, p0, equal)


def _check_k(w: Weights, *arrays):
    for a in arrays:
        if np.shape(a)[-1:] != (w.K,):
            raise ConfigError(f"length mismatch: series has {np.shape(a)[-1:]} types, weights have {w.K}",
                              module="pricing")


def price_disturbance(sv, q, w: Weights):
    """``pi = sum(mu sv) - sum(lam q)`` along the type axis."""
    sv = np.asarray(sv, dtype=float)
    q = np.asarray(q, dtype=float)
    _check_k(w, sv, q)
    return np.sum(w.mu * sv, axis=-1) - np.sum(w.lam * q, axis=-1)


def price_from_partials(pi_k, q, w: Weights):
    """``pi = sum(mu pi_k) + sum((mu - lam) q)`` along the type axis."""
    pi_k = np.asarray(pi_k, dtype=float)
    q = np.asarray(q, dtype=float)
    _check_k(w, pi_k, q)
    return np.sum(w.mu * pi_k, axis=-1) + np.sum((w.mu - w.lam) * q, axis=-1)


def partials_from_transactions(sv, q):
    """Linear partial price disturbance ``pi_k = sv_k - q_k``."""
    return np.asarray(sv, dtype=float) - np.asarray(q, dtype=float)


def exact_price(Q, SV, Q0=None, SV0=None):
    """``p = sum SV_k / sum Q_k`` and, given the means, ``pi_exact = p / p_0 - 1``."""
    Q = np.asarray(Q, dtype=float)
    SV = np.asarray(SV, dtype=float)
    Qt = Q.sum(axis=-1)
    if np.any(Qt <= 0):
        raise DegeneracyError("zero total trade volume", module="pricing", operation="exact_price")
    p = SV.sum(axis=-1) / Qt
    if Q0 is None:
        return p, None
    p0 = math.fsum(np.asarray(SV0, dtype=float)) / math.fsum(np.asarray(Q0, dtype=float))
    return p, p / p0 - 1.0


def exact_price_from_disturbances(q, sv, Q0, SV0):
    Q0 = np.asarray(Q0, dtype=float)
    SV0 = np.asarray(SV0, dtype=float)
    return exact_price(Q0 * (1.0 + np.asarray(q)), SV0 * (1.0 + np.asarray(sv)), Q0, SV0)


def _guard(denom, what, operation):
    denom = np.asarray(denom, dtype=float)
    if np.any(np.abs(denom) <= DENOM_TOL):
        raise DegeneracyError(f"degenerate denominator 1 + {what} near zero", module="pricing",
                              operation=operation)
    return denom


def relative_change(now, prev, what="disturbance", operation="partial_return"):
    """``(now - prev) / (1 + prev)``: the return of a level ``X0 (1 + x)``."""
    now = np.asarray(now, dtype=float)
    prev = np.asarray(prev, dtype=float)
    return (now - prev) / _guard(1.0 + prev, what, operation)


def horizon_steps(d: float, sample_step: float) -> int:
    """Horizon ``d`` as a whole number of samples; off-grid horizons are rejected."""
    ratio = d / sample_step
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise ConfigError(f"horizon d={d} is not a positive multiple of sample_step={sample_step}",
                          module="pricing", operation="partial_return")
    return n


def _lagged(series, lag):
    series = np.asarray(series, dtype=float)
    if not 1 <= lag < series.shape[0]:
        raise ConfigError(f"horizon of {lag} samples does not fit a series of {series.shape[0]}",
                          module="pricing", operation="partial_return")
    return series[lag:], series[:-lag]


def partial_return(pi_k, lag: int):
    """``r_k(t, d)`` for every ``t`` with ``t - d`` on the series; shape (T - lag, K)."""
    now, prev = _lagged(pi_k, lag)
    return relative_change(now, prev, "pi_k", "partial_return")


def volume_return(q, lag: int):
    """``w_k(t, d)``, the volume analogue of :func:`partial_return`."""
    now, prev = _lagged(q, lag)
    return relative_change(now, prev, "q_k", "volume_return")


@dataclass(frozen=True)
class ReturnDecomposition:
    """Return over one horizon at one or many times; per-type arrays are (..., K).

    In trend mode ``eps``/``eta`` are the trend-adjusted weights and ``drift``
    is the pure trend contribution; otherwise ``drift`` is zero.
    """

    r_direct: np.ndarray
    r_decomposed: np.ndarray
    eps: np.ndarray
    eta: np.ndarray
    r_k: np.ndarray
    w_k: np.ndarray
    pi_prev: np.ndarray
    pi_now: np.ndarray
    drift: np.ndarray | float = 0.0

    @property
    def partial_component(self):
        return np.sum(self.eps * self.r_k, axis=-1)

    @property
    def volume_component(self):
        return np.sum(self.eta * self.w_k, axis=-1)

    @property
    def weight_sum(self):
        return np.sum(self.eps + self.eta, axis=-1)


def return_decomposition(pi_prev, pi_now, q_prev, q_now, w: Weights) -> ReturnDecomposition:
    """Decompose ``r(t, d)`` given per-type disturbances at ``t - d`` and ``t``."""
    pi_prev = np.asarray(pi_prev, dtype=float)
    pi_now = np.asarray(pi_now, dtype=float)
    q_prev = np.asarray(q_prev, dtype=float)
    q_now = np.asarray(q_now, dtype=float)
    _check_k(w, pi_prev, pi_now, q_prev, q_now)
    P_prev = price_from_partials(pi_prev, q_prev, w)
    P_now = price_from_partials(pi_now, q_now, w)
    denom = _guard(1.0 + P_prev, "pi", "return_decomposition")
    r_k = relative_change(pi_now, pi_prev, "pi_k", "return_decomposition")
    w_k = relative_change(q_now, q_prev, "q_k", "return_decomposition")
    eps = w.mu * (1.0 + pi_prev) / denom[..., None]
    eta = (w.mu - w.lam) * (1.0 + q_prev) / denom[..., None]
    r_dec = np.sum(eps * r_k, axis=-1) + np.sum(eta * w_k, axis=-1)
    r_direct = (P_now - P_prev) / denom
    return ReturnDecomposition(r_direct, r_dec, eps, eta, r_k, w_k, P_prev, P_now)


def decompose_series(pi_k, q, w: Weights, lag: int) -> ReturnDecomposition:
    """:func:`return_decomposition` for every ``t`` of (T, K) series at a lag of ``lag`` samples."""
    pi_now, pi_prev = _lagged(pi_k, lag)
    q_now, q_prev = _lagged(q, lag)
    return return_decomposition(pi_prev, pi_now, q_prev, q_now, w)


def trend_rate(beta, gamma, w: Weights) -> float:
    """Price trend rate implied by value and volume trend rates: ``sum(mu beta - lam gamma)``."""
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    _check_k(w, beta, gamma)
    return float(np.sum(w.mu * beta - w.lam * gamma))


def trend_return(alpha, beta, gamma, pi_prev, pi_now, q_prev, q_now, w: Weights, t, d) -> ReturnDecomposition:
    """Return with a linear price trend ``p = p_0 (1 + alpha t + pi(t))``.

    ``alpha`` may be None, in which case it is derived from ``beta``/``gamma``;
    otherwise it must match them to ``TREND_TOL``. At ``alpha = 0`` this gives
    the same numbers as :func:`return_decomposition`.
    """
    implied = trend_rate(beta, gamma, w)
    if alpha is None:
        alpha = implied
    elif abs(alpha - implied) > TREND_TOL:
        raise ConfigError(
            f"inconsistent trend rates: alpha={alpha!r} but sum(mu*beta - lam*gamma)={implied!r}",
            module="pricing",
            operation="trend_return",
        )
    pi_prev = np.asarray(pi_prev, dtype=float)
    pi_now = np.asarray(pi_now, dtype=float)
    q_prev = np.asarray(q_prev, dtype=float)
    q_now = np.asarray(q_now, dtype=float)
    _check_k(w, pi_prev, pi_now, q_prev, q_now)
    P_prev = price_from_partials(pi_prev, q_prev, w)
    P_now = price_from_partials(pi_now, q_now, w)
    t = np.asarray(t, dtype=float)
    level = 1.0 + alpha * (t - d)
    denom = _guard(level + P_prev, "alpha*(t-d) + pi", "trend_return")
    r_k = relative_change(pi_now, pi_prev, "pi_k", "trend_return")
    w_k = relative_change(q_now, q_prev, "q_k", "trend_return")
    eps = w.mu * (1.0 + pi_prev) / denom[..., None]
    eta = (w.mu - w.lam) * (1.0 + q_prev) / denom[..., None]
    drift = alpha * d / denom
    r_dec = drift + (np.sum(eps * r_k, axis=-1) + np.sum(eta * w_k, axis=-1))
    r_direct = drift + (P_now - P_prev) / denom
    return ReturnDecomposition(r_direct, r_dec, eps, eta, r_k, w_k, P_prev, P_now, drift)


REPORT_COLUMNS = ["t", "d", "r_direct", "r_decomposed", "k", "epsilon_k", "eta_k", "r_k", "w_k", "pi", "pi_exact"]


def write_report_csv(rows, handle, header_comment: str | None = None):
    """``rows`` are dicts keyed by :data:`REPORT_COLUMNS`; floats are written round-trip exact."""
    if header_comment:
        handle.write(f"# {header_comment}\n")
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        writer.writerow([
            repr(float(row[c])) if isinstance(row[c], (float, np.floating)) else row[c]
            for c in REPORT_COLUMNS
        ])


def report_rows(times, d, dec: ReturnDecomposition, pi_exact_now):
    """Flatten a series decomposition into one row per (t, k)."""
    for i, t in enumerate(times):
        for k in range(dec.eps.shape[-1]):
            yield {
                "t": float(t),
                "d": float(d),
                "r_direct": float(dec.r_direct[i]),
                "r_decomposed": float(dec.r_decomposed[i]),
                "k": k,
                "epsilon_k": float(dec.eps[i, k]),
                "eta_k": float(dec.eta[i, k]),
                "r_k": float(dec.r_k[i, k]),
                "w_k": float(dec.w_k[i, k]),
                "pi": float(dec.pi_now[i]),
                "pi_exact": float(pi_exact_now[i]),
            }
