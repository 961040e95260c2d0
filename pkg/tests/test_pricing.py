import io
import math
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fraction_decomposition, trend_oracle

from econospace.errors import ConfigError, DegeneracyError
from econospace.pricing import (decompose_series, exact_price, exact_price_from_disturbances, horizon_steps,
                                partial_return, price_disturbance, price_from_partials, report_rows,
                                return_decomposition, trend_rate, trend_return, volume_return, weights,
                                write_report_csv)

EX_W = weights([60, 40], [120, 180])
PI_PREV, Q_PREV = np.array([0.005, -0.03]), np.array([0.005, 0.01])
PI_NOW, Q_NOW = np.array([0.01, -0.01]), np.array([0.0, 0.02])


def test_weight_examples():
    np.testing.assert_array_equal(EX_W.lam, [0.6, 0.4])
    np.testing.assert_array_equal(EX_W.mu, [0.4, 0.6])
    np.testing.assert_array_equal(EX_W.p_k0, [2.0, 4.5])
    assert EX_W.p0 == 3.0 and not EX_W.equal_mean_prices
    one = weights([10], [30])
    assert one.lam[0] == one.mu[0] == 1.0 and one.p_k0[0] == one.p0 == 3.0
    sym = weights([50, 50], [150, 150])
    np.testing.assert_array_equal(sym.lam, [0.5, 0.5])
    assert sym.equal_mean_prices and np.array_equal(sym.mu, sym.lam)


@pytest.mark.parametrize("Q, SV", [([], []), ([1.0, -2.0], [1.0, 1.0]), ([1.0], [0.0]), ([1.0, 2.0], [1.0])])
def test_weight_errors(Q, SV):
    with pytest.raises(ConfigError):
        weights(Q, SV)


@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(1e-3, 1e6), st.floats(1e-3, 1e6)), min_size=1, max_size=8))
def test_weight_normalization(pairs):
    Q, SV = zip(*pairs)
    w = weights(Q, SV)
    assert abs(math.fsum(w.lam) - 1) <= 1e-15
    assert abs(math.fsum(w.mu) - 1) <= 1e-15
    assert np.all(w.lam > 0) and np.all(w.mu > 0)


def test_price_examples():
    assert price_disturbance([0.01, -0.02], [0.005, 0.01], EX_W) == pytest.approx(-0.015, abs=1e-16)
    assert price_from_partials(PI_PREV, Q_PREV, EX_W) == pytest.approx(-0.015, abs=1e-16)
    sym = weights([50, 50], [150, 150])
    assert price_disturbance([0.02, -0.01], [0.02, -0.01], sym) == 0.0
    assert price_disturbance([0.0, 0.0], [0.0, 0.0], EX_W) == 0.0
    assert price_from_partials([0.01, 0.03], [0.5, -0.2], sym) == pytest.approx(0.02, abs=1e-17)
    with pytest.raises(ConfigError):
        price_disturbance([0.1], [0.1, 0.2], EX_W)


def test_exact_price_example():
    Q = [60 * 1.005, 40 * 1.01]
    SV = [120 * 1.01, 180 * 0.98]
    p, pi = exact_price(Q, SV, [60, 40], [120, 180])
    oracle = (Fr(120) * Fr("1.01") + Fr(180) * Fr("0.98")) / (Fr(60) * Fr("1.005") + Fr(40) * Fr("1.01"))
    assert p == pytest.approx(float(oracle), rel=1e-15)
    assert p == pytest.approx(2.9553128, abs=1e-7)
    assert pi == pytest.approx(-0.0148957, abs=1e-7)
    assert abs(-0.015 - pi) == pytest.approx(1.04e-4, abs=1e-6)
    p, pi = exact_price([60, 40], [120, 180], [60, 40], [120, 180])
    assert p == 3.0 and pi == 0.0
    p, _ = exact_price([7.0], [21.7])
    assert p == 21.7 / 7.0
    with pytest.raises(DegeneracyError):
        exact_price([0.0, 0.0], [1.0, 1.0])


def test_linear_identity_sv_equals_pi_plus_q(rng):
    w = weights(rng.uniform(1, 10, 5), rng.uniform(1, 10, 5))
    q = rng.uniform(-0.05, 0.05, (20, 5))
    pi_k = rng.uniform(-0.05, 0.05, (20, 5))
    np.testing.assert_allclose(price_disturbance(pi_k + q, q, w), price_from_partials(pi_k, q, w), atol=1e-16)


def test_partial_and_volume_returns():
    assert partial_return([[0.005], [0.01]], 1)[0, 0] == pytest.approx(0.005 / 1.005, rel=1e-15)
    assert volume_return([[0.01], [0.02]], 1)[0, 0] == pytest.approx(0.01 / 1.01, rel=1e-15)
    assert partial_return([[0.02], [0.02], [0.02]], 2)[0, 0] == 0.0
    with pytest.raises(DegeneracyError):
        partial_return([[-1.0], [0.1]], 1)
    with pytest.raises(ConfigError):
        partial_return([[0.0], [0.1]], 2)


def test_horizon_grid():
    assert horizon_steps(0.5, 0.1) == 5
    with pytest.raises(ConfigError):
        horizon_steps(0.25, 0.1)
    with pytest.raises(ConfigError):
        horizon_steps(0.0, 0.1)


def test_hand_audited_decomposition():
    dec = return_decomposition(PI_PREV, PI_NOW, Q_PREV, Q_NOW, EX_W)
    assert dec.pi_prev == pytest.approx(-0.015, abs=1e-16)
    assert dec.pi_now == pytest.approx(0.002, abs=1e-16)
    assert dec.r_direct == pytest.approx(0.0172589, abs=1e-7)
    assert dec.r_decomposed == pytest.approx(0.0172589, abs=1e-7)
    np.testing.assert_allclose(dec.eps, [0.408122, 0.590863], atol=1e-6)
    np.testing.assert_allclose(dec.eta, [-0.204061, 0.205076], atol=1e-6)
    assert abs(dec.weight_sum - 1) <= 1e-15
    r, eps, eta = fraction_decomposition([60, 40], [120, 180], PI_PREV, PI_NOW, Q_PREV, Q_NOW)
    assert dec.r_direct == pytest.approx(float(r), rel=1e-14)
    np.testing.assert_allclose(dec.eps, [float(e) for e in eps], rtol=1e-14)
    np.testing.assert_allclose(dec.eta, [float(e) for e in eta], rtol=1e-14)


def test_no_change_gives_zero_return():
    dec = return_decomposition(PI_PREV, PI_PREV, Q_PREV, Q_PREV, EX_W)
    assert dec.r_direct == 0 and dec.r_decomposed == 0
    assert not dec.r_k.any() and not dec.w_k.any()


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 8))
def test_decomposition_identity_property(seed, K):
    rng = np.random.default_rng(seed)
    w = weights(rng.uniform(0.1, 100, K), rng.uniform(0.1, 100, K))
    pi_k = rng.uniform(-0.05, 0.05, (30, K))
    q = rng.uniform(-0.05, 0.05, (30, K))
    lag = int(rng.integers(1, 29))
    dec = decompose_series(pi_k, q, w, lag)
    assert np.max(np.abs(dec.r_direct - dec.r_decomposed)) <= 1e-12
    assert np.max(np.abs(dec.weight_sum - 1)) <= 1e-12
    np.testing.assert_allclose(dec.partial_component + dec.volume_component, dec.r_decomposed, atol=1e-15)


def test_identity_against_fractions(rng):
    for _ in range(20):
        K = int(rng.integers(1, 9))
        Q0, SV0 = rng.uniform(1, 50, K), rng.uniform(1, 50, K)
        a = [rng.uniform(-0.05, 0.05, K) for _ in range(4)]
        dec = return_decomposition(*a[:2], *a[2:], weights(Q0, SV0))
        r, eps, _ = fraction_decomposition([Fr(float(x)) for x in Q0], [Fr(float(x)) for x in SV0], *a[:2], *a[2:])
        assert dec.r_direct == pytest.approx(float(r), rel=1e-12, abs=1e-16)
        np.testing.assert_allclose(dec.eps, [float(e) for e in eps], rtol=1e-13)


def test_equal_mean_prices_degenerate(rng):
    K = 4
    Q0 = rng.uniform(1, 10, K)
    w = weights(Q0, 3.7 * Q0)
    assert w.equal_mean_prices
    pi_k = rng.uniform(-0.05, 0.05, (10, K))
    q = rng.uniform(-0.05, 0.05, (10, K))
    dec = decompose_series(pi_k, q, w, 3)
    assert np.max(np.abs(dec.eta)) == 0.0
    np.testing.assert_array_equal(price_from_partials(pi_k, q, w), np.sum(w.mu * pi_k, axis=-1))
    np.testing.assert_allclose(dec.r_direct, dec.partial_component, atol=1e-15)


def test_degenerate_denominator():
    w = weights([1.0], [1.0])
    with pytest.raises(DegeneracyError):
        return_decomposition([-1.0 + 1e-10], [0.0], [0.0], [0.0], w)


def test_linearization_gap_is_second_order():
    Q0, SV0 = [60.0, 40.0], [120.0, 180.0]
    w = weights(Q0, SV0)
    base_q, base_sv = np.array([0.005, 0.01]), np.array([0.01, -0.02])
    gaps = []
    for eps in (0.01, 0.02, 0.04):
        s = eps / 0.02
        q, sv = s * base_q, s * base_sv
        _, pi_exact = exact_price_from_disturbances(q, sv, Q0, SV0)
        lin = price_disturbance(sv, q, w)
        gaps.append(abs(lin - pi_exact))
        assert gaps[-1] <= 5 * eps ** 2
    slope = np.polyfit(np.log([0.01, 0.02, 0.04]), np.log(gaps), 1)[0]
    assert 1.8 <= slope <= 2.2
    assert gaps[1] == pytest.approx(1.04e-4, rel=0.01)


def test_trend_example():
    w = weights([50, 50], [150, 150])
    z = np.zeros(2)
    dec = trend_return(0.01, [0.01, 0.01], [0.0, 0.0], z, z, z, z, w, 1.0, 0.5)
    assert dec.r_direct == pytest.approx(0.005 / 1.005, rel=1e-14)
    assert dec.r_decomposed == pytest.approx(0.005 / 1.005, rel=1e-14)
    assert dec.r_direct == pytest.approx(trend_oracle(0.01, 0.0, 0.0, 1.0, 0.5), rel=1e-14)


def test_trend_rate_consistency():
    w = weights([50, 50], [150, 150])
    assert trend_rate([0.02, 0.03], [0.02, 0.03], w) == 0.0
    assert trend_rate([0.02, 0.0], [0.0, 0.0], EX_W) == pytest.approx(0.008)
    z = np.zeros(2)
    with pytest.raises(ConfigError, match="inconsistent"):
        trend_return(0.5, [0.0, 0.0], [0.0, 0.0], z, z, z, z, w, 1.0, 0.5)
    derived = trend_return(None, [0.02, 0.0], [0.0, 0.0], z, z, z, z, EX_W, 2.0, 1.0)
    assert derived.drift == pytest.approx(0.008 / (1 + 0.008))


def test_trend_against_direct_oracle(rng):
    for _ in range(100):
        K = int(rng.integers(1, 9))
        w = weights(rng.uniform(1, 50, K), rng.uniform(1, 50, K))
        beta, gamma = rng.uniform(-0.02, 0.02, K), rng.uniform(-0.02, 0.02, K)
        alpha = trend_rate(beta, gamma, w)
        pp, pn, qp, qn = (rng.uniform(-0.05, 0.05, K) for _ in range(4))
        t, d = float(rng.uniform(1, 10)), float(rng.uniform(0.1, 1))
        dec = trend_return(alpha, beta, gamma, pp, pn, qp, qn, w, t, d)
        oracle = trend_oracle(alpha, dec.pi_prev, dec.pi_now, t, d)
        assert abs(dec.r_direct - oracle) <= 1e-12
        assert abs(dec.r_decomposed - oracle) <= 1e-12


def test_trend_zero_reduces_bit_for_bit(rng):
    K = 3
    w = weights(rng.uniform(1, 50, K), rng.uniform(1, 50, K))
    pp, pn, qp, qn = (rng.uniform(-0.05, 0.05, (25, K)) for _ in range(4))
    plain = return_decomposition(pp, pn, qp, qn, w)
    trend = trend_return(0.0, np.zeros(K), np.zeros(K), pp, pn, qp, qn, w, np.linspace(1, 5, 25), 0.5)
    for name in ("r_direct", "r_decomposed", "eps", "eta", "r_k", "w_k"):
        assert np.array_equal(getattr(plain, name), getattr(trend, name)), name


def test_report_csv():
    w = EX_W
    pi_k = np.array([PI_PREV, PI_NOW])
    q = np.array([Q_PREV, Q_NOW])
    dec = decompose_series(pi_k, q, w, 1)
    rows = list(report_rows([1.0], 1.0, dec, [0.0017]))
    assert len(rows) == 2 and rows[1]["k"] == 1
    buf = io.StringIO()
    write_report_csv(rows, buf, "seed=3")
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# seed=3"
    assert lines[1] == "t,d,r_direct,r_decomposed,k,epsilon_k,eta_k,r_k,w_k,pi,pi_exact"
    assert float(lines[2].split(",")[2]) == float(dec.r_direct[0])
