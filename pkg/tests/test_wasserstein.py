import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from wasserclt.core import FiniteChain, FiniteKernel, Metric
from wasserclt.exceptions import ConfigurationError
from wasserclt.models import BernoulliAR1, NonlinearAR, QuadraticTarget, ULA
from wasserclt.rng import RngStream
from wasserclt.wasserstein import (
    RateFunction,
    classify_rate,
    coupled_run,
    default_pairs,
    estimate_contraction,
    rate_eval,
    rate_partial_sum,
    w1_empirical_1d,
)

samples = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=40)


class TestW1:
    @settings(max_examples=60, deadline=None)
    @given(samples.flatmap(lambda xs: st.tuples(st.just(xs), st.lists(st.floats(-1e3, 1e3), min_size=len(xs), max_size=len(xs)))))
    def test_matches_scipy(self, pair):
        xs, ys = pair
        assert w1_empirical_1d(xs, ys) == pytest.approx(wasserstein_distance(xs, ys), rel=1e-9, abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(samples)
    def test_identity_and_shift(self, xs):
        assert w1_empirical_1d(xs, xs) == 0.0
        assert w1_empirical_1d(xs, np.asarray(xs) + 2.5) == pytest.approx(2.5, rel=1e-9)

    def test_size_mismatch(self):
        with pytest.raises(ConfigurationError):
            w1_empirical_1d([1.0, 2.0], [1.0])


class TestContraction:
    def test_coupled_bernoulli_distance(self):
        stats = coupled_run(BernoulliAR1(0.5), [0.0], [1.0], 10, RngStream(0))
        np.testing.assert_allclose(stats.distances, 0.5 ** np.arange(11), atol=1e-15)

    @pytest.mark.parametrize("a", [0.25, 1 / 3, 0.5, 0.9])
    def test_bernoulli_rate(self, a):
        est = estimate_contraction(BernoulliAR1(a), rng=RngStream(1), replicates=20)
        assert abs(est.gamma_hat - a) < 1e-12
        assert est.is_deterministic

    @pytest.mark.parametrize("h", [0.1, 0.5, 1.5])
    def test_ula_quadratic_rate(self, h):
        est = estimate_contraction(ULA(QuadraticTarget([[1.0]]), h), rng=RngStream(1), replicates=20)
        assert abs(est.gamma_hat - abs(1 - h)) < 1e-12
        assert est.is_deterministic

    def test_ula_multivariate_rate_is_largest_mode(self):
        est = estimate_contraction(ULA(QuadraticTarget(np.diag([1.0, 3.0])), 0.1), rng=RngStream(1), replicates=5)
        assert 0.7 - 1e-12 <= est.gamma_hat <= 0.9 + 1e-12

    def test_nar_is_random(self):
        est = estimate_contraction(NonlinearAR(0.5), rng=RngStream(2), replicates=50)
        assert not est.is_deterministic
        assert 0 < est.gamma_hat < 1.5

    def test_finite_chain_coalescence(self):
        P = np.array([[0.5, 0.5], [0.5, 0.5]])
        est = estimate_contraction(FiniteKernel(FiniteChain(P)), rng=RngStream(0), replicates=10,
                                   metric=Metric("discrete"))
        assert est.coalesced == [True]
        assert est.gamma_hat == 0.0

    def test_default_pairs_distinct(self):
        for k in (BernoulliAR1(0.5), NonlinearAR(0.5), ULA(QuadraticTarget(np.eye(2)), 0.1)):
            pairs = default_pairs(k)
            assert len(pairs) == 20
            assert all(np.all(x != y) for x, y in pairs)
            lo, hi = k.state_bounds()
            assert all(lo <= v <= hi for p in pairs for v in np.concatenate(p))

    def test_rejects_equal_pair(self):
        with pytest.raises(ConfigurationError):
            estimate_contraction(BernoulliAR1(0.5), pairs=[([0.2], [0.2])])

    def test_replicate_streams_reproducible(self):
        a = estimate_contraction(NonlinearAR(0.5), rng=RngStream(7), replicates=10)
        b = estimate_contraction(NonlinearAR(0.5), rng=RngStream(7), replicates=10)
        assert a.gamma_hat == b.gamma_hat


class TestRates:
    def test_geometric_partial_sum_closed_form(self):
        r = RateFunction("geometric", rho=0.9)
        assert rate_partial_sum(r, 200) == pytest.approx((1 - 0.9**200) / 0.1, rel=1e-14)

    def test_polynomial_values(self):
        r = RateFunction("polynomial", beta=2.0)
        assert rate_eval(r, 0) == 1.0
        assert rate_eval(r, 4) == 1 / 16
        assert rate_partial_sum(r, 10**6) == pytest.approx(1 + math.pi**2 / 6, abs=2e-6)

    def test_subgeometric_values(self):
        r = RateFunction("subgeometric", rho=0.5, gamma=0.5)
        assert rate_eval(r, 9) == 0.5**3

    def test_block_summation_invariance(self):
        r = RateFunction("polynomial", beta=0.6)
        assert rate_partial_sum(r, 10**5, block=997) == pytest.approx(rate_partial_sum(r, 10**5), rel=1e-15)

    @pytest.mark.parametrize(
        "r,label",
        [
            (RateFunction("geometric", rho=0.9), "A1-prime"),
            (RateFunction("subgeometric", rho=0.5, gamma=0.3), "A1-prime"),
            (RateFunction("polynomial", beta=1.5), "A1-prime"),
            (RateFunction("polynomial", beta=0.75), "A1-only"),
            (RateFunction("polynomial", beta=1.0), "A1-only"),
            (RateFunction("polynomial", beta=0.4), "neither"),
        ],
    )
    def test_classify(self, r, label):
        assert classify_rate(r) == label

    @pytest.mark.parametrize("kw", [dict(family="geometric", rho=1.0), dict(family="polynomial", beta=0.0),
                                    dict(family="subgeometric", rho=0.5), dict(family="linear")])
    def test_validation(self, kw):
        with pytest.raises(ConfigurationError):
            RateFunction(**kw)

    def test_regime_flag(self):
        assert RateFunction("polynomial", beta=0.6).in_clt_regime
        assert not RateFunction("polynomial", beta=0.5).in_clt_regime
        assert not RateFunction("subgeometric", rho=0.5, gamma=0.4).in_clt_regime
