import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtri
from scipy.stats import multivariate_normal

from wasserclt.core import simulate
from wasserclt.exceptions import ConfigurationError, DomainError
from wasserclt.models import (
    EIMALA,
    ULA,
    BernoulliAR1,
    LogisticTarget,
    NonlinearAR,
    Noise,
    Nonlinearity,
    PowerPotential,
    QuadraticPotential,
    QuadraticTarget,
    bayes_inverse_eimala,
    bernoulli_ar1_step,
    eimala_log_G,
    eimala_propose,
    nar_step,
    ula_gradient,
    ula_step,
)
from wasserclt.rng import RngStream


def logistic_instance(seed=0, k=4, p=2):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(k, p))
    y = (rng.random(k) < 0.5).astype(float)
    B = rng.normal(size=(p, p))
    return LogisticTarget(X, y, B @ B.T + np.eye(p))


def central_difference(f, x, eps=1e-5):
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        out[i] = (f(x + e) - f(x - e)) / (2 * eps)
    return out


class TestNonlinearAR:
    def test_step_formula(self):
        k = NonlinearAR(0.5)
        u = RngStream(3).uniform(1)
        expected = 0.5 * 0.7 + 0.5 * (-math.sin(0.7)) + ndtri(u[0])
        assert nar_step(k, [0.7], RngStream(3))[0] == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("a", [0.0, 1.0, 1.5, -0.2])
    def test_a_range(self, a):
        with pytest.raises(ConfigurationError, match=r"a must lie in \(0,1\)"):
            NonlinearAR(a)

    def test_nonlinearity_kinds(self):
        table = Nonlinearity("bounded-table", grid=[-1.0, 0.0, 1.0], values=[1.0, 0.0, 2.0])
        np.testing.assert_allclose(table(np.array([-2.0, -0.5, 0.5, 3.0])), [1.0, 0.5, 1.0, 2.0])
        assert table.sup_abs == 2.0
        capped = Nonlinearity("custom-affine-cap", slope=2.0, cap=1.0)
        np.testing.assert_allclose(capped(np.array([-3.0, 0.25, 3.0])), [-1.0, 0.5, 1.0])
        neg = Nonlinearity("neg-sin")
        np.testing.assert_allclose(neg.derivative(np.array([0.0, math.pi])), [-1.0, 1.0])

    def test_table_validation(self):
        with pytest.raises(ConfigurationError):
            Nonlinearity("bounded-table", grid=[0.0, 0.0], values=[1.0, 2.0])
        with pytest.raises(ConfigurationError):
            Nonlinearity("sinc")

    @pytest.mark.parametrize(
        "noise,var", [(Noise("gaussian", 2.0), 4.0), (Noise("symmetric-uniform", 3.0), 3.0),
                      (Noise("scaled-bernoulli-pair", 0.5), 0.25)]
    )
    def test_noise_variance(self, noise, var):
        assert noise.variance == pytest.approx(var)
        z = noise.from_uniform(RngStream(1).uniform(200_000))
        assert abs(z.mean()) < 0.02 * math.sqrt(var) * 3
        assert z.var() == pytest.approx(var, rel=0.02)


class TestULA:
    def test_quadratic_step(self):
        k = ULA(QuadraticTarget([[2.0]]), 0.1)
        z = ndtri(RngStream(5).uniform(1))[0]
        assert ula_step(k, [1.0], RngStream(5))[0] == pytest.approx(1.0 - 0.2 + math.sqrt(0.2) * z, abs=1e-15)

    def test_step_validation(self):
        with pytest.raises(ConfigurationError):
            ULA(QuadraticTarget([[1.0]]), 0.0)
        assert ULA(QuadraticTarget([[1.0]]), 0.0, allow_zero_step=True).h == 0.0
        with pytest.raises(ConfigurationError):
            QuadraticTarget([[1.0, 0.0], [0.0, -1.0]])

    def test_zero_step_is_identity(self):
        k = ULA(QuadraticTarget([[1.0]]), 0.0, allow_zero_step=True)
        traj = simulate(k, [0.3], 20, RngStream(0))
        assert np.all(traj.states == 0.3)

    def test_logistic_potential_matches_direct_formula(self):
        t = logistic_instance(1)
        b = np.array([0.3, -1.2])
        eta = t.X @ b
        direct = b @ t.G @ b / 4 + np.sum(np.log1p(np.exp(eta)) - t.y * eta)
        assert t.U(b) == pytest.approx(direct, rel=1e-13)

    @pytest.mark.parametrize("target", [QuadraticTarget([[2.0, 0.5], [0.5, 1.0]]), logistic_instance(2)])
    def test_gradient_finite_difference(self, target):
        k = ULA(target, 0.1)
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(size=2) * 2
            g = ula_gradient(k, x)
            fd = central_difference(target.U, x)
            assert np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(g))) < 1e-6

    def test_logistic_validation(self):
        with pytest.raises(ConfigurationError):
            LogisticTarget([[1.0, 0.0]], [2.0], np.eye(2))
        with pytest.raises(ConfigurationError):
            LogisticTarget([[1.0, 0.0]], [1.0], np.eye(3))


def exact_mh_log_ratio(k: EIMALA, x, y):
    """log[pi(y) q(y, x) / (pi(x) q(x, y))] from explicit Gaussian densities."""

    def log_pi(z):
        return -0.5 * z @ k.H @ z - k.gamma.value(z) - k.Gamma.value(z)

    cov = (k.h - k.h**2 / 4) * k.H_inv

    def log_q(a, b):
        mean = (1 - k.h / 2) * a - (k.h / 2) * k.H_inv @ k.gamma.grad(a)
        return multivariate_normal(mean, cov).logpdf(b)

    return log_pi(y) + log_q(y, x) - log_pi(x) - log_q(x, y)


class TestEIMALA:
    H = np.array([[2.0, 0.3], [0.3, 1.0]])

    @pytest.mark.parametrize("h", [0.2, 0.9, 1.7])
    def test_log_G_is_negative_mh_log_ratio(self, h):
        gamma = QuadraticPotential(np.array([[0.5, 0.1], [0.1, 0.3]]), linear=np.array([0.4, -0.2]))
        k = EIMALA(self.H, h, gamma=gamma, Gamma=PowerPotential(0.7, 1.0, 0.75))
        rng = np.random.default_rng(1)
        for _ in range(10):
            x, y = rng.normal(size=2), rng.normal(size=2)
            assert eimala_log_G(k, x, y) == pytest.approx(-exact_mh_log_ratio(k, x, y), abs=1e-10)

    def test_null_case_always_accepts(self):
        k = EIMALA(np.diag([1.0, 4.0]), 0.7)
        traj = simulate(k, [0.5, -0.5], 2000, RngStream(0))
        assert traj.acceptance_rate == 1.0

    def test_propose_formula(self):
        k = EIMALA(self.H, 0.5, gamma=QuadraticPotential(np.zeros((2, 2)), linear=np.array([1.0, 0.0])))
        x = np.array([0.2, 0.1])
        z = ndtri(RngStream(2).uniform(3)[:2])
        expected = 0.75 * x - 0.25 * k.H_inv @ np.array([1.0, 0.0]) + math.sqrt(0.5 - 1 / 16) * k.H_inv_sqrt @ z
        np.testing.assert_allclose(eimala_propose(k, x, RngStream(2)), expected, atol=1e-14)

    @pytest.mark.parametrize("h", [0.0, 2.0, -1.0])
    def test_step_range(self, h):
        with pytest.raises(ConfigurationError):
            EIMALA(self.H, h)

    def test_nonconvex_gamma_rejected(self):
        with pytest.raises(ConfigurationError):
            EIMALA(self.H, 0.5, gamma=QuadraticPotential(-np.eye(2)))

    def test_power_potential(self):
        P = PowerPotential(0.5, 2.0, 0.6)
        x = np.array([0.3, -0.4])
        np.testing.assert_allclose(P.grad(x), central_difference(P.value, x), atol=1e-8)
        with pytest.raises(ConfigurationError):
            PowerPotential(0.5, 2.0, 1.0)

    def test_bayes_inverse_builder(self):
        A = np.array([[1.0, 0.5], [0.0, 1.0], [0.3, 0.2]])
        b = np.array([0.5, -1.0, 2.0])
        k = bayes_inverse_eimala(A, b, 0.3, 0.5, 1.0, 0.75, 0.4)
        np.testing.assert_allclose(k.H, A.T @ A + 0.5 * np.eye(2))
        x = np.array([0.2, -0.7])
        # total potential equals the negative log posterior up to a constant
        total = 0.5 * x @ k.H @ x + k.gamma.value(x) + k.Gamma.value(x)
        direct = 0.5 * x @ (A.T @ A + 0.5 * np.eye(2)) @ x + 0.3 * (x @ x + 1.0) ** 0.75 - b @ A @ x
        assert total == pytest.approx(direct, rel=1e-13)


class TestBernoulli:
    def test_step(self):
        u = RngStream(4).uniform(1)[0]
        expected = 0.25 * 0.5 + 0.75 * float(u < 0.5)
        assert bernoulli_ar1_step(BernoulliAR1(0.25), [0.5], RngStream(4))[0] == expected

    def test_domain(self):
        with pytest.raises(DomainError):
            simulate(BernoulliAR1(0.5), [1.5], 3, RngStream(0))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.01, 0.99), st.floats(0.0, 1.0), st.integers(0, 2**32))
    def test_stays_in_unit_interval(self, a, x0, seed):
        traj = simulate(BernoulliAR1(a), [x0], 200, RngStream(seed))
        assert traj.states.min() >= 0.0 and traj.states.max() <= 1.0
