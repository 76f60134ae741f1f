import math

import numpy as np
import pytest

from wasserclt.conditions import (
    LambdaSpec,
    check_A2,
    check_C1,
    check_H,
    check_nar_conditions,
    check_P2,
    extreme_eigenvalues,
    nar_kappa,
    nar_zeta,
    ula_constants,
    verify_H_witness,
)
from wasserclt.core import Metric
from wasserclt.exceptions import ConfigurationError
from wasserclt.models import ULA, BernoulliAR1, LogisticTarget, NonlinearAR, Nonlinearity, QuadraticTarget
from wasserclt.rng import RngStream

FLAT = Nonlinearity("bounded-table", grid=[-1.0, 1.0], values=[0.0, 0.0])


class TestH:
    @pytest.mark.parametrize("a", [0.1, 0.5, 0.9])
    def test_neg_sin_witness_near_pi(self, a):
        rep = check_H(Nonlinearity("neg-sin"), a)
        assert rep.holds is True
        assert rep.witness["condition"] == 1
        assert abs(abs(rep.witness["x"]) - math.pi) < 1e-3
        assert verify_H_witness(Nonlinearity("neg-sin"), a, rep.witness)

    def test_witness_reproducible(self):
        a = check_H(Nonlinearity("neg-sin"), 0.5).as_dict()
        b = check_H(Nonlinearity("neg-sin"), 0.5).as_dict()
        assert a == b

    def test_flat_inconclusive(self):
        rep = check_H(FLAT, 0.5)
        assert rep.holds is None and rep.inconclusive
        assert rep.sup_quotient == 0.0

    def test_affine_cap_quotient_witness(self):
        s = Nonlinearity("custom-affine-cap", slope=2.0, cap=1.0)
        rep = check_H(s, 0.5)
        assert rep.holds is True and rep.witness["route"] == "quotient"
        assert rep.witness["value"] == pytest.approx(2.0)
        assert verify_H_witness(s, 0.5, rep.witness)

    def test_steep_negative_slope_condition_three(self):
        s = Nonlinearity("custom-affine-cap", slope=-5.0, cap=1.0)
        rep = check_H(s, 0.5)
        assert rep.holds is True and rep.witness["condition"] == 3
        assert verify_H_witness(s, 0.5, rep.witness)

    def test_bad_witness_rejected(self):
        assert not verify_H_witness(FLAT, 0.5, {"condition": 1, "route": "quotient", "x": 0.5, "y": 0.0})


class TestC1:
    def test_neg_sin_holds(self):
        rep = check_C1(NonlinearAR(0.5))
        assert rep.holds and 0 < rep.best_r < 1 and rep.rho_r < 1
        assert rep.caveat == "grid evidence only"

    def test_zeta_bound(self):
        grid = np.linspace(-10, 10, 401)
        x, y = np.meshgrid(grid, grid)
        z = nar_zeta(NonlinearAR(0.5), x.ravel(), y.ravel())
        assert z.max() <= 1 + 1e-12

    def test_zeta_diagonal_limit(self):
        k = NonlinearAR(0.5)
        x = 0.7
        assert nar_zeta(k, x, x) == pytest.approx(nar_zeta(k, x, x + 1e-7), abs=1e-6)

    def test_kappa_formula(self):
        k = NonlinearAR(0.5)
        x, y = 1.3, -0.4
        mx, my = 0.5 * x - 0.5 * math.sin(x), 0.5 * y - 0.5 * math.sin(y)
        assert nar_kappa(k, x, y) == pytest.approx((mx**2 + my**2 + 3.0) / (x * x + y * y + 1))

    def test_fails_for_expansive_s_and_large_noise(self):
        k = NonlinearAR(0.5, Nonlinearity("custom-affine-cap", slope=-5.0, cap=1.0))
        rep = check_C1(k, sigma2=1e6)
        assert not rep.holds and rep.rho_r is None

    def test_r_grid_validated(self):
        with pytest.raises(ConfigurationError):
            check_C1(NonlinearAR(0.5), r_grid=[0.0, 0.5])

    def test_suite(self):
        res = check_nar_conditions(NonlinearAR(0.5))
        assert (res["H"], res["C1"], res["C2"], res["C4"]) == (True, True, True, True)


class TestUlaConstants:
    def test_identity(self):
        cert = ula_constants(QuadraticTarget(np.eye(3)))
        assert (cert.L, cert.M, cert.h_max, cert.gamma(0.1)) == (1.0, 1.0, 2.0, 0.9)

    def test_empty_design(self):
        cert = ula_constants(LogisticTarget(np.zeros((3, 2)), [0, 1, 0], 2 * np.eye(2)))
        assert cert.L == pytest.approx(1.0) and cert.M == pytest.approx(1.0)

    def test_gamma_properties(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(6, 3))
        cert = ula_constants(LogisticTarget(X, (rng.random(6) < 0.5), np.diag([1.0, 2.0, 3.0])))
        assert cert.M <= cert.L
        for h in np.linspace(0.01, 0.99, 9) * cert.h_max:
            assert 0 < cert.gamma(h) < 1
        assert cert.gamma(cert.h_max) == pytest.approx(1.0, abs=1e-12)
        assert cert.gamma(1.5 * cert.h_max) > 1

    def test_gamma_formula(self):
        from wasserclt.conditions import UlaContractionCert

        c = UlaContractionCert(3.0, 1.5)
        for h in (0.05, 0.2, 0.3):
            assert c.gamma(h) == pytest.approx(math.sqrt(1 + h * h * 9 - 3 * h), rel=1e-14)

    def test_indefinite_prior_rejected(self):
        with pytest.raises(ConfigurationError):
            LogisticTarget(np.ones((2, 2)), [0, 1], np.diag([1.0, 0.0]))

    def test_kernel_accepted(self):
        assert ula_constants(ULA(QuadraticTarget([[4.0]]), 0.1)).h_max == pytest.approx(0.5)

    def test_power_iteration_route(self):
        rng = np.random.default_rng(0)
        B = rng.normal(size=(80, 80))
        S = B @ B.T / 80 + np.eye(80)
        lam = np.linalg.eigvalsh(S)
        lo, hi = extreme_eigenvalues(S, dense_limit=10, tol=1e-14, max_iter=200_000)
        assert hi == pytest.approx(lam[-1], rel=1e-8)
        assert lo == pytest.approx(lam[0], rel=1e-6)


class TestMoments:
    def test_bounded_one_exact(self):
        rep = check_A2(LambdaSpec.bounded_one(), BernoulliAR1(0.5), 16_000, RngStream(0), x0=[0.0], burn_in=10)
        assert rep.estimate == 1.0 and rep.verdict == "evidence-finite"

    def test_nar_drift_finite(self):
        k = NonlinearAR(0.5)
        rho = check_C1(k).rho_r
        lam = LambdaSpec.nar_drift(k, rho)
        assert np.all(lam(np.linspace(-5, 5, 11)[:, None]) >= 0)
        rep = check_A2(lam, k, 200_000, RngStream(1), x0=[0.0])
        assert rep.verdict == "evidence-finite" and np.isfinite(rep.estimate)

    def test_divergent_ula_unstable(self):
        k = ULA(QuadraticTarget([[1.0]]), 2.5)
        rep = check_A2(LambdaSpec.gc_distance([0.0]), k, 16_000, RngStream(0), x0=[1.0], burn_in=100)
        assert rep.verdict == "unstable"

    def test_p2_bernoulli(self):
        # E_pi |0 - X|^2 = Var + 1/4 = 1/12 + 1/4 for the uniform law (a = 1/2)
        rep = check_P2(BernoulliAR1(0.5), Metric(), [0.0], 320_000, RngStream(2), burn_in=100)
        assert rep.estimate == pytest.approx(1 / 3, rel=0.02)

    def test_gc_distance_lambda(self):
        ref = np.linspace(0, 1, 1001)
        lam = LambdaSpec.gc_distance(ref)
        assert lam(np.array([[0.0]]))[0] == pytest.approx(0.5, abs=1e-3)
