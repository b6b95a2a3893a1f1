import math

import numpy as np
import pytest

from ordinal_consistency.core import (
    BUILTIN_PHIS, EXPONENTIAL, HINGE, KINKED, LOGISTIC, SQUARED, SQUARED_HINGE, GAUSSIAN, SIGMOID,
    AdmissibleLoss, DecisionVector, Phi, SimplexPoint, cost_coeffs, get_link, get_loss, get_phi,
    loss_eval, loss_eval_expanded, phi_eval, phi_grad, pred, random_monotone, random_simplex,
    simplex_grid,
)


class TestTypes:
    def test_decision_vector_monotone(self):
        DecisionVector([-1, 0, 0, 2])
        with pytest.raises(ValueError, match="decision vector not monotone"):
            DecisionVector([2, 1])

    def test_decision_vector_rejects_empty_and_nan(self):
        with pytest.raises(ValueError):
            DecisionVector([])
        with pytest.raises(ValueError):
            DecisionVector([0.0, np.nan])

    def test_decision_vector_immutable(self):
        a = DecisionVector([0.0, 1.0])
        with pytest.raises(ValueError):
            a.values[0] = 5.0
        assert a.k == 3

    def test_simplex_tolerance(self):
        SimplexPoint([0.5, 0.5 + 5e-13])
        with pytest.raises(ValueError, match="sum"):
            SimplexPoint([0.5, 0.5 + 1e-11])
        with pytest.raises(ValueError, match="negative"):
            SimplexPoint([1.1, -0.1])
        with pytest.raises(ValueError):
            SimplexPoint([1.0])

    def test_simplex_no_silent_renormalization(self):
        with pytest.raises(ValueError):
            SimplexPoint([1, 1])
        p = SimplexPoint.normalized([1, 1, 2])
        assert np.allclose(p.probs, [0.25, 0.25, 0.5])
        assert abs(p.probs.sum() - 1) <= 1e-15


class TestPred:
    @pytest.mark.parametrize("alpha,expected", [((-1, 0.5, 2), 2), ((1, 2), 1), ((-3, -2, -1), 4)])
    def test_examples(self, alpha, expected):
        assert pred(alpha) == expected

    def test_zero_counts_as_nonnegative(self):
        assert pred([0.0]) == 1
        assert pred([-1e-300, 0.0]) == 2

    def test_rejects_non_monotone(self):
        with pytest.raises(ValueError):
            pred([1, 0])


class TestPhi:
    def test_examples(self):
        assert phi_eval(HINGE, 0) == 1
        assert phi_eval(LOGISTIC, 0) == pytest.approx(math.log(2), abs=1e-12)
        assert phi_eval(EXPONENTIAL, 1) == pytest.approx(math.exp(-1), abs=1e-12)

    def test_formulas(self, rng):
        t = rng.normal(scale=3, size=200)
        assert np.allclose(HINGE(t), np.maximum(1 - t, 0))
        assert np.allclose(SQUARED_HINGE(t), np.maximum(1 - t, 0) ** 2)
        assert np.allclose(LOGISTIC(t), np.log1p(np.exp(-t)))
        assert np.allclose(EXPONENTIAL(t), np.exp(-t))
        assert np.allclose(SQUARED(t), (1 - t) ** 2)

    def test_logistic_no_overflow(self):
        assert phi_eval(LOGISTIC, -800) == pytest.approx(800)
        assert phi_eval(LOGISTIC, 800) == 0.0

    def test_hinge_kink_convention(self):
        assert phi_grad(HINGE, 1.0) == -1.0
        assert phi_grad(HINGE, 1.5) == 0.0

    @pytest.mark.parametrize("phi", BUILTIN_PHIS, ids=lambda p: p.name)
    def test_grad_matches_fd(self, phi, rng):
        t = rng.uniform(-3, 3, size=50)
        t = t[np.abs(t - 1) > 1e-3]
        h = 1e-6
        fd = (phi(t + h) - phi(t - h)) / (2 * h)
        assert np.allclose(phi.grad(t), fd, rtol=1e-5, atol=1e-6)

    @pytest.mark.parametrize("phi", BUILTIN_PHIS, ids=lambda p: p.name)
    def test_curvature_matches_fd(self, phi, rng):
        t = rng.uniform(-3, 3, size=50)
        t = t[np.abs(t - 1) > 1e-3]
        h = 1e-5
        fd = (phi.grad(t + h) - phi.grad(t - h)) / (2 * h)
        assert np.allclose(phi.curvature(t), fd, rtol=1e-4, atol=1e-5)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            phi_eval(HINGE, float("inf"))
        with pytest.raises(ValueError):
            phi_grad(LOGISTIC, float("nan"))

    @pytest.mark.parametrize("phi", BUILTIN_PHIS, ids=lambda p: p.name)
    def test_builtins_satisfy_margin_conditions(self, phi):
        assert phi.is_consistent_margin()
        assert phi.check_odd_part_decreasing()

    def test_kinked_not_differentiable(self):
        assert not KINKED.differentiable_at_zero
        assert not KINKED.is_consistent_margin()
        assert KINKED(-1.0) == 3.0 and KINKED(1.0) == 0.0

    def test_custom_delegates(self):
        phi = Phi.custom(lambda t: (1 - t) ** 2, deriv=lambda t: -2 * (1 - t))
        assert phi_eval(phi, 3.0) == 4.0
        assert phi_grad(phi, 3.0) == 4.0
        assert phi.is_consistent_margin()

    def test_lookup(self):
        assert get_phi("hinge") is HINGE
        assert get_phi(LOGISTIC) is LOGISTIC
        with pytest.raises(ValueError):
            get_phi("nope")


class TestLinks:
    @pytest.mark.parametrize("link", [SIGMOID, GAUSSIAN], ids=lambda l: l.name)
    def test_roundtrip(self, link):
        t = np.linspace(1e-6, 1 - 1e-6, 2001)
        assert np.max(np.abs(link.cdf(link.inverse(t)) - t)) <= 1e-10

    @pytest.mark.parametrize("link", [SIGMOID, GAUSSIAN], ids=lambda l: l.name)
    def test_increasing_in_unit_interval(self, link):
        x = np.linspace(-30, 30, 1001)
        F = link.cdf(x)
        assert np.all(np.diff(F) >= 0) and np.all(F >= 0) and np.all(F <= 1)
        assert np.all(np.diff(link.cdf(np.linspace(-5, 5, 101))) > 0)

    def test_lookup(self):
        assert get_link("sigmoid") is SIGMOID
        assert get_link("probit") is GAUSSIAN


class TestLosses:
    def test_coeff_examples(self):
        assert list(cost_coeffs(AdmissibleLoss.absolute(4))) == [1, 1, 1]
        assert list(cost_coeffs(AdmissibleLoss.squared(4))) == [1, 3, 5]
        assert list(cost_coeffs(AdmissibleLoss.zero_one(3))) == [1, 0]

    def test_reconstruction(self):
        for kind in ("absolute", "zero_one", "squared"):
            loss = get_loss(kind, 6)
            c = loss.coeffs
            for i in range(6):
                assert loss.g(i) == c[:i].sum()

    def test_custom_admissibility(self):
        ok = AdmissibleLoss.custom(lambda d: math.sqrt(d), 4)
        assert np.all(ok.coeffs >= 0)
        with pytest.raises(ValueError, match="negative increment"):
            AdmissibleLoss.custom(lambda d: [0, 2, 1, 3][d], 4)
        with pytest.raises(ValueError, match="g\\(0\\)"):
            AdmissibleLoss.custom(lambda d: d + 1, 3)

    @pytest.mark.parametrize("loss,y,expected", [("absolute", 3, 0), ("absolute", 1, 2), ("squared", 1, 4)])
    def test_loss_examples(self, loss, y, expected):
        alpha = (-1, -0.5, 2)
        assert loss_eval(get_loss(loss, 4), y, alpha) == expected
        assert loss_eval_expanded(get_loss(loss, 4), y, alpha) == expected

    def test_label_range(self):
        with pytest.raises(ValueError):
            loss_eval(AdmissibleLoss.absolute(3), 4, (0, 1))
        with pytest.raises(ValueError):
            loss_eval(AdmissibleLoss.absolute(3), 0, (0, 1))

    def test_expansion_agrees_exactly(self, rng):
        for _ in range(10_000):
            k = int(rng.integers(2, 8))
            loss = get_loss(["absolute", "zero_one", "squared"][int(rng.integers(3))], k)
            a = random_monotone(rng, k - 1)
            if rng.random() < 0.2:
                a[int(rng.integers(k - 1))] = 0.0
                a = np.sort(a)
            y = int(rng.integers(1, k + 1))
            assert loss_eval(loss, y, a) == loss_eval_expanded(loss, y, a)


class TestGrids:
    def test_grid_sizes(self):
        assert len(simplex_grid(2, 0.1)) == 11
        assert len(simplex_grid(3, 0.1)) == 66
        assert len(simplex_grid(5, 0.1)) == 1001
        assert len(simplex_grid(4, 10)) == len(simplex_grid(4, 0.1))

    def test_grid_points_valid(self):
        for p in simplex_grid(4, 0.1):
            SimplexPoint(p)

    def test_random_helpers(self, rng):
        for _ in range(100):
            SimplexPoint(random_simplex(rng, 5))
            DecisionVector(random_monotone(rng, 4))
            assert np.all(np.diff(random_monotone(rng, 4, strict=True)) > 0)
