"""Laplace density, per-component NLL, ensemble loss, gradients, MLE."""

import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from boxbelief import (
    B_MIN,
    BoxParams,
    CornerBelief,
    CornerSet,
    InsufficientDataError,
    InvalidInputError,
    LaplaceParam,
    box_loss_grad,
    component_nll,
    corners_from_box,
    ensemble_loss,
    ensemble_loss_grad,
    fit_laplace_mle,
    laplace_density,
)

from conftest import random_belief, random_box


class TestLaplaceParam:
    def test_variance_identity(self):
        assert LaplaceParam(0.0, 0.5).variance() == 2 * 0.5**2

    def test_diversity_floor_enforced(self):
        with pytest.raises(InvalidInputError):
            LaplaceParam(0.0, 0.5 * B_MIN)

    def test_empirical_variance_matches_2b2(self):
        """1e6 draws from Laplace(mu, b) have variance 2 b^2 within 1%."""
        rng = np.random.default_rng(99)
        mu, b = 3.0, 0.2
        draws = rng.laplace(mu, b, size=1_000_000)
        assert draws.var() == pytest.approx(2 * b * b, rel=0.01)


class TestLaplaceDensity:
    def test_peak_value(self):
        assert laplace_density(0.0, LaplaceParam(0.0, 0.5)) == pytest.approx(1.0)

    def test_one_diversity_offset(self):
        p = LaplaceParam(2.0, 0.5)
        assert laplace_density(2.5, p) == pytest.approx(math.exp(-1.0) / (2 * 0.5))

    def test_integrates_to_one(self):
        """Trapezoid quadrature over +-50 diversities (node at the peak)."""
        p = LaplaceParam(1.3, 0.5)
        x = np.linspace(p.mu - 50 * p.b, p.mu + 50 * p.b, 2_000_001)
        integral = np.trapezoid(laplace_density(x, p), x)
        assert integral == pytest.approx(1.0, abs=1e-9)


class TestComponentNll:
    def test_zero_at_mean_with_half_diversity(self):
        assert component_nll(0.0, LaplaceParam(0.0, 0.5)) == pytest.approx(0.0, abs=1e-15)

    def test_unit_residual_unit_diversity(self):
        assert component_nll(1.0, LaplaceParam(0.0, 1.0)) == pytest.approx(math.log(2) + 1)

    def test_equals_negative_log_density(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            p = LaplaceParam(rng.normal(), rng.uniform(0.01, 2.0))
            x = rng.normal(p.mu, 1.0)
            assert component_nll(x, p) == pytest.approx(
                -math.log(laplace_density(x, p)), rel=1e-12
            )

    def test_minimized_at_diversity_equal_residual(self):
        """For a fixed residual r the NLL over b has its minimum at b = r,
        cross-checked with a golden-section search."""
        for r in (0.05, 0.3, 1.7):
            result = minimize_scalar(
                lambda b: math.log(2 * b) + r / b,
                bracket=(1e-4, 10.0),
                method="golden",
                options={"xtol": 1e-12},
            )
            assert result.x == pytest.approx(r, abs=1e-6)


class TestEnsembleLoss:
    def test_zero_when_label_equals_means(self):
        box = random_box(np.random.default_rng(1))
        belief = CornerBelief.from_box(box, 0.5)
        value = ensemble_loss(corners_from_box(box), belief)
        assert value.total == pytest.approx(0.0, abs=1e-12)

    def test_uniform_unit_residuals(self):
        """All 24 residuals 1 with b = 1 gives 24 (ln 2 + 1)."""
        box = BoxParams(0, 0, 0, 2, 2, 2, math.pi / 2)
        label = CornerSet(corners_from_box(box).corners + 1.0)
        belief = CornerBelief.from_box(box, 1.0)
        assert ensemble_loss(label, belief).total == pytest.approx(24 * (math.log(2) + 1))

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(7)
        box = random_box(rng)
        belief = random_belief(rng, box)
        label = CornerSet(belief.mu + rng.normal(0, 0.3, (8, 3)))
        value = ensemble_loss(label, belief)
        oracle = 0.0
        for k in range(8):
            for j in range(3):
                oracle += component_nll(label[k][j], belief.param(k, j))
        assert value.total == pytest.approx(oracle, abs=1e-12)
        assert value.total == pytest.approx(value.per_component.sum(), abs=1e-12)

    def test_equals_negative_log_of_density_product(self):
        rng = np.random.default_rng(8)
        box = random_box(rng)
        belief = random_belief(rng, box)
        label = CornerSet(belief.mu + rng.normal(0, 0.2, (8, 3)))
        log_product = sum(
            math.log(laplace_density(label[k][j], belief.param(k, j)))
            for k in range(8)
            for j in range(3)
        )
        assert ensemble_loss(label, belief).total == pytest.approx(-log_product, rel=1e-12)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(9)
        box = random_box(rng)
        belief = random_belief(rng, box)
        label = CornerSet(belief.mu + rng.normal(0, 0.2, (8, 3)))
        perm = rng.permutation(8)
        permuted = ensemble_loss(
            CornerSet(label.corners[perm]),
            CornerBelief(mu=belief.mu[perm], b=belief.b[perm]),
        )
        assert permuted.total == pytest.approx(ensemble_loss(label, belief).total, rel=1e-12)

    def test_total_minimized_at_b_equal_residual(self):
        rng = np.random.default_rng(10)
        box = random_box(rng)
        mu = corners_from_box(box).corners
        residuals = rng.uniform(0.05, 0.5, (8, 3))
        label = CornerSet(mu + residuals)
        best = ensemble_loss(label, CornerBelief(mu=mu, b=residuals)).total
        for scale in (0.8, 1.2):
            other = ensemble_loss(label, CornerBelief(mu=mu, b=scale * residuals)).total
            assert best < other


class TestEnsembleLossGrad:
    def test_subgradient_zero_at_mean(self):
        box = random_box(np.random.default_rng(2))
        belief = CornerBelief.from_box(box, 0.25)
        d_mu, d_b = ensemble_loss_grad(corners_from_box(box), belief)
        np.testing.assert_array_equal(d_mu, np.zeros((8, 3)))
        np.testing.assert_allclose(d_b, 1.0 / belief.b, rtol=1e-15)

    def test_stationary_in_b_at_residual(self):
        """d/db vanishes where b equals the absolute residual."""
        box = random_box(np.random.default_rng(3))
        mu = corners_from_box(box).corners
        residuals = np.random.default_rng(4).uniform(0.05, 0.4, (8, 3))
        belief = CornerBelief(mu=mu, b=residuals)
        _, d_b = ensemble_loss_grad(CornerSet(mu + residuals), belief)
        np.testing.assert_allclose(d_b, 0.0, atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2025)
        step = 1e-6
        for _ in range(100):
            box = random_box(rng)
            belief = random_belief(rng, box, b_low=0.05, b_high=1.0)
            signs = rng.choice([-1.0, 1.0], size=(8, 3))
            label = CornerSet(belief.mu + signs * rng.uniform(2e-3, 0.5, (8, 3)))
            d_mu, d_b = ensemble_loss_grad(label, belief)

            fd_mu = np.zeros((8, 3))
            fd_b = np.zeros((8, 3))
            for k in range(8):
                for j in range(3):
                    mu_plus, mu_minus = belief.mu.copy(), belief.mu.copy()
                    mu_plus[k, j] += step
                    mu_minus[k, j] -= step
                    fd_mu[k, j] = (
                        ensemble_loss(label, CornerBelief(mu_plus, belief.b)).total
                        - ensemble_loss(label, CornerBelief(mu_minus, belief.b)).total
                    ) / (2 * step)
                    b_plus, b_minus = belief.b.copy(), belief.b.copy()
                    b_plus[k, j] += step
                    b_minus[k, j] -= step
                    fd_b[k, j] = (
                        ensemble_loss(label, CornerBelief(belief.mu, b_plus)).total
                        - ensemble_loss(label, CornerBelief(belief.mu, b_minus)).total
                    ) / (2 * step)
            np.testing.assert_allclose(d_mu, fd_mu, rtol=1e-5, atol=1e-8)
            np.testing.assert_allclose(d_b, fd_b, rtol=1e-5, atol=1e-8)


class TestBoxLossGrad:
    def test_zero_at_exact_prediction(self):
        box = random_box(np.random.default_rng(6))
        grad = box_loss_grad(corners_from_box(box), box, np.full((8, 3), 0.2))
        np.testing.assert_array_equal(grad, np.zeros(7))

    def test_pure_translation_concentrates_in_x(self):
        """A +x label offset yields gradient -sum(1/b) in the x slot only."""
        box = BoxParams(2, 0, 9, 1.5, 1.6, 3.9, 0.8)
        b = 0.25
        label = CornerSet(corners_from_box(box).corners + [0.1, 0.0, 0.0])
        grad = box_loss_grad(label, box, np.full((8, 3), b))
        assert grad[0] == pytest.approx(-8 / b, rel=1e-12)
        np.testing.assert_allclose(grad[1:], 0.0, atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2026)
        step = 1e-6
        for _ in range(100):
            box = random_box(rng)
            diversities = rng.uniform(0.05, 0.8, (8, 3))
            signs = rng.choice([-1.0, 1.0], size=(8, 3))
            label = CornerSet(
                corners_from_box(box).corners + signs * rng.uniform(2e-3, 0.4, (8, 3))
            )
            grad = box_loss_grad(label, box, diversities)

            params = box.to_array()
            fd = np.zeros(7)
            for j in range(7):
                plus, minus = params.copy(), params.copy()
                plus[j] += step
                minus[j] -= step
                loss_plus = ensemble_loss(
                    label, CornerBelief(corners_from_box(BoxParams(*plus)).corners, diversities)
                ).total
                loss_minus = ensemble_loss(
                    label, CornerBelief(corners_from_box(BoxParams(*minus)).corners, diversities)
                ).total
                fd[j] = (loss_plus - loss_minus) / (2 * step)
            np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-8)


class TestFitLaplaceMle:
    def test_zero_deviation_floors_diversity(self):
        fitted = fit_laplace_mle([0.0, 0.0, 0.0, 0.0])
        assert fitted.mu == 0.0
        assert fitted.b == B_MIN

    def test_hand_computed_median_and_mad(self):
        fitted = fit_laplace_mle([-1.0, 0.0, 1.0])
        assert fitted.mu == 0.0
        assert fitted.b == pytest.approx(2.0 / 3.0)

    def test_recovers_parameters_from_large_sample(self):
        rng = np.random.default_rng(77)
        draws = rng.laplace(3.0, 0.2, size=1_000_000)
        fitted = fit_laplace_mle(draws)
        assert fitted.mu == pytest.approx(3.0, abs=0.01 * 3.0)
        assert fitted.b == pytest.approx(0.2, rel=0.01)

    def test_mle_never_beats_truth_by_more_than_noise(self):
        """The fitted NLL is at most the true-parameter NLL, and by no more
        than sampling noise (1% at 1e6 samples)."""
        rng = np.random.default_rng(78)
        truth = LaplaceParam(3.0, 0.2)
        draws = rng.laplace(truth.mu, truth.b, size=1_000_000)
        fitted = fit_laplace_mle(draws)
        nll_fitted = float(np.mean(component_nll(draws, fitted)))
        nll_truth = float(np.mean(component_nll(draws, truth)))
        assert nll_fitted <= nll_truth + 1e-12
        assert nll_truth - nll_fitted <= 0.01 * abs(nll_truth)

    def test_too_few_samples_rejected(self):
        with pytest.raises(InsufficientDataError):
            fit_laplace_mle([1.0])
