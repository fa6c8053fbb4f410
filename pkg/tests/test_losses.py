"""Loss tests: frozen analytic values, independent naive-formula cross-checks
on a rounding-safe domain, finite-difference gradient verification, and the
exact structural identities of the sign-label log-sum-exp loss."""

import math

import numpy as np
import pytest

from hoihead.losses import (
    LOSS_KINDS,
    baseline_loss,
    batch_loss,
    evaluate_loss,
    lse_sign_loss,
    positive_weights_from_counts,
    stable_log1p_sum_exp,
)

from conftest import random_sign_instance


def finite_difference_grad(kind, params, s, y, h=1e-5):
    """Central-difference gradient of the loss value, one column at a time."""
    n = s.size
    steps = h * np.eye(n)
    stacked = np.vstack([s + steps, s - steps])
    labels = np.tile(y, (2 * n, 1))
    values, _ = batch_loss(kind, params, stacked, labels)
    return (values[:n] - values[n:]) / (2 * h)


def gradcheck_error(analytic, numeric):
    """Per-component error relative to max(1, |analytic|, |numeric|); the unit
    floor keeps saturated near-zero components comparable at the precision
    finite differences can deliver."""
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return np.abs(analytic - numeric) / scale


# --- naive references: plain textbook formulas, valid while no exp over- or
# --- underflows (|s| <= 20 keeps every intermediate exactly representable)


def naive_lse_sign(s, y):
    return math.log(1.0 + float(np.exp(-y * s).sum()))


def naive_bce(s, y):
    p = 1.0 / (1.0 + np.exp(-s))
    t = (y + 1.0) / 2.0
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))))


def naive_weighted_bce(s, y, w):
    p = 1.0 / (1.0 + np.exp(-s))
    t = (y + 1.0) / 2.0
    return float(np.mean(-(w * t * np.log(p) + (1.0 - t) * np.log(1.0 - p))))


def naive_focal(s, y, g, alpha):
    p = 1.0 / (1.0 + np.exp(-s))
    t = (y + 1.0) / 2.0
    p_t = np.where(t == 1.0, p, 1.0 - p)
    a_t = np.where(t == 1.0, alpha, 1.0 - alpha)
    return float(np.mean(-a_t * (1.0 - p_t) ** g * np.log(p_t)))


def params_for(kind, n, rng):
    if kind == "weighted_bce":
        return {"pos_weight": rng.uniform(1.0, 20.0, n)}
    if kind == "focal":
        return {"focal_gamma": 2.0, "alpha": 0.25}
    return None


class TestStableLog1pSumExp:
    def test_single_zero_is_log_two(self):
        assert stable_log1p_sum_exp([0.0]) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_large_positive_dominates(self):
        v = stable_log1p_sum_exp([1000.0])
        assert math.isfinite(v)
        assert v == pytest.approx(1000.0, abs=1e-9)

    def test_large_negative_vanishes(self):
        v = stable_log1p_sum_exp([-1000.0])
        assert 0.0 <= v <= 1e-300

    def test_matches_naive_formula(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            z = rng.uniform(-30.0, 30.0, rng.integers(1, 40))
            expected = math.log(1.0 + float(np.exp(z).sum()))
            assert stable_log1p_sum_exp(z) == pytest.approx(expected, rel=1e-13)

    def test_no_overflow_across_magnitudes(self):
        for mag in (1e2, 1e3, 1e4):
            assert math.isfinite(stable_log1p_sum_exp([mag, -mag, 0.0]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            stable_log1p_sum_exp([np.nan])
        with pytest.raises(ValueError):
            stable_log1p_sum_exp([np.inf, 0.0])


class TestLseSignLoss:
    def test_single_positive_at_zero(self):
        result = lse_sign_loss([0.0], [1.0])
        assert result.value == pytest.approx(math.log(2.0), abs=1e-15)
        np.testing.assert_allclose(result.grad, [-0.5], atol=1e-15)

    def test_two_class_spot(self):
        result = lse_sign_loss([0.0, 0.0], [1.0, -1.0])
        assert result.value == pytest.approx(math.log(3.0), abs=1e-15)
        np.testing.assert_allclose(result.grad, [-1.0 / 3.0, 1.0 / 3.0], atol=1e-15)

    def test_value_matches_naive(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            s, y = random_sign_instance(rng, magnitude=20.0)
            assert lse_sign_loss(s, y).value == pytest.approx(naive_lse_sign(s, y), rel=1e-13)

    def test_gradient_mass_identity(self):
        # sum |grad_i| == 1 - exp(-value), exact from the shared max shift
        rng = np.random.default_rng(6)
        for _ in range(500):
            s, y = random_sign_instance(rng)
            result = lse_sign_loss(s, y)
            lhs = np.abs(result.grad).sum()
            rhs = -np.expm1(-result.value)
            assert abs(lhs - rhs) <= 1e-12 * max(lhs, rhs, 1e-300)

    def test_gradient_mass_identity_saturated(self):
        # single well-classified class: loss collapses toward zero but the
        # identity must survive
        for s in (36.0, 45.0, 50.0):
            result = lse_sign_loss([s], [1.0])
            lhs = np.abs(result.grad).sum()
            rhs = -np.expm1(-result.value)
            assert abs(lhs - rhs) <= 1e-12 * max(lhs, rhs)

    def test_sign_law(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            s, y = random_sign_instance(rng)
            result = lse_sign_loss(s, y)
            np.testing.assert_array_equal(np.sign(result.grad), -y)

    def test_monotone_in_each_margin(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            s, y = random_sign_instance(rng, max_classes=16, magnitude=10.0)
            base = lse_sign_loss(s, y).value
            i = int(rng.integers(s.size))
            bumped = s.copy()
            bumped[i] += 0.5 * y[i]  # raises y_i * s_i
            assert lse_sign_loss(bumped, y).value < base

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(9)
        s, y = random_sign_instance(rng, max_classes=32)
        perm = rng.permutation(s.size)
        direct = lse_sign_loss(s, y)
        permuted = lse_sign_loss(s[perm], y[perm])
        assert permuted.value == direct.value
        np.testing.assert_array_equal(permuted.grad, direct.grad[perm])

    def test_positive_and_vanishing(self):
        assert lse_sign_loss([5.0, 3.0], [1.0, -1.0]).value > 0.0
        assert lse_sign_loss([200.0, -200.0], [1.0, -1.0]).value < 1e-80

    def test_finite_at_extreme_logits(self):
        result = lse_sign_loss([1e4, -1e4, 0.0], [1.0, 1.0, -1.0])
        assert math.isfinite(result.value)
        assert np.all(np.isfinite(result.grad))

    def test_shape_and_label_validation(self):
        with pytest.raises(ValueError):
            lse_sign_loss([0.0, 1.0], [1.0])
        with pytest.raises(ValueError):
            lse_sign_loss([0.0], [0.5])
        with pytest.raises(ValueError):
            lse_sign_loss([], [])


class TestBaselineLosses:
    def test_bce_spot(self):
        result = baseline_loss("bce", None, [0.0], [1.0])
        assert result.value == pytest.approx(math.log(2.0), abs=1e-15)

    def test_focal_spot(self):
        result = baseline_loss("focal", {"focal_gamma": 2.0, "alpha": 0.25}, [0.0], [1.0])
        assert result.value == pytest.approx(0.25 * 0.25 * math.log(2.0), abs=1e-15)

    def test_weighted_bce_spot(self):
        # one positive, three negatives in a 4-sample corpus: weight 3
        weights = positive_weights_from_counts([1], 4)
        np.testing.assert_array_equal(weights, [3.0])
        result = baseline_loss("weighted_bce", {"pos_weight": weights}, [0.0], [1.0])
        # independent scalar recomputation: -w * log sigmoid(0)
        assert result.value == pytest.approx(3.0 * math.log(2.0), abs=1e-12)

    def test_weighted_bce_requires_weights(self):
        with pytest.raises(ValueError):
            baseline_loss("weighted_bce", None, [0.0], [1.0])
        with pytest.raises(ValueError):
            baseline_loss("weighted_bce", {"pos_weight": [1.0, 2.0]}, [0.0], [1.0])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            baseline_loss("hinge", None, [0.0], [1.0])
        with pytest.raises(ValueError):
            evaluate_loss("hinge", None, [0.0], [1.0])

    def test_values_match_naive_formulas(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            s, y = random_sign_instance(rng, max_classes=24, magnitude=20.0)
            w = rng.uniform(1.0, 10.0, s.size)
            assert baseline_loss("bce", None, s, y).value == pytest.approx(
                naive_bce(s, y), rel=1e-12
            )
            assert baseline_loss("weighted_bce", {"pos_weight": w}, s, y).value == pytest.approx(
                naive_weighted_bce(s, y, w), rel=1e-12
            )
            assert baseline_loss("focal", None, s, y).value == pytest.approx(
                naive_focal(s, y, 2.0, 0.25), rel=1e-11
            )

    def test_all_losses_finite_at_extreme_logits(self):
        s = np.array([1e4, -1e4, 123.0, -37.0])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        for kind in LOSS_KINDS:
            params = {"pos_weight": np.full(4, 2.0)} if kind == "weighted_bce" else None
            result = evaluate_loss(kind, params, s, y)
            assert math.isfinite(result.value)
            assert np.all(np.isfinite(result.grad))
            assert result.value >= 0.0

    def test_positive_weight_clamping(self):
        weights = positive_weights_from_counts([0, 1, 5000, 2], 10000)
        assert weights[0] == 1.0  # zero positives
        assert weights[1] == 1000.0  # 9999/1 clamped down
        assert weights[2] == 1.0  # 5000/5000 = 1
        assert weights[3] == pytest.approx(4999.0, rel=1e-12) or weights[3] == 1000.0

    def test_positive_weight_clamp_upper(self):
        np.testing.assert_array_equal(positive_weights_from_counts([2], 10000), [1000.0])


class TestGradientsMatchFiniteDifferences:
    def test_all_kinds(self):
        rng = np.random.default_rng(21)
        worst = 0.0
        for _ in range(250):
            s, y = random_sign_instance(rng)
            for kind in LOSS_KINDS:
                params = params_for(kind, s.size, rng)
                analytic = evaluate_loss(kind, params, s, y).grad
                numeric = finite_difference_grad(kind, params, s, y)
                err = gradcheck_error(analytic, numeric).max()
                worst = max(worst, err)
        assert worst < 1e-6

    def test_batch_loss_agrees_with_single(self):
        rng = np.random.default_rng(22)
        n = 12
        logits = rng.uniform(-30, 30, (8, n))
        labels = rng.choice([-1.0, 1.0], (8, n))
        for kind in LOSS_KINDS:
            params = params_for(kind, n, rng)
            values, grads = batch_loss(kind, params, logits, labels)
            for b in range(8):
                single = evaluate_loss(kind, params, logits[b], labels[b])
                assert values[b] == pytest.approx(single.value, rel=1e-14)
                np.testing.assert_allclose(grads[b], single.grad, rtol=1e-14)
