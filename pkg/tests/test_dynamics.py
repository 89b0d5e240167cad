"""Tests for the closed-form transmission model and its dynamics."""

import math

import pytest
from scipy.optimize import brentq

from mobility_lab.dynamics import (
    feedback_rho,
    lambda_for_slope,
    match_utility,
    simulate_dynamics,
    spouse_conditional_mean,
    steady_state_variance,
    theoretical_parent_child_slope,
    variance_recursion,
)
from mobility_lab.exceptions import EstimationError, ValidationError
from mobility_lab.model import FeedbackKind, FeedbackSpec, MeanRule, ModelParams


@pytest.mark.parametrize(
    ("e_i", "rho", "expected"),
    [(10.0, 0.3, 10.0), (12.0, 0.5, 11.0), (8.0, 1.0, 8.0)],
)
def test_spouse_conditional_mean(e_i, rho, expected):
    """Test the spouse's expected schooling shrinks toward the mean."""
    params = ModelParams(lam=0.5, rho=rho, sigma_eps2=1.0)
    assert spouse_conditional_mean(e_i, params) == pytest.approx(expected)


def test_variance_recursion_examples():
    """Test the variance recursion on hand-computed cases."""
    params = ModelParams(lam=0.8, rho=0.5, sigma_eps2=1.0)
    assert variance_recursion(1.0, params) == pytest.approx(1.48)
    assert variance_recursion(0.0, params) == pytest.approx(1.0)


def test_variance_recursion_rejects_negative():
    """Test negative or non-finite variances are rejected."""
    params = ModelParams(lam=0.8, rho=0.5, sigma_eps2=1.0)
    with pytest.raises(ValidationError):
        variance_recursion(-1.0, params)
    with pytest.raises(ValidationError):
        variance_recursion(math.inf, params)


@pytest.mark.parametrize(
    ("lam", "rho", "expected"),
    [(0.8, 0.5, 0.6), (0.7, 1.0, 0.7), (0.5, 0.0, 0.25)],
)
def test_theoretical_slope(lam, rho, expected):
    """Test the parent-child slope lam * (1 + rho) / 2."""
    params = ModelParams(lam=lam, rho=rho, sigma_eps2=1.0)
    assert theoretical_parent_child_slope(params) == pytest.approx(expected)


def test_match_utility():
    """Test the couple utility adds schooling and match quality."""
    assert match_utility(10.0, 12.0, 0.0) == 22.0
    assert match_utility(0.0, 0.0, 1.5) == 1.5


def test_steady_state_is_fixed_point():
    """Test the steady state is a fixed point of the recursion."""
    params = ModelParams(lam=0.8, rho=0.5, sigma_eps2=1.0)
    v = steady_state_variance(params)
    assert variance_recursion(v, params) == pytest.approx(v)


def test_steady_state_needs_contraction():
    """Test full inheritance with perfect sorting has no steady state."""
    with pytest.raises(EstimationError):
        steady_state_variance(ModelParams(lam=1.0, rho=1.0, sigma_eps2=1.0))


def test_feedback_rho_families():
    """Test each feedback family and the clipping to [0, 1]."""
    assert feedback_rho(FeedbackSpec(rho=0.4), 100.0) == 0.4
    linear = FeedbackSpec(kind=FeedbackKind.LINEAR, intercept=0.2, slope=0.1)
    assert feedback_rho(linear, 3.0) == pytest.approx(0.5)
    assert feedback_rho(linear, 30.0) == 1.0
    logistic = FeedbackSpec(
        kind=FeedbackKind.LOGISTIC, lower=0.2, upper=0.8, steepness=2.0, midpoint=5.0
    )
    assert feedback_rho(logistic, 5.0) == pytest.approx(0.5)
    assert feedback_rho(logistic, -1e6) == pytest.approx(0.2)
    assert feedback_rho(logistic, 1e6) == pytest.approx(0.8)


def test_lambda_for_slope():
    """Test the transmission strength is solved from the slope."""
    assert lambda_for_slope(0.6, 0.5) == pytest.approx(0.8)
    with pytest.raises(ValidationError):
        lambda_for_slope(0.9, 0.5)


def test_constant_feedback_matches_recursion():
    """Test constant feedback reproduces the plain variance recursion."""
    params = ModelParams(lam=0.8, rho=0.5, sigma_eps2=1.0)
    moments = simulate_dynamics(
        params, FeedbackSpec(rho=0.5), 8, initial_variance=4.0
    )
    variance = 4.0
    for m in moments:
        assert m.variance == pytest.approx(variance, rel=1e-12)
        assert m.rho_used == 0.5
        assert m.slope_to_child == pytest.approx(0.6)
        variance = variance_recursion(variance, params)


def test_feedback_converges_monotonically_to_joint_fixed_point():
    """Test variance and sorting decline together to the composed fixed point."""
    params = ModelParams(lam=0.8, rho=0.5, sigma_eps2=1.0)
    feedback = FeedbackSpec(kind=FeedbackKind.LINEAR, intercept=0.2, slope=0.05)
    moments = simulate_dynamics(params, feedback, 80, initial_variance=10.0)

    variances = [m.variance for m in moments]
    rhos = [m.rho_used for m in moments]
    assert all(b <= a for a, b in zip(variances, variances[1:], strict=False))
    assert all(b <= a for a, b in zip(rhos, rhos[1:], strict=False))

    def composed_gap(v: float) -> float:
        rho = 0.2 + 0.05 * v
        return 0.8**2 * (1.0 + rho) / 2.0 * v + 1.0 - v

    fixed = brentq(composed_gap, 1e-9, 10.0)
    assert variances[-1] == pytest.approx(fixed, abs=1e-6)
    assert rhos[-1] == pytest.approx(0.2 + 0.05 * fixed, abs=1e-6)


def test_slope_path_sets_lambda():
    """Test a slope path is met exactly under the feedback sorting."""
    params = ModelParams(lam=0.6, rho=0.6, sigma_eps2=1.0)
    slopes = (0.5, 0.45, 0.4)
    moments = simulate_dynamics(params, FeedbackSpec(rho=0.6), 3, slope_path=slopes)
    assert [m.slope_to_child for m in moments] == pytest.approx(list(slopes))
    assert moments[0].lam == pytest.approx(2 * 0.5 / 1.6)


def test_lambda_path_and_drift():
    """Test a lambda path is applied and the mean drifts."""
    params = ModelParams(
        lam=0.5, rho=0.0, sigma_eps2=1.0, mean_rule=MeanRule.DRIFT, drift=5.0
    )
    moments = simulate_dynamics(
        params, FeedbackSpec(rho=0.0), 3, lambda_path=(0.5, 0.5, 0.5)
    )
    assert [m.mean for m in moments] == pytest.approx([10.0, 10.0, 10.0])
    drifting = simulate_dynamics(
        params, FeedbackSpec(rho=0.0), 3, lambda_path=(0.2, 0.2, 0.2)
    )
    assert [m.mean for m in drifting] == pytest.approx([10.0, 7.0, 6.4])


def test_simulate_dynamics_validation():
    """Test invalid horizons and paths are rejected."""
    params = ModelParams(lam=0.6, rho=0.6, sigma_eps2=1.0)
    feedback = FeedbackSpec()
    with pytest.raises(ValidationError):
        simulate_dynamics(params, feedback, 0)
    with pytest.raises(ValidationError):
        simulate_dynamics(params, feedback, 3, lambda_path=(0.5, 0.5))
    with pytest.raises(ValidationError):
        simulate_dynamics(
            params, feedback, 2, lambda_path=(0.5, 0.5), slope_path=(0.3, 0.3)
        )
    with pytest.raises(ValidationError):
        simulate_dynamics(params, feedback, 2, initial_variance=-1.0)
