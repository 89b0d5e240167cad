"""Closed-form transmission model and its feedback dynamics.

Everything here is a pure function of its arguments. Schooling of a child is
``lam * (e_i + e_j) / 2 + intercept + eps``; spouses sort with correlation
``rho``; sorting may respond to parental inequality through a
``FeedbackSpec``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import replace

import numpy as np

from .exceptions import EstimationError, ValidationError
from .model import FeedbackKind, FeedbackSpec, GenerationMoments, ModelParams

_LOGGER = logging.getLogger(__name__)


def spouse_conditional_mean(e_i: float, params: ModelParams) -> float:
    """Expected schooling of the spouse of someone with ``e_i`` years."""
    return params.mu + params.rho * (e_i - params.mu)


def variance_recursion(sigma_t2: float, params: ModelParams) -> float:
    """Variance of the children of a generation with variance ``sigma_t2``.

    Args:
        sigma_t2: Parental variance.
        params: Model parameters of the parental generation.

    Returns:
        ``lam**2 * (1 + rho) / 2 * sigma_t2 + sigma_eps2``.

    Raises:
        ValidationError: If ``sigma_t2`` is negative or not finite.
    """
    if not math.isfinite(sigma_t2) or sigma_t2 < 0.0:
        raise ValidationError(f"sigma_t2 must be finite and >= 0, got {sigma_t2}")
    return params.lam**2 * (1.0 + params.rho) / 2.0 * sigma_t2 + params.sigma_eps2


def theoretical_parent_child_slope(params: ModelParams) -> float:
    """Regression slope of a child's schooling on one parent's schooling.

    This is Cov(parent, child) / Var(parent) = ``lam * (1 + rho) / 2``. It is
    a slope; use ``estimators.slope_to_correlation`` for the correlation.
    """
    return params.lam * (1.0 + params.rho) / 2.0


def match_utility(e_i: float, e_j: float, ell: float) -> float:
    """Utility a couple derives from their joint schooling and match quality."""
    return e_i + e_j + ell


def steady_state_variance(params: ModelParams) -> float:
    """Fixed point of ``variance_recursion`` for constant parameters.

    Raises:
        EstimationError: If the recursion does not contract.
    """
    contraction = params.lam**2 * (1.0 + params.rho) / 2.0
    if contraction >= 1.0:
        raise EstimationError(
            f"No steady state: lam^2 (1 + rho) / 2 = {contraction} >= 1"
        )
    return params.sigma_eps2 / (1.0 - contraction)


def feedback_rho(feedback: FeedbackSpec, variance: float) -> float:
    """Evaluate the sorting response g(variance), clipped to [0, 1]."""
    if feedback.kind is FeedbackKind.CONSTANT:
        value = feedback.rho
    elif feedback.kind is FeedbackKind.LINEAR:
        value = feedback.intercept + feedback.slope * variance
    else:
        exponent = -feedback.steepness * (variance - feedback.midpoint)
        # exp overflow saturates at the lower asymptote
        logistic = 0.0 if exponent > 700.0 else 1.0 / (1.0 + math.exp(exponent))
        value = feedback.lower + (feedback.upper - feedback.lower) * logistic
    return float(np.clip(value, 0.0, 1.0))


def lambda_for_slope(slope: float, rho: float) -> float:
    """Transmission strength that produces ``slope`` under sorting ``rho``."""
    lam = 2.0 * slope / (1.0 + rho)
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(
            f"Slope {slope} with rho {rho} needs lam={lam}, outside [0, 1]"
        )
    return lam


def simulate_dynamics(
    params0: ModelParams,
    feedback: FeedbackSpec,
    T: int,
    *,
    initial_variance: float | None = None,
    lambda_path: Sequence[float] | None = None,
    slope_path: Sequence[float] | None = None,
) -> list[GenerationMoments]:
    """Iterate the variance recursion with sorting feedback.

    At each generation ``rho_t = g(variance_t)`` is applied when couples form,
    the slope produced by that generation is recorded, and the next variance
    follows from ``variance_recursion``.

    Args:
        params0: Parameters of the first generation. ``rho`` is replaced by
            the feedback value at every step.
        feedback: Sorting response to parental variance.
        T: Number of generations to record.
        initial_variance: Variance of generation 0. Defaults to the steady
            state of ``params0``.
        lambda_path: Optional per-generation transmission strength.
        slope_path: Optional per-generation target slope; ``lam`` is solved
            from it after sorting is known. Exclusive with ``lambda_path``.

    Returns:
        ``T`` moments records, generation 0 first.

    Raises:
        ValidationError: On non-finite inputs, ``T < 1`` or paths of the
            wrong length.
    """
    if T < 1:
        raise ValidationError(f"T must be >= 1, got {T}")
    if lambda_path is not None and slope_path is not None:
        raise ValidationError("Give either lambda_path or slope_path, not both")
    for name, path in (("lambda_path", lambda_path), ("slope_path", slope_path)):
        if path is not None:
            if len(path) != T:
                raise ValidationError(f"{name} needs {T} entries, got {len(path)}")
            if not all(math.isfinite(v) for v in path):
                raise ValidationError(f"{name} contains non-finite values")

    variance = (
        steady_state_variance(params0) if initial_variance is None else initial_variance
    )
    if not math.isfinite(variance) or variance < 0.0:
        raise ValidationError(f"Initial variance must be finite and >= 0: {variance}")

    params = params0
    moments: list[GenerationMoments] = []
    for t in range(T):
        rho_t = feedback_rho(feedback, variance)
        lam_t = params.lam
        if lambda_path is not None:
            lam_t = float(lambda_path[t])
        elif slope_path is not None:
            lam_t = lambda_for_slope(float(slope_path[t]), rho_t)
        params = replace(params, lam=lam_t, rho=rho_t)
        slope = theoretical_parent_child_slope(params)
        moments.append(
            GenerationMoments(
                t=t,
                mean=params.mu,
                variance=variance,
                rho_used=rho_t,
                slope_to_child=slope,
                lam=lam_t,
            )
        )
        _LOGGER.debug(
            f"Generation {t}: var={variance:.6f} rho={rho_t:.4f} slope={slope:.4f}"
        )
        variance = variance_recursion(variance, params)
        params = replace(params, mu=params.child_mean)

    _LOGGER.info(
        f"Simulated {T} generations: variance {moments[0].variance:.4f} -> "
        f"{moments[-1].variance:.4f}, rho {moments[0].rho_used:.3f} -> "
        f"{moments[-1].rho_used:.3f}"
    )
    return moments
