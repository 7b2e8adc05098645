"""Sequence coherence scores.

The main score is the residual trace statistic divided by its degrees of
freedom: under the generating covariance it is a chi-square variate over its
dof, so its expectation is 1 for every length and the chi-square survival
probability gives a length-comparable p-value. Larger scores mean the
sequence is less plausible under the supplied covariance.

The heuristic predecessor score (isotropic covariance, temporally
independent interior points) is a reconstruction from its published
description and is labeled as such wherever it is reported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bridge import LatentTrajectory, SpatialCovariance, mahalanobis_trace, residuals, temporal_cov
from .errors import BridgeModelError, DegenerateVarianceError, DimensionMismatchError, ValidationError
from .numerics import LOG_2PI, chi_square_sf


@dataclass(frozen=True)
class ScoreReport:
    """Per-document score record: statistic = bbscore * dof, p_value = SF(statistic, dof)."""

    trajectory_id: str
    bbscore: float
    statistic: float
    dof: int
    p_value: float
    heuristic_score: float | None = None


def bbscore(traj: LatentTrajectory, spatial: SpatialCovariance) -> ScoreReport:
    """Score one trajectory against a spatial covariance.

    bbscore = tr(Sigma^-1 (s-mu) Sigma_T^-1 (s-mu)^T) / [(T-1) d]. Zero for
    straight-line trajectories, exactly 1 against the trajectory's own
    single-sequence MLE, and chi-square-calibrated under the true model.
    """
    if spatial.dim != traj.d:
        raise DimensionMismatchError(
            f"trajectory {traj.id!r} has d={traj.d}, spatial covariance has dim {spatial.dim}"
        )
    dof = (traj.T - 1) * traj.d
    statistic = mahalanobis_trace(
        spatial.sigma, temporal_cov(traj.T).matrix, residuals(traj).centered
    )
    statistic = max(statistic, 0.0)
    return ScoreReport(
        trajectory_id=traj.id,
        bbscore=statistic / dof,
        statistic=statistic,
        dof=dof,
        p_value=chi_square_sf(statistic, dof),
    )


def bbscore_batch(trajs, spatial: SpatialCovariance) -> list[ScoreReport]:
    """Score a corpus; output order matches input order.

    The first failure aborts the batch with the offending trajectory id.
    """
    out = []
    for traj in trajs:
        try:
            out.append(bbscore(traj, spatial))
        except BridgeModelError as exc:
            raise type(exc)(f"trajectory {traj.id!r}: {exc}") from exc
    return out


def heuristic_bbscore(traj: LatentTrajectory, sigma2="mle") -> float:
    """Predecessor score: log-density under independent isotropic marginals.

    Interior points are treated as independent with s_t ~ N(mu_t,
    sigma2 * t(T-t)/T * I_d). Pass a positive sigma2 or "mle" to plug in
    sigma2_hat = [sum_t ||s_t - mu_t||^2 * T / (t(T-t))] / [(T-1) d].
    """
    T, d = traj.T, traj.d
    r = residuals(traj).centered
    t = np.arange(1, T, dtype=float)
    v = t * (T - t) / T
    sq = np.sum(r * r, axis=0)
    weighted = float(np.sum(sq / v))
    if sigma2 == "mle":
        s2 = weighted / ((T - 1) * d)
        if s2 <= 0.0:
            raise DegenerateVarianceError(
                f"trajectory {traj.id!r} lies on its chord; the variance MLE is zero"
            )
    else:
        s2 = float(sigma2)
        if s2 <= 0.0:
            raise ValidationError(f"sigma2 must be positive, got {sigma2!r}")
    return float(
        -0.5 * (T - 1) * d * LOG_2PI
        - 0.5 * d * float(np.sum(np.log(s2 * v)))
        - 0.5 * weighted / s2
    )
