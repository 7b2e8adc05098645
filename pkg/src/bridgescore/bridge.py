"""Brownian-bridge sequence model.

A document is an ordered sequence of T+1 latent vectors with both endpoints
treated as exactly observed. Interior points deviate from the endpoint chord
like d correlated standard bridges mixed by a spatial factor W, so
vec(s - mu) ~ N(0, Sigma_T kron Sigma) with Sigma = W W^T. The exact
log-likelihood, a sampler, and the pooled covariance MLE live here; all
quadratic forms go through Cholesky solves, never explicit inverses.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    DimensionMismatchError,
    InsufficientDataError,
    NotPositiveDefiniteError,
    SingularEstimateError,
    ValidationError,
)
from .numerics import LOG_2PI, SpdMatrix, log_det_spd, spd_solve

_FACTOR_RTOL = 1e-10


@dataclass(frozen=True)
class LatentTrajectory:
    """One document: T+1 ordered d-dimensional latent vectors s_0 .. s_T."""

    id: str
    domain: str
    points: np.ndarray  # (T+1, d)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ValidationError(f"trajectory {self.id!r}: points must form a (T+1, d) matrix")
        if pts.shape[0] < 3:
            raise ValidationError(
                f"trajectory {self.id!r}: needs at least 3 points (T >= 2), got {pts.shape[0]}"
            )
        if not np.all(np.isfinite(pts)):
            raise ValidationError(f"trajectory {self.id!r}: non-finite coordinate")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def T(self) -> int:
        return self.points.shape[0] - 1

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def interior(self) -> np.ndarray:
        """The T-1 interior points, shape (T-1, d)."""
        return self.points[1:-1]


@dataclass(frozen=True)
class TemporalCovariance:
    """Bridge covariance over interior times: entry (s, t) = s (T - t) / T for s <= t."""

    T: int
    matrix: SpdMatrix


@lru_cache(maxsize=512)
def temporal_cov(T: int) -> TemporalCovariance:
    """The (T-1) x (T-1) temporal covariance, memoized per T.

    Corpora reuse few distinct lengths, so the Cholesky factor is cached.
    """
    T = int(T)
    if T < 2:
        raise ValidationError(f"temporal covariance needs T >= 2, got {T}")
    t = np.arange(1, T, dtype=float)
    m = np.minimum.outer(t, t) * (T - np.maximum.outer(t, t)) / T
    return TemporalCovariance(T=T, matrix=SpdMatrix(m))


@dataclass(frozen=True)
class SpatialCovariance:
    """Spatial covariance Sigma = W W^T coupling latent dimensions at each time.

    The mixing factor w is optional; when absent the Cholesky factor of sigma
    stands in (any factor with W W^T = Sigma produces the same law).
    """

    sigma: SpdMatrix
    w: np.ndarray | None = None

    def __post_init__(self):
        if self.w is not None:
            w = np.array(self.w, dtype=float)
            if w.shape != (self.sigma.dim, self.sigma.dim):
                raise ValidationError(
                    f"mixing factor shape {w.shape} does not match sigma dim {self.sigma.dim}"
                )
            resid = np.linalg.norm(w @ w.T - self.sigma.entries)
            if resid > _FACTOR_RTOL * np.linalg.norm(self.sigma.entries):
                raise ValidationError("w @ w.T does not reproduce sigma within 1e-10")
            w.setflags(write=False)
            object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.sigma.dim

    def mixing(self) -> np.ndarray:
        return self.w if self.w is not None else self.sigma.chol

    @classmethod
    def from_matrix(cls, sigma) -> "SpatialCovariance":
        return cls(sigma=SpdMatrix(sigma))

    @classmethod
    def from_factor(cls, w) -> "SpatialCovariance":
        w = np.asarray(w, dtype=float)
        sigma = w @ w.T
        return cls(sigma=SpdMatrix(0.5 * (sigma + sigma.T)), w=w)

    @classmethod
    def identity(cls, d: int) -> "SpatialCovariance":
        return cls(sigma=SpdMatrix(np.eye(d)))


@dataclass(frozen=True)
class BridgeResiduals:
    """Deviation of the interior points from the endpoint chord, shape (d, T-1)."""

    centered: np.ndarray
    trajectory_id: str


def bridge_mean(traj: LatentTrajectory) -> np.ndarray:
    """Chord means mu_t = s_0 + (t/T)(s_T - s_0) for t = 1..T-1, shape (d, T-1)."""
    t = np.arange(1, traj.T, dtype=float) / traj.T
    return np.outer(traj.start, 1.0 - t) + np.outer(traj.end, t)


def residuals(traj: LatentTrajectory) -> BridgeResiduals:
    """Interior points minus the bridge mean."""
    return BridgeResiduals(centered=traj.interior().T - bridge_mean(traj), trajectory_id=traj.id)


def mahalanobis_trace(sigma: SpdMatrix, temporal: SpdMatrix, centered: np.ndarray) -> float:
    """tr(Sigma^-1 R Sigma_T^-1 R^T) for a (d, T-1) residual matrix R.

    Equals the squared Mahalanobis norm of vec(R) under the Kronecker
    covariance Sigma_T kron Sigma, at O(T^3 + d^3) instead of O(T^3 d^3).
    """
    centered = np.asarray(centered, dtype=float)
    a = spd_solve(sigma, centered)
    b = spd_solve(temporal, centered.T)
    return float(np.sum(a * b.T))


def sample_bridge(d, T, spatial: SpatialCovariance, s0, sT, seed, *,
                  id: str = "sample", domain: str = "sim") -> LatentTrajectory:
    """Draw one trajectory with endpoints exactly s0, sT.

    Z is a d x (T-1) matrix of iid standard normals and the interior
    deviation is W Z L^T with L the temporal Cholesky factor, so
    vec(s - mu) ~ N(0, Sigma_T kron Sigma). Deterministic given seed.
    """
    d, T = int(d), int(T)
    s0 = np.asarray(s0, dtype=float)
    sT = np.asarray(sT, dtype=float)
    if spatial.dim != d:
        raise DimensionMismatchError(f"spatial covariance dim {spatial.dim} != d {d}")
    if s0.shape != (d,) or sT.shape != (d,):
        raise DimensionMismatchError(
            f"endpoints must be vectors of dim {d}, got {s0.shape} and {sT.shape}"
        )
    rng = np.random.default_rng(seed)
    L = temporal_cov(T).matrix.chol
    Z = rng.standard_normal((d, T - 1))
    deviation = spatial.mixing() @ Z @ L.T
    t = np.arange(1, T, dtype=float) / T
    chord = np.outer(s0, 1.0 - t) + np.outer(sT, t)
    points = np.empty((T + 1, d))
    points[0] = s0
    points[-1] = sT
    points[1:-1] = (chord + deviation).T
    return LatentTrajectory(id=id, domain=domain, points=points)


def log_likelihood(traj: LatentTrajectory, spatial: SpatialCovariance) -> float:
    """Exact log-likelihood of one trajectory under the bridge model.

    -d(T-1)/2 log 2pi - d/2 log|Sigma_T| - (T-1)/2 log|Sigma|
    - 1/2 tr(Sigma^-1 (s-mu) Sigma_T^-1 (s-mu)^T)
    """
    if spatial.dim != traj.d:
        raise DimensionMismatchError(
            f"trajectory {traj.id!r} has d={traj.d}, spatial covariance has dim {spatial.dim}"
        )
    T, d = traj.T, traj.d
    tc = temporal_cov(T)
    quad = mahalanobis_trace(spatial.sigma, tc.matrix, residuals(traj).centered)
    return (
        -0.5 * d * (T - 1) * LOG_2PI
        - 0.5 * d * log_det_spd(tc.matrix)
        - 0.5 * (T - 1) * log_det_spd(spatial.sigma)
        - 0.5 * quad
    )


def log_likelihood_corpus(trajs, spatial: SpatialCovariance) -> float:
    """Sum of per-trajectory log-likelihoods (independent sequences, shared Sigma).

    Terms are accumulated in trajectory-id order so the result does not
    depend on corpus ordering.
    """
    return float(sum(log_likelihood(t, spatial) for t in sorted(trajs, key=lambda t: t.id)))


def pooled_covariance(trajs) -> tuple[np.ndarray, int]:
    """Pooled residual covariance and its weight, without a definiteness check.

    Returns (M, weight) with M = (sum_i R_i Sigma_Ti^-1 R_i^T) / weight,
    weight = sum_i (T_i - 1), symmetrized to remove float asymmetry. Callers
    that need a usable covariance validate PD themselves (mle_sigma) or blend
    toward the identity first (the trainer's shrinkage).
    """
    trajs = sorted(trajs, key=lambda t: t.id)
    if not trajs:
        raise InsufficientDataError("cannot estimate a covariance from an empty corpus")
    d = trajs[0].d
    for t in trajs:
        if t.d != d:
            raise DimensionMismatchError(
                f"trajectory {t.id!r} has d={t.d}, expected {d} like the rest of the corpus"
            )
    acc = np.zeros((d, d))
    weight = 0
    for t in trajs:
        r = residuals(t).centered
        acc += r @ spd_solve(temporal_cov(t.T).matrix, r.T)
        weight += t.T - 1
    m = acc / weight
    return 0.5 * (m + m.T), weight


def mle_sigma(trajs) -> SpatialCovariance:
    """Pooled maximum-likelihood estimate of the spatial covariance.

    Requires pooled weight sum(T_i - 1) >= d; raises SingularEstimateError
    when the residuals do not span R^d (e.g. straight-line trajectories).
    """
    m, weight = pooled_covariance(trajs)
    d = m.shape[0]
    if weight < d:
        raise InsufficientDataError(
            f"pooled weight {weight} is below dimension {d}; the estimate would be singular"
        )
    try:
        spd = SpdMatrix(m)
    except NotPositiveDefiniteError as exc:
        raise SingularEstimateError(
            f"pooled covariance estimate of dim {d} is singular"
        ) from exc
    return SpatialCovariance(sigma=spd)
