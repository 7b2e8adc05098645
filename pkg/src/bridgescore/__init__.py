"""Brownian-bridge sequence modeling, covariance fitting, and coherence scoring."""

__version__ = "0.1.0"

from .errors import (
    BridgeModelError,
    DegenerateInputError,
    DegenerateLabelsError,
    DegenerateVarianceError,
    DimensionMismatchError,
    EmptyBatchError,
    EmptySetError,
    InfeasibleWindowsError,
    InsufficientDataError,
    LengthMismatchError,
    NoNontrivialPermutationError,
    NotPositiveDefiniteError,
    NumericalError,
    SingularEstimateError,
    TrainingDivergedError,
    TripletInfeasibleError,
    ValidationError,
)
from .numerics import (
    RankedSample,
    SpdMatrix,
    chi_square_sf,
    cholesky,
    log_det_spd,
    spd_solve,
    spearman_rho,
)
from .bridge import (
    BridgeResiduals,
    LatentTrajectory,
    SpatialCovariance,
    TemporalCovariance,
    bridge_mean,
    log_likelihood,
    log_likelihood_corpus,
    mahalanobis_trace,
    mle_sigma,
    pooled_covariance,
    residuals,
    sample_bridge,
    temporal_cov,
)
from .score import ScoreReport, bbscore, bbscore_batch, heuristic_bbscore
from .encoder import (
    LinearEncoder,
    RawSequence,
    TrainerState,
    cl_gradient,
    cl_loss,
    encode,
    nll_batch_loss,
    nll_gradient,
    nll_objective,
    sample_triplets,
    train,
    update_sigma_hat,
)
from .evalsuite import (
    LabeledCorpus,
    ShuffleSpec,
    discrimination_accuracy,
    domain_swap_compare,
    global_shuffle,
    label_relation,
    local_shuffle,
    make_shuffle_set,
    relative_accuracy,
    stable_seed,
    threshold_classify,
)
