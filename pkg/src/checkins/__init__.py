"""Periodic check-in point process with socially excited location choice.

The model: each user's check-in times in a category follow a base rate plus
periodic Gaussian bumps echoing her own past events with geometric damping;
given a time and category, the location is drawn by mixing recently
influenced locations (weighted by who visited them and how much they
influence the user) with a recency-weighted popularity distribution.
Fitting is by EM over the latent influence channel of each event.
"""

from .core import (
    Checkin,
    DegenerateDistributionError,
    EventLog,
    HyperParams,
    KernelMode,
    ModelParams,
    NumericalError,
    PredictionError,
    SocialGraph,
    filtration,
    split,
)
from .graphs import KroneckerSeed, ParamRanges, SEED_PRESETS, kronecker_graph, sample_ground_truth, uniform_location_map
from .inference import EMConfig, FitResult, Responsibilities, e_step, fit, m_step, user_objective
from .predict import predict_next_time, rank_locations
from .simulate import Simulator, next_event, simulate
from .spatial import (
    LocationDistribution,
    SpatialWeights,
    WeightCache,
    compute_weights,
    influence_share,
    location_distribution,
)
from .temporal import IntensityContext, intensity, intensity_integral, kernel, temporal_loglik

__version__ = "0.1.0"

__all__ = [
    "Checkin",
    "DegenerateDistributionError",
    "EMConfig",
    "EventLog",
    "FitResult",
    "HyperParams",
    "IntensityContext",
    "KernelMode",
    "KroneckerSeed",
    "LocationDistribution",
    "ModelParams",
    "NumericalError",
    "ParamRanges",
    "PredictionError",
    "Responsibilities",
    "SEED_PRESETS",
    "Simulator",
    "SocialGraph",
    "SpatialWeights",
    "WeightCache",
    "compute_weights",
    "e_step",
    "filtration",
    "fit",
    "influence_share",
    "intensity",
    "intensity_integral",
    "kernel",
    "kronecker_graph",
    "location_distribution",
    "m_step",
    "next_event",
    "predict_next_time",
    "rank_locations",
    "sample_ground_truth",
    "simulate",
    "split",
    "temporal_loglik",
    "uniform_location_map",
    "user_objective",
]
