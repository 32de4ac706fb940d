"""Mirror-map PDMP samplers for constrained targets, with Langevin baselines."""

from .barriers import (
    BoxBarrier,
    Domain,
    EntropicQuadraticBarrier,
    HypercubeBarrier,
    IdentityBarrier,
    PreconditionedBarrier,
    SimplexEntropyBarrier,
)
from .metrics import noise_floor, w1_multivariate_by_marginals, w1_sorted
from .mirror import DualPotential, MirrorRun, pushforward_potential, run_mbps, run_mzzs, run_mzzss
from .pdmp import (
    AffineRateBound,
    BoundViolationError,
    Budget,
    PhaseState,
    Skeleton,
    Space,
    ThinningStats,
    extract_samples,
    invert_affine_bound,
    simulate_batch,
    simulate_skeleton,
)
from .samplers import BouncySpec, SubsampledGradient, ZigZagSpec, run_bps, run_zzs, run_zzss
from .targets import DirichletPosterior, GammaProduct, GaussianTarget, TruncatedGaussian, constants, lda_dataset

__version__ = "0.1.0"

__all__ = [
    "BoxBarrier",
    "Domain",
    "EntropicQuadraticBarrier",
    "HypercubeBarrier",
    "IdentityBarrier",
    "PreconditionedBarrier",
    "SimplexEntropyBarrier",
    "noise_floor",
    "w1_multivariate_by_marginals",
    "w1_sorted",
    "DualPotential",
    "MirrorRun",
    "pushforward_potential",
    "run_mbps",
    "run_mzzs",
    "run_mzzss",
    "AffineRateBound",
    "BoundViolationError",
    "Budget",
    "PhaseState",
    "Skeleton",
    "Space",
    "ThinningStats",
    "extract_samples",
    "invert_affine_bound",
    "simulate_batch",
    "simulate_skeleton",
    "BouncySpec",
    "SubsampledGradient",
    "ZigZagSpec",
    "run_bps",
    "run_zzs",
    "run_zzss",
    "DirichletPosterior",
    "GammaProduct",
    "GaussianTarget",
    "TruncatedGaussian",
    "constants",
    "lda_dataset",
]
