"""Monte Carlo laboratory for semilinear evolution equations driven by compensated Poisson noise."""

from .coefficients import (BUILTIN_SYSTEMS, DriftCoefficient, InitialLaw, JumpCoefficient, SystemSpec,
                           ValidationReport, builtin_system, rescale_system, validate_hypothesis)
from .config import ConfigError, ExperimentConfig, load_config
from .convolution import (Decomposition, ResidualSeries, bichteler_jacod_check, burkholder_ratio,
                          ito_pth_residual, pth_power_gap_bound, stochastic_convolution)
from .estimates import IncompatibleEstimates, MonteCarloEstimate, merge_estimates, reduce_estimates
from .experiments import run_experiment
from .hilbert import SpectralSemigroup, semigroup_apply
from .measure import IntensityMeasure, JumpPath, compensated_integral, quadratic_variation, sample_jump_path
from .paths import GridError, PathGrid, jump_adapted_grid
from .solver import (PicardDiverged, PicardTrace, SkeletonDidNotConverge, StepRejected, direct_scheme,
                     picard_solve, solve_deterministic_skeleton)
from .stability import DecayCurve, HypothesisConstants, coupled_decay, gamma_constant, gamma_proof

__version__ = "0.1.0"
