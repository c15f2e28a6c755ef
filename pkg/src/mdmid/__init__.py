"""Noise covariance identification for LTV state-space models by measurement differences."""

from .errors import (
    HorizonError,
    IdentifiabilityError,
    MDMError,
    ModelError,
    RankDeficiencyError,
    WeightingError,
)
from .estimators import (
    BandedSym,
    EstimateReport,
    RegressionDesign,
    RegressionSystem,
    build_P2,
    build_regression,
    build_S2,
    estimate_semiweighted,
    estimate_unweighted,
    estimate_weighted,
    project_psd,
)
from .model import LtvModel, NoiseSpec, Trajectory, check_observability, observability_stack, simulate, validate
from .recursive import RlsState, rls_init, rls_run, rls_step
from .vecmaps import CovLayout

__version__ = "0.1.0"
