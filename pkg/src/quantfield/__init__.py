"""Kernel conditional quantiles and interval prediction for lattice random fields."""

from .bandwidth import BandwidthReport, default_grid, h_mean_cv, select_bandwidths, yu_jones
from .errors import (
    BandwidthError,
    BracketError,
    ConfigError,
    FactorizationError,
    NoMassError,
    PredictionError,
    QuantFieldError,
    ZeroDensityError,
)
from .estimator import (
    EstimatorConfig,
    IntervalResult,
    QuantileResult,
    Sample,
    cond_cdf,
    cond_density,
    cond_quantile,
    confidence_interval,
    density_g,
    joint_density_f,
    local_constant_quantile,
    plugin_sigma2,
    predictive_interval,
    psi,
)
from .field_sim import (
    FieldOnGrid,
    GridRegion,
    GrfSpec,
    local_weight,
    local_weight_field,
    observation_mask,
    simulate_grf,
    simulate_model,
)
from .kernels import (
    KernelConstants,
    KernelSpec,
    eval_kernel,
    integrated_kernel,
    kernel_constants,
)
from .predictor import (
    ExperimentReport,
    IntervalSpec,
    PredictionTask,
    ReplicationConfig,
    ReplicationResult,
    VicinityShape,
    build_training,
    carve_targets,
    coverage_report,
    default_targets,
    mae,
    predict,
    run_replication,
    vicinity_sites,
    vicinity_values,
)

__version__ = "0.1.0"
