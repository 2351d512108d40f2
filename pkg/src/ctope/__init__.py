"""Off-policy evaluation and policy learning for continuous treatments.

Logged interactions (covariates, dose, loss, logging density) are reweighted
through a smoothing kernel centered at the target policy's dose, yielding
consistent value estimates without discretizing the treatment; the same
objective drives constrained policy search.
"""

from .data import Dataset, EvalResult, LogRecord, Violation, validate
from .errors import ConfigError, CtopeError, FitError, OverlapError, SupportError
from .estimators import EstimatorConfig, dr_evaluate, evaluate, ipw_evaluate, reg_std, sn_evaluate
from .bandwidth import PluginEstimate, kde_conditional_density, plugin_bandwidth, rescale_bandwidth
from .kernels import (
    EPANECHNIKOV,
    GAUSSIAN,
    KERNELS,
    TRIANGULAR,
    Kernel,
    boundary_mass,
    get_kernel,
    triangular_hinge_decomposition,
)
from .optimizer import (
    LinearPolicyClass,
    OptimizeConfig,
    OptimizeReport,
    gradient,
    objective,
    optimize,
)
from .policies import (
    Box,
    ConstantPolicy,
    L2Ball,
    LinearPolicy,
    load_policy,
    project,
    save_policy,
    warfarin_box,
)
from .propensity import LinearNormalGps, UniformGps, clip_weight, gps_density, impute_gps_linear
from .baselines import (
    Discretization,
    PolynomialRegressor,
    discretized_evaluate,
    dm_evaluate,
    dm_fit,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "ConfigError",
    "ConstantPolicy",
    "CtopeError",
    "Dataset",
    "Discretization",
    "EPANECHNIKOV",
    "EstimatorConfig",
    "EvalResult",
    "FitError",
    "GAUSSIAN",
    "KERNELS",
    "Kernel",
    "L2Ball",
    "LinearNormalGps",
    "LinearPolicy",
    "LinearPolicyClass",
    "LogRecord",
    "OptimizeConfig",
    "OptimizeReport",
    "OverlapError",
    "PluginEstimate",
    "PolynomialRegressor",
    "SupportError",
    "TRIANGULAR",
    "UniformGps",
    "Violation",
    "boundary_mass",
    "clip_weight",
    "discretized_evaluate",
    "dm_evaluate",
    "dm_fit",
    "dr_evaluate",
    "evaluate",
    "get_kernel",
    "gps_density",
    "gradient",
    "impute_gps_linear",
    "ipw_evaluate",
    "kde_conditional_density",
    "load_policy",
    "objective",
    "optimize",
    "plugin_bandwidth",
    "project",
    "reg_std",
    "rescale_bandwidth",
    "save_policy",
    "sn_evaluate",
    "triangular_hinge_decomposition",
    "validate",
    "warfarin_box",
]
