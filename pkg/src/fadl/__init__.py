"""Distributed training of l2-regularized linear classifiers.

The solver approximates the global objective on each node with a local
surrogate whose gradient matches the true gradient at the current point,
minimizes the surrogates with a bounded number of inner iterations, and
combines the local steps into one direction that a distributed
Armijo-Wolfe search turns into an update.  Communication happens in two
feature-length reductions per outer iteration plus one scalar pair per
line-search probe; a trust-region Newton baseline with per-matvec
reductions is included for comparison, along with a closed-form cost
model for both.
"""

from .approx import (
    ApproxFamily,
    DegenerateShardError,
    LocalApproximation,
    UnsupportedFamilyError,
    build_approx,
    svrg_gradient_sample,
)
from .backends import SequentialBackend, ThreadedBackend, make_backend
from .comm_cost import (
    BENCHMARK_DIMS,
    CommLedger,
    ConsistencyReport,
    CostParams,
    consistency_check,
    fadl_faster,
    total_cost,
)
from .data import Dataset, SparseVector
from .data_io import (
    MetricsRecord,
    ParseError,
    PartitionPlan,
    PartitionScheme,
    parse_libsvm,
    partition,
    read_metrics,
    synth_classification,
    write_libsvm,
    write_metrics,
    write_metrics_table,
)
from .engine import (
    Method,
    RunConfig,
    RunResult,
    StagnationError,
    run,
    run_fadl,
    run_sqm,
    solve_reference,
    warm_start_average,
)
from .linesearch import (
    LineSearchConfig,
    LineSearchError,
    LineSearchResult,
    RestrictedObjective,
    armijo_wolfe_search,
    linear_rate_bound,
    search_along_ray,
)
from .local_opt import (
    InnerConfig,
    InnerMethod,
    InnerResult,
    TrustRegionNewton,
    angle_check,
    cos_angle,
    minimize_inner,
    steihaug_cg,
    sufficient_inner_budget,
)
from .losses import (
    LossKind,
    curvature_bound,
    loss_derivative,
    loss_second_derivative,
    loss_value,
)
from .objective import Objective, spectral_norm_estimate
from .verify import PROPERTY_NAMES, VerifyResult, run_properties, run_property

__version__ = "0.1.0"

__all__ = [
    "ApproxFamily",
    "BENCHMARK_DIMS",
    "CommLedger",
    "ConsistencyReport",
    "CostParams",
    "Dataset",
    "DegenerateShardError",
    "InnerConfig",
    "InnerMethod",
    "InnerResult",
    "LineSearchConfig",
    "LineSearchError",
    "LineSearchResult",
    "LocalApproximation",
    "LossKind",
    "Method",
    "MetricsRecord",
    "Objective",
    "ParseError",
    "PartitionPlan",
    "PartitionScheme",
    "PROPERTY_NAMES",
    "RestrictedObjective",
    "RunConfig",
    "RunResult",
    "SequentialBackend",
    "SparseVector",
    "StagnationError",
    "ThreadedBackend",
    "TrustRegionNewton",
    "UnsupportedFamilyError",
    "VerifyResult",
    "angle_check",
    "armijo_wolfe_search",
    "build_approx",
    "consistency_check",
    "cos_angle",
    "curvature_bound",
    "fadl_faster",
    "linear_rate_bound",
    "loss_derivative",
    "loss_second_derivative",
    "loss_value",
    "make_backend",
    "minimize_inner",
    "parse_libsvm",
    "partition",
    "read_metrics",
    "run",
    "run_fadl",
    "run_properties",
    "run_property",
    "run_sqm",
    "search_along_ray",
    "solve_reference",
    "spectral_norm_estimate",
    "steihaug_cg",
    "sufficient_inner_budget",
    "svrg_gradient_sample",
    "synth_classification",
    "total_cost",
    "warm_start_average",
    "write_libsvm",
    "write_metrics",
    "write_metrics_table",
]
