"""Sparse-group factor models for high-dimensional time series.

Spectral loading-space estimation from lagged autocovariances, sequential
ADMM estimation of a doubly-sparse loading matrix under MCP penalties, BIC
tuning, Monte-Carlo benchmarking, and rolling VAR(1) forecasting.
"""

__version__ = "0.1.0"

from .admm import (
    AdmmState,
    DirectionProblem,
    SolveOptions,
    SolverReport,
    solve_direction,
)
from .estimator import (
    FactorSeries,
    LoadingEstimate,
    TuningResult,
    compute_bic,
    default_lambda_grid,
    estimate_loadings,
    extract_factors,
    tune_lambdas,
)
from .forecast import ForecastResult, Var1Model, fit_var1, rolling_forecast
from .metrics import (
    ConfusionSummary,
    ForecastErrors,
    forecast_errors,
    sparsity_confusion,
    subspace_distance,
)
from .panel import (
    GroupStructure,
    TimeSeriesPanel,
    TransformCode,
    adjust_outliers,
    apply_transforms,
    load_groups,
    load_panel,
    save_groups,
    save_panel,
    validate_groups,
)
from .penalty import PenaltyConfig, group_mcp_update, group_soft_threshold, mcp, mcp_prox
from .simulation import (
    BenchmarkReport,
    PlantedTruth,
    SimulationConfig,
    gen_loading_example1,
    gen_loading_example2,
    gen_panel,
    run_benchmark,
)
from .spectral import SpectralBasis, build_m_hat, leading_eigvecs, sample_autocov, spectral_basis
