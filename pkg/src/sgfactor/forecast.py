"""Rolling one-step-ahead panel prediction through a VAR(1) on the factors."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .admm import SolveOptions
from .errors import NumericalRankError
from .estimator import (
    FactorSeries,
    default_lambda_grid,
    estimate_loadings,
    extract_factors,
    tune_lambdas,
)
from .metrics import ForecastErrors, forecast_errors
from .panel import GroupStructure, TimeSeriesPanel, adjust_outliers
from .penalty import PenaltyConfig
from .spectral import spectral_basis


@dataclass(frozen=True)
class Var1Model:
    coef: np.ndarray
    intercept: np.ndarray
    residual_cov: np.ndarray


def fit_var1(factors: FactorSeries) -> Var1Model:
    """Least-squares regression of z_t on (1, z_{t-1})."""
    z = factors.values
    n, r = z.shape
    if n < r + 2:
        raise ValueError(f"VAR(1) needs at least r + 2 = {r + 2} observations, got {n}")
    design = np.column_stack([np.ones(n - 1), z[:-1]])
    beta, _, rank, _ = np.linalg.lstsq(design, z[1:], rcond=None)
    if rank < r + 1:
        raise NumericalRankError("degenerate VAR regressors (rank-deficient design)")
    intercept = beta[0]
    coef = beta[1:].T
    resid = z[1:] - design @ beta
    dof = max(1, (n - 1) - (r + 1))
    residual_cov = resid.T @ resid / dof
    residual_cov = (residual_cov + residual_cov.T) / 2.0
    return Var1Model(coef=coef, intercept=intercept, residual_cov=residual_cov)


def predict_var1(model: Var1Model, z_last: np.ndarray) -> np.ndarray:
    return model.intercept + model.coef @ z_last


@dataclass(frozen=True)
class ForecastResult:
    predictions: np.ndarray
    errors: ForecastErrors
    method: str
    lambda1: float
    lambda2: float


def _subpanel(panel: TimeSeriesPanel, upto: int) -> TimeSeriesPanel:
    return TimeSeriesPanel(values=panel.values[:upto], series_ids=panel.series_ids)


def rolling_forecast(
    panel: TimeSeriesPanel,
    groups: GroupStructure,
    r: int,
    window: int,
    cfg: PenaltyConfig = PenaltyConfig(),
    grid1=None,
    grid2=None,
    method: str = "sparsegroup",
    h0: int = 1,
    opts: SolveOptions = SolveOptions(),
    grid_size: int = 20,
    retune_each_step: bool = False,
    adjust_outliers_for_fit: bool = False,
) -> ForecastResult:
    """One-step-ahead predictions for the last ``window`` time points.

    For each target t', loadings come from a factor model fit on the data
    strictly before t'; the factors follow a VAR(1) refit at every step.
    Penalty levels are tuned by BIC on the first window and frozen afterwards
    unless ``retune_each_step`` is set. With ``adjust_outliers_for_fit`` the
    loading estimation sees outlier-adjusted data while factor extraction and
    error measurement use the data as given.
    """
    if method not in ("eigen", "sparse", "sparsegroup"):
        raise ValueError(f"unknown method {method!r}")
    n = panel.n
    first = n - window
    if window < 1 or first < max(r + 3, h0 + 2):
        raise ValueError(
            f"window {window} leaves {first} observations, too few to fit"
        )

    def fit_view(upto: int) -> TimeSeriesPanel:
        sub = _subpanel(panel, upto)
        return adjust_outliers(sub) if adjust_outliers_for_fit else sub

    lam1 = lam2 = 0.0

    def tuned_lambdas(upto: int) -> tuple[float, float]:
        fit = fit_view(upto)
        basis = spectral_basis(fit, r, h0=h0)
        g1 = list(grid1) if grid1 is not None else list(
            default_lambda_grid(basis, cfg, count=grid_size)
        )
        g2 = list(grid2) if grid2 is not None else g1
        if method == "sparse":
            g2 = [0.0]
        result = tune_lambdas(basis, fit, groups, g1, g2, cfg, opts)
        return result.lambda1, result.lambda2

    if method != "eigen":
        lam1, lam2 = tuned_lambdas(first)

    preds = np.empty((window, panel.p))
    for step, t_prime in enumerate(range(first, n)):
        try:
            fit = fit_view(t_prime)
            basis = spectral_basis(fit, r, h0=h0)
            if method == "eigen":
                q_hat = basis.vectors
            else:
                if retune_each_step and step > 0:
                    lam1, lam2 = tuned_lambdas(t_prime)
                est = estimate_loadings(
                    basis, groups, replace(cfg, lambda1=lam1, lambda2=lam2), opts
                )
                q_hat = est.Q_hat
            factors = extract_factors(_subpanel(panel, t_prime), q_hat)
            var = fit_var1(factors)
            preds[step] = q_hat @ predict_var1(var, factors.values[-1])
        except Exception as exc:
            raise RuntimeError(f"rolling forecast failed at t'={t_prime + 1}") from exc

    actual = panel.values[first:]
    return ForecastResult(
        predictions=preds,
        errors=forecast_errors(preds, actual),
        method=method,
        lambda1=lam1,
        lambda2=lam2,
    )
