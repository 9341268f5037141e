"""Subspace distance, sparsity-identification confusion counts, forecast errors."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np
import scipy.linalg

from .errors import NumericalRankError


@dataclass(frozen=True)
class ColumnConfusion:
    fn: int
    fp: int
    tp: int
    tn: int
    f1: float


@dataclass(frozen=True)
class ConfusionSummary:
    """Entrywise zero/nonzero classification of an estimated loading matrix.

    Columns are compared positionally (true columns ordered by increasing
    nonzero count); ``best_permutation_f1`` is a diagnostic guarding against
    column-order swaps.
    """

    per_column: tuple[ColumnConfusion, ...]
    total_fn: int
    total_fp: int
    total_tp: int
    total_tn: int
    best_permutation_f1: float


def _orthonormalize(U: np.ndarray, label: str) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.ndim != 2:
        raise ValueError(f"{label} must be a matrix")
    r = U.shape[1]
    q, rr, _ = scipy.linalg.qr(U, mode="economic", pivoting=True)
    diag = np.abs(np.diag(rr))
    scale = diag[0] if diag.size else 0.0
    if scale == 0.0 or np.any(diag < 1e-12 * scale):
        raise NumericalRankError(f"{label} is numerically rank deficient")
    return q[:, :r]


def subspace_distance(U1: np.ndarray, U2: np.ndarray) -> float:
    """Distance between the column spans: sqrt(1 - tr(H1 H1^T H2 H2^T)/r).

    0 for equal spans, 1 for orthogonal spans; invariant to any invertible
    recombination of either argument's columns.
    """
    if U1.shape != U2.shape:
        raise ValueError(f"shape mismatch: {U1.shape} vs {U2.shape}")
    r = U1.shape[1]
    h1 = _orthonormalize(U1, "U1")
    h2 = _orthonormalize(U2, "U2")
    overlap = float(np.sum((h1.T @ h2) ** 2))
    return float(np.sqrt(max(0.0, 1.0 - overlap / r)))


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2.0 * tp / denom


def sparsity_confusion(Q_hat: np.ndarray, Q_true: np.ndarray) -> ConfusionSummary:
    """Columnwise FN / FP / F1 of the estimated zero pattern against the truth."""
    Q_hat = np.asarray(Q_hat)
    Q_true = np.asarray(Q_true)
    if Q_hat.shape != Q_true.shape:
        raise ValueError(f"shape mismatch: {Q_hat.shape} vs {Q_true.shape}")
    est = Q_hat != 0
    tru = Q_true != 0
    r = Q_hat.shape[1]
    cols = []
    for i in range(r):
        tp = int(np.sum(est[:, i] & tru[:, i]))
        fn = int(np.sum(~est[:, i] & tru[:, i]))
        fp = int(np.sum(est[:, i] & ~tru[:, i]))
        tn = int(np.sum(~est[:, i] & ~tru[:, i]))
        cols.append(ColumnConfusion(fn=fn, fp=fp, tp=tp, tn=tn, f1=_f1(tp, fp, fn)))
    positional = float(np.mean([c.f1 for c in cols])) if cols else 1.0
    best = positional
    if 1 < r <= 7:
        for perm in permutations(range(r)):
            score = float(
                np.mean(
                    [
                        _f1(
                            int(np.sum(est[:, i] & tru[:, j])),
                            int(np.sum(est[:, i] & ~tru[:, j])),
                            int(np.sum(~est[:, i] & tru[:, j])),
                        )
                        for i, j in enumerate(perm)
                    ]
                )
            )
            best = max(best, score)
    return ConfusionSummary(
        per_column=tuple(cols),
        total_fn=sum(c.fn for c in cols),
        total_fp=sum(c.fp for c in cols),
        total_tp=sum(c.tp for c in cols),
        total_tn=sum(c.tn for c in cols),
        best_permutation_f1=best,
    )


@dataclass(frozen=True)
class ForecastErrors:
    rmse: np.ndarray
    mae: np.ndarray
    rmse_average: float
    rmse_median: float
    mae_average: float
    mae_median: float


def forecast_errors(pred: np.ndarray, actual: np.ndarray) -> ForecastErrors:
    """Per-series RMSE and MAE plus the cross-series average and median."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {actual.shape}")
    err = pred - actual
    rmse = np.sqrt(np.mean(err**2, axis=0))
    mae = np.mean(np.abs(err), axis=0)
    return ForecastErrors(
        rmse=rmse,
        mae=mae,
        rmse_average=float(np.mean(rmse)),
        rmse_median=float(np.median(rmse)),
        mae_average=float(np.mean(mae)),
        mae_median=float(np.median(mae)),
    )
