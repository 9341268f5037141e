"""Sequential estimation of the doubly-sparse loading matrix.

Directions are extracted one at a time: the first against the identity, each
later one against the projector onto the orthocomplement of the directions
already found. Tuning is a two-step BIC search over the penalty levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .admm import DirectionProblem, SolveOptions, SolverReport, solve_direction
from .errors import DomainError, EstimationError, NumericalRankError, TuningError
from .panel import GroupStructure, TimeSeriesPanel
from .penalty import PenaltyConfig
from .spectral import SpectralBasis


@dataclass(frozen=True)
class LoadingEstimate:
    """Estimated loading matrix with its orthonormal basis and supports.

    ``S_tilde`` holds the sequentially orthogonalized unit directions; the
    first column equals the first column of ``Q_hat`` and column i is the
    projected, unit-norm version of column i of ``Q_hat``.
    """

    Q_hat: np.ndarray
    S_tilde: np.ndarray
    supports: tuple[tuple[int, ...], ...]
    group_supports: tuple[tuple[int, ...], ...]
    lambdas: tuple[float, float]
    reports: tuple[SolverReport, ...]

    @property
    def p(self) -> int:
        return self.Q_hat.shape[0]

    @property
    def r(self) -> int:
        return self.Q_hat.shape[1]

    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.Q_hat))


@dataclass(frozen=True)
class FactorSeries:
    """Extracted factor scores, one row per time point."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def r(self) -> int:
        return self.values.shape[1]


def sparse_rotation(vectors: np.ndarray, itmax: int = 500, tol: float = 1e-10) -> np.ndarray:
    """Varimax-rotate an orthonormal basis and order columns from sparsest
    to densest (ascending L1 norm).

    The direction problems are nonconvex; starting each column's solve from
    the matching near-sparse rotated direction keeps the sequential search
    in the basin with the right sparsity rank. Initializing from the raw
    eigenvectors instead routinely swaps columns of different sparsity.
    """
    v = np.asarray(vectors, dtype=float)
    p, r = v.shape
    if r == 1:
        rotated = v.copy()
    else:
        rot = np.eye(r)
        previous = 0.0
        for _ in range(itmax):
            loadings = v @ rot
            u, s, wt = np.linalg.svd(
                v.T @ (loadings**3 - loadings @ np.diag(np.sum(loadings**2, axis=0)) / p)
            )
            rot = u @ wt
            criterion = float(np.sum(s))
            if previous != 0.0 and criterion < previous * (1.0 + tol):
                break
            previous = criterion
        rotated = v @ rot
    for i in range(r):
        col = rotated[:, i]
        if col[int(np.argmax(np.abs(col)))] < 0:
            rotated[:, i] = -col
    order = np.argsort(np.sum(np.abs(rotated), axis=0), kind="stable")
    return rotated[:, order]


def estimate_loadings(
    basis: SpectralBasis,
    groups: GroupStructure,
    cfg: PenaltyConfig,
    opts: SolveOptions = SolveOptions(),
    warm_start: LoadingEstimate | None = None,
) -> LoadingEstimate:
    """Solve the r direction problems sequentially and assemble the estimate.

    The group penalty level for a block of size d is sqrt(d) * lambda2,
    applied inside the blockwise update. ``warm_start`` reuses a previous
    estimate's columns as initial points (grid-path speedup).
    """
    if basis.r != groups.r:
        raise ValueError(f"basis has r={basis.r} but groups describe r={groups.r}")
    p, r = basis.p, basis.r
    g = basis.vectors @ basis.vectors.T
    eye = np.eye(p)
    init_basis = sparse_rotation(basis.vectors)

    q_cols: list[np.ndarray] = []
    s_cols: list[np.ndarray] = []
    reports: list[SolverReport] = []
    for i in range(r):
        if i == 0:
            b_mat = eye
        else:
            s_so_far = np.column_stack(s_cols)
            b_mat = eye - s_so_far @ s_so_far.T
        q0 = None
        if warm_start is not None:
            proj = b_mat @ np.asarray(warm_start.Q_hat[:, i], dtype=float)
            norm = float(np.linalg.norm(proj))
            if norm > 1e-6:
                q0 = proj / norm
        if q0 is None:
            proj = b_mat @ init_basis[:, i]
            norm = float(np.linalg.norm(proj))
            if norm <= 1e-12:
                raise EstimationError(
                    f"column {i + 1}: initial direction vanishes under projection"
                )
            q0 = proj / norm
        prob = DirectionProblem(G=g, B=b_mat, group_sizes=groups.sizes(i), cfg=cfg)
        try:
            q_hat, s_tilde, report = solve_direction(prob, q0, opts)
        except Exception as exc:  # pragma: no cover - defensive wrap
            raise EstimationError(f"column {i + 1}: direction solve failed") from exc
        q_cols.append(q_hat)
        s_cols.append(s_tilde)
        reports.append(report)

    Q_hat = np.column_stack(q_cols)
    S_tilde = np.column_stack(s_cols)
    supports = tuple(
        tuple(int(j) for j in np.flatnonzero(Q_hat[:, i])) for i in range(r)
    )
    group_supports = []
    for i in range(r):
        nz = []
        start = 0
        for k, d in enumerate(groups.sizes(i)):
            if np.any(Q_hat[start : start + d, i] != 0):
                nz.append(k)
            start += d
        group_supports.append(tuple(nz))
    return LoadingEstimate(
        Q_hat=Q_hat,
        S_tilde=S_tilde,
        supports=supports,
        group_supports=tuple(group_supports),
        lambdas=(cfg.lambda1, cfg.lambda2),
        reports=tuple(reports),
    )


def extract_factors(panel: TimeSeriesPanel, Q_hat: np.ndarray) -> FactorSeries:
    """Least-squares factor scores (Q^T Q)^-1 Q^T x_t per time point."""
    Q_hat = np.asarray(Q_hat, dtype=float)
    if Q_hat.ndim != 2 or Q_hat.shape[0] != panel.p:
        raise ValueError(f"loading matrix shape {Q_hat.shape} does not match p={panel.p}")
    sv = np.linalg.svd(Q_hat, compute_uv=False)
    if sv[-1] == 0.0 or sv[0] / sv[-1] >= 1e8:
        raise NumericalRankError("loading matrix is numerically rank deficient")
    z, *_ = np.linalg.lstsq(Q_hat, panel.values.T, rcond=None)
    return FactorSeries(values=z.T)


def compute_bic(panel: TimeSeriesPanel, Q_hat: np.ndarray) -> float:
    """log of the mean squared reconstruction error plus a complexity charge
    log(np)/(np) per nonzero loading entry."""
    factors = extract_factors(panel, Q_hat)
    fitted = factors.values @ Q_hat.T
    n, p = panel.values.shape
    mse = float(np.sum((panel.values - fitted) ** 2)) / (n * p)
    scale = float(np.mean(panel.values**2))
    if mse == 0.0 or mse <= 1e-24 * scale:
        raise DomainError("zero reconstruction residual; BIC log term is degenerate")
    return math.log(mse) + math.log(n * p) / (n * p) * int(np.count_nonzero(Q_hat))


@dataclass(frozen=True)
class TuningResult:
    lambda1: float
    lambda2: float
    estimate: LoadingEstimate
    path1: tuple[tuple[float, float], ...]
    path2: tuple[tuple[float, float], ...]


def default_lambda_grid(
    basis: SpectralBasis, cfg: PenaltyConfig, count: int = 20, floor: float = 1e-3
) -> np.ndarray:
    """Log-spaced grid up to the smallest level that zeroes every coordinate
    of the first direction in one prox pass from the spectral start."""
    lam_max = (1.0 + cfg.rho1 + cfg.rho2) * float(np.max(np.abs(basis.vectors[:, 0])))
    return np.geomspace(floor * lam_max, lam_max, count)


def _bic_or_inf(panel: TimeSeriesPanel, est: LoadingEstimate, notes: list[str]) -> float:
    try:
        return compute_bic(panel, est.Q_hat)
    except DomainError as exc:
        notes.append(f"lambda=({est.lambdas[0]:g},{est.lambdas[1]:g}): {exc}")
        return math.inf
    except NumericalRankError as exc:
        notes.append(f"lambda=({est.lambdas[0]:g},{est.lambdas[1]:g}): {exc}")
        return math.inf


def tune_lambdas(
    basis: SpectralBasis,
    panel: TimeSeriesPanel,
    groups: GroupStructure,
    grid1,
    grid2,
    cfg: PenaltyConfig = PenaltyConfig(),
    opts: SolveOptions = SolveOptions(),
) -> TuningResult:
    """Two-step BIC tuning: pick lambda1 with lambda2 = 0, then lambda2 with
    lambda1 held at its selected value; ties go to the larger (sparser) level.

    The grid is walked in ascending order with warm starts; the returned
    estimate is refit from the spectral initialization at the selected pair.
    """
    grid1 = [float(g) for g in grid1]
    grid2 = [float(g) for g in grid2]
    if not grid1 or not grid2:
        raise ValueError("tuning grids must be nonempty")
    if sorted(grid1) != grid1 or sorted(grid2) != grid2:
        raise ValueError("tuning grids must be sorted ascending")

    notes: list[str] = []

    def step(grid, fixed1: float | None) -> tuple[float, tuple[tuple[float, float], ...]]:
        best_lam, best_bic = None, math.inf
        path = []
        prev: LoadingEstimate | None = None
        failures: list[str] = []
        for idx, lam in enumerate(grid):
            trial = replace(
                cfg,
                lambda1=lam if fixed1 is None else fixed1,
                lambda2=0.0 if fixed1 is None else lam,
            )
            try:
                est = estimate_loadings(basis, groups, trial, opts, warm_start=prev)
            except EstimationError as exc:
                failures.append(f"lambda={lam:g}: {exc}")
                path.append((lam, math.nan))
                continue
            prev = est
            bic = _bic_or_inf(panel, est, notes)
            path.append((lam, bic))
            if best_lam is None or bic < best_bic or (bic == best_bic and lam > best_lam):
                best_lam, best_bic = lam, bic
            if all(r.degenerate for r in est.reports):
                # every column fell back to the unpenalized direction; larger
                # levels only repeat that, so prune the tail of the grid
                path.extend((rest, math.inf) for rest in grid[idx + 1 :])
                break
        if best_lam is None:
            raise TuningError(
                "every tuning candidate failed: " + "; ".join(failures)
            )
        return best_lam, tuple(path)

    lam1, path1 = step(grid1, fixed1=None)
    lam2, path2 = step(grid2, fixed1=lam1)
    final_cfg = replace(cfg, lambda1=lam1, lambda2=lam2)
    estimate = estimate_loadings(basis, groups, final_cfg, opts)
    return TuningResult(lambda1=lam1, lambda2=lam2, estimate=estimate, path1=path1, path2=path2)
