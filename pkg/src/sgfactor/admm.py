"""ADMM solver for one sparse-group direction problem.

Minimizes 0.5*||G - B q q^T B||_F^2 plus entrywise and groupwise MCP terms
subject to q^T B B q = 1, by splitting into s = Bq (unit sphere), delta = q
(group penalty) and dual ascent on both constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit

from .errors import ConfigurationError, DegenerateDirectionError
from .penalty import PenaltyConfig, group_mcp_update, mcp
from .spectral import leading_eigvecs


@dataclass
class DirectionProblem:
    """One direction subproblem: target G, projection B, contiguous groups.

    ``B`` is the identity for the first direction and the projector onto the
    orthocomplement of the previously extracted directions afterwards.
    """

    G: np.ndarray
    B: np.ndarray
    group_sizes: tuple[int, ...]
    cfg: PenaltyConfig

    def __post_init__(self) -> None:
        self.G = np.asarray(self.G, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        p = self.G.shape[0]
        if self.G.shape != (p, p) or self.B.shape != (p, p):
            raise ValueError("G and B must be square matrices of equal size")
        self.group_sizes = tuple(int(d) for d in self.group_sizes)
        if sum(self.group_sizes) != p:
            raise ValueError(
                f"group sizes sum to {sum(self.group_sizes)}, expected p={p}"
            )
        if any(d < 1 for d in self.group_sizes):
            raise ValueError("group sizes must be positive")

    @property
    def p(self) -> int:
        return self.G.shape[0]

    @cached_property
    def quadratic(self) -> np.ndarray:
        """rho1*B + rho2*I, the quadratic form of the q update."""
        return self.cfg.rho1 * self.B + self.cfg.rho2 * np.eye(self.p)

    @cached_property
    def chol_r(self) -> np.ndarray:
        return factorize_quadratic(self.B, self.cfg.rho1, self.cfg.rho2)

    @cached_property
    def group_starts(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.group_sizes)))[:-1]


@dataclass
class AdmmState:
    """Iterates of one solve; ``primal_residuals`` records (||s-Bq||, ||delta-q||)."""

    s: np.ndarray
    q: np.ndarray
    delta: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    iter: int = 0
    primal_residuals: list[tuple[float, float]] = field(default_factory=list)


@dataclass(frozen=True)
class SolverReport:
    converged: bool
    iterations: int
    final_residual: float
    objective: float
    degenerate: bool = False
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class SolveOptions:
    max_iter: int = 5000
    eps: float = 1e-5
    cd_tol: float = 1e-7
    cd_max_sweeps: int = 10_000
    zero_tol: float = 1e-8
    restart_seed: int = 0


def update_s(state: AdmmState, prob: DirectionProblem) -> np.ndarray:
    """Unit-sphere update: normalize G B q + rho1 B q - v1."""
    w = prob.B @ state.q
    num = prob.G @ w + prob.cfg.rho1 * w - state.v1
    norm = float(np.linalg.norm(num))
    if not norm > 1e-150:
        raise DegenerateDirectionError(
            "zero numerator in direction update; all-zero or cancelled iterate"
        )
    return num / norm


def factorize_quadratic(B: np.ndarray, rho1: float, rho2: float) -> np.ndarray:
    """Upper-triangular R with R^T R = rho1*B + rho2*I (positive diagonal)."""
    if rho1 <= 0 or rho2 <= 0:
        raise ConfigurationError("augmentation weights must be positive")
    p = B.shape[0]
    a = rho1 * np.asarray(B, dtype=float) + rho2 * np.eye(p)
    return np.linalg.cholesky(a).T


@njit(cache=True)
def _cd_sweeps(A, b, q, lam, gamma, tol, max_sweeps):  # pragma: no cover - jit
    p = q.shape[0]
    r = A @ q
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = 0.0
        for j in range(p):
            ajj = A[j, j]
            z = (b[j] - (r[j] - ajj * q[j])) / ajj
            if lam > 0.0 and abs(z) <= gamma * lam:
                t = lam / ajj
                az = abs(z)
                if az <= t:
                    qn = 0.0
                else:
                    qn = (az - t) / (1.0 - 1.0 / (ajj * gamma))
                    if z < 0.0:
                        qn = -qn
            else:
                qn = z
            d = qn - q[j]
            if d != 0.0:
                q[j] = qn
                for k in range(p):
                    r[k] += A[k, j] * d
                if abs(d) > max_delta:
                    max_delta = abs(d)
        if max_delta <= tol:
            return sweeps, True
    return max_sweeps, False


def _cd_minimize(
    A: np.ndarray,
    b: np.ndarray,
    cfg: PenaltyConfig,
    q0: np.ndarray | None = None,
    tol: float = 1e-7,
    max_sweeps: int = 10_000,
) -> tuple[np.ndarray, bool]:
    """Cyclic coordinate descent on 0.5 q^T A q - b^T q + sum_j mcp(q_j)."""
    if float(np.min(np.diag(A))) * cfg.gamma <= 1.0:
        raise ConfigurationError(
            "coordinate scale times gamma must exceed 1 for a unique prox"
        )
    q = np.zeros_like(b) if q0 is None else np.array(q0, dtype=float)
    sweeps, ok = _cd_sweeps(
        A, np.asarray(b, dtype=float), q, float(cfg.lambda1), float(cfg.gamma), tol, max_sweeps
    )
    return q, ok


@njit(cache=True)
def _admm_engine(
    G, B, A, starts, sizes, lam1, gamma, lam2, gamma2, rho1, rho2,
    q, delta, v1, v2, eps, max_iter, cd_tol, cd_max_sweeps, res1, res2,
):  # pragma: no cover - jit
    """The update cycle s -> q -> delta -> v1 -> v2; mutates the iterates.

    Returns (iterations, converged, degenerate, cd_failed, s).
    Update formulas match update_s / update_q / update_delta / update_duals.
    """
    p = q.shape[0]
    s = np.zeros(p)
    converged = False
    degenerate = False
    cd_failed = False
    it = 0
    bq = B @ q
    while it < max_iter:
        num = G @ bq + rho1 * bq - v1
        norm = np.sqrt(num @ num)
        if not norm > 1e-150:
            degenerate = True
            break
        s = num / norm
        b = B @ (G @ s + rho1 * s + v1) + rho2 * delta + v2
        _, cd_ok = _cd_sweeps(A, b, q, lam1, gamma, cd_tol, cd_max_sweeps)
        if not cd_ok:
            cd_failed = True
        if lam2 == 0.0:
            for j in range(p):
                delta[j] = q[j] - v2[j] / rho2
        else:
            denom = 1.0 - 1.0 / (gamma2 * rho2)
            for g in range(starts.shape[0]):
                lo = starts[g]
                hi = lo + sizes[g]
                nrm2 = 0.0
                for j in range(lo, hi):
                    delta[j] = q[j] - v2[j] / rho2
                    nrm2 += delta[j] * delta[j]
                nrm = np.sqrt(nrm2)
                root_d = np.sqrt(sizes[g])
                if nrm <= root_d * gamma2 * lam2:
                    threshold = root_d * lam2 / rho2
                    factor = (1.0 - threshold / nrm) / denom if nrm > threshold else 0.0
                    for j in range(lo, hi):
                        delta[j] *= factor
        bq = B @ q
        r1sq = 0.0
        r2sq = 0.0
        for j in range(p):
            v1[j] += rho1 * (s[j] - bq[j])
            v2[j] += rho2 * (delta[j] - q[j])
            d1 = s[j] - bq[j]
            d2 = delta[j] - q[j]
            r1sq += d1 * d1
            r2sq += d2 * d2
        res1[it] = np.sqrt(r1sq)
        res2[it] = np.sqrt(r2sq)
        it += 1
        if res1[it - 1] <= eps and res2[it - 1] <= eps:
            converged = True
            break
    return it, converged, degenerate, cd_failed, s


def update_q(
    R: np.ndarray,
    b: np.ndarray,
    cfg: PenaltyConfig,
    q0: np.ndarray | None = None,
    gram: np.ndarray | None = None,
) -> np.ndarray:
    """Penalized least-squares update: minimize
    0.5*||(R^T)^-1 b - R q||^2 + sum_j mcp(|q_j|, lambda1)
    by cyclic coordinate descent with the scalar MCP prox per coordinate.
    """
    A = R.T @ R if gram is None else gram
    q, _ = _cd_minimize(A, b, cfg, q0=q0)
    return q


def update_delta(
    q_new: np.ndarray,
    v2: np.ndarray,
    group_sizes: tuple[int, ...],
    cfg: PenaltyConfig,
) -> np.ndarray:
    """Blockwise group-MCP update applied to u = q - v2/rho2.

    Vectorized over blocks; agrees with applying
    :func:`sgfactor.penalty.group_mcp_update` block by block.
    """
    u = q_new - v2 / cfg.rho2
    lam2 = cfg.lambda2
    if lam2 == 0.0:
        return u
    sizes = np.asarray(group_sizes)
    starts = np.concatenate(([0], np.cumsum(sizes)))[:-1]
    norms = np.sqrt(np.add.reduceat(u * u, starts))
    root_d = np.sqrt(sizes)
    thresholds = root_d * lam2 / cfg.rho2
    boundary = root_d * cfg.gamma2 * lam2
    denom = 1.0 - 1.0 / (cfg.gamma2 * cfg.rho2)
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = np.where(norms > thresholds, (1.0 - thresholds / norms) / denom, 0.0)
    factors = np.where(norms <= boundary, shrink, 1.0)
    return u * np.repeat(factors, sizes)


def update_duals(state: AdmmState, prob: DirectionProblem) -> tuple[np.ndarray, np.ndarray]:
    """Dual ascent on both split constraints, using the fresh iterates."""
    v1 = state.v1 + prob.cfg.rho1 * (state.s - prob.B @ state.q)
    v2 = state.v2 + prob.cfg.rho2 * (state.delta - state.q)
    return v1, v2


def direction_objective(prob: DirectionProblem, q: np.ndarray) -> float:
    """Full objective of the direction problem at q."""
    w = prob.B @ q
    fit = 0.5 * float(np.sum((prob.G - np.outer(w, w)) ** 2))
    indiv = float(np.sum(mcp(q, prob.cfg.lambda1, prob.cfg.gamma)))
    group = 0.0
    start = 0
    for d in prob.group_sizes:
        norm = float(np.linalg.norm(q[start : start + d]))
        group += float(mcp(norm, np.sqrt(d) * prob.cfg.lambda2, prob.cfg.gamma2))
        start += d
    return fit + indiv + group


def _fallback_direction(prob: DirectionProblem) -> np.ndarray:
    """Unpenalized direction: leading eigenvector of B G B."""
    m = prob.B @ prob.G @ prob.B
    basis = leading_eigvecs((m + m.T) / 2.0, 1)
    v = basis.vectors[:, 0]
    w = prob.B @ v
    return w / np.linalg.norm(w)


def solve_direction(
    prob: DirectionProblem,
    q0: np.ndarray,
    opts: SolveOptions = SolveOptions(),
) -> tuple[np.ndarray, np.ndarray, SolverReport]:
    """Run the update cycle s -> q -> delta -> v1 -> v2 to convergence.

    Stops when both primal residuals ||s - Bq|| and ||delta - q|| fall to
    ``opts.eps``. Returns the estimate with entries below ``opts.zero_tol``
    truncated to exact zero and rescaled so ||B q|| = 1, the unit direction
    s = B q, and a report. A degenerate or fully zeroed path falls back to
    the unpenalized direction with a warning.
    """
    q0 = np.asarray(q0, dtype=float)
    p = prob.p
    if q0.shape != (p,):
        raise ValueError(f"q0 must have shape ({p},)")
    if not np.linalg.norm(prob.B @ q0) > 0:
        raise ValueError("initial point has zero projection ||B q0||")

    cfg = prob.cfg
    gram = prob.quadratic
    if float(np.min(np.diag(gram))) * cfg.gamma <= 1.0:
        raise ConfigurationError(
            "coordinate scale times gamma must exceed 1 for a unique prox"
        )
    warnings: list[str] = []
    starts = np.asarray(prob.group_starts, dtype=np.int64)
    sizes = np.asarray(prob.group_sizes, dtype=np.int64)
    res1 = np.empty(opts.max_iter)
    res2 = np.empty(opts.max_iter)
    converged = False
    degenerate = False
    start_q = q0
    state = AdmmState(s=np.zeros(p), q=q0.copy(), delta=q0.copy(),
                      v1=np.zeros(p), v2=np.zeros(p))

    for attempt in range(2):
        q = np.array(start_q, dtype=float)
        delta = q.copy()
        v1 = np.zeros(p)
        v2 = np.zeros(p)
        iters, converged, degen, cd_failed, s = _admm_engine(
            prob.G, prob.B, gram, starts, sizes,
            float(cfg.lambda1), float(cfg.gamma), float(cfg.lambda2),
            float(cfg.gamma2), float(cfg.rho1), float(cfg.rho2),
            q, delta, v1, v2, float(opts.eps), int(opts.max_iter),
            float(opts.cd_tol), int(opts.cd_max_sweeps), res1, res2,
        )
        state = AdmmState(
            s=s, q=q, delta=delta, v1=v1, v2=v2, iter=iters,
            primal_residuals=[(float(a), float(b)) for a, b in zip(res1[:iters], res2[:iters])],
        )
        if cd_failed:
            warnings.append(
                "coordinate descent hit its sweep cap without meeting tolerance"
            )
        if not degen:
            break
        if attempt == 0:
            rng = np.random.default_rng(opts.restart_seed)
            fresh = prob.B @ rng.standard_normal(p)
            norm = float(np.linalg.norm(fresh))
            if norm > 0:
                start_q = fresh / norm
                warnings.append("degenerate direction update; restarted from random point")
                continue
        degenerate = True
        break

    r1, r2 = state.primal_residuals[-1] if state.primal_residuals else (np.inf, np.inf)

    q_hat = state.q.copy()
    q_hat[np.abs(q_hat) < opts.zero_tol] = 0.0
    norm = float(np.linalg.norm(prob.B @ q_hat))
    if degenerate or norm == 0.0:
        q_hat = _fallback_direction(prob)
        warnings.append(
            "all-zero or degenerate path; returning unpenalized fallback direction"
        )
        s_tilde = prob.B @ q_hat
        report = SolverReport(
            converged=False,
            iterations=state.iter,
            final_residual=max(r1, r2) if np.isfinite(r1) else np.inf,
            objective=direction_objective(prob, q_hat),
            degenerate=True,
            warnings=tuple(warnings),
        )
        return q_hat, s_tilde, report

    q_hat /= norm
    s_tilde = prob.B @ q_hat
    report = SolverReport(
        converged=converged,
        iterations=state.iter,
        final_residual=max(r1, r2),
        objective=direction_objective(prob, q_hat),
        degenerate=False,
        warnings=tuple(warnings),
    )
    return q_hat, s_tilde, report
