"""Minimax concave penalty, its scalar proximal map, and group thresholding.

The scalar penalty is linear-minus-quadratic up to gamma*lambda and constant
after; the group update firm-thresholds whole blocks of a vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty levels and augmentation weights for one direction problem.

    ``lambda1`` penalizes individual entries, ``lambda2`` whole groups
    (scaled by sqrt(group size) at the call site). Concavity parameters
    default to 3 and the augmentation weights to 1.
    """

    lambda1: float = 0.0
    lambda2: float = 0.0
    gamma: float = 3.0
    gamma2: float = 3.0
    rho1: float = 1.0
    rho2: float = 1.0

    def __post_init__(self) -> None:
        if self.gamma <= 1 or self.gamma2 <= 1:
            raise ConfigurationError("concavity parameters must exceed 1")
        if self.rho1 <= 0 or self.rho2 <= 0:
            raise ConfigurationError("augmentation weights must be positive")
        if self.gamma2 * self.rho2 <= 1:
            raise ConfigurationError("gamma2 * rho2 must exceed 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigurationError("penalty levels must be nonnegative")


def mcp(x, lam: float, gamma: float):
    """MCP value: lam*|x| - x^2/(2*gamma) for |x| <= gamma*lam, else gamma*lam^2/2.

    Accepts scalars or arrays; returns the matching shape.
    """
    ax = np.abs(x)
    out = np.where(ax <= gamma * lam, lam * ax - ax * ax / (2.0 * gamma), 0.5 * gamma * lam * lam)
    if np.isscalar(x):
        return float(out)
    return out


def soft_threshold(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def mcp_prox(z: float, lam: float, gamma: float, scale: float) -> float:
    """Minimizer of scale/2 * (z - q)^2 + mcp(q, lam, gamma).

    Unique when scale*gamma > 1: firm thresholding below gamma*lam,
    identity above.
    """
    if scale * gamma <= 1:
        raise ConfigurationError(
            f"mcp_prox needs scale*gamma > 1 for a unique minimizer, got {scale * gamma}"
        )
    if abs(z) > gamma * lam:
        return float(z)
    return soft_threshold(z, lam / scale) / (1.0 - 1.0 / (scale * gamma))


def group_soft_threshold(u: np.ndarray, threshold: float) -> np.ndarray:
    """(1 - threshold/||u||)_+ * u, the zero vector when ||u|| <= threshold."""
    u = np.asarray(u, dtype=float)
    norm = float(np.linalg.norm(u))
    if norm <= threshold or norm == 0.0:
        return np.zeros_like(u)
    return (1.0 - threshold / norm) * u


def group_mcp_update(u: np.ndarray, d: int, cfg: PenaltyConfig) -> np.ndarray:
    """Block update for the group MCP: firm-threshold the block when its norm
    is at most sqrt(d)*gamma2*lambda2, pass it through otherwise.

    lambda2 = 0 passes through exactly, so the no-group-penalty baseline is
    recovered without the firm-threshold rescale.
    """
    u = np.asarray(u, dtype=float)
    lam2 = cfg.lambda2
    if lam2 == 0.0:
        return u.copy()
    root_d = np.sqrt(d)
    if np.linalg.norm(u) <= root_d * cfg.gamma2 * lam2:
        shrunk = group_soft_threshold(u, root_d * lam2 / cfg.rho2)
        return shrunk / (1.0 - 1.0 / (cfg.gamma2 * cfg.rho2))
    return u.copy()
