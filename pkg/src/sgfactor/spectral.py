"""Loading-space estimation from lagged sample autocovariances.

The accumulated product of lagged autocovariances is symmetric positive
semidefinite; its leading eigenvectors span the estimated loading space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel import TimeSeriesPanel


@dataclass(frozen=True)
class SpectralBasis:
    """Orthonormal basis of the estimated loading space.

    ``vectors`` is p x r with orthonormal columns ordered by descending
    ``eigenvalues``; ``h0`` records the lag count used to build them.
    """

    vectors: np.ndarray
    eigenvalues: np.ndarray
    h0: int

    @property
    def p(self) -> int:
        return self.vectors.shape[0]

    @property
    def r(self) -> int:
        return self.vectors.shape[1]


def sample_autocov(panel: TimeSeriesPanel, h: int) -> np.ndarray:
    """Lag-h product-moment matrix (n-h)^-1 sum_t x_t x_{t+h}^T.

    No mean centering: demean via transforms if desired.
    """
    n = panel.n
    if not 1 <= h <= n - 1:
        raise ValueError(f"lag h={h} outside 1..{n - 1}")
    x = panel.values
    return x[: n - h].T @ x[h:] / (n - h)


def build_m_hat(panel: TimeSeriesPanel, h0: int = 1) -> np.ndarray:
    """Sum over h = 1..h0 of the lag-h autocovariance times its transpose,
    symmetrized by averaging with its own transpose."""
    n = panel.n
    if not 1 <= h0 <= n - 1:
        raise ValueError(f"h0={h0} outside 1..{n - 1}")
    m = np.zeros((panel.p, panel.p))
    for h in range(1, h0 + 1):
        s = sample_autocov(panel, h)
        m += s @ s.T
    return (m + m.T) / 2.0


def leading_eigvecs(M: np.ndarray, r: int, h0: int = 0) -> SpectralBasis:
    """The r leading eigenpairs of a symmetric matrix, deterministically ordered.

    Each eigenvector's sign is fixed so its largest-magnitude entry is
    positive; exact eigenvalue ties are broken by lexicographic comparison
    of the sign-fixed vectors.
    """
    M = np.asarray(M, dtype=float)
    p = M.shape[0]
    if M.shape != (p, p):
        raise ValueError(f"M must be square, got {M.shape}")
    if r > p:
        raise ValueError(f"r={r} exceeds dimension p={p}")
    asym = np.max(np.abs(M - M.T)) if p else 0.0
    if asym > 1e-8:
        raise ValueError(f"M is not symmetric within 1e-8 (max |M - M^T| = {asym:.3e})")
    evals, evecs = np.linalg.eigh((M + M.T) / 2.0)
    evals = evals[::-1][:r].copy()
    evecs = evecs[:, ::-1][:, :r].copy()
    for i in range(r):
        v = evecs[:, i]
        if v[int(np.argmax(np.abs(v)))] < 0:
            evecs[:, i] = -v
    order = sorted(range(r), key=lambda i: (-evals[i], tuple(evecs[:, i])))
    return SpectralBasis(vectors=evecs[:, order], eigenvalues=evals[list(order)], h0=h0)


def spectral_basis(panel: TimeSeriesPanel, r: int, h0: int = 1) -> SpectralBasis:
    """Convenience chain: build the lag-product matrix, then extract the basis."""
    return leading_eigvecs(build_m_hat(panel, h0), r, h0=h0)
