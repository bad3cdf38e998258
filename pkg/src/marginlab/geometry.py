"""Unit-sphere primitives: l2 normalization, cosine similarity, shifted cosine.

Everything here runs in double precision on immutable inputs; the gradient
checks downstream assume no single-precision shortcuts were taken.
"""

import numpy as np

from .errors import DimensionMismatch, ZeroNorm

DEFAULT_EPS = 1e-12


def normalize(v, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Project a vector onto the unit sphere.

    Raises ZeroNorm when the norm falls below ``eps``, which signals a
    degenerate embedding rather than a numerical accident.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {v.shape}")
    n = float(np.linalg.norm(v))
    if n < eps:
        raise ZeroNorm(f"vector norm {n:.3e} below eps={eps:.1e}")
    return v / n


def normalize_rows(m, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Row-wise unit normalization of an (n, d) matrix."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms < eps):
        bad = int(np.argmin(norms))
        raise ZeroNorm(f"row {bad} has norm {norms[bad]:.3e} below eps={eps:.1e}")
    return m / norms[:, None]


def cosine_matrix(features: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Cosine similarities between unit feature rows and unit weight rows.

    Returns an (N, C) matrix with entry (i, j) = <x_i, w_j>, clamped into
    [-1, 1] so accumulated rounding can never push a value outside the
    arccos domain.
    """
    features = np.asarray(features, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if features.ndim != 2 or weights.ndim != 2 or features.shape[1] != weights.shape[1]:
        raise DimensionMismatch(
            f"features {features.shape} vs weights {weights.shape}"
        )
    return np.clip(features @ weights.T, -1.0, 1.0)


def cos_shifted(c, m):
    """cos(min(arccos(c) + m, pi)) without going through arccos.

    ``c`` is a cosine (scalar or array, pre-clamped into [-1, 1]) and ``m``
    a non-negative angle (scalar or broadcastable array, < pi). The summed
    angle is clamped at pi, so the result saturates at -1 instead of
    climbing back up the cosine's far side. m = 0 returns c bit-exactly.
    """
    c = np.asarray(c, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - c * c))
    shifted = c * np.cos(m) - sin_t * np.sin(m)
    # arccos(c) + m > pi  <=>  c < cos(pi - m)
    out = np.where(c < np.cos(np.pi - m), -1.0, shifted)
    if out.ndim == 0:
        return float(out)
    return out
