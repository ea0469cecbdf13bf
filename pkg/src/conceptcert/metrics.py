"""Vector-level metrics: top-k sets, overlap ratios, concept-stability
scores, and discrete Renyi divergence.

All functions are pure and operate on 1-D float arrays.  Ties in top-k
selection are broken toward the lower index, which fixes the cardinality
of the top-k set at exactly k.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, ParameterError, SupportError

__all__ = [
    "top_k_indices",
    "top_k_overlap",
    "cfs",
    "cpcs",
    "renyi_divergence",
    "normalize_to_simplex",
    "as_distribution",
]

SIMPLEX_ATOL = 1e-9


def _as_vector(v, name="v"):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ParameterError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


def as_distribution(p, name="p"):
    """Validate a probability vector: entries >= 0, sums to 1 within 1e-9."""
    arr = _as_vector(p, name)
    if arr.size < 2:
        raise ParameterError(f"{name} needs at least 2 entries, got {arr.size}")
    if np.any(arr < 0):
        raise ParameterError(f"{name} has negative entries")
    total = float(arr.sum())
    if abs(total - 1.0) > SIMPLEX_ATOL:
        raise ParameterError(f"{name} sums to {total!r}, expected 1 within {SIMPLEX_ATOL}")
    return arr


def top_k_indices(v, k: int) -> np.ndarray:
    """Indices of the k largest entries of ``v``, ties broken by lower index.

    Returns a sorted array of exactly k distinct indices.  Every returned
    index holds a value >= every excluded index's value.
    """
    arr = _as_vector(v)
    k = int(k)
    if not 1 <= k <= arr.size:
        raise ParameterError(f"k={k} out of range for vector of length {arr.size}")
    order = np.argsort(-arr, kind="stable")
    return np.sort(order[:k])


def top_k_overlap(v1, v2, k: int) -> float:
    """Top-k overlap ratio: |T_k(v1) & T_k(v2)| / k, in [0, 1]."""
    a = _as_vector(v1, "v1")
    b = _as_vector(v2, "v2")
    if a.size != b.size:
        raise ParameterError(f"length mismatch: {a.size} vs {b.size}")
    t1 = top_k_indices(a, k)
    t2 = top_k_indices(b, k)
    return float(np.intersect1d(t1, t2, assume_unique=True).size) / float(k)


def cfs(c1, c2) -> float:
    """Relative L2 change of a concept vector: ||c2 - c1|| / ||c1||.

    Lower means the concept weights moved less under perturbation.
    """
    a = _as_vector(c1, "c1")
    b = _as_vector(c2, "c2")
    if a.size != b.size:
        raise ParameterError(f"length mismatch: {a.size} vs {b.size}")
    denom = float(np.linalg.norm(a))
    if denom == 0.0:
        raise DegenerateInputError("reference concept vector has zero norm")
    return float(np.linalg.norm(b - a)) / denom


def cpcs(c1, c2) -> float:
    """Cosine similarity of two concept vectors, in [-1, 1]."""
    a = _as_vector(c1, "c1")
    b = _as_vector(c2, "c2")
    if a.size != b.size:
        raise ParameterError(f"length mismatch: {a.size} vs {b.size}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine undefined for a zero vector")
    val = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, val))


def renyi_divergence(p, q, alpha: float) -> float:
    """Order-alpha Renyi divergence of discrete distributions:

        D_alpha(p || q) = log(sum_i p_i^alpha * q_i^(1-alpha)) / (alpha - 1)

    Requires alpha > 1 and q_i > 0 wherever p_i > 0.  Returns exactly 0.0
    when the two vectors are identical.
    """
    alpha = float(alpha)
    if alpha <= 1.0:
        raise ParameterError(f"alpha must be > 1, got {alpha}")
    pa = as_distribution(p, "p")
    qa = as_distribution(q, "q")
    if pa.size != qa.size:
        raise ParameterError(f"length mismatch: {pa.size} vs {qa.size}")
    if np.array_equal(pa, qa):
        return 0.0
    support = pa > 0.0
    if np.any(qa[support] == 0.0):
        raise SupportError("q has zero mass where p is positive")
    terms = pa[support] ** alpha * qa[support] ** (1.0 - alpha)
    return max(0.0, float(np.log(terms.sum())) / (alpha - 1.0))


def normalize_to_simplex(c) -> np.ndarray:
    """Map a raw concept vector onto the strict interior of the simplex.

    Uses a softmax, which is strictly positive and order-preserving, so
    top_k_indices(input, k) == top_k_indices(output, k) for every k.
    Entries whose gap is below float64 resolution (~1e-16 relative) may
    collapse to exact ties in the output.
    """
    arr = _as_vector(c, "c")
    shifted = arr - arr.max()
    e = np.exp(shifted)
    return e / e.sum()
