"""Stability certificates for smoothed concept modules.

Two budgets drive every certificate:

* the worst-case Renyi divergence between a reference simplex vector and
  any simplex vector whose tie-broken top-k overlap with it drops below a
  stability coefficient beta (closed form plus an independent grid oracle),
* the divergence below which the argmax class of a prediction distribution
  provably cannot change, given its two largest probabilities.

Inverting either budget against the Gaussian divergence bound
alpha * R^2 / (2 * sigma^2) yields a certified L2 radius.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernel
from .errors import ParameterError, ResourceLimitError
from .metrics import as_distribution, renyi_divergence, top_k_overlap

__all__ = [
    "k0_of",
    "boundary_set",
    "min_divergence_topk",
    "min_divergence_bruteforce",
    "worst_case_q",
    "prediction_gamma_threshold",
    "certify_sigma_topk",
    "certified_radius",
    "estimate_p_bounds",
    "CertificateReport",
    "DEFAULT_ALPHA_GRID",
]

DEFAULT_ALPHA_GRID = (1.5, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)

# Nudge absorbs float representation error in (1 - beta) * k before floor,
# e.g. (1 - 0.8) * 5 = 0.9999999999999998.
_FLOOR_NUDGE = 1e-9

# Relative tilt applied to the boundary block of the worst-case minimizer so
# its top-k violation is strict under the lower-index tie-break.  Small
# enough to keep the divergence within 1e-9 of the closed form.
_TILT = 2e-11


def k0_of(beta: float, k: int) -> int:
    """Minimum number of top-k replacements that violates a beta overlap."""
    beta = float(beta)
    if not 0.0 < beta <= 1.0:
        raise ParameterError(f"beta must be in (0, 1], got {beta}")
    k = int(k)
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    return int(math.floor((1.0 - beta) * k + _FLOOR_NUDGE)) + 1


def _validate_query(w, k: int, k0: int):
    w = as_distribution(w, "w")
    if np.any(w <= 0.0):
        raise ParameterError("w must be strictly positive; normalize first")
    k = int(k)
    if k0 > k:
        raise ParameterError(f"degenerate query: k0={k0} exceeds k={k}")
    if k + k0 > w.size:
        raise ParameterError(
            f"boundary set needs k + k0 = {k + k0} entries, vector has {w.size}"
        )
    return w


def boundary_set(w, k: int, k0: int) -> np.ndarray:
    """Original indices at descending-value positions k-k0+1 .. k+k0.

    The 2*k0 returned indices are the last k0 inside the top-k plus the
    first k0 outside it, in descending-value order (ties to lower index).
    """
    w = _validate_query(w, k, k0)
    order = np.argsort(-w, kind="stable")
    return order[k - k0 : k + k0].copy()


def _power_mean(block: np.ndarray, alpha: float) -> float:
    """(mean_i block_i**alpha)**(1/alpha) without underflow for large alpha."""
    m = float(block.max())
    return m * float(((block / m) ** alpha).mean()) ** (1.0 / alpha)


def _closed_form_parts(w, k: int, beta: float, alpha: float):
    """Solve the worst-case divergence program in sorted coordinates.

    With w sorted descending, the cheapest violation demotes the last k0
    entries of the top-k (block D) below the first k0 entries outside it
    (block P).  The minimizer is proportional to w away from a single tie
    level g: demoted entries larger than g are capped at it, promoted
    entries smaller than g are lifted to it, and g is the alpha-power mean
    of the tied group.  The KKT sign conditions select how far the tie
    group extends into D and P; tying the whole block is optimal only when
    its smallest demoted entry still clears the power mean, so every
    consistent split is scanned.  The minimum divergence is then

        alpha/(alpha-1) * ln(off_mass + |G| * g).
    """
    alpha = float(alpha)
    if alpha <= 1.0:
        raise ParameterError(f"alpha must be > 1, got {alpha}")
    k0 = k0_of(beta, k)
    w = _validate_query(w, k, k0)
    order = np.argsort(-w, kind="stable")
    ws = w[order]
    demoted = ws[k - k0 : k]
    promoted = ws[k : k + k0]

    best = None
    for j in range(k0 + 1):
        for jp in range(k0 + 1):
            size = j + (k0 - jp)
            if size < 1:
                continue
            group = np.concatenate([demoted[:j], promoted[jp:]])
            g = _power_mean(group, alpha)
            if j > 0 and demoted[j - 1] < g:
                continue
            if j < k0 and demoted[j] > g:
                continue
            if jp > 0 and promoted[jp - 1] < g:
                continue
            if jp < k0 and promoted[jp] > g:
                continue
            h = float(1.0 - group.sum()) + size * g
            # Prefer splits with a capped demoted entry; j == 0 only
            # arises on measure-zero ties where both give the same q.
            key = (h, 0 if j > 0 else 1)
            if best is None or key < best[0]:
                best = (key, j, jp, g, h)
    if best is None:  # degenerate ties; fall back to the fully tied block
        group = np.concatenate([demoted, promoted])
        g = _power_mean(group, alpha)
        best = ((0.0, 0), k0, 0, g, float(1.0 - group.sum()) + 2 * k0 * g)
    _, j, jp, g, h = best
    return w, order, ws, k0, j, jp, g, h


def min_divergence_topk(w, k: int, beta: float, alpha: float) -> float:
    """Closed-form minimum divergence to any beta-overlap-violating vector.

    alpha/(alpha-1) * ln(off_mass + |G| * g), where G is the tie group of
    the clipped-proportional minimizer and g its alpha-power mean (see
    ``_closed_form_parts``).  Zero when the top entries are tied, since no
    divergence is then needed to reorder them.
    """
    alpha = float(alpha)
    *_, h = _closed_form_parts(w, k, beta, alpha)
    return max(0.0, (alpha / (alpha - 1.0)) * math.log(h))


def worst_case_q(w, k: int, beta: float, alpha: float) -> np.ndarray:
    """The simplex vector attaining the minimum divergence budget.

    Proportional to w away from the tie group, constant (up to an
    infinitesimal tilt) on it.  The tilt raises the lifted promoted
    entries above the capped demoted ones so the returned vector strictly
    violates the beta overlap under the lower-index tie-break while moving
    the divergence by less than 1e-9.
    """
    w, order, ws, k0, j, jp, g, h = _closed_form_parts(w, k, beta, float(alpha))
    scale = 1.0 / h
    q_sorted = ws * scale
    tie = g * scale
    q_sorted[k - k0 : k - k0 + j] = tie
    q_sorted[k + jp : k + k0] = tie
    lifted = k0 - jp
    if lifted > 0 and j > 0:
        eta = tie * _TILT
        q_sorted[k + jp : k + k0] += eta
        q_sorted[k - k0 : k - k0 + j] -= eta * lifted / j
    q = np.empty_like(q_sorted)
    q[order] = q_sorted
    return q


# Fine pass of the grid oracle: one decade below the requested resolution,
# searched inside a +-2 coarse-cell window around the coarse optimum.
_REFINE_FACTOR = 10
_REFINE_WINDOW = 2


def min_divergence_bruteforce(
    w, k: int, beta: float, alpha: float, resolution: float = 0.01
) -> float:
    """Independent grid oracle for the worst-case top-k divergence.

    Enumerates the simplex grid of step ``resolution`` (dimension <= 6),
    keeps points whose tie-broken top-k overlap with w falls below beta,
    and takes the smallest divergence among them; a second pass at one
    tenth of the step, restricted to a window around the coarse optimum,
    tightens the answer to well within O(resolution) of the true minimum.
    Uses only the overlap definition and the raw divergence formula, never
    the closed form.
    """
    alpha = float(alpha)
    if alpha <= 1.0:
        raise ParameterError(f"alpha must be > 1, got {alpha}")
    resolution = float(resolution)
    if resolution < 0.01 - 1e-12:
        raise ParameterError(f"resolution must be >= 0.01, got {resolution}")
    k0 = k0_of(beta, k)
    w = _validate_query(w, k, k0)
    t = w.size
    if t > 6:
        raise ResourceLimitError(f"grid oracle limited to dimension 6, got {t}")

    n = int(round(1.0 / resolution))
    k = int(k)
    # Largest integer overlap still counted as a violation of beta.
    max_overlap = int(math.ceil(beta * k - _FLOOR_NUDGE)) - 1

    order = np.argsort(-w, kind="stable")
    ws = w[order]
    walpha = np.ascontiguousarray(ws**alpha)
    tails = np.concatenate([np.cumsum(ws[::-1])[::-1], [0.0]])
    tail_walpha = np.ascontiguousarray(tails**alpha)

    best0, comp0 = _seed_incumbent(ws, walpha, k, max_overlap, n, alpha)
    best, comp, _ = _kernel.min_objective_grid(
        walpha,
        _power_table(n, alpha),
        tail_walpha,
        k,
        max_overlap,
        n,
        [1] * t,
        [n] * t,
        best0,
    )
    if comp is None:
        comp = comp0
    if comp is None or not math.isfinite(best):
        raise ParameterError("no grid point violates the overlap constraint")

    n_fine = n * _REFINE_FACTOR
    span = _REFINE_WINDOW * _REFINE_FACTOR
    lo = [max(1, _REFINE_FACTOR * ci - span) for ci in comp]
    hi = [min(n_fine, _REFINE_FACTOR * ci + span) for ci in comp]
    best, _, _ = _kernel.min_objective_grid(
        walpha,
        _power_table(n_fine, alpha),
        tail_walpha,
        k,
        max_overlap,
        n_fine,
        lo,
        hi,
        best,
    )
    return max(0.0, math.log(best) / (alpha - 1.0))


def _power_table(n: int, alpha: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.ascontiguousarray(
            (np.arange(n + 1, dtype=np.float64) / n) ** (1.0 - alpha)
        )


def _seed_incumbent(ws, walpha, k, max_overlap, n, alpha):
    """Cheap feasible grid points that give the search a head start."""
    t = ws.size
    pow_tab = _power_table(n, alpha)
    base = np.maximum(1, np.floor(ws * n).astype(int))
    # Largest-remainder fixup so the composition sums to n.
    while base.sum() > n:
        base[int(np.argmax(base))] -= 1
    frac = ws * n - np.floor(ws * n)
    for _ in range(n - int(base.sum())):
        i = int(np.argmax(frac))
        base[i] += 1
        frac[i] = -1.0
    best = math.inf
    best_comp = None
    candidates = [tuple(base[list(p)]) for p in itertools.permutations(range(t))]
    for j in range(t):
        peak = [1] * t
        peak[j] = n - (t - 1)
        candidates.append(tuple(peak))
    for comp in candidates:
        if _kernel.leaf_overlap(comp, k) <= max_overlap:
            val = float(sum(walpha[i] * pow_tab[comp[i]] for i in range(t)))
            if val < best:
                best = val
                best_comp = comp
    return best, best_comp


def prediction_gamma_threshold(p1: float, p2: float, alpha: float) -> float:
    """Divergence budget below which the argmax class cannot change:

        -log(1 - p1 - p2 + 2 * (0.5 * (p1^(1-a) + p2^(1-a)))^(1/(1-a)))

    p1 and p2 are the largest and second-largest probabilities of the
    clean prediction distribution, which acts as the reference measure of
    the divergence: any distribution with a different argmax sits at least
    this far away in D_alpha(other || clean).  The certificate's Gaussian
    divergence bound is symmetric, so either orientation may be budgeted
    against it.  p2 == 0 is clamped to 1e-12 (the threshold grows as p2
    shrinks, so the clamp is conservative).  Zero when the classes tie.
    """
    alpha = float(alpha)
    if alpha <= 1.0:
        raise ParameterError(f"alpha must be > 1, got {alpha}")
    p1 = float(p1)
    p2 = float(p2)
    if p1 < p2:
        raise ParameterError(f"need p1 >= p2, got p1={p1}, p2={p2}")
    if p1 + p2 > 1.0 + 1e-12:
        raise ParameterError(f"p1 + p2 = {p1 + p2} exceeds 1")
    if p1 <= 0.0:
        raise ParameterError(f"p1 must be positive, got {p1}")
    p2 = max(p2, 1e-12)
    # Inner power mean evaluated in log space to survive large alpha.
    one_minus_a = 1.0 - alpha
    log_mean = np.logaddexp(one_minus_a * math.log(p1), one_minus_a * math.log(p2))
    inner = math.exp((log_mean + math.log(0.5)) / one_minus_a)
    arg = 1.0 - p1 - p2 + 2.0 * inner
    if arg <= 0.0:
        return math.inf
    return max(0.0, -math.log(arg))


def certify_sigma_topk(radius, alpha, w, k, beta, gamma) -> float:
    """Smallest noise variance certifying both stability conditions at the
    given radius: sigma^2 >= alpha * R^2 / (2 * min(topk_budget, gamma)).

    A zero budget (tied concepts or gamma == 0) yields ``inf`` rather than
    an exception: no finite variance certifies that radius.
    """
    radius = float(radius)
    if radius < 0.0:
        raise ParameterError(f"radius must be >= 0, got {radius}")
    gamma = float(gamma)
    if gamma < 0.0:
        raise ParameterError(f"gamma must be >= 0, got {gamma}")
    alpha = float(alpha)
    budget = min(min_divergence_topk(w, k, beta, alpha), gamma)
    if radius == 0.0:
        return 0.0
    if budget <= 0.0:
        return math.inf
    return alpha * radius * radius / (2.0 * budget)


@dataclass
class CertificateReport:
    """Certified radii and the parameters that produced them."""

    sigma: float
    m: int
    alpha_star: float
    r_topk: float
    r_pred: float
    r_final: float
    gamma: float
    p1_lower: float
    p2_upper: float
    delta: float

    def to_dict(self) -> dict:
        return asdict(self)


def _radius_from_budget(sigma, alpha, budget):
    if budget <= 0.0:
        return 0.0
    return math.sqrt(2.0 * sigma * sigma * budget / alpha)


def _maximize_over_alpha(fn, alpha_grid, refine_steps=24):
    """Deterministic max of fn over the grid plus one local refinement.

    Every alpha yields a valid (conservative) radius, so any finite search
    is sound.  Ties resolve to the smaller alpha regardless of evaluation
    order.
    """
    values = [(fn(a), -a) for a in alpha_grid]
    best_val, neg_a = max(values)
    best_alpha = -neg_a
    idx = alpha_grid.index(best_alpha)
    lo = alpha_grid[idx - 1] if idx > 0 else max(1.0 + 1e-6, best_alpha / 2.0)
    hi = alpha_grid[idx + 1] if idx + 1 < len(alpha_grid) else best_alpha * 2.0
    # Golden-section refinement inside the bracketing neighbours.
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = fn(x1), fn(x2)
    for _ in range(refine_steps):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = fn(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = fn(x2)
    for x, f in ((x1, f1), (x2, f2)):
        if f > best_val or (f == best_val and x < best_alpha):
            best_val, best_alpha = f, x
    return best_val, best_alpha


def certified_radius(
    sigma: float,
    w,
    k: int,
    beta: float,
    p1_lower: float,
    p2_upper: float,
    alpha_grid=DEFAULT_ALPHA_GRID,
    *,
    m: int = 0,
    delta: float = 1e-3,
) -> CertificateReport:
    """Invert the variance bound into certified radii, maximized over alpha.

    r = sqrt(2 * sigma^2 * budget(alpha) / alpha) for the top-k budget and
    for the prediction budget separately; the certificate radius is their
    minimum.  Monotone non-decreasing in sigma.
    """
    sigma = float(sigma)
    if sigma <= 0.0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    alpha_grid = list(alpha_grid)
    if not alpha_grid:
        raise ParameterError("alpha grid is empty")
    if any(a <= 1.0 for a in alpha_grid):
        raise ParameterError("every alpha in the grid must be > 1")
    w = as_distribution(w, "w")

    def topk_radius(alpha):
        return _radius_from_budget(sigma, alpha, min_divergence_topk(w, k, beta, alpha))

    tied = p1_lower <= p2_upper or p1_lower <= 0.0

    def pred_radius(alpha):
        if tied:
            return 0.0
        budget = prediction_gamma_threshold(p1_lower, p2_upper, alpha)
        return _radius_from_budget(sigma, alpha, budget)

    r_topk, a_topk = _maximize_over_alpha(topk_radius, alpha_grid)
    if tied:
        r_pred, a_pred = 0.0, alpha_grid[0]
    else:
        r_pred, a_pred = _maximize_over_alpha(pred_radius, alpha_grid)

    if r_topk <= r_pred:
        r_final, alpha_star = r_topk, a_topk
    else:
        r_final, alpha_star = r_pred, a_pred
    gamma = 0.0 if tied else prediction_gamma_threshold(p1_lower, p2_upper, a_pred)
    return CertificateReport(
        sigma=sigma,
        m=int(m),
        alpha_star=float(alpha_star),
        r_topk=float(r_topk),
        r_pred=float(r_pred),
        r_final=float(r_final),
        gamma=float(gamma),
        p1_lower=float(p1_lower),
        p2_upper=float(p2_upper),
        delta=float(delta),
    )


def estimate_p_bounds(class_counts, delta: float):
    """Hoeffding confidence bounds on the two largest class probabilities.

    p1_lower = phat1 - sqrt(ln(2/delta) / (2m)) and p2_upper = phat2 + the
    same slack, both clamped to [0, 1].
    """
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must be in (0, 1), got {delta}")
    counts = np.asarray(class_counts, dtype=np.int64)
    if counts.ndim != 1 or counts.size < 2:
        raise ParameterError("class_counts must be a 1-D vector of length >= 2")
    if np.any(counts < 0):
        raise ParameterError("class counts must be non-negative")
    m = int(counts.sum())
    if m < 1:
        raise ParameterError("need at least one sample")
    freqs = np.sort(counts / m)[::-1]
    slack = math.sqrt(math.log(2.0 / delta) / (2.0 * m))
    p1_lower = min(1.0, max(0.0, float(freqs[0]) - slack))
    p2_upper = min(1.0, max(0.0, float(freqs[1]) + slack))
    return p1_lower, p2_upper


def verify_minimizer(w, k: int, beta: float, alpha: float):
    """Diagnostic: check the closed-form minimizer against its contract.

    Returns (divergence gap, overlap) of worst_case_q against
    min_divergence_topk and the tie-broken top-k overlap with w.
    """
    q = worst_case_q(w, k, beta, alpha)
    d_closed = min_divergence_topk(w, k, beta, alpha)
    d_actual = renyi_divergence(as_distribution(w), q / q.sum(), alpha)
    overlap = top_k_overlap(w, q, k)
    return abs(d_actual - d_closed), overlap
