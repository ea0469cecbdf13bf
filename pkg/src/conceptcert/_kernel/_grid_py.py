"""Pure-Python grid search for the worst-case top-k divergence.

Minimizes  sum_i walpha[i] * (c_i / n) ** (1 - alpha)  over integer
compositions c of n with lo_i <= c_i <= hi_i (coordinates ordered by
descending reference weight) whose tie-broken top-k set shares at most
``max_overlap`` indices with {0, ..., k-1}.  The box bounds let the caller
run a coarse full pass first and then a fine pass restricted to a window
around the coarse optimum.

Depth-first search with two sound prunes:

* objective bound: the unconstrained continuum minimum of the remaining
  coordinates given their mass budget is (sum of remaining weights)**alpha
  * (budget/n)**(1-alpha); partial + bound >= incumbent kills the branch.
* membership bound: an assigned coordinate i < k is guaranteed to stay in
  the top-k of every completion when fewer than k indices can possibly
  outrank it; once more than ``max_overlap`` coordinates are locked in,
  no completion can violate the overlap constraint.

The compiled twin in ``_grid_cy.pyx`` implements the identical algorithm;
keep the two in sync.
"""

__all__ = ["min_objective_grid", "leaf_overlap"]


def leaf_overlap(c, k):
    """Overlap of the tie-broken top-k of ``c`` with {0..k-1}.

    Ties go to the lower index, matching the package-wide top-k rule.
    """
    t = len(c)
    used = 0
    ov = 0
    for _ in range(k):
        bi = -1
        bv = -1
        for i in range(t):
            if not (used >> i) & 1 and c[i] > bv:
                bv = c[i]
                bi = i
        used |= 1 << bi
        if bi < k:
            ov += 1
    return ov


def min_objective_grid(walpha, pow_tab, tail_walpha, k, max_overlap, n, lo, hi, best0):
    """Returns (best objective, argmin composition or None, node count).

    The argmin is None when no enumerated point beat ``best0``.
    """
    t = len(walpha)
    c = [0] * t
    best = float(best0)
    best_c = None
    nodes = 0
    # Suffix aggregates of the box bounds for loop limits and prunes.
    sumlo = [0] * (t + 1)
    sumhi = [0] * (t + 1)
    maxhi = [0] * (t + 1)
    maxlo = [0] * (t + 1)
    for i in range(t - 1, -1, -1):
        sumlo[i] = sumlo[i + 1] + lo[i]
        sumhi[i] = sumhi[i + 1] + hi[i]
        maxhi[i] = max(maxhi[i + 1], hi[i])
        maxlo[i] = max(maxlo[i + 1], lo[i])

    def guaranteed_in(assigned, rem):
        # Number of coordinates in {0..k-1} already assigned and certain to
        # be in the top-k of every completion within the box bounds.
        free = t - assigned
        maxu = maxhi[assigned]
        alt = rem - (sumlo[assigned] - maxlo[assigned])
        if alt < maxu:
            maxu = alt
        g = 0
        lim = assigned if assigned < k else k
        for i in range(lim):
            ci = c[i]
            beaters = 0
            for j in range(assigned):
                if j == i:
                    continue
                cj = c[j]
                if cj > ci or (cj == ci and j < i):
                    beaters += 1
            if maxu > ci:
                # A strict beater needs at least ci + 1 mass.
                cap = rem // (ci + 1)
                beaters += cap if cap < free else free
            if beaters < k:
                g += 1
        return g

    def rec(j, rem, partial):
        nonlocal best, best_c, nodes
        nodes += 1
        if j == t - 1:
            c[j] = rem
            total = partial + walpha[j] * pow_tab[rem]
            if total < best and leaf_overlap(c, k) <= max_overlap:
                best = total
                best_c = tuple(c)
            return
        v_lo = max(lo[j], rem - sumhi[j + 1])
        v_hi = min(hi[j], rem - sumlo[j + 1])
        wa = walpha[j]
        ta = tail_walpha[j + 1]
        for v in range(v_hi, v_lo - 1, -1):
            c[j] = v
            part = partial + wa * pow_tab[v]
            nrem = rem - v
            if part + ta * pow_tab[nrem] >= best:
                continue
            if guaranteed_in(j + 1, nrem) > max_overlap:
                continue
            rec(j + 1, nrem, part)

    rec(0, n, 0.0)
    return best, best_c, nodes
