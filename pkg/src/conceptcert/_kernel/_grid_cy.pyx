# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``_grid_py.min_objective_grid``.

Same branch-and-bound over box-bounded integer compositions; see the pure
module for the algorithm notes.  Keep both implementations in sync.
"""


cdef int MAXDIM = 8


cdef int _leaf_overlap(int* c, int t, int k) nogil:
    cdef int used = 0, ov = 0, r, i, bi, bv
    for r in range(k):
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


cdef int _guaranteed_in(int* c, int assigned, int rem, int t, int k,
                        int* sumlo, int* maxhi, int* maxlo) nogil:
    cdef int free = t - assigned
    cdef int maxu = maxhi[assigned]
    cdef int alt = rem - (sumlo[assigned] - maxlo[assigned])
    cdef int g = 0, lim, i, j, ci, cj, beaters, cap
    if alt < maxu:
        maxu = alt
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
            cap = rem // (ci + 1)
            beaters += cap if cap < free else free
        if beaters < k:
            g += 1
    return g


cdef void _rec(int j, int rem, double partial,
               int* c, int t, int k, int max_overlap,
               const double* walpha, const double* pow_tab,
               const double* tail_walpha,
               int* lo, int* hi, int* sumlo, int* sumhi,
               int* maxhi, int* maxlo,
               double* best, int* best_c, long long* nodes) nogil:
    cdef int v, v_lo, v_hi, nrem, i
    cdef double total, part, wa, ta
    nodes[0] += 1
    if j == t - 1:
        c[j] = rem
        total = partial + walpha[j] * pow_tab[rem]
        if total < best[0] and _leaf_overlap(c, t, k) <= max_overlap:
            best[0] = total
            for i in range(t):
                best_c[i] = c[i]
        return
    v_lo = lo[j]
    if rem - sumhi[j + 1] > v_lo:
        v_lo = rem - sumhi[j + 1]
    v_hi = hi[j]
    if rem - sumlo[j + 1] < v_hi:
        v_hi = rem - sumlo[j + 1]
    wa = walpha[j]
    ta = tail_walpha[j + 1]
    for v in range(v_hi, v_lo - 1, -1):
        c[j] = v
        part = partial + wa * pow_tab[v]
        nrem = rem - v
        if part + ta * pow_tab[nrem] >= best[0]:
            continue
        if _guaranteed_in(c, j + 1, nrem, t, k, sumlo, maxhi, maxlo) > max_overlap:
            continue
        _rec(j + 1, nrem, part, c, t, k, max_overlap,
             walpha, pow_tab, tail_walpha, lo, hi, sumlo, sumhi,
             maxhi, maxlo, best, best_c, nodes)


def min_objective_grid(double[::1] walpha, double[::1] pow_tab,
                       double[::1] tail_walpha, int k, int max_overlap,
                       int n, lo_seq, hi_seq, double best0):
    cdef int t = walpha.shape[0]
    if t > MAXDIM:
        raise ValueError(f"dimension {t} exceeds kernel limit {MAXDIM}")
    cdef int c[8]
    cdef int lo[8]
    cdef int hi[8]
    cdef int sumlo[9]
    cdef int sumhi[9]
    cdef int maxhi[9]
    cdef int maxlo[9]
    cdef int i
    for i in range(t):
        lo[i] = lo_seq[i]
        hi[i] = hi_seq[i]
    sumlo[t] = 0
    sumhi[t] = 0
    maxhi[t] = 0
    maxlo[t] = 0
    for i in range(t - 1, -1, -1):
        sumlo[i] = sumlo[i + 1] + lo[i]
        sumhi[i] = sumhi[i + 1] + hi[i]
        maxhi[i] = maxhi[i + 1] if maxhi[i + 1] > hi[i] else hi[i]
        maxlo[i] = maxlo[i + 1] if maxlo[i + 1] > lo[i] else lo[i]
    cdef int best_c[8]
    cdef double best = best0
    cdef long long nodes = 0
    best_c[0] = -1
    with nogil:
        _rec(0, n, 0.0, c, t, k, max_overlap,
             &walpha[0], &pow_tab[0], &tail_walpha[0],
             lo, hi, sumlo, sumhi, maxhi, maxlo, &best, best_c, &nodes)
    if best_c[0] < 0:
        return best, None, nodes
    return best, tuple(best_c[i] for i in range(t)), nodes
