# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics match ``_kernels_py`` bit for bit."""
import numpy as np

from libc.math cimport INFINITY


cdef double _mst(double[:, ::1] dist, double[::1] key, char[::1] in_tree) noexcept nogil:
    cdef Py_ssize_t n = dist.shape[0], i, step, u
    cdef double total = 0.0, best
    if n == 0:
        return 0.0
    for i in range(n):
        key[i] = INFINITY
        in_tree[i] = 0
    key[0] = 0.0
    for step in range(n):
        u = -1
        best = INFINITY
        for i in range(n):
            if not in_tree[i] and (u < 0 or key[i] < best):
                best = key[i]
                u = i
        in_tree[u] = 1
        total += key[u]
        for i in range(n):
            if not in_tree[i] and dist[u, i] < key[i]:
                key[i] = dist[u, i]
    return total


cdef void _distances(const int[:, ::1] a, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], i, j, t
    cdef long cnt
    for i in range(n):
        out[i, i] = 0.0
        for j in range(i + 1, n):
            cnt = 0
            for t in range(m):
                if a[i, t] != a[j, t]:
                    cnt += 1
            out[i, j] = 2.0 * cnt
            out[j, i] = 2.0 * cnt


def distance_matrix(assignments):
    cdef const int[:, ::1] a = np.ascontiguousarray(assignments, dtype=np.intc)
    out = np.empty((a.shape[0], a.shape[0]), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        _distances(a, o)
    return out


def mst_weight(dist):
    cdef double[:, ::1] d = np.ascontiguousarray(dist, dtype=np.float64)
    cdef Py_ssize_t n = d.shape[0]
    key = np.empty(n, dtype=np.float64)
    in_tree = np.empty(n, dtype=np.int8)
    cdef double[::1] k = key
    cdef char[::1] t = in_tree
    cdef double w
    with nogil:
        w = _mst(d, k, t)
    return w


def population_fitness(pop, compat, double div_weight, double comp_weight):
    cdef const int[:, :, ::1] p = np.ascontiguousarray(pop, dtype=np.intc)
    cdef const double[:, ::1] c = np.ascontiguousarray(compat, dtype=np.float64)
    cdef Py_ssize_t n_pop = p.shape[0], n_coa = p.shape[1], n_task = p.shape[2]
    cdef Py_ssize_t i, k, j
    fit = np.empty(n_pop, dtype=np.float64)
    div = np.empty(n_pop, dtype=np.float64)
    comp = np.empty(n_pop, dtype=np.float64)
    cdef double[::1] f = fit, dv = div, cp = comp
    dist_buf = np.empty((n_coa, n_coa), dtype=np.float64)
    cdef double[:, ::1] dist = dist_buf
    cdef double[::1] key = np.empty(n_coa, dtype=np.float64)
    cdef char[::1] in_tree = np.empty(n_coa, dtype=np.int8)
    cdef double s, total
    with nogil:
        for i in range(n_pop):
            _distances(p[i], dist)
            dv[i] = _mst(dist, key, in_tree)
            total = 0.0
            for k in range(n_coa):
                s = 0.0
                for j in range(n_task):
                    s += c[p[i, k, j], j]
                total += s
            cp[i] = total
            f[i] = div_weight * dv[i] + comp_weight * cp[i]
    return fit, div, comp


cdef long _repair(int[::1] g, const double[:, ::1] c, long t_max, long[::1] loads,
                  long[::1] owned, double[::1] owned_c) except -1:
    cdef Py_ssize_t n_ag = c.shape[0], n_task = g.shape[0]
    cdef Py_ssize_t a, o, j, q, r, cnt, task, best
    cdef long excess, moves = 0, worst_load = 0
    cdef double best_c, tmp_c
    cdef long tmp_t
    for a in range(n_ag):
        loads[a] = 0
    for j in range(n_task):
        loads[g[j]] += 1
    for a in range(n_ag):
        if loads[a] > worst_load:
            worst_load = loads[a]
    if worst_load <= t_max:
        return 0
    for a in range(n_ag):
        excess = loads[a] - t_max
        if excess <= 0:
            continue
        cnt = 0
        for j in range(n_task):
            if g[j] == a:
                owned[cnt] = j
                owned_c[cnt] = c[a, j]
                cnt += 1
        # stable insertion sort by compatibility (ascending), task id breaks ties
        for q in range(1, cnt):
            tmp_c = owned_c[q]
            tmp_t = owned[q]
            r = q - 1
            while r >= 0 and owned_c[r] > tmp_c:
                owned_c[r + 1] = owned_c[r]
                owned[r + 1] = owned[r]
                r -= 1
            owned_c[r + 1] = tmp_c
            owned[r + 1] = tmp_t
        for q in range(excess):
            task = owned[q]
            best = -1
            best_c = -INFINITY
            for o in range(n_ag):
                if loads[o] < t_max and c[o, task] > best_c:
                    best = o
                    best_c = c[o, task]
            if best < 0:
                raise ValueError("no under-loaded agent available; n_ag * t_max < n_task")
            g[task] = <int>best
            loads[a] -= 1
            loads[best] += 1
            moves += 1
    return moves


def repair(genome, compat, long t_max):
    cdef int[::1] g = genome
    cdef const double[:, ::1] c = np.ascontiguousarray(compat, dtype=np.float64)
    cdef long[::1] loads = np.empty(c.shape[0], dtype=np.int_)
    cdef long[::1] owned = np.empty(g.shape[0], dtype=np.int_)
    cdef double[::1] owned_c = np.empty(g.shape[0], dtype=np.float64)
    return _repair(g, c, t_max, loads, owned, owned_c)


def repair_population(pop, compat, long t_max):
    cdef int[:, :, ::1] p = pop
    cdef const double[:, ::1] c = np.ascontiguousarray(compat, dtype=np.float64)
    cdef long[::1] loads = np.empty(c.shape[0], dtype=np.int_)
    cdef long[::1] owned = np.empty(p.shape[2], dtype=np.int_)
    cdef double[::1] owned_c = np.empty(p.shape[2], dtype=np.float64)
    cdef Py_ssize_t i, k
    cdef long moves = 0
    for i in range(p.shape[0]):
        for k in range(p.shape[1]):
            moves += _repair(p[i, k], c, t_max, loads, owned, owned_c)
    return moves


def exact_sequence(travel, comp, deadline, double clock0):
    cdef const double[:, ::1] tr = np.ascontiguousarray(travel, dtype=np.float64)
    cdef const double[::1] cm = np.ascontiguousarray(comp, dtype=np.float64)
    cdef const double[::1] dl = np.ascontiguousarray(deadline, dtype=np.float64)
    cdef Py_ssize_t k = cm.shape[0]
    if k == 0:
        return [], clock0
    if k > 30:
        raise ValueError("exact_sequence supports at most 30 tasks")
    cdef Py_ssize_t start = k, full = (<Py_ssize_t>1) << k
    dp_arr = np.full((full, k), np.inf, dtype=np.float64)
    par_arr = np.full((full, k), -1, dtype=np.int8)
    cdef double[:, ::1] dp = dp_arr
    cdef signed char[:, ::1] par = par_arr
    cdef Py_ssize_t mask, last, nxt, bit, i
    cdef double cur, t, v
    cdef int cnt, best_count = 0
    cdef double best_clock = INFINITY
    cdef Py_ssize_t best_mask = 0, best_last = -1
    with nogil:
        for i in range(k):
            t = clock0 + tr[start, i] + cm[i]
            if t <= dl[i]:
                dp[(<Py_ssize_t>1) << i, i] = t
        for mask in range(1, full):
            for last in range(k):
                cur = dp[mask, last]
                if cur == INFINITY:
                    continue
                for nxt in range(k):
                    bit = (<Py_ssize_t>1) << nxt
                    if mask & bit:
                        continue
                    t = cur + tr[last, nxt] + cm[nxt]
                    if t <= dl[nxt] and t < dp[mask | bit, nxt]:
                        dp[mask | bit, nxt] = t
                        par[mask | bit, nxt] = <signed char>last
        for mask in range(1, full):
            cnt = 0
            bit = mask
            while bit:
                bit &= bit - 1
                cnt += 1
            if cnt < best_count:
                continue
            for last in range(k):
                v = dp[mask, last]
                if v == INFINITY:
                    continue
                if cnt > best_count or v < best_clock:
                    best_count = cnt
                    best_clock = v
                    best_mask = mask
                    best_last = last
    if best_last < 0:
        return [], clock0
    order = []
    mask = best_mask
    last = best_last
    while last >= 0:
        order.append(int(last))
        nxt = par[mask, last]
        mask &= ~((<Py_ssize_t>1) << last)
        last = nxt
    order.reverse()
    return order, best_clock
