"""Pure-Python/numpy implementations of the hot kernels.

Mirrors ``_kernels.pyx`` exactly, including iteration order and tie-breaks,
so both backends return bit-identical results.
"""
import numpy as np

INF = float("inf")


def distance_matrix(assignments):
    """Squared flattened-difference norm between every pair of condensed COAs.

    For one-hot columns this is twice the number of tasks owned by different
    agents.
    """
    a = np.asarray(assignments)
    diff = (a[:, None, :] != a[None, :, :]).sum(axis=2)
    return 2.0 * diff.astype(np.float64)


def mst_weight(dist):
    """Prim's algorithm on a dense symmetric matrix; ties go to the lower index."""
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0]
    if n == 0:
        return 0.0
    in_tree = np.zeros(n, dtype=bool)
    key = np.full(n, INF)
    key[0] = 0.0
    total = 0.0
    for _ in range(n):
        cand = np.where(in_tree, INF, key)
        u = int(np.argmin(cand))
        in_tree[u] = True
        total += key[u]
        np.minimum(key, dist[u], out=key, where=~in_tree)
    return float(total)


def population_fitness(pop, compat, div_weight, comp_weight):
    pop = np.asarray(pop)
    compat = np.asarray(compat, dtype=np.float64)
    n_pop, n_coa, n_task = pop.shape
    div = np.empty(n_pop)
    comp = np.empty(n_pop)
    cols = np.arange(n_task)
    for p in range(n_pop):
        div[p] = mst_weight(distance_matrix(pop[p]))
        picked = compat[pop[p], cols]
        # row-by-row accumulation matches the compiled kernel's summation order
        total = 0.0
        for k in range(n_coa):
            s = 0.0
            for v in picked[k]:
                s += v
            total += s
        comp[p] = total
    fit = div_weight * div + comp_weight * comp
    return fit, div, comp


def repair(genome, compat, t_max):
    """Shed tasks from overloaded agents in place; returns the number of moves.

    Agents are visited in index order. An overloaded agent gives away its
    least-compatible tasks (lower task id first on ties) to the under-loaded
    agent with the highest compatibility for that task (lower agent index on
    ties).
    """
    compat = np.asarray(compat, dtype=np.float64)
    n_ag = compat.shape[0]
    loads = np.bincount(genome, minlength=n_ag)
    if loads.max(initial=0) <= t_max:
        return 0
    moves = 0
    for agent in range(n_ag):
        excess = int(loads[agent]) - t_max
        if excess <= 0:
            continue
        owned = np.flatnonzero(genome == agent)
        order = owned[np.argsort(compat[agent, owned], kind="stable")]
        for task in order[:excess]:
            best, best_c = -1, -INF
            for other in range(n_ag):
                if loads[other] < t_max and compat[other, task] > best_c:
                    best, best_c = other, compat[other, task]
            if best < 0:
                raise ValueError("no under-loaded agent available; n_ag * t_max < n_task")
            genome[task] = best
            loads[agent] -= 1
            loads[best] += 1
            moves += 1
    return moves


def repair_population(pop, compat, t_max):
    moves = 0
    n_pop, n_coa, _ = pop.shape
    for p in range(n_pop):
        for k in range(n_coa):
            moves += repair(pop[p, k], compat, t_max)
    return moves


def exact_sequence(travel, comp, deadline, clock0):
    """Bitmask DP maximising tasks served before their deadlines.

    ``travel`` is ``(k + 1, k + 1)`` with the start position as the last
    node. Returns ``(order, final_clock)``; among orders serving the most
    tasks the one with the smallest final clock wins, then the lowest
    (mask, last task).
    """
    travel = np.asarray(travel, dtype=np.float64)
    comp = [float(c) for c in comp]
    deadline = [float(d) for d in deadline]
    k = len(comp)
    if k == 0:
        return [], float(clock0)
    start = k
    tr = travel.tolist()
    full = 1 << k
    dp = [[INF] * k for _ in range(full)]
    parent = [[-1] * k for _ in range(full)]
    for i in range(k):
        t = clock0 + tr[start][i] + comp[i]
        if t <= deadline[i]:
            dp[1 << i][i] = t
    for mask in range(1, full):
        row = dp[mask]
        for last in range(k):
            cur = row[last]
            if cur == INF:
                continue
            tl = tr[last]
            for nxt in range(k):
                bit = 1 << nxt
                if mask & bit:
                    continue
                t = cur + tl[nxt] + comp[nxt]
                if t <= deadline[nxt] and t < dp[mask | bit][nxt]:
                    dp[mask | bit][nxt] = t
                    parent[mask | bit][nxt] = last

    best_count, best_clock, best_mask, best_last = 0, INF, 0, -1
    for mask in range(1, full):
        cnt = bin(mask).count("1")
        if cnt < best_count:
            continue
        row = dp[mask]
        for last in range(k):
            v = row[last]
            if v == INF:
                continue
            if cnt > best_count or v < best_clock:
                best_count, best_clock, best_mask, best_last = cnt, v, mask, last
    if best_last < 0:
        return [], float(clock0)
    order = []
    mask, last = best_mask, best_last
    while last >= 0:
        order.append(last)
        prev = parent[mask][last]
        mask &= ~(1 << last)
        last = prev
    order.reverse()
    return order, best_clock
