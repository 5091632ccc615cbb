"""Pool robustness: travel-time noise on random edges, and random edge removal.

Edges are unordered node pairs ``(i, j)`` with ``i < j``; the depot is node
``DEPOT`` (-1), so depot legs read ``(-1, task)``. Task-pair edges and depot
legs are sampled as two strata, each at the requested percentage, from a
seed-fixed permutation: a larger percentage always selects a superset.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .allocation import CoaPool
from .coa import Coa, assemble_pool, rank_lexicographic
from .scenario import DEPOT, Scenario
from .sequencing import DEFAULT_ORACLE_LIMIT

NOISE = "noise"
REMOVAL = "removal"
DEFAULT_NOISE_LEVELS = (5.0, 10.0, 15.0, 20.0)


def edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def task_pair_edges(n_task: int) -> list[tuple[int, int]]:
    return list(combinations(range(n_task), 2))


def depot_edges(n_task: int) -> list[tuple[int, int]]:
    return [(DEPOT, i) for i in range(n_task)]


def n_selected(percent: float, total: int) -> int:
    """``percent`` of ``total``, rounded half up."""
    return int(math.floor(percent * total / 100.0 + 0.5))


@dataclass(frozen=True)
class EdgePerturbation:
    kind: str
    percent: float
    affected_edges: frozenset
    seed: object = 0

    @property
    def task_pairs(self) -> int:
        return sum(1 for a, _ in self.affected_edges if a != DEPOT)


def _check_percent(percent: float):
    if not 0.0 <= percent <= 100.0:
        raise ValueError(f"percent must lie in [0, 100], got {percent}")


def sample_edges(n_task: int, percent: float, seed) -> frozenset:
    """Seeded, nested selection of ``percent`` % of task pairs and of depot legs."""
    _check_percent(percent)
    picked = []
    for stratum, edges in enumerate((task_pair_edges(n_task), depot_edges(n_task))):
        k = n_selected(percent, len(edges))
        if k == 0:
            continue
        seq = [seed] if np.isscalar(seed) else list(seed)
        perm = np.random.default_rng(seq + [stratum]).permutation(len(edges))
        picked.extend(edges[i] for i in perm[:k])
    return frozenset(picked)


def factors_from_edges(n_task: int, edges, factor: float) -> np.ndarray:
    """Symmetric multiplier matrix over all nodes (depot last)."""
    f = np.ones((n_task + 1, n_task + 1))
    for a, b in edges:
        f[a, b] = factor
        f[b, a] = factor
    return f


def perturb_noise(scenario: Scenario, lambda_percent: float, seed=0):
    """Inflate ``lambda_percent`` % of the edges by ``lambda_percent`` %.

    Returns ``(factors, perturbation)`` where ``factors`` multiplies each
    agent's travel-time matrix.
    """
    _check_percent(lambda_percent)
    edges = sample_edges(scenario.n_task, lambda_percent, seed)
    factors = factors_from_edges(scenario.n_task, edges, 1.0 + lambda_percent / 100.0)
    return factors, EdgePerturbation(NOISE, float(lambda_percent), edges, seed)


def remove_edges(scenario: Scenario, removal_percent: float, seed=0) -> EdgePerturbation:
    _check_percent(removal_percent)
    edges = sample_edges(scenario.n_task, removal_percent, seed)
    return EdgePerturbation(REMOVAL, float(removal_percent), edges, seed)


def is_valid(coa: Coa, removed) -> bool:
    """True when no planned leg of ``coa`` crosses a removed edge."""
    removed = removed.affected_edges if isinstance(removed, EdgePerturbation) else removed
    if not removed:
        return True
    for traj in coa.trajectories:
        for a, b in traj.legs():
            if edge_key(a, b) in removed:
                return False
    return True


def count_valid(coas: list[Coa], removed) -> int:
    return sum(is_valid(c, removed) for c in coas)


def valid_count_curve(coas: list[Coa], scenario: Scenario, percents, seeds) -> list[tuple[float, int, int]]:
    """Rows ``(removal_percent, n_valid, seed)`` for every seed and percent."""
    rows = []
    for seed in seeds:
        for p in percents:
            rows.append((float(p), count_valid(coas, remove_edges(scenario, p, seed)), seed))
    return rows


# ---------------------------------------------------------------------------
# Quartile transitions


def transition_matrix(before: list[int], after: list[int]) -> np.ndarray:
    """Row-normalised 4x4 counts; row/column ``q - 1`` is quartile ``q``.

    Rows for quartiles with no members stay all zero.
    """
    m = np.zeros((4, 4))
    for b, a in zip(before, after, strict=True):
        m[b - 1, a - 1] += 1
    sums = m.sum(axis=1, keepdims=True)
    return np.divide(m, sums, out=np.zeros_like(m), where=sums > 0)


@dataclass
class NoiseResult:
    level: float
    matrices: list[np.ndarray] = field(default_factory=list)
    perturbations: list[EdgePerturbation] = field(default_factory=list)
    quartiles_after: list[list[int]] = field(default_factory=list)

    @property
    def mean(self) -> np.ndarray:
        return np.mean(self.matrices, axis=0)


def rerank_under_noise(
    pool: CoaPool,
    scenario: Scenario,
    lambda_levels=DEFAULT_NOISE_LEVELS,
    policy: str = "greedy",
    seed: int = 0,
    *,
    repetitions: int = 1,
    policy_seed: int = 0,
    oracle_limit: int = DEFAULT_ORACLE_LIMIT,
    workers: int = 1,
):
    """Re-sequence the pool under each noise level and track quartile moves.

    The assignments are fixed; only travel times change. Returns
    ``(base_ranking, results)`` with one :class:`NoiseResult` per level.
    """
    kw = dict(oracle_limit=oracle_limit, workers=workers)
    base = rank_lexicographic(assemble_pool(pool, scenario, policy, policy_seed, **kw))
    results = []
    for level in lambda_levels:
        res = NoiseResult(float(level))
        for rep in range(repetitions):
            factors, pert = perturb_noise(scenario, level, (seed, rep))
            ranked = rank_lexicographic(
                assemble_pool(pool, scenario, policy, policy_seed, travel_factors=factors, **kw)
            )
            res.matrices.append(transition_matrix(base.quartiles, ranked.quartiles))
            res.perturbations.append(pert)
            res.quartiles_after.append(ranked.quartiles)
        results.append(res)
    return base, results


def write_transitions_csv(results: list[NoiseResult], path) -> None:
    """4x4 blocks per level: one block per repetition plus the mean."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda_percent", "repetition", "from_quartile", "to_Q1", "to_Q2", "to_Q3", "to_Q4"])
        for res in results:
            blocks = [(str(r), m) for r, m in enumerate(res.matrices)]
            if len(res.matrices) > 1:
                blocks.append(("mean", res.mean))
            for label, m in blocks:
                for q in range(4):
                    w.writerow([repr(res.level), label, f"Q{q + 1}"] + [repr(float(v)) for v in m[q]])


def write_valid_counts_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["removal_percent", "n_valid", "seed"])
        for p, n, s in rows:
            w.writerow([repr(p), n, s])
