"""Full COAs: sequencing every agent of every pool member, metrics and ranking."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .allocation import CoaPool, check_pool_matches
from .scenario import Scenario
from .sequencing import DEFAULT_ORACLE_LIMIT, SequencerSim, Trajectory, run_policy


@dataclass
class Coa:
    index: int
    trajectories: list[Trajectory]
    n_task: int
    total_compatibility: float
    policy: str = ""

    @property
    def total_completed(self) -> int:
        return sum(t.completed_count for t in self.trajectories)

    @property
    def completion_rate(self) -> float:
        return self.total_completed / self.n_task

    @property
    def total_time(self) -> float:
        return total_time(self)

    @property
    def fallbacks(self) -> list[str]:
        return [f"agent {t.agent_id}: {t.fallback}" for t in self.trajectories if t.fallback]


def total_time(coa: Coa) -> float:
    """Makespan: the latest final clock over all agents (0 with no trajectories)."""
    return max((t.final_clock for t in coa.trajectories), default=0.0)


def policy_rng(seed: int, coa_index: int, agent_id: int) -> np.random.Generator:
    """Independent stream per (COA, agent) so job order never changes results."""
    return np.random.default_rng([seed, coa_index, agent_id])


def _sequence_one(scenario, assignment, coa_index, agent_id, policy, seed, travel, oracle_limit):
    tasks = np.flatnonzero(assignment == agent_id)
    sim = SequencerSim(scenario, agent_id, tasks, travel=travel)
    rng = policy_rng(seed, coa_index, agent_id) if policy == "random" else None
    return run_policy(sim, policy, rng=rng, oracle_limit=oracle_limit)


def assemble_pool(
    pool: CoaPool,
    scenario: Scenario,
    policy: str = "greedy",
    seed: int = 0,
    *,
    travel_factors: np.ndarray | None = None,
    oracle_limit: int = DEFAULT_ORACLE_LIMIT,
    workers: int = 1,
) -> list[Coa]:
    """Sequence every agent of every condensed COA and collect the results.

    ``travel_factors`` is an optional ``(n_task + 1, n_task + 1)``
    multiplicative matrix applied to every agent's travel times. The
    (agent, COA) jobs are independent; ``workers > 1`` runs them on a
    thread pool without affecting the output.
    """
    check_pool_matches(pool, scenario)
    travel = [scenario.travel_matrix(j, travel_factors) for j in range(scenario.n_ag)]
    jobs = [(k, j) for k in range(pool.n_coa) for j in range(scenario.n_ag)]

    def job(kj):
        k, j = kj
        return _sequence_one(scenario, pool[k], k, j, policy, seed, travel[j], oracle_limit)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(job, jobs))
    else:
        results = [job(kj) for kj in jobs]

    compat = scenario.compat.values
    cols = np.arange(scenario.n_task)
    coas = []
    for k in range(pool.n_coa):
        trajs = results[k * scenario.n_ag:(k + 1) * scenario.n_ag]
        comp = float(compat[pool[k], cols].sum())
        coas.append(Coa(k, trajs, scenario.n_task, comp, policy))
    return coas


# ---------------------------------------------------------------------------
# Ranking


def rank_key(coa: Coa, time_metric=total_time):
    return (-coa.total_completed, time_metric(coa), -coa.total_compatibility)


def quartile_of(rank: int, n: int) -> int:
    """Quartile label for a 1-based rank; 4 is the best block."""
    return 5 - math.ceil(4 * rank / n)


@dataclass
class RankedPool:
    coas: list[Coa]
    ranks: list[int] = field(default_factory=list)
    quartiles: list[int] = field(default_factory=list)

    @property
    def order(self) -> list[int]:
        """COA indices from best to worst."""
        return sorted(range(len(self.coas)), key=lambda i: self.ranks[i])


def rank_lexicographic(coas: list[Coa], time_metric=total_time) -> RankedPool:
    """Rank by tasks completed (desc), then total time (asc), then compatibility (desc).

    The position in ``coas`` breaks remaining ties. ``ranks[i]`` and
    ``quartiles[i]`` refer to ``coas[i]``.
    """
    if not coas:
        raise ValueError("nothing to rank")
    n = len(coas)
    keyed = sorted(range(n), key=lambda i: rank_key(coas[i], time_metric) + (i,))
    ranks = [0] * n
    for r, i in enumerate(keyed, start=1):
        ranks[i] = r
    return RankedPool(list(coas), ranks, [quartile_of(r, n) for r in ranks])


REPORT_HEADER = ["coa_id", "completed", "completion_rate", "total_time", "compatibility", "rank", "quartile", "policy"]


def report_rows(ranked: RankedPool):
    for i, c in enumerate(ranked.coas):
        yield [c.index, c.total_completed, repr(c.completion_rate), repr(float(c.total_time)),
               repr(c.total_compatibility), ranked.ranks[i], f"Q{ranked.quartiles[i]}", c.policy]


def write_report(ranked: RankedPool, path, extra: dict[str, list] | None = None) -> None:
    """Pool report CSV; ``extra`` adds columns (one value per COA)."""
    extra = extra or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER + list(extra))
        for i, row in enumerate(report_rows(ranked)):
            w.writerow(row + [col[i] for col in extra.values()])
