"""Condensed COAs, the diversity + compatibility objective, and the elitist GA."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .scenario import CompatibilityMatrix, InfeasibleScenarioError, Scenario

POOL_SCHEMA_VERSION = 1


class PoolError(ValueError):
    pass


def _as_assignment(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.intc)


def _compat_values(compat) -> np.ndarray:
    if isinstance(compat, CompatibilityMatrix):
        return compat.values
    return np.asarray(compat, dtype=np.float64)


def assignment_matrix(assignment, n_ag: int) -> np.ndarray:
    """Binary ``n_ag x n_task`` matrix of a condensed COA."""
    assignment = np.asarray(assignment)
    out = np.zeros((n_ag, assignment.size), dtype=np.int8)
    out[assignment, np.arange(assignment.size)] = 1
    return out


def agent_loads(assignment, n_ag: int) -> np.ndarray:
    return np.bincount(np.asarray(assignment), minlength=n_ag)


@dataclass(eq=False)
class CoaPool:
    """A fixed-size pool of condensed COAs.

    ``assignments[k, j]`` is the agent owning task ``j`` in COA ``k``, so every
    task has exactly one owner by construction.
    """

    assignments: np.ndarray
    n_ag: int
    scenario_ref: str = ""

    def __post_init__(self):
        a = _as_assignment(self.assignments)
        if a.ndim != 2:
            raise PoolError(f"assignments must be 2-D (n_coa, n_task), got shape {a.shape}")
        if a.shape[0] < 2:
            raise PoolError("a pool needs at least 2 COAs; diversity is undefined for one")
        if a.size and (a.min() < 0 or a.max() >= self.n_ag):
            raise PoolError(f"agent indices must lie in [0, {self.n_ag})")
        self.assignments = a

    @property
    def n_coa(self) -> int:
        return self.assignments.shape[0]

    @property
    def n_task(self) -> int:
        return self.assignments.shape[1]

    def __len__(self):
        return self.n_coa

    def __getitem__(self, k) -> np.ndarray:
        return self.assignments[k]

    def loads(self) -> np.ndarray:
        """``(n_coa, n_ag)`` task counts."""
        return np.stack([agent_loads(a, self.n_ag) for a in self.assignments])

    def tasks_of(self, coa: int, agent: int) -> list[int]:
        return np.flatnonzero(self.assignments[coa] == agent).tolist()


def pairwise_distance(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise PoolError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return 2.0 * float(np.count_nonzero(a != b))


def _pool_array(pool) -> np.ndarray:
    return pool.assignments if isinstance(pool, CoaPool) else _as_assignment(pool)


def diversity(pool) -> float:
    """Total weight of the minimum spanning tree over pairwise COA distances."""
    a = _pool_array(pool)
    if a.ndim != 2 or a.shape[0] < 2:
        raise PoolError("diversity needs a pool of at least 2 COAs")
    return float(kernels.mst_weight(kernels.distance_matrix(a)))


def compatibility_score(pool, compat) -> float:
    """Sum of ``C[owner, task]`` over every task of every COA in the pool."""
    a = _pool_array(pool)
    c = _compat_values(compat)
    if a.ndim == 1:
        a = a[None, :]
    if a.size and (a.shape[1] != c.shape[1] or a.max() >= c.shape[0]):
        raise PoolError(f"pool shape {a.shape} does not match compatibility {c.shape}")
    return float(c[a, np.arange(a.shape[1])].sum())


def fitness(pool, compat, weights=(1.0, 1.0)) -> float:
    div_w, comp_w = weights
    return div_w * diversity(pool) + comp_w * compatibility_score(pool, compat)


def repair(genome, compat, t_max: int, rng=None) -> np.ndarray:
    """Return a copy of ``genome`` with every agent's load capped at ``t_max``.

    Overloaded agents shed their least-compatible tasks to the under-loaded
    agent most compatible with each task. Tasks are moved, never dropped.
    ``rng`` is accepted for interface symmetry; the rule is deterministic.
    """
    c = _compat_values(compat)
    if c.shape[0] * t_max < len(genome):
        raise InfeasibleScenarioError(f"{c.shape[0]} agents x t_max {t_max} < {len(genome)} tasks")
    g = _as_assignment(genome).copy()
    kernels.repair(g, c, int(t_max))
    return g


# ---------------------------------------------------------------------------
# Genetic algorithm


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 100
    mutation_prob: float = 0.1
    elite_ratio: float = 0.01
    crossover_prob: float = 0.5
    parent_ratio: float = 0.3
    iterations: int = 5000
    diversity_weight: float = 1.0
    compatibility_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("mutation_prob", "elite_ratio", "crossover_prob", "parent_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.diversity_weight < 0 or self.compatibility_weight < 0:
            raise ValueError("objective weights must be >= 0")

    @property
    def n_elite(self) -> int:
        return min(self.population_size - 1, max(1, round(self.elite_ratio * self.population_size)))

    @property
    def n_parents(self) -> int:
        return min(self.population_size, max(2, round(self.parent_ratio * self.population_size)))


@dataclass
class FitnessHistory:
    """Best-so-far objective per generation; generation 0 is the initial population."""

    best_fitness: list[float] = field(default_factory=list)
    diversity: list[float] = field(default_factory=list)
    compatibility: list[float] = field(default_factory=list)
    initial_best_diversity: float = float("nan")

    def append(self, fit, div, comp):
        self.best_fitness.append(float(fit))
        self.diversity.append(float(div))
        self.compatibility.append(float(comp))

    def __len__(self):
        return len(self.best_fitness)

    def rows(self):
        for g, (f, d, c) in enumerate(zip(self.best_fitness, self.diversity, self.compatibility)):
            yield g, f, d, c

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["generation", "best_fitness", "diversity_term", "compatibility_term"])
            for g, f, d, c in self.rows():
                w.writerow([g, repr(f), repr(d), repr(c)])


@dataclass
class GaResult:
    pool: CoaPool
    history: FitnessHistory
    fitness: float
    diversity: float
    compatibility: float
    config: GaConfig


def random_population(rng, n_pop, n_coa, n_task, n_ag) -> np.ndarray:
    return rng.integers(0, n_ag, size=(n_pop, n_coa, n_task)).astype(np.intc)


def _tournament(rng, fit_parents, n_draws):
    """Binary tournaments among the parent pool; the lower index wins ties."""
    n = fit_parents.shape[0]
    a = rng.integers(0, n, size=n_draws)
    b = rng.integers(0, n, size=n_draws)
    fa, fb = fit_parents[a], fit_parents[b]
    return np.where((fa > fb) | ((fa == fb) & (a <= b)), a, b)


def _rank(fit):
    # descending fitness, lower index first on ties
    return np.lexsort((np.arange(fit.size), -fit))


def run_ga(scenario: Scenario, n_coa: int, config: GaConfig | None = None, *, progress=None) -> GaResult:
    """Evolve a pool of ``n_coa`` condensed COAs maximising diversity + compatibility.

    Each individual is an entire pool. Every generation keeps the elite
    fraction unchanged and fills the rest with children of binary-tournament
    winners drawn from the top ``parent_ratio`` fraction: per-gene uniform
    crossover, per-gene uniform-resample mutation, and load repair after each
    variation step. All randomness for a generation is drawn from one stream
    in a fixed order, so the run is bit-reproducible for a given seed.
    """
    config = config or GaConfig()
    if n_coa < 2:
        raise PoolError("n_coa must be >= 2; diversity is undefined for a single COA")
    n_ag, n_task, t_max = scenario.n_ag, scenario.n_task, scenario.t_max
    if n_ag * t_max < n_task:
        raise InfeasibleScenarioError(f"{n_ag} agents x t_max {t_max} < {n_task} tasks")
    compat = scenario.compat.values
    wd, wc = float(config.diversity_weight), float(config.compatibility_weight)
    rng = np.random.default_rng(config.seed)
    P = config.population_size

    pop = random_population(rng, P, n_coa, n_task, n_ag)
    kernels.repair_population(pop, compat, t_max)
    fit, div, comp = kernels.population_fitness(pop, compat, wd, wc)

    history = FitnessHistory(initial_best_diversity=float(div.max()))
    order = _rank(fit)
    best = pop[order[0]].copy()
    best_f, best_d, best_c = fit[order[0]], div[order[0]], comp[order[0]]
    history.append(best_f, best_d, best_c)

    n_elite, n_parents = config.n_elite, config.n_parents
    n_children = P - n_elite
    for gen in range(1, config.iterations):
        parents = pop[order[:n_parents]]
        fit_parents = fit[order[:n_parents]]
        ia = _tournament(rng, fit_parents, n_children)
        ib = _tournament(rng, fit_parents, n_children)
        children = parents[ia].copy()
        swap = rng.random(children.shape) < config.crossover_prob
        children[swap] = parents[ib][swap]
        kernels.repair_population(children, compat, t_max)
        mutate = rng.random(children.shape) < config.mutation_prob
        fresh = rng.integers(0, n_ag, size=children.shape, dtype=np.intc)
        children[mutate] = fresh[mutate]
        kernels.repair_population(children, compat, t_max)

        cfit, cdiv, ccomp = kernels.population_fitness(children, compat, wd, wc)
        elite = order[:n_elite]
        pop = np.ascontiguousarray(np.concatenate([pop[elite], children]))
        fit = np.concatenate([fit[elite], cfit])
        div = np.concatenate([div[elite], cdiv])
        comp = np.concatenate([comp[elite], ccomp])
        order = _rank(fit)
        top = order[0]
        if fit[top] > best_f:
            best = pop[top].copy()
            best_f, best_d, best_c = fit[top], div[top], comp[top]
        history.append(best_f, best_d, best_c)
        if progress is not None:
            progress(gen, best_f)

    pool = CoaPool(best, n_ag, scenario.fingerprint())
    return GaResult(pool, history, float(best_f), float(best_d), float(best_c), config)


# ---------------------------------------------------------------------------
# Pool files


def pool_to_dict(result_or_pool, compat=None, config: GaConfig | None = None) -> dict:
    if isinstance(result_or_pool, GaResult):
        res = result_or_pool
        pool, fit, div, comp, config = res.pool, res.fitness, res.diversity, res.compatibility, res.config
    else:
        pool = result_or_pool
        div = diversity(pool)
        comp = compatibility_score(pool, compat) if compat is not None else float("nan")
        fit = div + comp
    return {
        "schema_version": POOL_SCHEMA_VERSION,
        "n_coa": pool.n_coa,
        "n_ag": pool.n_ag,
        "n_task": pool.n_task,
        "assignments": pool.assignments.tolist(),
        "fitness": fit,
        "diversity": div,
        "compatibility": comp,
        "config": asdict(config) if config is not None else None,
        "scenario_ref": pool.scenario_ref,
    }


def save_pool(result_or_pool, path, compat=None, config=None) -> None:
    Path(path).write_text(json.dumps(pool_to_dict(result_or_pool, compat, config), indent=1) + "\n", encoding="utf-8")


def load_pool(path) -> CoaPool:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("n_coa", "n_ag", "n_task", "assignments"):
        if key not in data:
            raise PoolError(f"pool file missing {key!r}")
    pool = CoaPool(np.array(data["assignments"]), int(data["n_ag"]), data.get("scenario_ref", ""))
    if pool.n_coa != data["n_coa"] or pool.n_task != data["n_task"]:
        raise PoolError("pool file dimensions disagree with its assignments")
    return pool


def check_pool_matches(pool: CoaPool, scenario: Scenario) -> None:
    if pool.n_ag != scenario.n_ag or pool.n_task != scenario.n_task:
        raise PoolError(
            f"pool is {pool.n_ag} agents x {pool.n_task} tasks; scenario is {scenario.n_ag} x {scenario.n_task}"
        )


def t_max_violations(pool, n_ag: int, t_max: int) -> int:
    a = _pool_array(pool)
    return int(sum(int((agent_loads(row, n_ag) > t_max).sum()) for row in a.reshape(-1, a.shape[-1])))


__all__ = [
    "CoaPool",
    "FitnessHistory",
    "GaConfig",
    "GaResult",
    "PoolError",
    "agent_loads",
    "assignment_matrix",
    "compatibility_score",
    "diversity",
    "fitness",
    "load_pool",
    "pairwise_distance",
    "repair",
    "run_ga",
    "save_pool",
]
