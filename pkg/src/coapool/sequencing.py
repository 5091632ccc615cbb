"""Single-agent task sequencing as an event-driven simulator with masking.

One :class:`SequencerSim` follows one agent through its assigned tasks. At
each decision instant a policy picks an unmasked task; the simulator moves the
agent there, services it and marks whatever expired meanwhile. Three
policies are provided: uniform random, min-slack greedy, and an exact bitmask
DP that maximises the number of tasks finished by their deadlines.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .scenario import DEPOT, Scenario

log = logging.getLogger(__name__)

DEFAULT_ORACLE_LIMIT = 16
POLICIES = ("random", "greedy", "exact")


class MaskedTaskError(ValueError):
    """A policy chose a task that the mask hides."""


class OracleLimitError(ValueError):
    """The exact sequencer was asked to handle more tasks than its limit."""


def reward(n_exp: int) -> float:
    """Penalty growing exponentially with the number of expired tasks; 0 when none."""
    if n_exp < 0:
        raise ValueError("n_exp must be >= 0")
    return -math.exp(0.1 * n_exp) + 1.0


@dataclass
class TaskGraphState:
    """Snapshot at a decision instant.

    ``features`` rows are ``[x, y, arrival_time, completion_time,
    time_to_deadline]`` for every task in the scenario.
    """

    features: np.ndarray
    mask: np.ndarray
    clock: float
    position: tuple[float, float]

    @property
    def available(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


@dataclass
class Step:
    task_id: int
    depart_time: float
    arrive_time: float
    finish_time: float
    deadline: float


@dataclass
class Trajectory:
    agent_id: int
    steps: list[Step] = field(default_factory=list)
    expired: list[int] = field(default_factory=list)
    final_clock: float = 0.0
    rewards: list[float] = field(default_factory=list)
    fallback: str | None = None

    @property
    def order(self) -> list[int]:
        return [s.task_id for s in self.steps]

    @property
    def completed_count(self) -> int:
        return len(self.steps)

    @property
    def expired_count(self) -> int:
        return len(self.expired)

    def legs(self):
        """Traversed ``(from_node, to_node)`` pairs, starting at the depot."""
        prev = DEPOT
        for s in self.steps:
            yield prev, s.task_id
            prev = s.task_id

    def to_csv(self, path, deadlines=None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["task_id", "depart_time", "arrive_time", "finish_time", "deadline", "status"])
            for s in self.steps:
                w.writerow([s.task_id, repr(s.depart_time), repr(s.arrive_time), repr(s.finish_time),
                            repr(s.deadline), "completed"])
            for t in self.expired:
                d = "" if deadlines is None else repr(float(deadlines[t]))
                w.writerow([t, "", "", "", d, "expired"])


class SequencerSim:
    """Event-driven simulator for one agent over its assigned task set.

    ``travel`` overrides the agent's ``(n_task + 1, n_task + 1)`` travel-time
    matrix (last node is the depot); robustness experiments pass inflated
    matrices here.
    """

    def __init__(self, scenario: Scenario, agent_id: int, assigned, travel: np.ndarray | None = None):
        self.scenario = scenario
        self.agent_id = agent_id
        n = scenario.n_task
        self.assigned = np.zeros(n, dtype=bool)
        idx = np.asarray(list(assigned), dtype=np.intp)
        self.assigned[idx] = True
        self.travel = scenario.travel_matrix(agent_id) if travel is None else np.asarray(travel, dtype=np.float64)
        if self.travel.shape != (n + 1, n + 1):
            raise ValueError(f"travel matrix must be {(n + 1, n + 1)}, got {self.travel.shape}")
        self.comp = scenario.completion_times(agent_id)
        self.deadline = scenario.deadlines
        self.coords = scenario.coords
        self.depot = scenario.agents[agent_id].depot
        self.reset()

    def reset(self):
        self.clock = 0.0
        self.node = DEPOT
        self.completed = np.zeros_like(self.assigned)
        self.expired = np.zeros_like(self.assigned)
        self.trajectory = Trajectory(self.agent_id)
        self.done = not self._mask().any()
        if self.done:
            self._finish()

    @property
    def position(self) -> tuple[float, float]:
        if self.node == DEPOT:
            return self.depot
        return (float(self.coords[self.node, 0]), float(self.coords[self.node, 1]))

    @property
    def assigned_ids(self) -> np.ndarray:
        return np.flatnonzero(self.assigned)

    def _arrival(self) -> np.ndarray:
        return self.travel[self.node, :-1]

    def _mask(self) -> np.ndarray:
        arrival = self._arrival()
        finish = self.clock + arrival + self.comp
        return (
            self.assigned
            & ~self.completed
            & ~self.expired
            & (self.deadline - self.clock > 0)
            & (finish <= self.deadline)
        )

    def state(self) -> TaskGraphState:
        arrival = self._arrival()
        features = np.column_stack(
            [self.coords[:, 0], self.coords[:, 1], arrival, self.comp, self.deadline - self.clock]
        )
        return TaskGraphState(features, self._mask().astype(np.int8), self.clock, self.position)

    def _finish(self):
        # nothing left is reachable in time: every unserved assigned task is lost
        lost = self.assigned & ~self.completed & ~self.expired
        self.expired |= lost
        for t in np.flatnonzero(lost):
            self.trajectory.expired.append(int(t))
        self.trajectory.final_clock = self.clock

    def step(self, task_id: int):
        """Serve ``task_id``; returns ``(reward, next_state, done)``."""
        if self.done:
            raise MaskedTaskError("episode already finished")
        task_id = int(task_id)
        if not (0 <= task_id < self.assigned.size) or not self._mask()[task_id]:
            raise MaskedTaskError(f"task {task_id} is masked for agent {self.agent_id}")
        depart = self.clock
        leg = float(self.travel[self.node, task_id])
        arrive = depart + leg
        finish = depart + leg + float(self.comp[task_id])
        self.clock = finish
        self.node = task_id
        self.completed[task_id] = True
        self.trajectory.steps.append(Step(task_id, depart, arrive, finish, float(self.deadline[task_id])))

        newly = self.assigned & ~self.completed & ~self.expired & (self.deadline < self.clock)
        self.expired |= newly
        for t in np.flatnonzero(newly):
            self.trajectory.expired.append(int(t))
        self.done = not self._mask().any()
        if self.done:
            self._finish()
        r = reward(int(self.expired.sum()))
        self.trajectory.rewards.append(r)
        return r, self.state(), self.done

    def run(self, choose) -> Trajectory:
        """Drive the episode with ``choose(sim) -> task_id`` until everything is masked."""
        while not self.done:
            self.step(choose(self))
        return self.trajectory


def build_state(sim: SequencerSim) -> TaskGraphState:
    return sim.state()


def apply_mask(sim: SequencerSim, state: TaskGraphState) -> TaskGraphState:
    """Recompute the mask of ``state`` from the simulator's bookkeeping."""
    clock = state.clock
    f = state.features
    mask = (
        sim.assigned
        & ~sim.completed
        & ~sim.expired
        & (f[:, 4] > 0)
        & (clock + f[:, 2] + f[:, 3] <= sim.deadline)
    )
    return TaskGraphState(f, mask.astype(np.int8), clock, state.position)


# ---------------------------------------------------------------------------
# Policies


def sequence_random(sim: SequencerSim, rng: np.random.Generator) -> Trajectory:
    def choose(s):
        return int(rng.choice(np.flatnonzero(s._mask())))

    return sim.run(choose)


def _greedy_choice(s: SequencerSim) -> int:
    avail = np.flatnonzero(s._mask())
    arrival = s._arrival()[avail]
    slack = s.deadline[avail] - (s.clock + arrival + s.comp[avail])
    # lexsort: last key is primary
    return int(avail[np.lexsort((avail, arrival, slack))[0]])


def sequence_greedy(sim: SequencerSim) -> Trajectory:
    """Always serve the available task with the least slack."""
    return sim.run(_greedy_choice)


def exact_order(sim: SequencerSim, limit: int = DEFAULT_ORACLE_LIMIT) -> list[int]:
    if sim.clock != 0.0 or sim.completed.any():
        raise ValueError("exact sequencing needs a fresh simulator")
    ids = sim.assigned_ids
    if ids.size > limit:
        raise OracleLimitError(f"oracle limit exceeded: {ids.size} tasks > limit {limit}")
    nodes = np.append(ids, sim.travel.shape[0] - 1)
    sub = np.ascontiguousarray(sim.travel[np.ix_(nodes, nodes)])
    local, _ = kernels.exact_sequence(sub, sim.comp[ids], sim.deadline[ids], sim.clock)
    return [int(ids[i]) for i in local]


def sequence_exact(sim: SequencerSim, limit: int = DEFAULT_ORACLE_LIMIT) -> Trajectory:
    """Serve the largest possible number of tasks by their deadlines.

    Among orders achieving that count, the one finishing earliest is used.
    Raises :class:`OracleLimitError` when more than ``limit`` tasks are
    assigned.
    """
    order = exact_order(sim, limit)
    it = iter(order)
    return sim.run(lambda s: next(it))


def run_policy(sim: SequencerSim, policy: str, rng=None, oracle_limit: int = DEFAULT_ORACLE_LIMIT) -> Trajectory:
    """Dispatch by name; ``exact`` falls back to ``greedy`` past the oracle limit."""
    if policy == "random":
        if rng is None:
            raise ValueError("random policy needs an rng")
        return sequence_random(sim, rng)
    if policy == "greedy":
        return sequence_greedy(sim)
    if policy == "exact":
        try:
            return sequence_exact(sim, oracle_limit)
        except OracleLimitError as exc:
            log.info("agent %d: %s; falling back to greedy", sim.agent_id, exc)
            traj = sequence_greedy(sim)
            traj.fallback = str(exc)
            return traj
    raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")


def mape(candidate_counts, oracle_counts) -> float:
    """Mean absolute percentage error of candidate counts against oracle counts.

    Entries whose oracle count is zero are skipped (and logged). Returns NaN
    if every entry is skipped.
    """
    cand = np.asarray(candidate_counts, dtype=np.float64)
    orac = np.asarray(oracle_counts, dtype=np.float64)
    if cand.shape != orac.shape:
        raise ValueError(f"length mismatch: {cand.shape} vs {orac.shape}")
    keep = orac > 0
    if not keep.all():
        log.warning("mape: skipping %d entries with zero oracle count: %s",
                    int((~keep).sum()), np.flatnonzero(~keep).tolist())
    if not keep.any():
        return float("nan")
    return float(np.mean(np.abs(cand[keep] - orac[keep]) / orac[keep]) * 100.0)
