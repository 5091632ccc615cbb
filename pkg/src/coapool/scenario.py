"""World model: tasks, agents, compatibility, kinematics and scenario files."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

SCHEMA_VERSION = 1
DEFAULT_C_MIN = 0.01
DEFAULT_AREA = 1000.0
DEFAULT_DEADLINE_RANGE = (500.0, 5.0e4)
DEFAULT_VELOCITY = 1.0
N_CATEGORIES = 5
COMPLETION_SCALE = 10.0

#: index of the depot node in travel matrices and edge keys
DEPOT = -1


class ScenarioError(ValueError):
    """A scenario violates one of its structural invariants."""


class InfeasibleScenarioError(ScenarioError):
    """The per-agent task cap cannot accommodate every task."""


class ScenarioFormatError(ValueError):
    """A scenario file is malformed. ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Task:
    id: int
    x: float
    y: float
    deadline: float
    category: int = 0

    def __post_init__(self):
        if not self.deadline > 0:
            raise ScenarioError(f"task {self.id}: deadline must be > 0, got {self.deadline}")

    @property
    def location(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Agent:
    id: int
    velocity: float = DEFAULT_VELOCITY
    depot: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.velocity > 0:
            raise ScenarioError(f"agent {self.id}: velocity must be > 0, got {self.velocity}")
        object.__setattr__(self, "depot", (float(self.depot[0]), float(self.depot[1])))


class CompatibilityMatrix:
    """Read-only ``n_ag x n_task`` matrix with entries in ``[c_min, 1]``."""

    def __init__(self, values, c_min: float = DEFAULT_C_MIN):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ScenarioError(f"compatibility must be 2-D, got shape {arr.shape}")
        if not 0 < c_min <= 1:
            raise ScenarioError(f"c_min must lie in (0, 1], got {c_min}")
        if arr.size and (np.any(arr < c_min) or np.any(arr > 1.0) or not np.all(np.isfinite(arr))):
            raise ScenarioError(f"compatibility entries must lie in [{c_min}, 1]")
        arr.setflags(write=False)
        self.values = arr
        self.c_min = float(c_min)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __getitem__(self, idx):
        return self.values[idx]

    def __eq__(self, other):
        if not isinstance(other, CompatibilityMatrix):
            return NotImplemented
        return self.c_min == other.c_min and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"CompatibilityMatrix(shape={self.shape}, c_min={self.c_min})"


def travel_time(origin: Sequence[float], target: Sequence[float], agent: Agent) -> float:
    return math.hypot(target[0] - origin[0], target[1] - origin[1]) / agent.velocity


def completion_time(agent_id: int, task_id: int, compat) -> float:
    """Time for ``agent_id`` to service ``task_id``: ``10 / C[agent, task]``."""
    values = compat.values if isinstance(compat, CompatibilityMatrix) else np.asarray(compat)
    return COMPLETION_SCALE / float(values[agent_id, task_id])


def auto_t_max(n_task: int, n_ag: int) -> int:
    return n_task // n_ag + 10


@dataclass(frozen=True, eq=False)
class Scenario:
    tasks: tuple[Task, ...]
    agents: tuple[Agent, ...]
    compat: CompatibilityMatrix
    t_max: int
    seed: int = 0
    _coords: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "agents", tuple(self.agents))
        if not isinstance(self.compat, CompatibilityMatrix):
            object.__setattr__(self, "compat", CompatibilityMatrix(self.compat))
        if not self.tasks:
            raise ScenarioError("scenario needs at least one task")
        if not self.agents:
            raise ScenarioError("scenario needs at least one agent")
        for i, t in enumerate(self.tasks):
            if t.id != i:
                raise ScenarioError(f"task ids must be dense 0..n-1; position {i} has id {t.id}")
        for i, a in enumerate(self.agents):
            if a.id != i:
                raise ScenarioError(f"agent ids must be dense 0..n-1; position {i} has id {a.id}")
        if self.compat.shape != (self.n_ag, self.n_task):
            raise ScenarioError(
                f"compatibility shape {self.compat.shape} != (n_ag, n_task) = {(self.n_ag, self.n_task)}"
            )
        if int(self.t_max) != self.t_max or self.t_max < 1:
            raise ScenarioError(f"t_max must be a positive integer, got {self.t_max}")
        object.__setattr__(self, "t_max", int(self.t_max))
        if self.n_ag * self.t_max < self.n_task:
            raise InfeasibleScenarioError(
                f"{self.n_ag} agents x t_max {self.t_max} cannot cover {self.n_task} tasks"
            )
        coords = np.array([[t.x, t.y] for t in self.tasks], dtype=np.float64)
        coords.setflags(write=False)
        object.__setattr__(self, "_coords", coords)

    @property
    def n_task(self) -> int:
        return len(self.tasks)

    @property
    def n_ag(self) -> int:
        return len(self.agents)

    @property
    def coords(self) -> np.ndarray:
        return self._coords

    @property
    def deadlines(self) -> np.ndarray:
        return np.array([t.deadline for t in self.tasks], dtype=np.float64)

    def completion_times(self, agent_id: int) -> np.ndarray:
        return COMPLETION_SCALE / self.compat.values[agent_id]

    def travel_matrix(self, agent_id: int, factors: np.ndarray | None = None) -> np.ndarray:
        """Travel times between all nodes for one agent.

        Shape is ``(n_task + 1, n_task + 1)``; the last row/column is the
        agent's depot, so ``DEPOT`` (-1) indexes it directly. ``factors`` is an
        optional multiplicative matrix of the same shape.
        """
        agent = self.agents[agent_id]
        pts = np.vstack([self._coords, np.asarray(agent.depot, dtype=np.float64)[None, :]])
        diff = pts[:, None, :] - pts[None, :, :]
        out = np.hypot(diff[..., 0], diff[..., 1]) / agent.velocity
        if factors is not None:
            out = out * factors
        return out

    def with_deadlines(self, deadlines: Sequence[float]) -> "Scenario":
        tasks = tuple(
            Task(t.id, t.x, t.y, float(d), t.category) for t, d in zip(self.tasks, deadlines, strict=True)
        )
        return Scenario(tasks, self.agents, self.compat, self.t_max, self.seed)

    def with_t_max(self, t_max: int) -> "Scenario":
        return Scenario(self.tasks, self.agents, self.compat, t_max, self.seed)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.tasks == other.tasks
            and self.agents == other.agents
            and self.compat == other.compat
            and self.t_max == other.t_max
            and self.seed == other.seed
        )

    __hash__ = None

    def fingerprint(self) -> str:
        """Short stable identifier used to bind pools to this scenario."""
        blob = json.dumps(scenario_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def sample_deadlines(n_task: int, deadline_range, rng: np.random.Generator) -> np.ndarray:
    lo, hi = deadline_range
    return rng.uniform(lo, hi, size=n_task)


def sample_scenario(
    n_task: int,
    n_ag: int,
    *,
    area: float = DEFAULT_AREA,
    deadline_range: tuple[float, float] = DEFAULT_DEADLINE_RANGE,
    seed: int = 0,
    c_min: float = DEFAULT_C_MIN,
    velocity: float = DEFAULT_VELOCITY,
    t_max: int | None = None,
    depot: tuple[float, float] | None = None,
) -> Scenario:
    """Draw a random scenario; identical arguments give an identical scenario.

    Task locations are uniform over ``[0, area]^2``, deadlines uniform over
    ``deadline_range`` and compatibilities uniform over ``[c_min, 1]``. Every
    agent starts at ``depot`` (the area centre by default).
    """
    if n_task < 1:
        raise ScenarioError(f"n_task must be >= 1, got {n_task}")
    if n_ag < 1:
        raise ScenarioError(f"n_ag must be >= 1, got {n_ag}")
    if not area > 0:
        raise ScenarioError(f"area must be > 0, got {area}")
    lo, hi = deadline_range
    if not 0 < lo <= hi:
        raise ScenarioError(f"deadline range must satisfy 0 < lo <= hi, got {deadline_range}")
    if not 0 < c_min <= 1:
        raise ScenarioError(f"c_min must lie in (0, 1], got {c_min}")
    if not velocity > 0:
        raise ScenarioError(f"velocity must be > 0, got {velocity}")

    rng = np.random.default_rng(seed)
    xy = rng.uniform(0.0, area, size=(n_task, 2))
    deadlines = sample_deadlines(n_task, deadline_range, rng)
    categories = rng.integers(0, N_CATEGORIES, size=n_task)
    compat = rng.uniform(c_min, 1.0, size=(n_ag, n_task))

    if depot is None:
        depot = (area / 2.0, area / 2.0)
    tasks = [
        Task(i, float(xy[i, 0]), float(xy[i, 1]), float(deadlines[i]), int(categories[i]))
        for i in range(n_task)
    ]
    agents = [Agent(j, velocity, depot) for j in range(n_ag)]
    if t_max is None:
        t_max = auto_t_max(n_task, n_ag)
    return Scenario(tasks, agents, CompatibilityMatrix(compat, c_min), t_max, seed)


# ---------------------------------------------------------------------------
# JSON I/O


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tasks": [
            {"id": t.id, "x": t.x, "y": t.y, "deadline": t.deadline, "category": t.category}
            for t in scenario.tasks
        ],
        "agents": [
            {"id": a.id, "velocity": a.velocity, "depot": [a.depot[0], a.depot[1]]}
            for a in scenario.agents
        ],
        "compatibility": scenario.compat.values.tolist(),
        "c_min": scenario.compat.c_min,
        "t_max": scenario.t_max,
        "seed": scenario.seed,
    }


def _require(obj: dict, key: str, where: str):
    if not isinstance(obj, dict):
        raise ScenarioFormatError(where, "expected an object")
    if key not in obj:
        raise ScenarioFormatError(key, f"missing in {where}")
    return obj[key]


def _number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioFormatError(name, f"expected a number, got {value!r}")
    return float(value)


def _integer(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioFormatError(name, f"expected an integer, got {value!r}")
    return value


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioFormatError("<root>", "expected a JSON object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioFormatError("schema_version", f"unsupported version {version!r}")

    raw_tasks = _require(data, "tasks", "scenario")
    if not isinstance(raw_tasks, list):
        raise ScenarioFormatError("tasks", "expected an array")
    tasks = []
    for k, rt in enumerate(raw_tasks):
        where = f"tasks[{k}]"
        tasks.append(
            Task(
                _integer(_require(rt, "id", where), "id"),
                _number(_require(rt, "x", where), "x"),
                _number(_require(rt, "y", where), "y"),
                _number(_require(rt, "deadline", where), "deadline"),
                _integer(rt.get("category", 0), "category"),
            )
        )

    raw_agents = _require(data, "agents", "scenario")
    if not isinstance(raw_agents, list):
        raise ScenarioFormatError("agents", "expected an array")
    agents = []
    for k, ra in enumerate(raw_agents):
        where = f"agents[{k}]"
        depot = _require(ra, "depot", where)
        if not isinstance(depot, list) or len(depot) != 2:
            raise ScenarioFormatError("depot", f"expected [x, y] in {where}")
        agents.append(
            Agent(
                _integer(_require(ra, "id", where), "id"),
                _number(_require(ra, "velocity", where), "velocity"),
                (_number(depot[0], "depot"), _number(depot[1], "depot")),
            )
        )

    rows = _require(data, "compatibility", "scenario")
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise ScenarioFormatError("compatibility", "expected a 2-D array")
    if len(rows) != len(agents):
        raise ScenarioError(f"compatibility has {len(rows)} rows, expected n_ag = {len(agents)}")
    for r in rows:
        if len(r) != len(tasks):
            raise ScenarioError(f"compatibility row has {len(r)} entries, expected n_task = {len(tasks)}")
        for v in r:
            _number(v, "compatibility")
    c_min = _number(data.get("c_min", DEFAULT_C_MIN), "c_min")
    compat = CompatibilityMatrix(rows, c_min) if rows else CompatibilityMatrix(np.zeros((0, 0)), c_min)

    t_max = _integer(_require(data, "t_max", "scenario"), "t_max")
    seed = _integer(data.get("seed", 0), "seed")
    return Scenario(tasks, agents, compat, t_max, seed)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=1) + "\n", encoding="utf-8")


def load_scenario(path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError("<json>", str(exc)) from exc
    return scenario_from_dict(data)
