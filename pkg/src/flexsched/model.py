"""Core domain types: tasks, reliability classes, scheduling entities, partitions.

Time is float64 in units of the generator's base tick; all comparisons use
the absolute epsilon ``TIME_EPS``. The simulator additionally offers an
exact arithmetic mode for oracle tests (see ``simkernel``).
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:  # pragma: no cover
    from .gen import GenConfig

TIME_EPS = 1e-9


class TaskClass(enum.Enum):
    """Reliability class: no checking, one redundant copy, or two."""

    NON_VERIFY = "N"
    DOUBLE_CHECK = "V2"
    TRIPLE_CHECK = "V3"

    @property
    def checks(self) -> int:
        """Number of redundant error-checking copies each job requires."""
        if self is TaskClass.NON_VERIFY:
            return 0
        if self is TaskClass.DOUBLE_CHECK:
            return 1
        return 2


class Role(enum.Enum):
    ORIGINAL = 0
    CHECK1 = 1
    CHECK2 = 2


class Scheme(enum.Enum):
    LOCKSTEP = "LockStep"
    HMR = "HMR"
    FLEXSTEP = "FlexStep"


class Outcome(enum.Enum):
    SUCCESS = "Success"
    FAIL = "Fail"


@dataclass(frozen=True)
class Task:
    """Sporadic task with implicit deadline (D = T)."""

    id: int
    wcet: float
    period: float
    cls: TaskClass

    def __post_init__(self):
        if self.wcet <= 0.0:
            raise ValueError(f"task {self.id}: wcet must be > 0")
        if self.period <= 0.0:
            raise ValueError(f"task {self.id}: period must be > 0")
        if self.wcet > self.period + TIME_EPS:
            raise ValueError(f"task {self.id}: wcet {self.wcet} exceeds period {self.period}")

    @property
    def deadline(self) -> float:
        return self.period

    @property
    def utilization(self) -> float:
        return self.wcet / self.period


def task_utilization(task: Task) -> float:
    """u = C / T."""
    return task.wcet / task.period


@dataclass
class TaskSet:
    tasks: list[Task]
    target_util: float
    seed: int = 0
    meta: Optional["GenConfig"] = None

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    @property
    def total_utilization(self) -> float:
        return sum(t.utilization for t in self.tasks)

    def by_class(self, cls: TaskClass) -> list[Task]:
        return [t for t in self.tasks if t.cls is cls]

    def integral_parameters(self) -> bool:
        """True when every wcet and period is an integer (exact-mode eligible)."""
        return all(
            float(t.wcet).is_integer() and float(t.period).is_integer() for t in self.tasks
        )


@dataclass(frozen=True)
class SchedEntity:
    """One schedulable unit: a task's original computation or a checker copy.

    ``release_offset`` and ``rel_deadline`` are measured from the origin
    task's job release; ``density`` is exec / (rel_deadline - release_offset).
    """

    entity_id: int
    task_id: int
    role: Role
    release_offset: float
    rel_deadline: float
    exec_time: float
    density: float

    def __post_init__(self):
        if self.role is Role.ORIGINAL and self.release_offset != 0.0:
            raise ValueError("original entities release at the job release")
        window = self.rel_deadline - self.release_offset
        if window <= 0.0:
            raise ValueError("entity window must be positive")
        if not math.isclose(self.density, self.exec_time / window, rel_tol=0, abs_tol=1e-6):
            raise ValueError("density inconsistent with exec/window")


@dataclass(frozen=True)
class CoreGroup:
    """Physically bound lockstep cores acting as one logical core."""

    member_cores: tuple[int, ...]
    logical_index: int

    def __post_init__(self):
        if len(self.member_cores) not in (1, 2, 3):
            raise ValueError("groups bind 2 or 3 cores (1 allowed for degraded diagnostics)")

    @property
    def leader(self) -> int:
        return self.member_cores[0]


@dataclass
class Partition:
    """Per-core entity assignment plus accumulated density, for one scheme.

    ``assignment`` is keyed by the logical core index (the leader core for
    lockstep groups); ``core_density`` spans all m physical cores, with
    zeros on checker/dead members. ``taskset`` is carried so the simulator
    can recover periods.
    """

    scheme: Scheme
    core_count: int
    assignment: dict[int, list[SchedEntity]]
    core_density: list[float]
    outcome: Outcome
    taskset: TaskSet
    groups: list[CoreGroup] | None = None
    pairs: dict[int, tuple[int, ...]] | None = None  # task_id -> checker cores (HMR)

    def recomputed_density(self) -> list[float]:
        dens = [0.0] * self.core_count
        for core, ents in self.assignment.items():
            dens[core] = sum(e.density for e in ents)
        return dens

    def logical_cores(self) -> list[int]:
        return sorted(self.assignment.keys())

    def entities(self) -> list[SchedEntity]:
        out = []
        for core in sorted(self.assignment):
            out.extend(self.assignment[core])
        return out


# --- serialization -----------------------------------------------------------

def _fmt(x: float) -> str:
    """Exact decimal rendering with 12 significant digits."""
    return f"{x:.12g}"


def q12(x: float) -> float:
    """Quantize to 12 significant decimal digits (what _fmt can render exactly)."""
    return float(_fmt(x))


def dump_taskset(ts: TaskSet, fh: io.TextIOBase) -> None:
    """Line format: header ``n U seed`` then one ``id wcet period class`` per task."""
    fh.write(f"{len(ts.tasks)} {_fmt(ts.target_util)} {ts.seed}\n")
    for t in ts.tasks:
        fh.write(f"{t.id} {_fmt(t.wcet)} {_fmt(t.period)} {t.cls.value}\n")


def dumps_taskset(ts: TaskSet) -> str:
    buf = io.StringIO()
    dump_taskset(ts, buf)
    return buf.getvalue()


def load_taskset(fh: io.TextIOBase) -> TaskSet:
    header = fh.readline().split()
    if len(header) != 3:
        raise ValueError("task set header must be 'n U seed'")
    n, util, seed = int(header[0]), float(header[1]), int(header[2])
    tasks = []
    for _ in range(n):
        parts = fh.readline().split()
        if len(parts) != 4:
            raise ValueError("task line must be 'id wcet period class'")
        tasks.append(
            Task(
                id=int(parts[0]),
                wcet=float(parts[1]),
                period=float(parts[2]),
                cls=TaskClass(parts[3]),
            )
        )
    return TaskSet(tasks=tasks, target_util=util, seed=seed)


def loads_taskset(text: str) -> TaskSet:
    return load_taskset(io.StringIO(text))


def save_taskset(ts: TaskSet, path: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        dump_taskset(ts, fh)


def read_taskset(path: str) -> TaskSet:
    with open(path, "r", encoding="ascii") as fh:
        return load_taskset(fh)


def format_partition(p: Partition) -> str:
    """Diagnostic text: one line per core with density and entity list."""
    lines = [f"scheme {p.scheme.value}, cores {p.core_count}, outcome {p.outcome.value}"]
    if p.groups:
        for g in p.groups:
            lines.append(f"group {g.logical_index}: cores {list(g.member_cores)}")
    for k in range(p.core_count):
        ents = p.assignment.get(k, [])
        shown = ", ".join(
            f"{e.entity_id}(task {e.task_id} {e.role.name.lower()} d={e.density:.4f})" for e in ents
        )
        lines.append(f"core {k}: density {p.core_density[k]:.6f}, entities [{shown}]")
    return "\n".join(lines) + "\n"
