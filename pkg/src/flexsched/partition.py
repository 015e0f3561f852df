"""The three allocation policies compared in the schedulability sweeps.

All three take tasks in descending utilization (triple-check pool first,
then double-check, then the rest) and break density ties by lowest core
index, so partitions are deterministic functions of the task set.

* FlexStep: every entity (original plus checker copies with virtual-deadline
  windows) is placed worst-fit on physical cores, with the copies of one
  task forced onto pairwise distinct cores; schedulable iff every core's
  density stays at most 1.
* LockStep: a rigid statically-grouped platform. When any verification task
  exists, all m cores are bound into lockstep groups (TCLS for triple-check
  demand, DCLS otherwise); each group is one logical EDF core of capacity 1
  and every task on it costs just its own density (the mirrored execution
  burns the group's checker cores, which provide no capacity). An odd
  leftover core has no checker and is unusable. With no verification tasks
  the machine is plain partitioned EDF on m cores.
* HMR (split-lock): each verification task gets a main core plus one or two
  bound checker cores chosen min-density; checking is synchronous, so the
  checker cores are charged the task's own density for the duration of main
  execution. NonVerify tasks prefer cores free of verification load. The
  schedulability verdict comes from simulation (the non-preemption coupling
  breaks the density test); the partition only rejects outright capacity
  violations.
"""

from __future__ import annotations

from .model import (
    TIME_EPS,
    CoreGroup,
    Outcome,
    Partition,
    Role,
    SchedEntity,
    Scheme,
    Task,
    TaskClass,
    TaskSet,
)
from .analysis import split_taskset


class InfeasibleConfigError(ValueError):
    """Not enough cores for the distinct-core placement a class requires."""


def _ordered_pools(ts: TaskSet) -> tuple[list[Task], list[Task], list[Task]]:
    def desc_util(tasks: list[Task]) -> list[Task]:
        return sorted(tasks, key=lambda t: (-t.utilization, t.id))

    return (
        desc_util(ts.by_class(TaskClass.TRIPLE_CHECK)),
        desc_util(ts.by_class(TaskClass.DOUBLE_CHECK)),
        desc_util(ts.by_class(TaskClass.NON_VERIFY)),
    )


def _argmin_core(density: list[float], eligible) -> int:
    best = None
    best_d = None
    for k in eligible:
        if best_d is None or density[k] < best_d:  # strict <: lowest index wins ties
            best, best_d = k, density[k]
    assert best is not None
    return best


def partition_flexstep(ts: TaskSet, m: int) -> Partition:
    """Worst-fit placement of split entities with distinct-core copies."""
    v3, v2, nv = _ordered_pools(ts)
    if v3 and m < 3:
        raise InfeasibleConfigError("triple-check tasks need at least 3 cores")
    if v2 and m < 2:
        raise InfeasibleConfigError("double-check tasks need at least 2 cores")

    entities = split_taskset(ts)
    density = [0.0] * m
    assignment: dict[int, list[SchedEntity]] = {k: [] for k in range(m)}

    def place(entity: SchedEntity, core: int) -> None:
        assignment[core].append(entity)
        density[core] += entity.density

    all_cores = range(m)
    for task in v3 + v2:
        ents = entities[task.id]
        k_o = _argmin_core(density, all_cores)
        place(ents[0], k_o)
        k_1 = _argmin_core(density, (k for k in all_cores if k != k_o))
        place(ents[1], k_1)
        if len(ents) == 3:
            k_2 = _argmin_core(density, (k for k in all_cores if k not in (k_o, k_1)))
            place(ents[2], k_2)
    for task in nv:
        place(entities[task.id][0], _argmin_core(density, all_cores))

    outcome = Outcome.SUCCESS if max(density, default=0.0) <= 1.0 + TIME_EPS else Outcome.FAIL
    return Partition(
        scheme=Scheme.FLEXSTEP,
        core_count=m,
        assignment={k: v for k, v in assignment.items() if v},
        core_density=density,
        outcome=outcome,
        taskset=ts,
    )


def _whole_task_entity(task: Task, entity_id: int) -> SchedEntity:
    # one entity over the full window; lockstep/HMR run the task once per core
    return SchedEntity(
        entity_id=entity_id,
        task_id=task.id,
        role=Role.ORIGINAL,
        release_offset=0.0,
        rel_deadline=task.deadline,
        exec_time=task.wcet,
        density=task.utilization,
    )


def partition_lockstep(ts: TaskSet, m: int) -> Partition:
    """Statically grouped lockstep platform, one logical EDF core per group."""
    if m < 2:
        raise InfeasibleConfigError("lockstep needs at least 2 cores")
    v3, v2, nv = _ordered_pools(ts)

    density = [0.0] * m
    assignment: dict[int, list[SchedEntity]] = {}
    groups: list[CoreGroup] = []
    exhausted = False

    next_eid = 0

    def entity_for(task: Task) -> SchedEntity:
        nonlocal next_eid
        e = _whole_task_entity(task, next_eid)
        next_eid += 1
        return e

    if not v3 and not v2:
        # no binding required: plain partitioned EDF on m single cores
        logical = list(range(m))
        for k in logical:
            assignment[k] = []
        for task in nv:
            k = _argmin_core(density, logical)
            assignment[k].append(entity_for(task))
            density[k] += task.utilization
        outcome = Outcome.SUCCESS if max(density) <= 1.0 + TIME_EPS else Outcome.FAIL
        return Partition(
            scheme=Scheme.LOCKSTEP,
            core_count=m,
            assignment={k: v for k, v in assignment.items() if v},
            core_density=density,
            outcome=outcome,
            taskset=ts,
            groups=[],
        )

    next_core = 0

    def open_group(size: int) -> CoreGroup | None:
        nonlocal next_core, exhausted
        free = m - next_core
        if free <= 0:
            exhausted = True
            return None
        if free < size:
            # not enough cores to complete the group; bind what remains so the
            # diagnostic partition still has a home, and flag the failure
            exhausted = True
            size = free
        members = tuple(range(next_core, next_core + size))
        next_core += size
        g = CoreGroup(member_cores=members, logical_index=len(groups))
        groups.append(g)
        assignment[g.leader] = []
        return g

    def place_pool(pool: list[Task], size: int, own: list[CoreGroup]) -> None:
        nonlocal exhausted
        for task in pool:
            u = task.utilization
            fitting = [g for g in own if density[g.leader] + u <= 1.0 + TIME_EPS]
            if fitting:
                g = min(fitting, key=lambda g: (density[g.leader], g.logical_index))
            else:
                g = open_group(size)
                if g is None:
                    # capacity exhausted: dump on the least-loaded group of the
                    # class (or any group) purely for diagnostics
                    pool_or_all = own or groups
                    if not pool_or_all:
                        g = open_group(size)  # claims whatever cores remain
                    if g is None:
                        g = min(pool_or_all, key=lambda g: (density[g.leader], g.logical_index))
                else:
                    own.append(g)
            assignment[g.leader].append(entity_for(task))
            density[g.leader] += u

    tcls: list[CoreGroup] = []
    dcls: list[CoreGroup] = []
    place_pool(v3, 3, tcls)
    place_pool(v2, 2, dcls)

    # rigid platform: the remaining cores are bound into DCLS pairs as well,
    # hosting (incidentally checked) non-verification work; an odd core has
    # no checker and stays unused
    while m - next_core >= 2:
        g = open_group(2)
        dcls.append(g)

    logical = [g.leader for g in groups]
    for task in nv:
        k = _argmin_core(density, logical)
        assignment[k].append(entity_for(task))
        density[k] += task.utilization

    ok = not exhausted and max(density) <= 1.0 + TIME_EPS
    return Partition(
        scheme=Scheme.LOCKSTEP,
        core_count=m,
        assignment={k: v for k, v in assignment.items() if v},
        core_density=density,
        outcome=Outcome.SUCCESS if ok else Outcome.FAIL,
        taskset=ts,
        groups=groups,
    )


def partition_hmr(ts: TaskSet, m: int) -> Partition:
    """Split-lock pairing with blocking-aware placement.

    A verification job seizes its checker core(s) non-preemptibly while it
    runs, so any task sharing a core with verification work of execution
    time B can be delayed by up to B per job. The allocator keeps such
    colocations safe where it can (placements prefer cores where
    max-blocking + C <= D holds for every resident) and segregates
    verification work onto as few cores as the density budget allows;
    genuinely unsafe placements only happen once the safe cores are
    exhausted, which is exactly when the simulation starts reporting
    misses. Verdict-wise the partition only rejects outright density
    violations; schedulability is decided by simulation.
    """
    v3, v2, nv = _ordered_pools(ts)
    if v3 and m < 3:
        raise InfeasibleConfigError("triple-check tasks need at least 3 cores")
    if (v2 or v3) and m < 2:
        raise InfeasibleConfigError("verification tasks need at least 2 cores")

    density = [0.0] * m
    vsum = [0.0] * m  # total verification execution hosted per core
    residents: dict[int, list[Task]] = {k: [] for k in range(m)}
    has_vload = [False] * m
    assignment: dict[int, list[SchedEntity]] = {k: [] for k in range(m)}
    pairs: dict[int, tuple[int, ...]] = {}
    all_cores = range(m)

    next_eid = 0

    def place(task: Task, core: int, role: Role, verification: bool) -> None:
        nonlocal next_eid
        assignment[core].append(
            SchedEntity(
                entity_id=next_eid,
                task_id=task.id,
                role=role,
                release_offset=0.0,
                rel_deadline=task.deadline,
                exec_time=task.wcet,
                density=task.utilization,
            )
        )
        next_eid += 1
        density[core] += task.utilization
        residents[core].append(task)
        if verification:
            has_vload[core] = True
            vsum[core] += task.wcet

    def safe_for_task(core: int, task: Task, extra_v: float) -> bool:
        # verification seizures do not spread like density: within one short
        # deadline window every colocated verification job may run once, so
        # the whole verification execution sum counts as potential blocking
        if vsum[core] + task.wcet > task.deadline + TIME_EPS:
            return False
        b = vsum[core] + extra_v
        for r in residents[core]:
            if b + r.wcet > r.deadline + TIME_EPS:
                return False
        return True

    def pick(task: Task, exclude: set[int], verification: bool) -> int:
        """Safe placements first (verification concentrates, plain work
        spreads). Unsafe fallbacks never contaminate the cleanest cores:
        a verification overflow goes to the most-contaminated fitting core,
        a plain overflow to the least-contaminated one."""
        u = task.utilization
        extra_v = task.wcet if verification else 0.0
        fits = [
            k for k in all_cores
            if k not in exclude and density[k] + u <= 1.0 + TIME_EPS
        ]
        safe = [k for k in fits if safe_for_task(k, task, extra_v)]
        if safe:
            if verification:
                # pile verification onto already-contaminated cores while safe
                return max(safe, key=lambda k: (vsum[k], -k))
            return _argmin_core(density, safe)
        pool = fits or [k for k in all_cores if k not in exclude]
        if verification:
            return max(pool, key=lambda k: (vsum[k], -k))
        return min(pool, key=lambda k: (vsum[k], density[k], k))

    for task in v3 + v2:
        main = pick(task, exclude=set(), verification=True)
        place(task, main, Role.ORIGINAL, verification=True)
        taken = {main}
        checkers = []
        for role in (Role.CHECK1, Role.CHECK2)[: task.cls.checks]:
            c = pick(task, exclude=taken, verification=True)
            place(task, c, role, verification=True)
            taken.add(c)
            checkers.append(c)
        pairs[task.id] = tuple(checkers)

    for task in nv:
        free = [
            k for k in all_cores
            if not has_vload[k] and density[k] + task.utilization <= 1.0 + TIME_EPS
        ]
        if free:
            k = _argmin_core(density, free)
        else:
            k = pick(task, exclude=set(), verification=False)
        place(task, k, Role.ORIGINAL, verification=False)

    # density above 1 guarantees eventual misses; finer verdicts need simulation
    outcome = Outcome.SUCCESS if max(density, default=0.0) <= 1.0 + TIME_EPS else Outcome.FAIL
    return Partition(
        scheme=Scheme.HMR,
        core_count=m,
        assignment={k: v for k, v in assignment.items() if v},
        core_density=density,
        outcome=outcome,
        taskset=ts,
        pairs=pairs,
    )
