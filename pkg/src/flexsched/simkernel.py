"""Discrete-event, preemptive, per-core EDF simulation of a Partition.

One engine serves all three schemes:

* FlexStep: every placed entity is an ordinary preemptible EDF job stream.
  Checker entities release either at the virtual deadline (default) or as
  soon as the original starts running, never executing ahead of the
  original's completed work (progress coupling).
* LockStep: each lockstep group is one logical core; jobs execute once on
  it (mirroring is implicit).
* HMR: a verification job running on its main core simultaneously occupies
  its bound checker core(s). Occupancy displaces NonVerify work and cannot
  be preempted by it; a running verification job is equally protected on
  its main core. Overlapping occupancy demands on one checker core are
  serialized by the mains' EDF priorities; the losing main stalls and its
  core idles (the one sanctioned work-conservation exception).

Releases are synchronous periodic: every origin task releases at t = 0 and
every period thereafter. Jobs past their absolute deadline with work left
are recorded as misses and dropped. Two time representations are
available: float64 with a 1e-9 epsilon, and an exact mode for
integer-parameter task sets where times are integers scaled by 2^54 so
that the float64 virtual-deadline offsets embed exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from heapq import heappush, heappop
from typing import Callable, NamedTuple, Optional

from .model import Outcome, Partition, Role, SchedEntity, Scheme, TaskSet, TIME_EPS
from . import partition as _partition

_SCALE_BITS = 54
_SCALE = 1 << _SCALE_BITS

# event kinds
_RELEASE, _EXPIRE, _COMPLETE, _COUPLE = 0, 1, 2, 3


class ReleaseModel(enum.Enum):
    SYNCHRONOUS_PERIODIC = "SynchronousPeriodic"


class CheckerRelease(enum.Enum):
    AT_VIRTUAL_DEADLINE = "AtVirtualDeadline"
    AT_ORIGINAL_START = "AtOriginalStart"


class TimeMode(enum.Enum):
    FLOAT = "Float"
    EXACT = "ExactInteger"


@dataclass
class SimConfig:
    horizon: float
    release_model: ReleaseModel = ReleaseModel.SYNCHRONOUS_PERIODIC
    checker_release_mode: CheckerRelease = CheckerRelease.AT_VIRTUAL_DEADLINE
    time_mode: TimeMode = TimeMode.FLOAT
    stop_at_first_miss: bool = False

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")


@dataclass
class SimResult:
    misses: list[tuple[int, int, float]]  # (entity_id, job_index, abs_deadline)
    preemptions: int
    max_response: dict[int, float]
    busiest_core_util: float

    @property
    def schedulable(self) -> bool:
        return not self.misses


class Horizon(NamedTuple):
    value: float
    exact: bool


def hyperperiod_horizon(ts: TaskSet, cap: float) -> Horizon:
    """lcm of the (integer) periods, capped at ``cap`` (capped => approximate)."""
    periods = []
    for t in ts.tasks:
        if not float(t.period).is_integer():
            raise ValueError("hyperperiod needs integer periods")
        periods.append(int(t.period))
    if not periods:
        return Horizon(float(cap), False)
    h = 1
    for p in periods:
        h = math.lcm(h, p)
        if h > cap:
            return Horizon(float(cap), False)
    return Horizon(float(h), True)


def default_horizon(ts: TaskSet, cap: float = 1.0e6) -> float:
    """min(2 * hyperperiod, cap); for non-integer periods (no finite
    hyperperiod) the surrogate is min(10 * max period, cap), at least ten
    jobs of every task."""
    if ts.integral_parameters():
        h = hyperperiod_horizon(ts, cap)
        return min(2.0 * h.value, cap) if h.exact else cap
    return min(10.0 * max(t.period for t in ts.tasks), cap)


# --- internal runtime structures ---------------------------------------------


class _Ent:
    __slots__ = (
        "eid", "task_id", "role", "core", "offset", "rel_deadline", "exec_time",
        "period", "is_vmain", "checkers", "origin", "coupled", "next_k",
    )

    def __init__(self, e: SchedEntity, core: int, period, offset, rel_deadline, exec_time):
        self.eid = e.entity_id
        self.task_id = e.task_id
        self.role = e.role
        self.core = core
        self.period = period
        self.offset = offset
        self.rel_deadline = rel_deadline
        self.exec_time = exec_time
        self.is_vmain = False      # HMR: original of a verification task
        self.checkers = ()         # HMR: bound checker cores
        self.origin = None         # coupled mode: the task's original _Ent
        self.coupled = False       # coupled mode: release gated on origin start
        self.next_k = 0


class _Job:
    __slots__ = ("ent", "idx", "release", "deadline", "remaining", "executed", "done")

    def __init__(self, ent: _Ent, idx: int, release, deadline, remaining):
        self.ent = ent
        self.idx = idx
        self.release = release
        self.deadline = deadline
        self.remaining = remaining
        self.executed = 0
        self.done = False


class _Occupancy:
    """Checker core busy mirroring a remote main's verification job."""

    __slots__ = ("job",)

    def __init__(self, job: _Job):
        self.job = job


class _Core:
    __slots__ = ("k", "ready", "running", "last_t", "busy")

    def __init__(self, k, t0):
        self.k = k
        self.ready: list[_Job] = []
        self.running = None  # _Job | _Occupancy | None
        self.last_t = t0
        self.busy = 0


def _exact_scaled(x: float) -> int:
    fr = Fraction(x)
    num = fr.numerator * _SCALE
    if num % fr.denominator:
        raise ValueError(f"time value {x} not representable in exact mode")
    return num // fr.denominator


def simulate(
    partition: Partition,
    cfg: SimConfig,
    trace: Optional[Callable[[str], None]] = None,
    only_cores: Optional[set[int]] = None,
) -> SimResult:
    """Run the partition under its scheme's semantics and report misses.

    ``only_cores`` restricts the simulation to the given cores plus their
    bound checker cores. That is sound exactly when the excluded cores are
    free of cross-core coupling (no verification mains or targets) and pass
    the density test on their own; the HMR verdict path relies on it.
    """
    if cfg.release_model is not ReleaseModel.SYNCHRONOUS_PERIODIC:
        raise ValueError("only synchronous periodic releases are supported")
    ts = partition.taskset
    scheme = partition.scheme
    exact = cfg.time_mode is TimeMode.EXACT

    if exact:
        if not ts.integral_parameters():
            raise ValueError("exact mode requires integer wcet and period")
        if not float(cfg.horizon).is_integer():
            raise ValueError("exact mode requires an integer horizon")
        horizon = int(cfg.horizon) * _SCALE
        eps = 0
        conv = _exact_scaled
        to_time = lambda v: v / _SCALE
    else:
        horizon = float(cfg.horizon)
        eps = TIME_EPS
        conv = float
        to_time = float

    period_of = {t.id: t.period for t in ts.tasks}
    coupled_mode = (
        scheme is Scheme.FLEXSTEP
        and cfg.checker_release_mode is CheckerRelease.AT_ORIGINAL_START
    )

    ents: list[_Ent] = []
    originals: dict[int, _Ent] = {}
    for core in sorted(partition.assignment):
        if only_cores is not None and core not in only_cores:
            continue
        for e in partition.assignment[core]:
            if scheme is Scheme.HMR and e.role is not Role.ORIGINAL:
                continue  # HMR mirrors are occupancy, not jobs
            ent = _Ent(
                e, core,
                period=conv(period_of[e.task_id]),
                offset=conv(e.release_offset),
                rel_deadline=conv(e.rel_deadline),
                exec_time=conv(e.exec_time),
            )
            ents.append(ent)
            if e.role is Role.ORIGINAL:
                originals[e.task_id] = ent

    if scheme is Scheme.HMR:
        pairs = partition.pairs or {}
        for ent in ents:
            ckrs = pairs.get(ent.task_id, ())
            if ckrs:
                ent.is_vmain = True
                ent.checkers = tuple(ckrs)
    if coupled_mode:
        for ent in ents:
            if ent.role is not Role.ORIGINAL:
                ent.origin = originals[ent.task_id]
                ent.coupled = True
                ent.offset = 0  # release gated on origin start instead

    core_ids = sorted({ent.core for ent in ents})
    if scheme is Scheme.HMR:
        core_ids = sorted(set(core_ids) | {c for ent in ents for c in ent.checkers})
    cores = {k: _Core(k, 0) for k in core_ids}

    # coupled bookkeeping: origin ent -> live origin job per index
    origin_jobs: dict[tuple[int, int], _Job] = {}
    spawned: set[tuple[int, int]] = set()

    heap: list = []
    seq = 0

    def push(t, kind, payload):
        nonlocal seq
        heappush(heap, (t, kind, seq, payload))
        seq += 1

    for ent in ents:
        if ent.coupled:
            continue  # spawned when the origin job first runs
        first = ent.offset
        if first < horizon:
            push(first, _RELEASE, ent)

    misses: list[tuple[int, int, float]] = []
    preemptions = 0
    max_response: dict[int, float] = {}

    emit = trace

    def advance(core: _Core, t):
        run = core.running
        dt = t - core.last_t
        if dt <= 0:
            core.last_t = t
            return
        if run is not None:
            core.busy += dt
            if run.__class__ is _Job:
                run.remaining -= dt
                run.executed += dt
        core.last_t = t

    def finish(job: _Job, t):
        job.done = True
        core = cores[job.ent.core]
        if core.running is job:
            core.running = None
        if job in core.ready:
            core.ready.remove(job)
        resp = to_time(t - job.release)
        prev = max_response.get(job.ent.eid)
        if prev is None or resp > prev:
            max_response[job.ent.eid] = resp
        if emit:
            emit(f"t={to_time(t):g} core={core.k} event=complete entity={job.ent.eid} job={job.idx}")

    def record_miss(job: _Job, t):
        job.done = True
        core = cores[job.ent.core]
        if core.running is job:
            core.running = None
        if job in core.ready:
            core.ready.remove(job)
        misses.append((job.ent.eid, job.idx, to_time(job.deadline)))
        if emit:
            emit(f"t={to_time(t):g} core={core.k} event=miss entity={job.ent.eid} job={job.idx}")

    def spawn_coupled(origin_job: _Job, t):
        """Release the checker jobs of a task once its original first runs."""
        key = (origin_job.ent.task_id, origin_job.idx)
        if key in spawned:
            return
        spawned.add(key)
        base = origin_job.idx * origin_job.ent.period
        for ent in ents:
            if ent.coupled and ent.origin is origin_job.ent:
                deadline = base + ent.rel_deadline
                job = _Job(ent, origin_job.idx, t, deadline, ent.exec_time)
                cores[ent.core].ready.append(job)
                push(deadline, _EXPIRE, job)
                if emit:
                    emit(f"t={to_time(t):g} core={ent.core} event=release entity={ent.eid} job={job.idx}")

    def eligible(job: _Job) -> bool:
        """Coupled checkers may not run ahead of the original's progress."""
        ent = job.ent
        if not ent.coupled:
            return True
        og = origin_jobs.get((ent.task_id, job.idx))
        if og is None:
            return True
        if og.executed - job.executed > eps:
            return True
        if og.done:
            return False  # original finished or was dropped: budget exhausted
        return cores[ent.origin.core].running is og  # running together keeps gap >= 0

    def edf_pick(core: _Core):
        best = None
        bd = None
        for j in core.ready:
            if j.done:
                continue
            if best is None or (j.deadline, j.ent.eid) < bd:
                if eligible(j):
                    best = j
                    bd = (j.deadline, j.ent.eid)
        return best

    def start(core: _Core, item, t):
        nonlocal preemptions
        prev = core.running
        if prev is item:
            return
        if prev is not None and prev.__class__ is _Job and not prev.done and prev.remaining > eps:
            preemptions += 1
            if emit:
                emit(f"t={to_time(t):g} core={core.k} event=preempt entity={prev.ent.eid} job={prev.idx}")
        core.running = item
        if item is not None and item.__class__ is _Job:
            if emit:
                emit(f"t={to_time(t):g} core={core.k} event=dispatch entity={item.ent.eid} job={item.idx}")
            push(t + item.remaining, _COMPLETE, core.k)
            if item.ent.coupled:
                og = origin_jobs.get((item.ent.task_id, item.idx))
                if og is not None:
                    origin_running = not og.done and cores[item.ent.origin.core].running is og
                    if not origin_running:
                        # gap shrinks while the checker runs alone; wake at exhaustion
                        gap = og.executed - item.executed
                        if eps < gap < item.remaining:
                            push(t + gap, _COUPLE, core.k)
            if item.ent.role is Role.ORIGINAL and coupled_mode:
                spawn_coupled(item, t)

    def dispatch_edf(core: _Core, t):
        pick = edf_pick(core)
        start(core, pick, t)

    def dispatch_hmr(t):
        # Per core: EDF-ordered candidates, with NonVerify demoted below all
        # verification jobs while a verification job holds the core (it
        # cannot be preempted by NonVerify work). A verification main may
        # run only if its bound checker cores are granted to it; grants go
        # in global EDF order. A stalled main is bypassed: the next local
        # candidate runs instead of idling the core.
        order: dict[int, list[_Job]] = {}
        for k in hmr_coupled:
            core = cores[k]
            run = core.running
            locked = (
                run is not None
                and run.__class__ is _Job
                and run.ent.is_vmain
                and not run.done
                and run.remaining > eps
            )
            cand = [j for j in core.ready if not j.done]
            if locked:
                cand.sort(key=lambda j: (not j.ent.is_vmain, j.deadline, j.ent.eid))
            else:
                cand.sort(key=lambda j: (j.deadline, j.ent.eid))
            order[k] = cand

        # reachable mains: the leading run of verification jobs on each core
        reachable = []
        for k in hmr_coupled:
            for j in order[k]:
                if j.ent.is_vmain:
                    reachable.append(j)
                else:
                    break
        reachable.sort(key=lambda j: (j.deadline, j.ent.eid))

        assigned: dict[int, object] = {}
        for j in reachable:
            need = (j.ent.core,) + j.ent.checkers
            if any(c in assigned for c in need):
                continue  # stalls on an occupied checker (or a taken core)
            assigned[j.ent.core] = j
            for c in j.ent.checkers:
                assigned[c] = _Occupancy(j)

        for k in hmr_coupled:
            item = assigned.get(k)
            if item is None:
                for j in order[k]:
                    if not j.ent.is_vmain:
                        item = j  # first non-stalled candidate
                        break
            start(cores[k], item, t)

    independent = not coupled_mode and scheme is not Scheme.HMR

    # HMR interplay is confined to cores hosting verification mains or bound
    # as checker targets; everything else is an independent EDF core
    hmr_coupled: set[int] = set()
    if scheme is Scheme.HMR:
        for ent in ents:
            if ent.is_vmain:
                hmr_coupled.add(ent.core)
                hmr_coupled.update(ent.checkers)

    def redispatch(dirty, t):
        if scheme is Scheme.HMR:
            if dirty & hmr_coupled:
                dispatch_hmr(t)
            for k in dirty - hmr_coupled:
                dispatch_edf(cores[k], t)
        elif independent:
            for k in dirty:
                dispatch_edf(cores[k], t)
        else:
            # coupled mode: originals dispatched in the first pass may unblock
            # or spawn checker jobs picked up by the second pass
            for core in cores.values():
                dispatch_edf(core, t)
            for core in cores.values():
                dispatch_edf(core, t)

    stop = False
    end_t = horizon
    while heap and not stop:
        t = heap[0][0]
        if t > horizon:
            break
        end_t = t
        batch = []
        while heap and heap[0][0] == t:
            batch.append(heappop(heap))

        if coupled_mode:
            dirty = set(cores)
        else:
            dirty = set()
            for _, kind, _, payload in batch:
                dirty.add(payload.ent.core if kind == _EXPIRE else
                          payload if kind == _COMPLETE else payload.core)
            if scheme is Scheme.HMR and dirty & hmr_coupled:
                dirty |= hmr_coupled  # occupancy state may change on all of them
        for k in dirty:
            advance(cores[k], t)

        # completions: any advanced running job that ran dry
        for k in dirty:
            run = cores[k].running
            if run is not None and run.__class__ is _Job and not run.done and run.remaining <= eps:
                finish(run, t)

        for _, kind, _, payload in batch:
            if kind == _EXPIRE:
                job = payload
                if job.done:
                    continue
                if job.remaining <= eps:
                    finish(job, t)
                else:
                    record_miss(job, t)
                    if cfg.stop_at_first_miss:
                        stop = True
            elif kind == _RELEASE:
                ent = payload
                k_idx = ent.next_k
                ent.next_k += 1
                base = k_idx * ent.period
                job = _Job(ent, k_idx, base + ent.offset, base + ent.rel_deadline, ent.exec_time)
                cores[ent.core].ready.append(job)
                if ent.role is Role.ORIGINAL and coupled_mode:
                    origin_jobs[(ent.task_id, k_idx)] = job
                push(job.deadline, _EXPIRE, job)
                nxt = (k_idx + 1) * ent.period + ent.offset
                if nxt < horizon:
                    push(nxt, _RELEASE, ent)
                if emit:
                    emit(f"t={to_time(t):g} core={ent.core} event=release entity={ent.eid} job={k_idx}")
            # _COMPLETE and _COUPLE only wake the loop

        if not stop:
            redispatch(dirty, t)

    final_t = end_t if stop else horizon
    for core in cores.values():
        if core.last_t < final_t:
            advance(core, final_t)

    span = to_time(final_t)
    busiest = max((to_time(c.busy) / span for c in cores.values()), default=0.0) if span > 0 else 0.0
    return SimResult(
        misses=misses,
        preemptions=preemptions,
        max_response=max_response,
        busiest_core_util=busiest,
    )


# --- verdicts -----------------------------------------------------------------


def _partition_for(ts: TaskSet, m: int, scheme: Scheme) -> Partition:
    if scheme is Scheme.FLEXSTEP:
        return _partition.partition_flexstep(ts, m)
    if scheme is Scheme.LOCKSTEP:
        return _partition.partition_lockstep(ts, m)
    return _partition.partition_hmr(ts, m)


def schedulable(
    ts: TaskSet,
    m: int,
    scheme: Scheme,
    verdict: str = "analytic",
    horizon: Optional[float] = None,
) -> bool:
    """Schedulability verdict for one task set under one scheme.

    verdict="analytic": FlexStep and LockStep use their density tests; HMR,
    which has no analytic test, requires a feasible allocation plus a
    miss-free simulation. verdict="sim" forces simulation for all three.
    """
    if verdict not in ("analytic", "sim"):
        raise ValueError("verdict must be 'analytic' or 'sim'")
    p = _partition_for(ts, m, scheme)
    needs_sim = verdict == "sim" or scheme is Scheme.HMR
    if not needs_sim:
        return p.outcome is Outcome.SUCCESS
    if scheme is Scheme.HMR and p.outcome is Outcome.FAIL:
        return False  # allocated density above 1 guarantees misses
    cfg = SimConfig(
        horizon=horizon if horizon is not None else default_horizon(ts),
        stop_at_first_miss=True,
    )
    only = None
    if scheme is Scheme.HMR and verdict != "sim":
        # cores without verification interplay are plain EDF cores; with
        # density at most 1 (guaranteed by outcome Success) they cannot
        # miss, so only the coupled cores need simulating
        coupled: set[int] = set()
        for t_id, ckrs in (p.pairs or {}).items():
            coupled.update(ckrs)
        for core, es in p.assignment.items():
            if any(e.task_id in (p.pairs or {}) and e.role is Role.ORIGINAL for e in es):
                coupled.add(core)
        if not coupled:
            return True
        only = coupled
    return simulate(p, cfg, only_cores=only).schedulable
