"""Closed-form schedulability theory: virtual deadlines, densities, the
per-core density test, and the task -> entity split.

A verification task's original computation is scheduled against an
artificially early virtual deadline D' so that the window (D - D') remains
for its checker copies. D' = D/2 for double-check and (sqrt(2)-1)*D for
triple-check tasks; these minimize the combined density
C/D' + k*C/(D - D') (k checker copies), which is what the brute-force
oracle below verifies numerically.
"""

from __future__ import annotations

import math

import numpy as np

from .model import (
    TIME_EPS,
    Partition,
    Role,
    SchedEntity,
    Task,
    TaskClass,
    TaskSet,
)

SQRT2_MINUS_1 = math.sqrt(2.0) - 1.0


def virtual_deadline(task: Task) -> float:
    """Virtual deadline for the original computation of a verification task."""
    if task.cls is TaskClass.DOUBLE_CHECK:
        return task.deadline / 2.0
    if task.cls is TaskClass.TRIPLE_CHECK:
        return SQRT2_MINUS_1 * task.deadline
    raise ValueError("virtual_deadline: task has no checker copies")


def densities(task: Task) -> tuple[float, float]:
    """(original density C/D', checker density C/(D-D')) for a verification task.

    Values above 1 are legal outputs; the density test rejects them later.
    """
    dv = virtual_deadline(task)
    return task.wcet / dv, task.wcet / (task.deadline - dv)


def optimal_virtual_deadline_oracle(
    cls: TaskClass, wcet: float, deadline: float, grid_steps: int
) -> float:
    """Brute-force argmin of C/D' + k*C/(D-D') over a uniform D' grid.

    Independent of the closed forms above; used to check them.
    """
    if grid_steps < 1000:
        raise ValueError("grid_steps must be >= 1000")
    if cls is TaskClass.NON_VERIFY:
        raise ValueError("oracle applies to verification tasks only")
    k = cls.checks
    j = np.arange(1, grid_steps, dtype=np.float64)
    dp = deadline * j / grid_steps
    objective = wcet / dp + k * wcet / (deadline - dp)
    return float(dp[int(np.argmin(objective))])


def split_task(task: Task, first_entity_id: int = 0) -> list[SchedEntity]:
    """Entities for one task: original, then checker copies.

    NonVerify tasks yield a single entity over the full window [0, D];
    verification tasks yield the original over [0, D'] plus one or two
    checker copies over [D', D].
    """
    if task.cls is TaskClass.NON_VERIFY:
        return [
            SchedEntity(
                entity_id=first_entity_id,
                task_id=task.id,
                role=Role.ORIGINAL,
                release_offset=0.0,
                rel_deadline=task.deadline,
                exec_time=task.wcet,
                density=task.wcet / task.deadline,
            )
        ]
    dv = virtual_deadline(task)
    d_o, d_v = densities(task)
    entities = [
        SchedEntity(
            entity_id=first_entity_id,
            task_id=task.id,
            role=Role.ORIGINAL,
            release_offset=0.0,
            rel_deadline=dv,
            exec_time=task.wcet,
            density=d_o,
        ),
        SchedEntity(
            entity_id=first_entity_id + 1,
            task_id=task.id,
            role=Role.CHECK1,
            release_offset=dv,
            rel_deadline=task.deadline,
            exec_time=task.wcet,
            density=d_v,
        ),
    ]
    if task.cls is TaskClass.TRIPLE_CHECK:
        entities.append(
            SchedEntity(
                entity_id=first_entity_id + 2,
                task_id=task.id,
                role=Role.CHECK2,
                release_offset=dv,
                rel_deadline=task.deadline,
                exec_time=task.wcet,
                density=d_v,
            )
        )
    return entities


def split_taskset(ts: TaskSet) -> dict[int, list[SchedEntity]]:
    """task_id -> entities, with entity ids assigned in task order then role
    order so traces are reproducible."""
    out: dict[int, list[SchedEntity]] = {}
    next_id = 0
    for task in ts.tasks:
        ents = split_task(task, first_entity_id=next_id)
        next_id += len(ents)
        out[task.id] = ents
    return out


def density_test(partition: Partition) -> bool:
    """True iff every core's accumulated density is at most 1 (closed bound)."""
    return all(d <= 1.0 + TIME_EPS for d in partition.core_density)
