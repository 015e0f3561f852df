"""Random task-set generation for schedulability sweeps.

Utilizations come from UUnifast; periods are log-uniform over
[period_min, period_max]; reliability classes are assigned to uniformly
random task indices. Everything is a pure function of the seed via the
package's xorshift64* stream, drawn in a fixed order (utilizations with
redraws, then periods, then the class shuffle), so identical configs give
byte-identical serialized task sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import Task, TaskClass, TaskSet, q12
from .rng import Xorshift64Star

# a task with u >= 1 is trivially infeasible and would poison acceptance curves
_MAX_REDRAWS = 100


class GenerationError(RuntimeError):
    """UUnifast kept producing a per-task utilization >= 1."""


@dataclass(frozen=True)
class GenConfig:
    n: int
    m: int
    util: float
    alpha: float
    beta: float
    period_min: float = 10.0
    period_max: float = 1000.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.util <= 0.0:
            raise ValueError("util must be > 0")
        if self.alpha < 0.0 or self.beta < 0.0 or self.alpha + self.beta > 1.0 + 1e-12:
            raise ValueError("need 0 <= alpha, 0 <= beta, alpha + beta <= 1")
        if self.period_min <= 0.0 or self.period_min > self.period_max:
            raise ValueError("need 0 < period_min <= period_max")


def uunifast(n: int, util: float, rng: Xorshift64Star) -> list[float]:
    """n positive utilizations summing to util (last element closes the sum)."""
    if n < 1:
        raise ValueError("uunifast needs n >= 1")
    if util <= 0.0:
        raise ValueError("uunifast needs util > 0")
    us = []
    remaining = util
    for i in range(1, n):
        nxt = remaining * rng.random_open() ** (1.0 / (n - i))
        us.append(remaining - nxt)
        remaining = nxt
    us.append(remaining)
    return us


def _floor_count(frac: float, n: int) -> int:
    # epsilon-guarded floor: 0.0625 * 160 must be exactly 10
    return int(math.floor(frac * n + 1e-9))


def generate_taskset(cfg: GenConfig) -> TaskSet:
    """Deterministic task set for cfg; raises GenerationError if UUnifast
    cannot produce all u_i < 1 within the redraw cap."""
    rng = Xorshift64Star(cfg.seed)

    us = None
    for _ in range(_MAX_REDRAWS):
        cand = uunifast(cfg.n, cfg.util, rng)
        if max(cand) < 1.0:
            us = cand
            break
    if us is None:
        raise GenerationError(
            f"no utilization vector with all u_i < 1 after {_MAX_REDRAWS} redraws "
            f"(n={cfg.n}, util={cfg.util})"
        )

    log_ratio = math.log(cfg.period_max / cfg.period_min)
    periods = [cfg.period_min * math.exp(rng.random() * log_ratio) for _ in range(cfg.n)]

    idx = list(range(cfg.n))
    rng.shuffle(idx)
    n_v3 = _floor_count(cfg.beta, cfg.n)
    n_v2 = _floor_count(cfg.alpha, cfg.n)
    cls_of = {i: TaskClass.NON_VERIFY for i in idx}
    for i in idx[:n_v3]:
        cls_of[i] = TaskClass.TRIPLE_CHECK
    for i in idx[n_v3 : n_v3 + n_v2]:
        cls_of[i] = TaskClass.DOUBLE_CHECK

    tasks = []
    for i in range(cfg.n):
        # quantize to the 12-significant-digit serialization grid so that
        # TaskSet -> file -> TaskSet is the identity
        period = q12(periods[i])
        wcet = q12(us[i] * period)
        tasks.append(Task(id=i, wcet=wcet, period=period, cls=cls_of[i]))

    return TaskSet(tasks=tasks, target_util=cfg.util, seed=cfg.seed, meta=cfg)
