"""Experiment runners: acceptance-ratio sweeps over utilization and fault
campaigns, with deterministic seed derivation and machine-readable output.

A sweep point at index i evaluates ``sets_per_point`` task sets whose
generator seeds are ``seed + i*10**6 + set_index``; the same task set is
judged under every requested scheme, and rows are ordered by
(scheme, utilization) regardless of worker completion order, so identical
configs produce byte-identical CSV.
"""

from __future__ import annotations

import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .gen import GenConfig, generate_taskset
from .model import Scheme
from .partition import InfeasibleConfigError
from .simkernel import schedulable
from .rng import Xorshift64Star
from .checkerflow import (
    DetectionRecord,
    inject_and_measure,
    latency_histogram,
    random_program,
    run_main,
    sample_faults,
)

_ALL_SCHEMES = (Scheme.LOCKSTEP, Scheme.HMR, Scheme.FLEXSTEP)
_SLACK_PP = 0.02  # statistical slack for the soft monotonicity check


@dataclass(frozen=True)
class SweepConfig:
    m: int
    n: int
    alpha: float
    beta: float
    util_start: float
    util_end: float
    util_step: float
    sets_per_point: int = 500
    schemes: tuple[Scheme, ...] = _ALL_SCHEMES
    seed: int = 1
    verdict_mode: str = "analytic"  # "analytic" | "sim"
    period_min: float = 10.0
    period_max: float = 1000.0

    def __post_init__(self):
        if self.util_start > self.util_end:
            raise ValueError("util_start must be <= util_end")
        if self.util_step <= 0:
            raise ValueError("util_step must be > 0")
        if self.sets_per_point < 1:
            raise ValueError("sets_per_point must be >= 1")
        if self.verdict_mode not in ("analytic", "sim"):
            raise ValueError("verdict_mode must be 'analytic' or 'sim'")

    def utils(self) -> list[float]:
        count = int((self.util_end - self.util_start) / self.util_step + 1e-9) + 1
        return [self.util_start + i * self.util_step for i in range(count)]


@dataclass
class SweepRow:
    scheme: Scheme
    util: float
    accepted: int
    total: int

    @property
    def ratio(self) -> float:
        return self.accepted / self.total


def _check_feasible(cfg: SweepConfig) -> None:
    import math

    n_v3 = int(math.floor(cfg.beta * cfg.n + 1e-9))
    n_v2 = int(math.floor(cfg.alpha * cfg.n + 1e-9))
    if n_v3 > 0 and cfg.m < 3:
        raise InfeasibleConfigError("triple-check tasks need at least 3 cores")
    if (n_v2 > 0 or n_v3 > 0) and cfg.m < 2:
        raise InfeasibleConfigError("verification tasks need at least 2 cores")


def _eval_chunk(args) -> tuple[int, dict[str, int], int]:
    """Worker: evaluate one chunk of task sets at one utilization point."""
    cfg, point_idx, util, set_lo, set_hi = args
    accepted = {s.value: 0 for s in cfg.schemes}
    for j in range(set_lo, set_hi):
        gcfg = GenConfig(
            n=cfg.n,
            m=cfg.m,
            util=util,
            alpha=cfg.alpha,
            beta=cfg.beta,
            period_min=cfg.period_min,
            period_max=cfg.period_max,
            seed=cfg.seed + point_idx * 10**6 + j,
        )
        ts = generate_taskset(gcfg)
        for s in cfg.schemes:
            if schedulable(ts, cfg.m, s, verdict=cfg.verdict_mode):
                accepted[s.value] += 1
    return point_idx, accepted, set_hi - set_lo


def run_sweep(cfg: SweepConfig, jobs: int = 1, progress=None) -> list[SweepRow]:
    """Acceptance ratio per (scheme, utilization point)."""
    _check_feasible(cfg)
    utils = cfg.utils()
    chunk = max(1, cfg.sets_per_point // max(1, jobs * 4))
    work = []
    for i, u in enumerate(utils):
        lo = 0
        while lo < cfg.sets_per_point:
            hi = min(lo + chunk, cfg.sets_per_point)
            work.append((cfg, i, u, lo, hi))
            lo = hi

    totals = {(s.value, i): 0 for s in cfg.schemes for i in range(len(utils))}
    counts = [0] * len(utils)
    done = 0
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for point_idx, accepted, n_sets in pool.map(_eval_chunk, work):
                for sname, acc in accepted.items():
                    totals[(sname, point_idx)] += acc
                counts[point_idx] += n_sets
                done += n_sets
                if progress:
                    progress(done, len(utils) * cfg.sets_per_point)
    else:
        for w in work:
            point_idx, accepted, n_sets = _eval_chunk(w)
            for sname, acc in accepted.items():
                totals[(sname, point_idx)] += acc
            counts[point_idx] += n_sets
            done += n_sets
            if progress:
                progress(done, len(utils) * cfg.sets_per_point)

    rows = []
    for s in cfg.schemes:
        for i, u in enumerate(utils):
            rows.append(SweepRow(scheme=s, util=u, accepted=totals[(s.value, i)], total=counts[i]))
    _warn_if_not_monotone(cfg, rows)
    return rows


def _warn_if_not_monotone(cfg: SweepConfig, rows: list[SweepRow]) -> None:
    # statistical smoothing: only meaningful with enough sets per point
    if cfg.sets_per_point < 100:
        return
    by_scheme: dict[Scheme, list[SweepRow]] = {}
    for r in rows:
        by_scheme.setdefault(r.scheme, []).append(r)
    for s, rs in by_scheme.items():
        for a, b in zip(rs, rs[1:]):
            if b.ratio > a.ratio + _SLACK_PP:
                print(
                    f"warning: {s.value} acceptance ratio rises {a.ratio:.3f} -> {b.ratio:.3f} "
                    f"at U={b.util:g}",
                    file=sys.stderr,
                )


def rows_to_csv(cfg: SweepConfig, rows: list[SweepRow], fh) -> None:
    fh.write(
        f"# sweep m={cfg.m} n={cfg.n} alpha={cfg.alpha:g} beta={cfg.beta:g} "
        f"sets_per_point={cfg.sets_per_point} seed={cfg.seed} verdict={cfg.verdict_mode} "
        f"period_min={cfg.period_min:g} period_max={cfg.period_max:g}\n"
    )
    fh.write("scheme,util,accepted,total,ratio\n")
    for r in rows:
        fh.write(f"{r.scheme.value},{r.util:g},{r.accepted},{r.total},{r.ratio:.6f}\n")


# --- fault campaign -----------------------------------------------------------


@dataclass(frozen=True)
class CampaignConfig:
    faults: int = 100_000
    program_len: int = 4000
    seg_limit: int = 200
    capacity: int = 1024
    checker_lag: int = 0
    checkers: int = 1
    bucket_width: int = 64
    seed: int = 1
    frac_priv: float = 0.002

    def __post_init__(self):
        if self.faults < 0:
            raise ValueError("faults must be >= 0")
        if self.program_len < 1 or self.seg_limit < 1:
            raise ValueError("program_len and seg_limit must be >= 1")
        if self.bucket_width < 1:
            raise ValueError("bucket_width must be >= 1")


def run_fault_campaign(
    cfg: CampaignConfig, progress=None
) -> tuple[list[DetectionRecord], dict[int, int]]:
    """Random programs, one guaranteed-detectable fault per segment per run,
    repeated until the requested fault count is reached."""
    rng = Xorshift64Star(cfg.seed)
    records: list[DetectionRecord] = []
    while len(records) < cfg.faults:
        program = random_program(rng, cfg.program_len, frac_priv=cfg.frac_priv)
        segments, _, _ = run_main(program, cfg.seg_limit)
        if not segments:
            continue
        faults = sample_faults(segments, rng)
        records.extend(
            inject_and_measure(
                program,
                cfg.seg_limit,
                cfg.capacity,
                faults,
                checker_lag=cfg.checker_lag,
                checkers=cfg.checkers,
                segments=segments,
            )
        )
        if progress:
            progress(len(records), cfg.faults)
    return records, latency_histogram(records, cfg.bucket_width)
