"""Coupled main/checker runs with single-bit fault injection into the
forwarded data, and detection-latency measurement.

Faults flip exactly one bit of one channel word copy (checkpoint word, log
entry address/data, or the instruction-count word) on one checker's
channel; the main core's own execution is never disturbed. Detection
latency is the cycle of the failing compare minus the cycle the corrupted
word was enqueued.

The default campaign samples only fault targets whose detection is
structurally guaranteed: ECP words (compared in full against recomputed
state), store-entry address/data, load-entry addresses, both AMO part
addresses plus the write-part data (a corrupted read-part value also
breaks the write-part compare, since the checker recomputes the new value
from it), and the IC word (a wrong replay length lands on the end-
checkpoint compare). SCP register words and plain load data can be masked
by overwrites before use and are therefore supported for exploratory runs
but excluded from the guaranteed-coverage campaign.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

from ..rng import Xorshift64Star
from .machine import Program
from .protocol import (
    CHECKPOINT_WORDS,
    CheckerCore,
    Clock,
    CoreAttr,
    CoreState,
    DetectSite,
    DetectionEvent,
    EntryKind,
    FifoChannel,
    MainCore,
    Segment,
    SystemConfig,
    Tag,
    isa_step,
)


class FaultTarget(enum.Enum):
    SCP_WORD = "ScpWord"
    ECP_WORD = "EcpWord"
    LOG_ADDR = "LogAddr"
    LOG_DATA = "LogData"
    IC_VALUE = "IcValue"


@dataclass
class FaultSpec:
    """One single-bit flip in one forwarded word.

    ``word_index`` selects the checkpoint word (0..33) or the entry
    position within the segment; ``channel_index`` selects which checker's
    copy is corrupted in triple mode. ``inject_cycle`` is filled in by the
    run (the cycle the corrupted word entered the channel).
    """

    target: FaultTarget
    segment_index: int
    bit: int
    word_index: int = 0
    channel_index: int = 0
    inject_cycle: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.bit <= 63:
            raise ValueError("bit must be in 0..63")


@dataclass
class DetectionRecord:
    fault: FaultSpec
    detected: bool
    inject_cycle: int
    detect_cycle: int
    latency: int
    detect_site: Optional[DetectSite]


@dataclass
class CoupledRun:
    segments: list[Segment]
    verdicts: list[list[bool]]  # per checker
    detections: list[list[DetectionEvent]]  # per checker
    cycles: int
    main_stall_cycles: int
    max_occupancy: int


def run_coupled(
    program: Program,
    seg_limit: int,
    capacity: Optional[int],
    checkers: int = 1,
    checker_lag: int = 0,
    faults: Optional[list[FaultSpec]] = None,
    max_cycles: Optional[int] = None,
) -> CoupledRun:
    """Producer/consumer loop advancing a shared cycle counter; the checker
    lags the main by ``checker_lag`` cycles before it starts consuming."""
    if checkers < 1:
        raise ValueError("need at least one checker")
    clock = Clock()
    channels = [FifoChannel(capacity, clock) for _ in range(checkers)]

    # core 0 is the main; cores 1..checkers are its checkers
    sysc = SystemConfig(1 + checkers)
    isa_step(sysc, "G.Configure", main_ids=[0], checker_ids=list(range(1, 1 + checkers)))
    isa_step(sysc, "M.associate", core_id=0, checker_ids=list(range(1, 1 + checkers)))
    isa_step(sysc, "M.check", core_id=0, enable=True)
    for c in range(1, 1 + checkers):
        isa_step(sysc, "C.check_state", core_id=c, busy=True)

    fault_map: dict[tuple, FaultSpec] = {}
    for f in faults or ():
        key = (f.segment_index, f.channel_index, _tag_of(f.target), f.word_index)
        if key in fault_map:
            raise ValueError("at most one fault per word per run")
        if not 0 <= f.channel_index < checkers:
            raise ValueError("fault channel_index out of range")
        fault_map[key] = f

    def fault_hook(word, ci):
        if word.tag is Tag.LOG:
            key = (word.segment, ci, Tag.LOG, word.index)
            f = fault_map.get(key)
            if f is None:
                return
            if f.target is FaultTarget.LOG_ADDR:
                word.entry.addr ^= 1 << f.bit
            elif f.target is FaultTarget.LOG_DATA:
                word.entry.data ^= 1 << f.bit
            else:
                return
            f.inject_cycle = clock.cycle
        else:
            key = (word.segment, ci, word.tag, word.index if word.tag is not Tag.IC else 0)
            f = fault_map.get(key)
            if f is None:
                return
            word.payload ^= 1 << f.bit
            f.inject_cycle = clock.cycle

    main = MainCore(
        program, seg_limit, channels, clock, state=sysc.cores[0], fault_hook=fault_hook
    )
    chks = [
        CheckerCore(program, channels[i], clock, state=sysc.cores[1 + i]) for i in range(checkers)
    ]
    mgen = main.run()
    cgens = [c.run() for c in chks]
    main_done = False
    limit = max_cycles if max_cycles is not None else 200 * (len(program) + 64) + 64 * checker_lag + 10_000

    while True:
        if not main_done:
            try:
                next(mgen)
            except StopIteration:
                main_done = True
        if clock.cycle >= checker_lag:
            for g in cgens:
                next(g)
        clock.cycle += 1
        if main_done and all(ch.empty for ch in channels) and all(c.at_boundary for c in chks):
            break
        if clock.cycle > limit:
            raise RuntimeError("coupled run exceeded its cycle budget (deadlock?)")

    return CoupledRun(
        segments=main.segments,
        verdicts=[c.verdicts for c in chks],
        detections=[c.detections for c in chks],
        cycles=clock.cycle,
        main_stall_cycles=main.stall_cycles,
        max_occupancy=max(ch.max_occupancy for ch in channels),
    )


def _tag_of(target: FaultTarget) -> Tag:
    if target is FaultTarget.SCP_WORD:
        return Tag.SCP
    if target is FaultTarget.ECP_WORD:
        return Tag.ECP
    if target is FaultTarget.IC_VALUE:
        return Tag.IC
    return Tag.LOG


def _dry_segments(program: Program, seg_limit: int) -> list[Segment]:
    from .protocol import run_main

    segments, _, _ = run_main(program, seg_limit)
    return segments


def inject_and_measure(
    program: Program,
    seg_limit: int,
    capacity: Optional[int],
    faults: list[FaultSpec],
    checker_lag: int = 0,
    checkers: int = 1,
    segments: Optional[list[Segment]] = None,
) -> list[DetectionRecord]:
    """Run main and checker(s) coupled, with the given faults injected into
    the forwarded words, and return one record per fault.

    A fault is attributed to the first mismatch its checker reports for the
    fault's segment at or after the injection cycle, so at most one fault
    per (segment, channel) is allowed per run. ``segments`` may carry a
    precomputed fault-free run to skip the validation dry run.
    """
    if segments is None:
        segments = _dry_segments(program, seg_limit)
    per_seg_entries = [len(s.entries) for s in segments]
    for f in faults:
        if not 0 <= f.segment_index < len(segments):
            raise ValueError(f"fault references nonexistent segment {f.segment_index}")
        if f.target in (FaultTarget.LOG_ADDR, FaultTarget.LOG_DATA):
            if not 0 <= f.word_index < per_seg_entries[f.segment_index]:
                raise ValueError("fault references nonexistent log entry")
        elif f.target in (FaultTarget.SCP_WORD, FaultTarget.ECP_WORD):
            if not 0 <= f.word_index < CHECKPOINT_WORDS:
                raise ValueError("fault references nonexistent checkpoint word")

    run = run_coupled(
        program,
        seg_limit,
        capacity,
        checkers=checkers,
        checker_lag=checker_lag,
        faults=faults,
    )

    records = []
    for f in faults:
        if f.inject_cycle is None:
            raise RuntimeError("fault was never injected (unreached word?)")
        hit = None
        for ev in run.detections[f.channel_index]:
            if ev.segment == f.segment_index and ev.cycle >= f.inject_cycle:
                hit = ev
                break
        if hit is None:
            records.append(
                DetectionRecord(
                    fault=f,
                    detected=False,
                    inject_cycle=f.inject_cycle,
                    detect_cycle=-1,
                    latency=-1,
                    detect_site=None,
                )
            )
        else:
            records.append(
                DetectionRecord(
                    fault=f,
                    detected=True,
                    inject_cycle=f.inject_cycle,
                    detect_cycle=hit.cycle,
                    latency=hit.cycle - f.inject_cycle,
                    detect_site=hit.site,
                )
            )
    return records


def guaranteed_targets_for_segment(seg: Segment) -> list[tuple[FaultTarget, int]]:
    """(target, word_index) pairs whose single-bit corruption is always caught."""
    out: list[tuple[FaultTarget, int]] = [(FaultTarget.ECP_WORD, i) for i in range(CHECKPOINT_WORDS)]
    out.append((FaultTarget.IC_VALUE, 0))
    for pos, e in enumerate(seg.entries):
        out.append((FaultTarget.LOG_ADDR, pos))
        if e.kind is EntryKind.STORE:
            out.append((FaultTarget.LOG_DATA, pos))
        elif e.kind is EntryKind.AMO_PART:
            out.append((FaultTarget.LOG_DATA, pos))  # both parts feed compares
    return out


def sample_faults(
    segments: list[Segment],
    rng: Xorshift64Star,
    per_segment: int = 1,
    channel_index: int = 0,
) -> list[FaultSpec]:
    """At most ``per_segment`` random guaranteed-detectable faults per segment
    (one per segment is the default, keeping attributions unambiguous)."""
    if per_segment != 1:
        raise ValueError("one fault per segment per run keeps attribution exact")
    faults = []
    for si, seg in enumerate(segments):
        pool = guaranteed_targets_for_segment(seg)
        target, word_index = pool[rng.randrange(len(pool))]
        faults.append(
            FaultSpec(
                target=target,
                segment_index=si,
                bit=rng.randrange(64),
                word_index=word_index,
                channel_index=channel_index,
            )
        )
    return faults


def latency_bound(
    seg_limit: int,
    max_entries_per_segment: int,
    backlog_at_inject: int,
    checker_lag: int,
) -> int:
    """Generous upper bound on detection latency.

    The checker consumes a whole segment (checkpoints, entries, IC, replay
    compute cycles) in at most ``seg_cost`` cycles; the backlog ahead of the
    corrupted word spans at most ceil(backlog / min_words_per_segment)
    segments, and the fault itself is resolved within one further segment
    (whose production by the main is similarly bounded).
    """
    min_words = 2 * CHECKPOINT_WORDS + 1  # a segment is at least two checkpoints + IC
    seg_cost = 2 * CHECKPOINT_WORDS + 1 + max_entries_per_segment + 2 * seg_limit
    spanned = math.ceil(backlog_at_inject / min_words) + 2
    return checker_lag + spanned * seg_cost


def records_to_csv(records: list[DetectionRecord], fh) -> None:
    fh.write("fault_id,target,segment,bit,inject_cycle,detect_cycle,latency_cycles,detect_site,detected\n")
    for i, r in enumerate(records):
        site = r.detect_site.value if r.detect_site is not None else ""
        fh.write(
            f"{i},{r.fault.target.value},{r.fault.segment_index},{r.fault.bit},"
            f"{r.inject_cycle},{r.detect_cycle},{r.latency},{site},{int(r.detected)}\n"
        )


def latency_histogram(records: list[DetectionRecord], bucket_width: int) -> dict[int, int]:
    """bucket lower bound (cycles) -> count, over detected faults."""
    if bucket_width < 1:
        raise ValueError("bucket_width must be >= 1")
    hist: dict[int, int] = {}
    for r in records:
        if r.detected:
            b = (r.latency // bucket_width) * bucket_width
            hist[b] = hist.get(b, 0) + 1
    return dict(sorted(hist.items()))
