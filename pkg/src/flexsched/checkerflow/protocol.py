"""Main/checker error-detection protocol over a bounded FIFO channel.

A user thread on the main core is cut into checking segments. For each
segment the main forwards, in order: a start register checkpoint (SCP, 34
words: pc, npc, 32 registers), one log word per committed memory access,
the user-mode instruction count (IC), and an end checkpoint (ECP). Every
channel word costs the main one cycle to enqueue and the checker one cycle
to consume; a word becomes visible to the consumer one cycle after it was
enqueued. When a channel has no free slot the main stalls (backpressure).

The checker saves its own context, applies the SCP, jumps to the SCP's
npc, and replays: loads are served from the logged data (it has no memory
of its own), load addresses and store address/data pairs are compared
against the log at commit, and after exactly IC user instructions the full
architectural state is compared against the ECP. The checker never runs
ahead of what the stream proves to be inside the segment: it replays an
instruction only once the IC word is known or a pending log word
guarantees at least one more in-segment memory access; otherwise it stalls
on the empty channel.

Segments are cut at privilege switches (kernel work is not checked; a
switch with no user instruction since the last boundary cuts nothing), at
the instruction-count limit, and at program end.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .machine import Commit, Instruction, Kind, Program, TinyMachine, NUM_REGS, _alu

_M64 = (1 << 64) - 1

CHECKPOINT_WORDS = 2 + NUM_REGS  # pc, npc, 32 registers
DEFAULT_SEG_LIMIT = 5000
DEFAULT_FIFO_CAPACITY = 1024


class ProtocolError(RuntimeError):
    """Malformed channel stream (distinct from a detection)."""


class IllegalInstruction(RuntimeError):
    """Core-control op issued on a core with the wrong attribute."""


class Tag(enum.Enum):
    SCP = "scp"
    LOG = "log"
    IC = "ic"
    ECP = "ecp"


class EntryKind(enum.Enum):
    LOAD = "Load"
    STORE = "Store"
    AMO_PART = "AmoPart"


class EndCause(enum.Enum):
    COUNT_LIMIT = "CountLimit"
    PRIV_SWITCH = "PrivSwitch"
    PROGRAM_END = "ProgramEnd"


class DetectSite(enum.Enum):
    LOG_COMPARE = "LogCompare"
    ECP_COMPARE = "EcpCompare"


@dataclass(frozen=True)
class RegCheckpoint:
    pc: int
    npc: int
    regs: tuple[int, ...]

    def words(self) -> list[int]:
        return [self.pc, self.npc, *self.regs]


@dataclass
class MemLogEntry:
    seq: int
    kind: EntryKind
    addr: int
    data: int
    part: Optional[tuple[int, int]] = None  # (index, total) for multi-part ops


@dataclass
class ChannelWord:
    tag: Tag
    index: int  # checkpoint word index, or entry position within the segment
    segment: int
    payload: int = 0
    entry: Optional[MemLogEntry] = None
    enqueue_cycle: int = -1


@dataclass
class Segment:
    scp: RegCheckpoint
    entries: list[MemLogEntry]
    ic: int
    ecp: RegCheckpoint
    end_cause: EndCause


@dataclass
class DetectionEvent:
    segment: int
    site: DetectSite
    cycle: int
    detail: str


class Clock:
    __slots__ = ("cycle",)

    def __init__(self):
        self.cycle = 0


class FifoChannel:
    """Bounded strict-FIFO of channel words; one-cycle transport latency."""

    def __init__(self, capacity: Optional[int], clock: Clock):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be >= 1 (or None for unbounded)")
        self.capacity = capacity
        self.clock = clock
        self._q: list[ChannelWord] = []
        self._head = 0
        self.max_occupancy = 0
        self.pushed = 0
        self.popped = 0

    @property
    def occupancy(self) -> int:
        return len(self._q) - self._head

    @property
    def full(self) -> bool:
        return self.capacity is not None and self.occupancy >= self.capacity

    @property
    def empty(self) -> bool:
        return self.occupancy == 0

    def push(self, word: ChannelWord) -> None:
        if self.full:
            raise ProtocolError("push on full channel")
        word.enqueue_cycle = self.clock.cycle
        self._q.append(word)
        self.pushed += 1
        if self.occupancy > self.max_occupancy:
            self.max_occupancy = self.occupancy

    def head_visible(self) -> Optional[ChannelWord]:
        """Front word if present and enqueued on an earlier cycle."""
        if self._head >= len(self._q):
            return None
        w = self._q[self._head]
        if w.enqueue_cycle >= self.clock.cycle:
            return None
        return w

    def pop(self) -> ChannelWord:
        if self._head >= len(self._q):
            raise ProtocolError("pop on empty channel")
        w = self._q[self._head]
        self._head += 1
        self.popped += 1
        if self._head > 4096:  # amortized compaction
            del self._q[: self._head]
            self._head = 0
        return w


# --- core attributes and the control-operation surface ------------------------


class CoreAttr(enum.Enum):
    MAIN = "Main"
    CHECKER = "Checker"
    COMPUTE = "Compute"


@dataclass
class CoreState:
    attr: CoreAttr = CoreAttr.COMPUTE
    associated: list[int] = field(default_factory=list)
    checking_enabled: bool = False  # main-side M.check
    busy: bool = False  # checker-side C.check_state
    ass_saved: Optional[tuple[int, tuple[int, ...]]] = None  # (pc, regs)


class SystemConfig:
    """Global core-attribute registers plus per-core state, driven through
    the same small operation set the OS layer would use."""

    def __init__(self, num_cores: int):
        self.cores = {k: CoreState() for k in range(num_cores)}

    def attr_of(self, core_id: int) -> CoreAttr:
        return self.cores[core_id].attr

    def configure(self, main_ids, checker_ids) -> None:
        mains, checkers = set(main_ids), set(checker_ids)
        if mains & checkers:
            raise ValueError("a core cannot be both main and checker")
        for k, st in self.cores.items():
            st.attr = (
                CoreAttr.MAIN if k in mains else CoreAttr.CHECKER if k in checkers else CoreAttr.COMPUTE
            )

    def _main(self, core_id: int) -> CoreState:
        st = self.cores[core_id]
        if st.attr is not CoreAttr.MAIN:
            raise IllegalInstruction(f"core {core_id} is not a main core")
        return st

    def _checker(self, core_id: int) -> CoreState:
        st = self.cores[core_id]
        if st.attr is not CoreAttr.CHECKER:
            raise IllegalInstruction(f"core {core_id} is not a checker core")
        return st

    def associate(self, core_id: int, checker_ids) -> None:
        st = self._main(core_id)
        for c in checker_ids:
            if self.cores[c].attr is not CoreAttr.CHECKER:
                raise IllegalInstruction(f"core {c} is not a checker core")
        st.associated = list(checker_ids)

    def check(self, core_id: int, enable: bool) -> None:
        self._main(core_id).checking_enabled = enable

    def check_state(self, core_id: int, busy: bool) -> None:
        self._checker(core_id).busy = busy

    def record(self, core_id: int, context: tuple[int, tuple[int, ...]]) -> None:
        self._checker(core_id).ass_saved = context

    def result(self, core_id: int, checker: "CheckerCore") -> bool:
        self._checker(core_id)
        return checker.last_verdict


_ISA_OPS = {
    "G.IDs.contain": lambda sysc, core_id: sysc.attr_of(core_id),
    "G.Configure": lambda sysc, main_ids, checker_ids: sysc.configure(main_ids, checker_ids),
    "M.associate": lambda sysc, core_id, checker_ids: sysc.associate(core_id, checker_ids),
    "M.check": lambda sysc, core_id, enable: sysc.check(core_id, enable),
    "C.check_state": lambda sysc, core_id, busy: sysc.check_state(core_id, busy),
    "C.record": lambda sysc, core_id, context: sysc.record(core_id, context),
    "C.result": lambda sysc, core_id, checker: sysc.result(core_id, checker),
}


def isa_step(sysc: SystemConfig, op: str, **args):
    """Dispatch one core-control operation; raises IllegalInstruction when a
    main-only op hits a checker core or vice versa. The checker-local
    C.apply/C.jal pair acts inside CheckerCore's segment loop."""
    try:
        fn = _ISA_OPS[op]
    except KeyError:
        raise ValueError(f"unknown operation {op!r}") from None
    return fn(sysc, **args)


# --- main core ----------------------------------------------------------------


class MainCore:
    """Segments the user thread and forwards checkpoint/log words.

    ``fault_hook(word, channel_index)`` may mutate a word copy before it is
    enqueued (fault injection into forwarded data only; the main core's own
    execution is never disturbed).
    """

    def __init__(
        self,
        program: Program,
        seg_limit: int,
        channels: list[FifoChannel],
        clock: Clock,
        state: Optional[CoreState] = None,
        fault_hook=None,
    ):
        if seg_limit < 1:
            raise ValueError("seg_limit must be >= 1")
        if not channels:
            raise ValueError("need at least one channel")
        self.machine = TinyMachine(program)
        self.program = program
        self.seg_limit = seg_limit
        self.channels = channels
        self.clock = clock
        self.state = state or CoreState(attr=CoreAttr.MAIN, checking_enabled=True)
        self.fault_hook = fault_hook
        self.segments: list[Segment] = []
        self.seg_index = 0
        self.stall_cycles = 0
        self.stalled_now = False
        self._seq = 0
        self._entry_pos = 0

    def _capture(self) -> RegCheckpoint:
        m = self.machine
        return RegCheckpoint(pc=m.pc, npc=m.pc, regs=tuple(m.regs))

    def _emit(self, tag: Tag, index: int, payload: int = 0, entry: Optional[MemLogEntry] = None):
        while any(ch.full for ch in self.channels):
            self.stall_cycles += 1
            self.stalled_now = True
            yield
        self.stalled_now = False
        for ci, ch in enumerate(self.channels):
            e = None
            if entry is not None:
                e = MemLogEntry(entry.seq, entry.kind, entry.addr, entry.data, entry.part)
            w = ChannelWord(tag=tag, index=index, segment=self.seg_index, payload=payload, entry=e)
            if self.fault_hook is not None:
                self.fault_hook(w, ci)
            ch.push(w)
        yield  # the enqueue cycle

    def _emit_checkpoint(self, tag: Tag, cp: RegCheckpoint):
        for i, word in enumerate(cp.words()):
            yield from self._emit(tag, i, payload=word)

    def _log_entries(self, commit: Commit) -> list[MemLogEntry]:
        k = commit.instr.kind
        out = []
        if k is Kind.LOAD:
            op = commit.mem_ops[0]
            out.append(MemLogEntry(self._seq, EntryKind.LOAD, op.addr, op.value))
            self._seq += 1
        elif k is Kind.STORE:
            op = commit.mem_ops[0]
            out.append(MemLogEntry(self._seq, EntryKind.STORE, op.addr, op.value))
            self._seq += 1
        elif k is Kind.AMO:
            rd_op, wr_op = commit.mem_ops
            out.append(MemLogEntry(self._seq, EntryKind.AMO_PART, rd_op.addr, rd_op.value, (1, 2)))
            self._seq += 1
            out.append(MemLogEntry(self._seq, EntryKind.AMO_PART, wr_op.addr, wr_op.value, (2, 2)))
            self._seq += 1
        return out

    def run(self) -> Iterator[None]:
        """One yield per cycle until the program is fully executed and sent."""
        m = self.machine
        instrs = self.program.instructions
        while not m.halted:
            # between segments: privilege switches with no preceding user work
            # cut nothing and produce no checkpoints
            while not m.halted and instrs[m.pc].kind is Kind.PRIV_SWITCH:
                m.step()
                yield
            if m.halted:
                return
            scp = self._capture()
            entries: list[MemLogEntry] = []
            self._entry_pos = 0
            ic = 0
            yield from self._emit_checkpoint(Tag.SCP, scp)
            cause = None
            while cause is None:
                if m.halted:
                    cause = EndCause.PROGRAM_END
                    break
                ins = instrs[m.pc]
                if ins.kind is Kind.PRIV_SWITCH:
                    # cut before the switch so the end checkpoint matches the
                    # checker's stop state; the marker itself is consumed by
                    # the next segment's opening skip
                    cause = EndCause.PRIV_SWITCH
                    break
                commit = m.step()
                ic += 1
                yield  # commit cycle
                for entry in self._log_entries(commit):
                    entries.append(entry)
                    yield from self._emit(Tag.LOG, self._entry_pos, entry=entry)
                    self._entry_pos += 1
                if ic >= self.seg_limit:
                    cause = EndCause.COUNT_LIMIT
            ecp = self._capture()
            yield from self._emit(Tag.IC, 0, payload=ic)
            yield from self._emit_checkpoint(Tag.ECP, ecp)
            self.segments.append(Segment(scp=scp, entries=entries, ic=ic, ecp=ecp, end_cause=cause))
            self.seg_index += 1


# --- checker core -------------------------------------------------------------


class CheckerCore:
    """Replays checking segments from the channel and verifies them."""

    def __init__(
        self,
        program: Program,
        channel: FifoChannel,
        clock: Clock,
        state: Optional[CoreState] = None,
    ):
        self.program = program
        self.channel = channel
        self.clock = clock
        self.state = state or CoreState(attr=CoreAttr.CHECKER, busy=True)
        self.regs: list[int] = [0] * NUM_REGS
        self.pc = 0
        self.verdicts: list[bool] = []
        self.detections: list[DetectionEvent] = []
        self.at_boundary = True
        self.segments_done = 0
        self._seg_mismatches = 0
        mask = program.mem_size - 1
        self._wrap = program.wrap_addresses
        self._mask = mask
        self._mem_size = program.mem_size

    @property
    def last_verdict(self) -> bool:
        return self.verdicts[-1] if self.verdicts else True

    def _addr(self, base: int, imm: int) -> int:
        a = (base + imm) & _M64
        return a & self._mask if self._wrap else a

    def _visible(self) -> Optional[ChannelWord]:
        if not self.state.busy:
            return None
        return self.channel.head_visible()

    def _record(self, site: DetectSite, detail: str) -> None:
        self._seg_mismatches += 1
        self.detections.append(
            DetectionEvent(segment=self.segments_done, site=site, cycle=self.clock.cycle, detail=detail)
        )

    def run(self) -> Iterator[None]:
        while True:
            yield from self._one_segment()

    def _one_segment(self) -> Iterator[None]:
        # wait for the next SCP
        while True:
            w = self._visible()
            if w is None:
                self.at_boundary = True
                yield
                continue
            if w.tag is not Tag.SCP:
                raise ProtocolError(f"expected SCP, saw {w.tag}")
            break
        self.at_boundary = False
        self._seg_mismatches = 0

        scp_words: list[int] = []
        for i in range(CHECKPOINT_WORDS):
            while True:
                w = self._visible()
                if w is None:
                    yield
                    continue
                break
            if w.tag is not Tag.SCP or w.index != i:
                raise ProtocolError("torn SCP")
            self.channel.pop()
            scp_words.append(w.payload)
            yield
        # context save, checkpoint apply, directed jump
        self.state.ass_saved = (self.pc, tuple(self.regs))
        self.regs = list(scp_words[2:])
        self.pc = scp_words[1] & _M64

        known_ic: Optional[int] = None
        count = 0
        resync = False
        instrs = self.program.instructions
        regs = self.regs

        while True:
            if known_ic is not None and count >= known_ic:
                break
            nxt = self._visible()
            if known_ic is None and nxt is not None and nxt.tag is Tag.IC:
                self.channel.pop()
                known_ic = nxt.payload
                if known_ic < count:
                    # every replayed instruction was proven in-segment by a
                    # pending log word, so a smaller count is corrupt
                    self._record(DetectSite.ECP_COMPARE, "count below replayed length")
                    resync = True
                    yield
                    break
                yield
                continue
            if not (0 <= self.pc < len(instrs)):
                if known_ic is None:
                    yield  # boundary unknown: wait for the IC word
                    continue
                self._record(DetectSite.ECP_COMPARE, "replay exhausted program before IC")
                resync = True
                break
            ins = instrs[self.pc]
            kind = ins.kind
            if kind is Kind.PRIV_SWITCH:
                if known_ic is None:
                    if nxt is None:
                        yield
                        continue
                    raise ProtocolError("log entry across a privilege boundary")
                # overrun across a boundary (corrupted count): skip like the main
                self.pc += 1
                yield
                continue
            if kind in (Kind.ALU, Kind.BRANCH):
                if known_ic is None:
                    if nxt is None:
                        yield  # stall: segment extent unproven
                        continue
                    if nxt.tag is not Tag.LOG:
                        raise ProtocolError(f"unexpected {nxt.tag} before IC")
                    # a pending log word proves this instruction is in-segment
                if kind is Kind.ALU:
                    regs[ins.rd] = _alu(ins.op, regs[ins.rs1], regs[ins.rs2])
                    self.pc += 1
                else:
                    self.pc = ins.target if regs[ins.rs1] < regs[ins.rs2] else self.pc + 1
                count += 1
                yield
                continue

            # memory instruction: consume log words
            if nxt is None:
                yield
                continue
            if nxt.tag is not Tag.LOG:
                self._record(DetectSite.ECP_COMPARE, "log exhausted before IC")
                resync = True
                break
            self.channel.pop()
            e = nxt.entry
            addr = self._addr(regs[ins.rs1], ins.imm)
            if kind is Kind.LOAD:
                if e.kind is not EntryKind.LOAD or e.addr != addr:
                    self._record(DetectSite.LOG_COMPARE, "load entry mismatch")
                regs[ins.rd] = e.data  # memory bypass: replay from the log
                self.pc += 1
                count += 1
                yield
                continue
            if kind is Kind.STORE:
                val = regs[ins.rs2]
                if e.kind is not EntryKind.STORE or e.addr != addr or e.data != val:
                    self._record(DetectSite.LOG_COMPARE, "store entry mismatch")
                self.pc += 1
                count += 1
                yield
                continue
            # AMO: two parts, one cycle each
            if e.kind is not EntryKind.AMO_PART or e.part != (1, 2) or e.addr != addr:
                self._record(DetectSite.LOG_COMPARE, "amo read part mismatch")
            old = e.data
            yield
            while True:
                w2 = self._visible()
                if w2 is None:
                    yield
                    continue
                break
            if w2.tag is not Tag.LOG:
                self._record(DetectSite.ECP_COMPARE, "amo truncated")
                resync = True
                break
            self.channel.pop()
            e2 = w2.entry
            new = (old + regs[ins.rs2]) & _M64
            if e2.kind is not EntryKind.AMO_PART or e2.part != (2, 2) or e2.addr != addr or e2.data != new:
                self._record(DetectSite.LOG_COMPARE, "amo write part mismatch")
            regs[ins.rd] = old
            self.pc += 1
            count += 1
            yield

        # end checkpoint: compare word by word, discarding leftovers when the
        # replayed length disagreed with the stream (corrupted IC)
        length_flagged = resync
        got = 0
        while got < CHECKPOINT_WORDS:
            w = self._visible()
            if w is None:
                yield
                continue
            self.channel.pop()
            if w.tag is not Tag.ECP:
                if not length_flagged:
                    self._record(DetectSite.ECP_COMPARE, "leftover stream before ECP")
                    length_flagged = True
                yield
                continue
            expect = self.pc if w.index in (0, 1) else regs[w.index - 2]
            if w.payload != expect:
                self._record(DetectSite.ECP_COMPARE, f"ecp word {w.index}")
            got += 1
            yield

        self.verdicts.append(self._seg_mismatches == 0)
        self.segments_done += 1
        self.at_boundary = True


# --- drivers ------------------------------------------------------------------


def run_main(
    program: Program,
    seg_limit: int = DEFAULT_SEG_LIMIT,
    channel: Optional[FifoChannel] = None,
    clock: Optional[Clock] = None,
) -> tuple[list[Segment], FifoChannel, Clock]:
    """Drive the main core alone to completion; the channel must never fill
    (pass a large or unbounded one), otherwise this raises."""
    clock = clock or Clock()
    channel = channel if channel is not None else FifoChannel(None, clock)
    main = MainCore(program, seg_limit, [channel], clock)
    gen = main.run()
    while True:
        if channel.full:
            raise ProtocolError("channel filled with no consumer")
        try:
            next(gen)
        except StopIteration:
            break
        clock.cycle += 1
    return main.segments, channel, clock


def run_checker(
    channel: FifoChannel,
    state: CoreState,
    program: Program,
    clock: Optional[Clock] = None,
) -> tuple[list[bool], list[DetectionEvent]]:
    """Drain a prefilled channel through a checker core (code is shared
    between cores, so the checker executes the same program text)."""
    if state.attr is not CoreAttr.CHECKER:
        raise IllegalInstruction("run_checker needs a checker core")
    clock = clock or channel.clock
    checker = CheckerCore(program, channel, clock, state=state)
    gen = checker.run()
    idle = 0
    while True:
        next(gen)
        clock.cycle += 1
        if channel.empty and checker.at_boundary:
            break
        if not state.busy:
            idle += 1
            if idle > 4:  # halted consumption: nothing more will happen
                break
        else:
            idle = 0
    return checker.verdicts, checker.detections
