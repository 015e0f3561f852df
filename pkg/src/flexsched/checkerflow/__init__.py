"""Behavioral simulator of the main/checker error-detection protocol:
checking segments, register checkpoints, memory-access logs, bounded FIFO
channels with backpressure, core-attribute control operations, fault
injection, and detection-latency measurement."""

from .machine import (
    AluOp,
    Instruction,
    Kind,
    MachineFault,
    Program,
    TinyMachine,
    random_program,
)
from .protocol import (
    CHECKPOINT_WORDS,
    DEFAULT_FIFO_CAPACITY,
    DEFAULT_SEG_LIMIT,
    CheckerCore,
    Clock,
    CoreAttr,
    CoreState,
    DetectSite,
    DetectionEvent,
    EndCause,
    EntryKind,
    FifoChannel,
    IllegalInstruction,
    MainCore,
    MemLogEntry,
    ProtocolError,
    RegCheckpoint,
    Segment,
    SystemConfig,
    Tag,
    isa_step,
    run_checker,
    run_main,
)
from .campaign import (
    CoupledRun,
    DetectionRecord,
    FaultSpec,
    FaultTarget,
    inject_and_measure,
    latency_bound,
    latency_histogram,
    records_to_csv,
    run_coupled,
    sample_faults,
)

__all__ = [
    "AluOp", "Instruction", "Kind", "MachineFault", "Program", "TinyMachine",
    "random_program", "CHECKPOINT_WORDS", "DEFAULT_FIFO_CAPACITY",
    "DEFAULT_SEG_LIMIT", "CheckerCore", "Clock", "CoreAttr", "CoreState",
    "DetectSite", "DetectionEvent", "EndCause", "EntryKind", "FifoChannel",
    "IllegalInstruction", "MainCore", "MemLogEntry", "ProtocolError",
    "RegCheckpoint", "Segment", "SystemConfig", "Tag", "isa_step",
    "run_checker", "run_main", "CoupledRun", "DetectionRecord", "FaultSpec",
    "FaultTarget", "inject_and_measure", "latency_bound", "latency_histogram",
    "records_to_csv", "run_coupled", "sample_faults",
]
