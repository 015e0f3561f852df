"""flexsched: schedulability analysis and behavioral simulation for
multicore error-detection schemes.

The package has two halves. The scheduling half models sporadic implicit-
deadline tasks whose jobs may require one or two redundant error-checking
copies, and compares three platform schemes (rigid LockStep groups,
runtime split-lock pairing, and asynchronous virtual-deadline checking)
under partitioned EDF, both analytically and by discrete-event simulation.
The protocol half simulates the main/checker error-detection mechanism
itself: checking segments bounded by register checkpoints, memory-access
logs replayed through a bounded FIFO with backpressure, fault injection
into the forwarded data, and detection-latency measurement.
"""

from .model import (
    CoreGroup,
    Outcome,
    Partition,
    Role,
    SchedEntity,
    Scheme,
    Task,
    TaskClass,
    TaskSet,
    TIME_EPS,
    dump_taskset,
    dumps_taskset,
    format_partition,
    load_taskset,
    loads_taskset,
    read_taskset,
    save_taskset,
    task_utilization,
)
from .rng import Xorshift64Star
from .gen import GenConfig, GenerationError, generate_taskset, uunifast
from .analysis import (
    densities,
    density_test,
    optimal_virtual_deadline_oracle,
    split_task,
    split_taskset,
    virtual_deadline,
)
from .partition import (
    InfeasibleConfigError,
    partition_flexstep,
    partition_hmr,
    partition_lockstep,
)
from .simkernel import (
    CheckerRelease,
    ReleaseModel,
    SimConfig,
    SimResult,
    TimeMode,
    default_horizon,
    hyperperiod_horizon,
    schedulable,
    simulate,
)
from .sweep import (
    CampaignConfig,
    SweepConfig,
    SweepRow,
    rows_to_csv,
    run_fault_campaign,
    run_sweep,
)
from . import checkerflow

__version__ = "0.1.0"

__all__ = [
    "CoreGroup", "Outcome", "Partition", "Role", "SchedEntity", "Scheme",
    "Task", "TaskClass", "TaskSet", "TIME_EPS", "dump_taskset",
    "dumps_taskset", "format_partition", "load_taskset", "loads_taskset",
    "read_taskset", "save_taskset", "task_utilization", "Xorshift64Star",
    "GenConfig", "GenerationError", "generate_taskset", "uunifast",
    "densities", "density_test", "optimal_virtual_deadline_oracle",
    "split_task", "split_taskset", "virtual_deadline",
    "InfeasibleConfigError", "partition_flexstep", "partition_hmr",
    "partition_lockstep", "CheckerRelease", "ReleaseModel", "SimConfig",
    "SimResult", "TimeMode", "default_horizon", "hyperperiod_horizon",
    "schedulable", "simulate", "CampaignConfig", "SweepConfig", "SweepRow",
    "rows_to_csv", "run_fault_campaign", "run_sweep", "checkerflow",
]
