"""Command-line front end.

Subcommands: ``gen`` (emit a task set), ``partition`` (show a partition
trace), ``sweep`` (acceptance-ratio curves), ``simulate`` (single task
set, optional event trace), ``faults`` (detection-latency campaign).
Progress goes to stderr; data goes to the output file or stdout. Flags may
also be loaded from a ``key=value`` config file, with command-line flags
taking precedence.
"""

from __future__ import annotations

import argparse
import sys

from .gen import GenConfig, generate_taskset
from .model import (
    Scheme,
    dump_taskset,
    format_partition,
    read_taskset,
)
from .partition import partition_flexstep, partition_hmr, partition_lockstep
from .simkernel import (
    CheckerRelease,
    SimConfig,
    TimeMode,
    default_horizon,
    simulate,
)
from .sweep import (
    CampaignConfig,
    SweepConfig,
    rows_to_csv,
    run_fault_campaign,
    run_sweep,
)
from .checkerflow import records_to_csv

_SCHEMES = {
    "lockstep": Scheme.LOCKSTEP,
    "hmr": Scheme.HMR,
    "flexstep": Scheme.FLEXSTEP,
}


def _partition_fn(scheme: Scheme):
    return {
        Scheme.LOCKSTEP: partition_lockstep,
        Scheme.HMR: partition_hmr,
        Scheme.FLEXSTEP: partition_flexstep,
    }[scheme]


def _out_stream(path: str | None):
    return open(path, "w", encoding="ascii") if path else sys.stdout


def _load_config_defaults(argv: list[str]) -> dict[str, str]:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    ns, _ = pre.parse_known_args(argv)
    if not ns.config:
        return {}
    out = {}
    with open(ns.config, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _progress(done: int, total: int) -> None:
    print(f"\r{done}/{total}", end="", file=sys.stderr, flush=True)
    if done >= total:
        print(file=sys.stderr)


def _cmd_gen(args) -> int:
    cfg = GenConfig(
        n=args.tasks,
        m=args.cores,
        util=args.util,
        alpha=args.alpha,
        beta=args.beta,
        period_min=args.period_min,
        period_max=args.period_max,
        seed=args.seed,
    )
    ts = generate_taskset(cfg)
    out = _out_stream(args.out)
    dump_taskset(ts, out)
    if out is not sys.stdout:
        out.close()
    return 0


def _cmd_partition(args) -> int:
    ts = read_taskset(args.taskset)
    p = _partition_fn(_SCHEMES[args.scheme])(ts, args.cores)
    out = _out_stream(args.out)
    out.write(format_partition(p))
    if out is not sys.stdout:
        out.close()
    return 0


def _cmd_sweep(args) -> int:
    schemes = tuple(_SCHEMES[s] for s in (args.scheme or list(_SCHEMES)))
    base = dict(
        m=args.cores,
        n=args.tasks,
        alpha=args.alpha,
        beta=args.beta,
        util_start=args.util_start,
        util_end=args.util_end,
        util_step=args.util_step,
        sets_per_point=args.sets_per_point,
        schemes=schemes,
        seed=args.seed,
        period_min=args.period_min,
        period_max=args.period_max,
    )
    modes = ["analytic", "sim"] if args.verdict == "both" else [args.verdict]
    for mode in modes:
        cfg = SweepConfig(verdict_mode=mode, **base)
        rows = run_sweep(cfg, jobs=args.jobs, progress=_progress if args.verbose else None)
        path = args.out
        if path and len(modes) > 1 and mode == "sim":
            path = path + ".sim.csv"
        out = _out_stream(path)
        rows_to_csv(cfg, rows, out)
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_simulate(args) -> int:
    ts = read_taskset(args.taskset)
    scheme = _SCHEMES[args.scheme]
    p = _partition_fn(scheme)(ts, args.cores)
    horizon = args.horizon if args.horizon is not None else default_horizon(ts)
    cfg = SimConfig(
        horizon=horizon,
        checker_release_mode=(
            CheckerRelease.AT_ORIGINAL_START
            if args.checker_release == "original-start"
            else CheckerRelease.AT_VIRTUAL_DEADLINE
        ),
        time_mode=TimeMode.EXACT if args.time_mode == "exact" else TimeMode.FLOAT,
    )
    out = _out_stream(args.out)
    sink = (lambda line: out.write(line + "\n")) if args.trace else None
    res = simulate(p, cfg, trace=sink)
    out.write(f"# partition outcome: {p.outcome.value}\n")
    out.write(f"# horizon: {horizon:g}\n")
    out.write(f"# misses: {len(res.misses)}\n")
    for eid, job, dl in res.misses[:50]:
        out.write(f"# miss entity={eid} job={job} deadline={dl:g}\n")
    out.write(f"# preemptions: {res.preemptions}\n")
    out.write(f"# busiest core utilization: {res.busiest_core_util:.6f}\n")
    out.write(f"# schedulable: {res.schedulable}\n")
    if out is not sys.stdout:
        out.close()
    return 0 if res.schedulable else 1


def _cmd_faults(args) -> int:
    cfg = CampaignConfig(
        faults=args.faults,
        program_len=args.program_len,
        seg_limit=args.seg_limit,
        capacity=args.capacity,
        checker_lag=args.lag,
        checkers=args.checkers,
        bucket_width=args.bucket_width,
        seed=args.seed,
    )
    records, hist = run_fault_campaign(cfg, progress=_progress if args.verbose else None)
    out = _out_stream(args.out)
    records_to_csv(records, out)
    if out is not sys.stdout:
        out.close()
    hist_out = _out_stream(args.hist_out)
    hist_out.write("latency_bucket_low,count\n")
    for bucket, count in hist.items():
        hist_out.write(f"{bucket},{count}\n")
    if hist_out is not sys.stdout:
        hist_out.close()
    detected = sum(1 for r in records if r.detected)
    print(f"faults={len(records)} detected={detected} rate={detected/len(records):.6f}"
          if records else "faults=0", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flexsched", description=__doc__)
    ap.add_argument("--config", help="key=value file supplying flag defaults")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random task set")
    g.add_argument("--tasks", "-n", type=int, required=True)
    g.add_argument("--cores", "-m", type=int, default=8)
    g.add_argument("--util", "-u", type=float, required=True)
    g.add_argument("--alpha", type=float, default=0.0)
    g.add_argument("--beta", type=float, default=0.0)
    g.add_argument("--period-min", type=float, default=10.0)
    g.add_argument("--period-max", type=float, default=1000.0)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out", help="output file (default stdout)")
    g.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("partition", help="partition a task set and show the trace")
    p.add_argument("taskset", help="task set file")
    p.add_argument("--scheme", choices=sorted(_SCHEMES), required=True)
    p.add_argument("--cores", "-m", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_partition)

    s = sub.add_parser("sweep", help="acceptance-ratio curves over utilization")
    s.add_argument("--cores", "-m", type=int, required=True)
    s.add_argument("--tasks", "-n", type=int, required=True)
    s.add_argument("--alpha", type=float, default=0.0)
    s.add_argument("--beta", type=float, default=0.0)
    s.add_argument("--util-start", type=float, required=True)
    s.add_argument("--util-end", type=float, required=True)
    s.add_argument("--util-step", type=float, required=True)
    s.add_argument("--sets-per-point", type=int, default=500)
    s.add_argument("--scheme", action="append", choices=sorted(_SCHEMES),
                   help="repeatable; default all three")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--verdict", choices=["analytic", "sim", "both"], default="analytic")
    s.add_argument("--period-min", type=float, default=10.0)
    s.add_argument("--period-max", type=float, default=1000.0)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--verbose", action="store_true")
    s.add_argument("--out")
    s.set_defaults(fn=_cmd_sweep)

    m = sub.add_parser("simulate", help="simulate one task set under one scheme")
    m.add_argument("taskset")
    m.add_argument("--scheme", choices=sorted(_SCHEMES), required=True)
    m.add_argument("--cores", "-m", type=int, required=True)
    m.add_argument("--horizon", type=float)
    m.add_argument("--checker-release", choices=["virtual-deadline", "original-start"],
                   default="virtual-deadline")
    m.add_argument("--time-mode", choices=["float", "exact"], default="float")
    m.add_argument("--trace", action="store_true", help="emit one line per event")
    m.add_argument("--out")
    m.set_defaults(fn=_cmd_simulate)

    f = sub.add_parser("faults", help="fault-injection campaign")
    f.add_argument("--faults", type=int, default=100_000)
    f.add_argument("--program-len", type=int, default=4000)
    f.add_argument("--seg-limit", type=int, default=200)
    f.add_argument("--capacity", type=int, default=1024)
    f.add_argument("--lag", type=int, default=0)
    f.add_argument("--checkers", type=int, default=1)
    f.add_argument("--bucket-width", type=int, default=64)
    f.add_argument("--seed", type=int, default=1)
    f.add_argument("--verbose", action="store_true")
    f.add_argument("--out", help="records CSV (default stdout)")
    f.add_argument("--hist-out", help="latency histogram CSV (default stdout)")
    f.set_defaults(fn=_cmd_faults)

    return ap


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    ap = build_parser()
    defaults = _load_config_defaults(argv)
    if defaults:
        for action in ap._subparsers._group_actions[0].choices.values():  # type: ignore[union-attr]
            known = {a.dest for a in action._actions}
            action.set_defaults(**{k: _coerce(v) for k, v in defaults.items() if k in known})
    args = ap.parse_args(argv)
    return args.fn(args)


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


if __name__ == "__main__":
    sys.exit(main())
