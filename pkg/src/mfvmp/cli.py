"""Command line entry point: ``mfvmp {gen,solve,sweep,verify}``."""
from __future__ import annotations

import argparse
import io
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from . import bench
from .domain import InfeasiblePlacement, InstanceFormatError, dumps_instance, generate_instance, load_instance

log = logging.getLogger("mfvmp")

SWEEP_PARAMS = {"rmp": ("rmp", float), "task-size": ("task_size", int), "mutation-prob": ("mutation_prob", float)}


class _Outputs:
    """Buffers output files and writes them all at the end, each via temp file + rename.

    A failing command therefore leaves no partial files behind.
    """

    def __init__(self):
        self.files: list[tuple[Path, str]] = []

    def add(self, path, text: str) -> None:
        self.files.append((Path(path), text))

    def commit(self) -> None:
        for path, text in self.files:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            try:
                with os.fdopen(fd, "w", newline="") as fh:
                    fh.write(text)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


def _per_repeat(path: str, r: int, repeats: int) -> Path:
    # one file per repeat: trace.csv -> trace.r0.csv, trace.r1.csv, ...
    p = Path(path)
    return p if repeats == 1 else p.with_name(f"{p.stem}.r{r}{p.suffix}")


def _trace_csv(trace) -> str:
    buf = io.StringIO()
    trace.to_csv(buf)
    return buf.getvalue()


def _add_solver_args(p: argparse.ArgumentParser, solver_default: str | None) -> None:
    p.add_argument("--solver", choices=bench.SOLVERS, default=solver_default, required=solver_default is None)
    p.add_argument("--instance", required=True, help="instance file written by `gen`")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1, help="repeat r runs with seed + r")
    d = bench.SolverParams()
    p.add_argument("--rmp", type=float, default=d.rmp)
    p.add_argument("--task-size", type=int, default=d.task_size)
    p.add_argument("--pop-per-task", type=int, default=d.pop_per_task)
    p.add_argument("--iters", type=int, default=d.iters)
    p.add_argument("--mutation-prob", type=float, default=d.mutation_prob)
    p.add_argument("--out", required=True, help="report CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfvmp", description="Deployment-cost VM placement solvers and benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random instance")
    g.add_argument("--vms", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--ps-per-type", default="unbounded", help="servers available per type (default: one per VM)")
    g.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="run a solver and write a report")
    _add_solver_args(s, None)
    s.add_argument("--trace", help="convergence trace CSV (mfea/sfea)")
    s.add_argument("--placement-out", help="placement file for `verify`")

    w = sub.add_parser("sweep", help="grid over one parameter")
    w.add_argument("--param", choices=sorted(SWEEP_PARAMS), required=True)
    w.add_argument("--values", required=True, help="comma separated values")
    _add_solver_args(w, "mfea")

    v = sub.add_parser("verify", help="check a placement file against an instance")
    v.add_argument("--instance", required=True)
    v.add_argument("--placement", required=True)
    return parser


def _params(args) -> bench.SolverParams:
    return bench.SolverParams(rmp=args.rmp, task_size=args.task_size, pop_per_task=args.pop_per_task,
                              iters=args.iters, mutation_prob=args.mutation_prob)


def _check_run_args(args) -> None:
    if args.repeats < 1:
        raise ValueError("--repeats must be at least 1")


def cmd_gen(args, out: _Outputs) -> None:
    ps = args.ps_per_type if args.ps_per_type == "unbounded" else int(args.ps_per_type)
    out.add(args.out, dumps_instance(generate_instance(args.vms, args.seed, ps)))


def cmd_solve(args, out: _Outputs) -> None:
    _check_run_args(args)
    instance = load_instance(args.instance)
    params = _params(args)
    params.config(args.seed)  # validates before any work starts
    results = bench.run_repeats(args.solver, instance, args.seed, args.repeats, params, trace=bool(args.trace))
    reports = [r for r, _, _ in results]
    out.add(args.out, bench.reports_csv(reports))
    for r, (report, placement, trace) in enumerate(results):
        if args.placement_out:
            out.add(_per_repeat(args.placement_out, r, args.repeats),
                    bench.dumps_placement(placement, instance, args.solver, report.seed))
        if args.trace and trace is not None:
            out.add(_per_repeat(args.trace, r, args.repeats), _trace_csv(trace))
    print(bench.format_summary(bench.summarize(reports)))


def cmd_sweep(args, out: _Outputs) -> None:
    _check_run_args(args)
    attr, cast = SWEEP_PARAMS[args.param]
    try:
        values = [cast(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"bad --values for {args.param}: {args.values!r}") from None
    if not values:
        raise ValueError("--values is empty")
    instance = load_instance(args.instance)
    cells = []
    for value in values:
        params = _params(args)
        setattr(params, attr, value)
        params.config(args.seed)
        cells.append(params)
    reports = []
    for params in cells:
        reports.extend(r for r, _, _ in bench.run_repeats(args.solver, instance, args.seed, args.repeats, params))
    out.add(args.out, bench.reports_csv(reports))
    for params in cells:
        cell = [r for r in reports if getattr(r, attr) == getattr(params, attr)]
        m = bench.summarize(cell)[0]
        print(f"{args.param}={getattr(params, attr)}: cost {m['cost_mean']:.2f} ± {m['cost_std']:.2f}, "
              f"util {100 * m['utilization_mean']:.2f}%, {m['wall_time_ms_mean']:.0f} ms")


def cmd_verify(args, out: _Outputs) -> None:
    instance = load_instance(args.instance)
    placement, header = bench.loads_placement(Path(args.placement).read_text(), instance)
    m = bench.verify(placement, instance)
    print(f"OK solver={header.get('solver', '')} seed={header.get('seed', '')} servers={m['servers']} "
          f"cost={m['cost']:.2f} utilization={m['utilization']:.4f} lower_bound={m['lower_bound']:.2f}")


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    out = _Outputs()
    try:
        COMMANDS[args.command](args, out)
        out.commit()
    except (InfeasiblePlacement, bench.PlacementFormatError) as exc:
        print(f"mfvmp: invalid placement: {exc}", file=sys.stderr)
        return 1
    except (InstanceFormatError, ValueError, OSError) as exc:
        print(f"mfvmp: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
