"""Benchmark plumbing: solver runs, report rows, summaries and placement files."""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

from . import baselines, mfea
from .domain import (ActivatedPs, Instance, Placement, check_placement, cluster_utilization, instance_hash,
                     placement_cost)

SOLVERS = ("mfea", "sfea", "ffd", "exact")
WORKERS_ENV = "MFVMP_WORKERS"


@dataclass
class SolverParams:
    rmp: float = 0.3
    task_size: int = 200
    pop_per_task: int = 5
    iters: int = 50
    mutation_prob: float = 0.1

    def config(self, seed: int, merge_every: int = 1) -> mfea.MfeaConfig:
        return mfea.MfeaConfig(rmp=self.rmp, n_per_task=self.task_size, individuals_per_task=self.pop_per_task,
                               max_iterations=self.iters, mutation_prob=self.mutation_prob, seed=seed,
                               merge_every=merge_every)


@dataclass
class RunReport:
    solver: str
    instance: str
    seed: int
    repeat: int
    rmp: float
    task_size: int
    pop_per_task: int
    iters: int
    mutation_prob: float
    wall_time_ms: float
    utilization: float
    util_cpu: float
    util_ram: float
    util_disk: float
    servers: int
    cost: float
    lower_bound: float


REPORT_COLUMNS = [f.name for f in fields(RunReport)]
TIMING_COLUMNS = ("wall_time_ms",)


def solve(solver: str, instance: Instance, seed: int, params: SolverParams | None = None,
          trace: bool = False) -> tuple[Placement, float, mfea.RunTrace | None]:
    """Run one solver; returns the placement, core wall time in ms and the trace (if any)."""
    params = params or SolverParams()
    t0 = time.perf_counter()
    run_trace = None
    if solver == "mfea":
        placement, result = mfea.solve(instance, params.config(seed, merge_every=1 if trace else 0))
        run_trace = result.trace
    elif solver == "sfea":
        placement, result = baselines.sfea_solve(instance, params.config(seed, merge_every=0))
        run_trace = result.trace
    elif solver == "ffd":
        placement = baselines.ffd_solve(instance)
    elif solver == "exact":
        placement = baselines.exact_solve(instance)[1]
    else:
        raise ValueError(f"unknown solver {solver!r}; choose from {', '.join(SOLVERS)}")
    return placement, (time.perf_counter() - t0) * 1000, run_trace


def make_report(solver: str, instance: Instance, seed: int, repeat: int, params: SolverParams,
                placement: Placement, wall_ms: float) -> RunReport:
    u = cluster_utilization(placement, instance)
    return RunReport(
        solver=solver, instance=instance_hash(instance), seed=seed, repeat=repeat,
        rmp=params.rmp, task_size=params.task_size, pop_per_task=params.pop_per_task, iters=params.iters,
        mutation_prob=params.mutation_prob, wall_time_ms=round(wall_ms, 3),
        utilization=round(u.comprehensive, 6), util_cpu=round(u.cpu, 6), util_ram=round(u.ram, 6),
        util_disk=round(u.disk, 6), servers=len(placement), cost=placement_cost(placement),
        lower_bound=round(baselines.lower_bound(instance), 6),
    )


def _run_one(job):
    solver, instance, seed, repeat, params, trace = job
    placement, wall_ms, run_trace = solve(solver, instance, seed, params, trace)
    check_placement(placement, instance)
    return make_report(solver, instance, seed, repeat, params, placement, wall_ms), placement, run_trace


def worker_count(n_jobs: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, min(n_jobs, os.cpu_count() or 1))


def run_repeats(solver: str, instance: Instance, seed: int, repeats: int, params: SolverParams | None = None,
                trace: bool = False, workers: int | None = None):
    """Repeat ``r`` uses seed ``seed + r``. Results come back in repeat order."""
    params = params or SolverParams()
    jobs = [(solver, instance, seed + r, r, params, trace) for r in range(repeats)]
    workers = workers or worker_count(len(jobs))
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    return mean, math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))


SUMMARY_METRICS = ("wall_time_ms", "utilization", "servers", "cost")


def summarize(reports: Iterable[RunReport]) -> list[dict]:
    """Mean and sample standard deviation of the four indicators per (solver, instance).

    Adds relative cost improvement versus FFD and SFEA where those solvers
    were run on the same instance: ``(cost_ref - cost) / cost_ref``.
    """
    groups: dict[tuple[str, str], list[RunReport]] = {}
    for r in reports:
        groups.setdefault((r.solver, r.instance), []).append(r)
    if not groups:
        raise ValueError("nothing to summarize")
    rows = []
    for (solver, inst), rs in groups.items():
        row = {"solver": solver, "instance": inst, "runs": len(rs)}
        for m in SUMMARY_METRICS:
            row[f"{m}_mean"], row[f"{m}_std"] = _mean_std([getattr(r, m) for r in rs])
        rows.append(row)
    mean_cost = {(r["solver"], r["instance"]): r["cost_mean"] for r in rows}
    for row in rows:
        for ref in ("ffd", "sfea"):
            base = mean_cost.get((ref, row["instance"]))
            row[f"improvement_vs_{ref}"] = (base - row["cost_mean"]) / base if base else None
    return rows


def format_summary(rows: Sequence[dict]) -> str:
    head = f"{'solver':<7} {'runs':>4} {'time_ms':>10} {'util':>8} {'servers':>9} {'cost':>11} {'vs_ffd':>7} {'vs_sfea':>7}"
    lines = [head]
    for r in rows:
        def pct(x):
            return "-" if x is None else f"{100 * x:.1f}%"
        lines.append(f"{r['solver']:<7} {r['runs']:>4} {r['wall_time_ms_mean']:>10.1f} "
                     f"{100 * r['utilization_mean']:>7.2f}% {r['servers_mean']:>9.2f} {r['cost_mean']:>11.2f} "
                     f"{pct(r['improvement_vs_ffd']):>7} {pct(r['improvement_vs_sfea']):>7}")
    return "\n".join(lines)


def reports_csv(reports: Sequence[RunReport], with_summary: bool = True) -> str:
    """Report rows, then ``mean`` and ``std`` rows for every configuration run more than once."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        w.writerow([_fmt(v) for v in asdict(r).values()])
    if with_summary:
        numeric = ("wall_time_ms", "utilization", "util_cpu", "util_ram", "util_disk", "servers", "cost",
                   "lower_bound")
        groups: dict[tuple, list[RunReport]] = {}
        for r in reports:
            key = (r.solver, r.instance, r.rmp, r.task_size, r.pop_per_task, r.iters, r.mutation_prob)
            groups.setdefault(key, []).append(r)
        for rs in groups.values():
            if len(rs) < 2:
                continue
            stats = {m: _mean_std([getattr(r, m) for r in rs]) for m in numeric}
            for label, k in (("mean", 0), ("std", 1)):
                row = asdict(rs[0])
                row["seed"] = ""
                row["repeat"] = label
                for m in numeric:
                    row[m] = round(stats[m][k], 6)
                w.writerow([_fmt(v) for v in row.values()])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v)


def read_reports(path) -> list[RunReport]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["repeat"] in ("mean", "std"):
                continue
            out.append(RunReport(**{name: _cast(name, row[name]) for name in REPORT_COLUMNS}))
    return out


_INT_FIELDS = {"seed", "repeat", "task_size", "pop_per_task", "iters", "servers"}
_STR_FIELDS = {"solver", "instance"}


def _cast(name: str, raw: str):
    if name in _STR_FIELDS:
        return raw
    if name in _INT_FIELDS:
        return int(raw)
    return float(raw)


# -- placement file format ----------------------------------------------------
#
#   # instance_hash=<16 hex>
#   # solver=<name>
#   # seed=<int>
#   <server_idx>,<ps_type_id>,<vm_idx>;<vm_idx>;...


class PlacementFormatError(ValueError):
    pass


def dumps_placement(placement: Placement, instance: Instance, solver: str = "", seed: int | str = "") -> str:
    lines = [f"# instance_hash={instance_hash(instance)}", f"# solver={solver}", f"# seed={seed}"]
    for k, s in enumerate(placement.servers):
        lines.append(f"{k},{s.ps_type.type_id},{';'.join(str(i) for i in s.loaded_vms)}")
    return "\n".join(lines) + "\n"


def loads_placement(text: str, instance: Instance) -> tuple[Placement, dict[str, str]]:
    """Parse a placement file against ``instance``; refuses a mismatched instance hash."""
    header: dict[str, str] = {}
    servers = []
    by_id = {t.type_id: t for t in instance.ps_types}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise PlacementFormatError(f"line {n}: expected 'server,type,vms', got {line!r}")
        try:
            idx, type_id = int(parts[0]), int(parts[1])
            vms = tuple(int(v) for v in parts[2].split(";")) if parts[2] else ()
        except ValueError as exc:
            raise PlacementFormatError(f"line {n}: {exc}") from None
        if idx != len(servers):
            raise PlacementFormatError(f"line {n}: server index {idx} out of sequence")
        if type_id not in by_id:
            raise PlacementFormatError(f"line {n}: unknown server type {type_id}")
        servers.append(ActivatedPs(by_id[type_id], vms))
    expected = instance_hash(instance)
    if header.get("instance_hash") != expected:
        raise PlacementFormatError(
            f"placement was made for instance {header.get('instance_hash')!r}, not {expected!r}")
    return Placement(tuple(servers)), header


def verify(placement: Placement, instance: Instance) -> dict:
    """Re-check every placement invariant and recompute the metrics."""
    check_placement(placement, instance)
    u = cluster_utilization(placement, instance)
    return {
        "servers": len(placement),
        "cost": placement_cost(placement),
        "utilization": u.comprehensive,
        "util_cpu": u.cpu,
        "util_ram": u.ram,
        "util_disk": u.disk,
        "lower_bound": baselines.lower_bound(instance),
    }
