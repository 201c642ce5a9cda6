import pytest

from mfvmp import bench
from mfvmp.bench import PlacementFormatError, RunReport, SolverParams
from mfvmp.domain import ActivatedPs, InfeasiblePlacement, Placement, generate_instance

GOLDEN_HEADER = ("solver,instance,seed,repeat,rmp,task_size,pop_per_task,iters,mutation_prob,wall_time_ms,"
                 "utilization,util_cpu,util_ram,util_disk,servers,cost,lower_bound")


def _report(solver="mfea", cost=10.0, seed=0, instance="h"):
    return RunReport(solver, instance, seed, 0, 0.3, 200, 5, 50, 0.1, 1.0, 0.5, 0.5, 0.5, 0.5, 3, cost, 1.0)


def test_report_columns_are_stable():
    assert ",".join(bench.REPORT_COLUMNS) == GOLDEN_HEADER
    assert bench.reports_csv([_report()]).splitlines()[0] == GOLDEN_HEADER


def test_summarize_single_report():
    (row,) = bench.summarize([_report(cost=12.5)])
    assert row["cost_mean"] == 12.5 and row["cost_std"] == 0
    assert row["improvement_vs_ffd"] is None


def test_summarize_improvement_columns():
    rows = bench.summarize([_report("ffd", 4224.34), _report("sfea", 2430.31), _report("mfea", 2316.15),
                            _report("mfea", 2316.15, seed=1)])
    mf = next(r for r in rows if r["solver"] == "mfea")
    assert mf["runs"] == 2
    assert mf["improvement_vs_ffd"] == pytest.approx((4224.34 - 2316.15) / 4224.34)
    assert mf["improvement_vs_ffd"] == pytest.approx(0.452, abs=1e-3)
    assert mf["improvement_vs_sfea"] == pytest.approx((2430.31 - 2316.15) / 2430.31)
    with pytest.raises(ValueError):
        bench.summarize([])
    assert "mfea" in bench.format_summary(rows)


def test_summary_rows_in_csv(tmp_path):
    reports = [_report(cost=c, seed=k) for k, c in enumerate((10.0, 12.0, 14.0))]
    lines = bench.reports_csv(reports).splitlines()
    assert len(lines) == 6
    mean, std = lines[4].split(","), lines[5].split(",")
    cols = bench.REPORT_COLUMNS
    assert mean[cols.index("repeat")] == "mean" and float(mean[cols.index("cost")]) == 12.0
    assert std[cols.index("repeat")] == "std" and float(std[cols.index("cost")]) == 2.0
    path = tmp_path / "r.csv"
    path.write_text("\n".join(lines) + "\n")
    assert bench.read_reports(path) == reports


def test_placement_file_round_trip():
    inst = generate_instance(200, seed=4)
    placement, _, _ = bench.solve("ffd", inst, 0)
    text = bench.dumps_placement(placement, inst, "ffd", 0)
    back, header = bench.loads_placement(text, inst)
    assert back == placement
    assert header == {"instance_hash": bench.instance_hash(inst), "solver": "ffd", "seed": "0"}
    metrics = bench.verify(back, inst)
    assert metrics["servers"] == len(placement) and metrics["cost"] >= metrics["lower_bound"]


def test_placement_file_guards():
    inst = generate_instance(20, seed=4)
    other = generate_instance(20, seed=5)
    placement, _, _ = bench.solve("ffd", inst, 0)
    text = bench.dumps_placement(placement, inst)
    with pytest.raises(PlacementFormatError, match="made for instance"):
        bench.loads_placement(text, other)
    head = text.splitlines()[:3]
    with pytest.raises(PlacementFormatError):
        bench.loads_placement("\n".join(head + ["0,9,1"]), inst)
    with pytest.raises(PlacementFormatError):
        bench.loads_placement("\n".join(head + ["1,1,1"]), inst)
    with pytest.raises(PlacementFormatError):
        bench.loads_placement("\n".join(head + ["0,1"]), inst)
    bad = Placement((ActivatedPs(inst.ps_types[0], (0,)),))
    with pytest.raises(InfeasiblePlacement):
        bench.verify(bad, inst)


def test_every_solver_emits_verifiable_placements():
    inst = generate_instance(8, seed=1)
    params = SolverParams(task_size=4, iters=2)
    for solver in bench.SOLVERS:
        placement, ms, _ = bench.solve(solver, inst, 0, params)
        back, _ = bench.loads_placement(bench.dumps_placement(placement, inst, solver), inst)
        bench.verify(back, inst)
        assert ms >= 0
    with pytest.raises(ValueError):
        bench.solve("nope", inst, 0)


def test_run_repeats_in_parallel_keeps_order(monkeypatch):
    inst = generate_instance(200, seed=2)
    params = SolverParams(task_size=50, iters=2, pop_per_task=2)
    serial = bench.run_repeats("mfea", inst, 5, 3, params, workers=1)
    monkeypatch.setenv(bench.WORKERS_ENV, "2")
    assert bench.worker_count(3) == 2
    parallel = bench.run_repeats("mfea", inst, 5, 3, params)
    assert [r.repeat for r, _, _ in parallel] == [0, 1, 2]
    assert [r.seed for r, _, _ in parallel] == [5, 6, 7]
    assert [r.cost for r, _, _ in parallel] == [r.cost for r, _, _ in serial]
