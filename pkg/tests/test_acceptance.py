"""Acceptance criteria, one PASS/FAIL line each (also listed in the pytest terminal summary).

Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import statistics
import time
from collections import Counter

import numpy as np
import pytest

from mfvmp import bench, mfea
from mfvmp.allocation import greedy_allocate
from mfvmp.baselines import exact_solve, ffd_solve, lower_bound, sfea_solve
from mfvmp.cli import main
from mfvmp.consolidation import remigrate_and_merge
from mfvmp.decomposition import Decoder, build_unified_space, split, split_budget, task_sizes
from mfvmp.domain import check_placement, cluster_utilization, generate_instance, placement_cost
from mfvmp.mfea import Genotype, MfeaConfig, Problem, crossover, evaluate, mutate

SEEDS = range(5)
DS1_VMS = 5000


def _timed(solver, instance, seed):
    placement, ms, _ = bench.solve(solver, instance, seed)
    check_placement(placement, instance)
    return placement, ms


@pytest.fixture(scope="module")
def ds1():
    """Per seed: instance, traced MFEA result, and timed MFEA / SFEA / FFD runs."""
    warm = generate_instance(600, seed=99)
    for solver in ("mfea", "sfea", "ffd"):
        bench.solve(solver, warm, 0, bench.SolverParams(task_size=200, iters=2))
    runs = []
    for s in SEEDS:
        inst = generate_instance(DS1_VMS, seed=s)
        traced, res = mfea.solve(inst, MfeaConfig(seed=s, merge_every=1))
        mf, mf_ms = _timed("mfea", inst, s)
        assert mf == traced  # tracing never changes the search
        sf, sf_ms = _timed("sfea", inst, s)
        ffd, _ = _timed("ffd", inst, s)
        runs.append(dict(instance=inst, mfea=mf, mfea_ms=mf_ms, trace=res.trace, sfea=sf, sfea_ms=sf_ms, ffd=ffd))
    return runs


def test_criterion_1_mfea_utilization(ds1, criterion):
    utils = [cluster_utilization(r["mfea"], r["instance"]).comprehensive for r in ds1]
    costs = [placement_cost(r["mfea"]) for r in ds1]
    mean = statistics.mean(utils)
    criterion(1, "MFEA utilization >= 0.80 at 5000 VMs", mean >= 0.80,
              f"mean util {mean:.4f} over {len(utils)} seeds (min {min(utils):.4f}); mean cost {statistics.mean(costs):.2f}")


def test_criterion_2_ffd_gap(ds1, criterion):
    gaps = [(placement_cost(r["ffd"]) - placement_cost(r["mfea"])) / placement_cost(r["ffd"]) for r in ds1]
    mean = statistics.mean(gaps)
    criterion(2, "cost gap vs FFD >= 0.35", mean >= 0.35 and min(gaps) >= 0.35,
              f"mean gap {mean:.4f}, min {min(gaps):.4f}")


def test_criterion_3_ffd_band(ds1, criterion):
    utils = [cluster_utilization(r["ffd"], r["instance"]).comprehensive for r in ds1]
    mean = statistics.mean(utils)
    criterion(3, "FFD utilization in [0.53, 0.63]", all(0.53 <= u <= 0.63 for u in utils),
              f"mean {mean:.4f}, range [{min(utils):.4f}, {max(utils):.4f}]")


def test_criterion_4_ablation_ordering(ds1, criterion):
    mf_cost = statistics.mean(placement_cost(r["mfea"]) for r in ds1)
    sf_cost = statistics.mean(placement_cost(r["sfea"]) for r in ds1)
    mf_ms = statistics.mean(r["mfea_ms"] for r in ds1)
    sf_ms = statistics.mean(r["sfea_ms"] for r in ds1)
    criterion(4, "MFEA cost <= SFEA cost and MFEA time < SFEA time", mf_cost <= sf_cost and mf_ms < sf_ms,
              f"cost {mf_cost:.2f} vs {sf_cost:.2f}; time {mf_ms:.0f} ms vs {sf_ms:.0f} ms")


def test_criterion_5_convergence(ds1, criterion):
    ratios = []
    for r in ds1:
        merged = r["trace"].merged_cost()
        ratios.append((merged[10] - merged[50]) / merged[50])
    worst = max(ratios)
    criterion(5, "merged cost at iteration 10 within 5% of iteration 50", worst <= 0.05,
              f"worst excess {100 * worst:.2f}%, mean {100 * statistics.mean(ratios):.2f}%")


def test_criterion_6_scaling(criterion):
    small = generate_instance(5000, seed=0)
    large = generate_instance(20000, seed=0)
    bench.solve("mfea", small, 0)  # warm-up
    t_small = statistics.median(bench.solve("mfea", small, 0)[1] for _ in range(3))
    t_large = statistics.median(bench.solve("mfea", large, 0)[1] for _ in range(3))
    ratio = t_large / t_small
    criterion(6, "time(20000) <= 6 x time(5000)", ratio <= 6.0,
              f"{t_large:.0f} ms / {t_small:.0f} ms = {ratio:.2f}x (median of 3)")


def test_criterion_7_oracle_suite(criterion):
    t0 = time.perf_counter()
    checked, problems = 0, []
    cfg = MfeaConfig(n_per_task=4, individuals_per_task=3, max_iterations=5)
    for seed in range(100):
        inst = generate_instance(int(np.random.default_rng(seed).integers(1, 9)), seed=10_000 + seed)
        exact, exact_p = exact_solve(inst)
        check_placement(exact_p, inst)
        if lower_bound(inst) > exact + 1e-9:
            problems.append(f"seed {seed}: lower bound above optimum")
        candidates = {
            "ffd": ffd_solve(inst),
            "greedy": greedy_allocate(range(inst.n_vms), inst),
            "mfea": mfea.solve(inst, MfeaConfig(**{**cfg.__dict__, "seed": seed}))[0],
            "sfea": sfea_solve(inst, MfeaConfig(**{**cfg.__dict__, "seed": seed}))[0],
        }
        for name, p in candidates.items():
            check_placement(p, inst)
            if placement_cost(p) < exact - 1e-9:
                problems.append(f"seed {seed}: {name} beats the optimum")
        checked += 1
    elapsed = time.perf_counter() - t0
    criterion(7, "oracle suite on 100 instances with <= 8 VMs", not problems,
              f"{checked} instances, {len(problems)} violations, {elapsed:.1f} s")


def test_criterion_8_invariants(criterion):
    rng = np.random.default_rng(2024)
    failures = Counter()

    # permutation preservation under crossover and mutation, 10^4 cases
    inst = generate_instance(120, seed=1)
    tasks = split(inst, 30, seed=1)
    problem = Problem(inst, tasks, build_unified_space(tasks))
    n = problem.n_slots
    pool = [evaluate(Genotype(rng.permutation(n), int(rng.integers(1, len(tasks) + 1))), problem) for _ in range(30)]
    ident = np.arange(n)
    for _ in range(10_000):
        i, j = rng.choice(len(pool), size=2, replace=False)
        child = mutate(crossover(pool[i], pool[j], n, rng), rng, 0.5)
        failures["permutation"] += not np.array_equal(np.sort(child), ident)

    # decode multiset equality
    slot_type = problem.space.slot_type_ids()
    for _ in range(2000):
        task = tasks[int(rng.integers(len(tasks)))]
        kept = Decoder(problem.space, task).decode_slots(rng.permutation(n))
        failures["decode"] += Counter(slot_type[kept].tolist()) != task.vm_multiset

    # split arithmetic over 10^3 random (V, N_i) pairs
    for _ in range(1000):
        v = int(rng.integers(1, 20_000))
        size = int(rng.integers(1, v + 1))
        ps = int(rng.integers(0, 10_000))
        sizes = task_sizes(v, size)
        failures["split"] += sum(sizes) != v or sum(split_budget(ps, len(sizes))) != ps

    # merge conservation
    for seed in range(20):
        inst = generate_instance(300, seed=seed)
        parts = [greedy_allocate(t.vm_indices, inst, t.ps_budget) for t in split(inst, 60, seed=seed)]
        merged = remigrate_and_merge(parts, inst)
        check_placement(merged, inst)
        failures["merge"] += sorted(merged.vm_indices()) != list(range(inst.n_vms))

    total = sum(failures.values())
    criterion(8, "invariant suite", total == 0,
              "10^4 crossover/mutation, 2000 decodes, 10^3 split pairs, 20 merges; failures " + str(dict(failures)))


def test_criterion_9_determinism(tmp_path, criterion):
    inst = tmp_path / "inst.csv"

    def run(tag, argv):
        out = tmp_path / f"{tag}.csv"
        assert main([*argv, "--out", str(out)]) == 0
        return out

    def strip(path):
        lines = path.read_text().splitlines()
        header = lines[0].split(",")
        keep = [k for k, name in enumerate(header) if name not in bench.TIMING_COLUMNS]
        return [[row.split(",")[k] for k in keep] for row in lines]

    assert main(["gen", "--vms", "1000", "--seed", "3", "--out", str(inst)]) == 0
    gen_twin = run("gen2", ["gen", "--vms", "1000", "--seed", "3"])
    same = [inst.read_bytes() == gen_twin.read_bytes()]
    invocations = {
        "mfea": ["solve", "--solver", "mfea", "--instance", str(inst), "--seed", "5", "--repeats", "2"],
        "sfea": ["solve", "--solver", "sfea", "--instance", str(inst), "--seed", "5", "--iters", "10"],
        "ffd": ["solve", "--solver", "ffd", "--instance", str(inst)],
        "sweep": ["sweep", "--param", "mutation-prob", "--values", "0,0.3", "--instance", str(inst),
                  "--seed", "1", "--iters", "10"],
    }
    for tag, argv in invocations.items():
        same.append(strip(run(tag + "_a", argv)) == strip(run(tag + "_b", argv)))
    criterion(9, "same-seed CLI runs give identical reports", all(same),
              f"{sum(same)}/{len(same)} invocations identical (gen, mfea x2 repeats, sfea, ffd, sweep)")
