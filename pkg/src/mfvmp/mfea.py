"""Multi-factorial evolutionary search over the unified slot space.

Each individual is a permutation of unified-space slots plus a skill factor
(the one task it is evaluated on). Evaluation decodes the permutation for
that task and runs the greedy allocator; the factorial cost is the
deployment cost of the resulting servers.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .allocation import allocate_arrays, tie_break_order
from .consolidation import remigrate_and_merge
from .decomposition import Decoder, TaskSpec, UnifiedSpace, build_unified_space, split
from .domain import ActivatedPs, Instance, Placement

logger = logging.getLogger(__name__)

# named RNG streams derived from the master seed
STREAM_SPLIT = 0
STREAM_INIT = 1
STREAM_MATING = 2
STREAM_MUTATION = 3


def stream(seed: int, name: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), name])


@dataclass
class MfeaConfig:
    rmp: float = 0.3
    n_per_task: int = 200
    individuals_per_task: int = 5
    max_iterations: int = 50
    mutation_prob: float = 0.1
    seed: int = 0
    # merged-solution cost is traced every `merge_every` iterations; 0 disables
    merge_every: int = 1

    def __post_init__(self):
        if not 0.0 <= self.rmp <= 1.0:
            raise ValueError(f"rmp must lie in [0, 1], got {self.rmp}")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError(f"mutation_prob must lie in [0, 1], got {self.mutation_prob}")
        if self.n_per_task < 1 or self.individuals_per_task < 1:
            raise ValueError("n_per_task and individuals_per_task must be positive")
        if self.max_iterations < 0 or self.merge_every < 0:
            raise ValueError("max_iterations and merge_every must be non-negative")


@dataclass
class SlotPhenotype:
    """Servers of one evaluated genotype, expressed in unified-space slots."""

    kept_slots: np.ndarray  # decoded slots in scan order
    server_type: np.ndarray  # type index per server, commit order
    assign: np.ndarray  # server index per kept slot
    load: np.ndarray  # (n_servers, 3)
    utilization: np.ndarray  # comprehensive utilization per server
    grouped: np.ndarray  # kept slots ordered by server, scan order within
    offsets: np.ndarray  # server k holds grouped[offsets[k]:offsets[k + 1]]

    @property
    def n_servers(self) -> int:
        return len(self.server_type)

    def server_slots(self) -> list[np.ndarray]:
        return [self.grouped[self.offsets[k]:self.offsets[k + 1]] for k in range(self.n_servers)]


@numba.njit(cache=True)
def _group_by_server(kept, demand, assign, n_servers):
    counts = np.zeros(n_servers + 1, dtype=np.int64)
    load = np.zeros((n_servers, 3), dtype=np.int64)
    for p in range(len(assign)):
        k = assign[p]
        counts[k + 1] += 1
        load[k, 0] += demand[p, 0]
        load[k, 1] += demand[p, 1]
        load[k, 2] += demand[p, 2]
    offsets = np.cumsum(counts)
    fill = offsets[:-1].copy()
    grouped = np.empty(len(kept), dtype=np.int64)
    for p in range(len(kept)):
        k = assign[p]
        grouped[fill[k]] = kept[p]
        fill[k] += 1
    return grouped, offsets, load


@dataclass
class Genotype:
    order: np.ndarray
    skill_factor: int
    cached_phenotype: SlotPhenotype | None = None
    cached_cost: int | None = None  # hundredths


@dataclass
class EvaluatedIndividual:
    genotype: Genotype
    cost_cents: int
    factorial_rank: int = 0
    scalar_fitness: float = 0.0
    age: int = 0  # 0 = survived from the previous generation, 1 = offspring

    @property
    def factorial_cost(self) -> float:
        return self.cost_cents / 100

    @property
    def skill_factor(self) -> int:
        return self.genotype.skill_factor

    @property
    def phenotype(self) -> SlotPhenotype:
        return self.genotype.cached_phenotype

    def cost_on(self, task_index: int) -> float:
        """Factorial cost on any task; infinite off the skill-factor task."""
        return self.factorial_cost if task_index == self.skill_factor else float("inf")


@dataclass
class RunTrace:
    # (iteration, task_index, best_cost, elapsed_ms); task_index 0 is the merged solution
    records: list[tuple[int, int, float, float]] = field(default_factory=list)

    def add(self, iteration: int, task_index: int, cost: float, elapsed_ms: float) -> None:
        self.records.append((iteration, task_index, cost, elapsed_ms))

    def best_cost(self, task_index: int) -> list[float]:
        return [r[2] for r in self.records if r[1] == task_index]

    def merged_cost(self) -> dict[int, float]:
        return {r[0]: r[2] for r in self.records if r[1] == 0}

    def to_csv(self, path_or_file) -> None:
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh)
            w.writerow(["iteration", "task_index", "best_cost", "elapsed_ms"])
            for it, task, cost, ms in self.records:
                w.writerow([it, task, f"{cost:.2f}", f"{ms:.3f}"])
        finally:
            if own:
                fh.close()


class Problem:
    """Everything evaluation needs, precomputed once per run."""

    def __init__(self, instance: Instance, tasks: Sequence[TaskSpec], space: UnifiedSpace):
        self.instance = instance
        self.tasks = list(tasks)
        self.space = space
        self.n_slots = space.size
        self.slot_demand = space.slot_demands()
        self.caps = instance.capacity_matrix()
        self.type_order = tie_break_order(instance.ps_types)
        self.decoders = [Decoder(space, t) for t in self.tasks]
        self.budgets = [np.array([t.ps_budget[p] for p in instance.ps_types], dtype=np.int64) for t in self.tasks]
        self.cost_cents = instance.cost_cents_vector()

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    def phenotype_placement(self, ind: EvaluatedIndividual) -> Placement:
        """The individual's servers with instance VM indices."""
        ph = ind.phenotype
        dec = self.decoders[ind.skill_factor - 1]
        vms = dec.vm_indices(ph.kept_slots)
        groups: list[list[int]] = [[] for _ in range(len(ph.server_type))]
        for vm, k in zip(vms, ph.assign):
            groups[k].append(vm)
        types = self.instance.ps_types
        return Placement(tuple(ActivatedPs(types[int(t)], tuple(g)) for t, g in zip(ph.server_type, groups)))


def evaluate(genotype: Genotype, problem: Problem, age: int = 1) -> EvaluatedIndividual:
    task = genotype.skill_factor - 1
    kept = problem.decoders[task].decode_slots(genotype.order)
    demand = problem.slot_demand[kept]
    server_type, assign = allocate_arrays(demand, problem.caps, problem.budgets[task], problem.type_order)
    n_servers = len(server_type)
    grouped, offsets, load = _group_by_server(kept, demand, assign, n_servers)
    util = (load / problem.caps[server_type]).sum(axis=1) / 3
    genotype.cached_phenotype = SlotPhenotype(kept, server_type, assign, load, util, grouped, offsets)
    genotype.cached_cost = int(problem.cost_cents[server_type].sum())
    return EvaluatedIndividual(genotype, genotype.cached_cost, age=age)


def initialize_population(problem: Problem, cfg: MfeaConfig, rng: np.random.Generator) -> list[EvaluatedIndividual]:
    pop = []
    for task in range(1, problem.n_tasks + 1):
        for _ in range(cfg.individuals_per_task):
            g = Genotype(rng.permutation(problem.n_slots), task)
            pop.append(evaluate(g, problem, age=0))
    assign_ranks(pop)
    return pop


@numba.njit(cache=True)
def _claim_servers(grouped, offsets, rank, n_slots):
    """Walk servers in ``rank`` order, keeping those whose slots are all unclaimed."""
    claimed = np.zeros(n_slots, dtype=np.bool_)
    head = np.empty(len(grouped), dtype=np.int64)
    w = 0
    for k in rank:
        clash = False
        for p in range(offsets[k], offsets[k + 1]):
            if claimed[grouped[p]]:
                clash = True
                break
        if clash:
            continue
        for p in range(offsets[k], offsets[k + 1]):
            claimed[grouped[p]] = True
            head[w] = grouped[p]
            w += 1
    return head[:w], claimed


def crossover(parent_a: EvaluatedIndividual, parent_b: EvaluatedIndividual, n_slots: int,
              rng: np.random.Generator) -> np.ndarray:
    """Exon-shuffling child: fullest non-conflicting servers first, rest shuffled.

    Servers of both parents are pooled and sorted by falling utilization
    (ties keep parent A first); a server is kept whole unless one of its
    slots is already claimed, in which case it is dropped.
    """
    pa, pb = parent_a.phenotype, parent_b.phenotype
    grouped = np.concatenate([pa.grouped, pb.grouped])
    offsets = np.concatenate([pa.offsets, pb.offsets[1:] + pa.offsets[-1]])
    util = np.concatenate([pa.utilization, pb.utilization])
    head, claimed = _claim_servers(grouped, offsets, np.argsort(-util, kind="stable"), n_slots)
    tail = np.flatnonzero(~claimed)
    rng.shuffle(tail)
    return np.concatenate([head, tail])


def mutate(order: np.ndarray, rng: np.random.Generator, mutation_prob: float) -> np.ndarray:
    """Swap two distinct positions with probability ``mutation_prob``."""
    order = np.array(order, copy=True)
    if len(order) < 2 or rng.random() >= mutation_prob:
        return order
    i, j = rng.choice(len(order), size=2, replace=False)
    order[i], order[j] = order[j], order[i]
    return order


def reproduce(population: Sequence[EvaluatedIndividual], cfg: MfeaConfig, n_slots: int,
              mating_rng: np.random.Generator, mutation_rng: np.random.Generator) -> list[Genotype]:
    """Assortative mating with vertical cultural transmission; returns unevaluated offspring."""
    n = len(population)
    offspring: list[Genotype] = []
    if n < 2:
        for p in population:
            offspring.append(Genotype(mutate(p.genotype.order, mutation_rng, 1.0), p.skill_factor))
        return offspring
    while len(offspring) < n:
        ia, ib = mating_rng.choice(n, size=2, replace=False)
        a, b = population[ia], population[ib]
        if a.skill_factor == b.skill_factor or mating_rng.random() < cfg.rmp:
            for first, second in ((a, b), (b, a)):
                child = crossover(first, second, n_slots, mating_rng)
                child = mutate(child, mutation_rng, cfg.mutation_prob)
                sf = a.skill_factor if mating_rng.random() < 0.5 else b.skill_factor
                offspring.append(Genotype(child, sf))
        else:
            # mutation-only branch always swaps, otherwise the child is a clone
            for p in (a, b):
                offspring.append(Genotype(mutate(p.genotype.order, mutation_rng, 1.0), p.skill_factor))
    return offspring[:n]


def assign_ranks(individuals: Sequence[EvaluatedIndividual]) -> None:
    by_task: dict[int, list[int]] = {}
    for k, ind in enumerate(individuals):
        by_task.setdefault(ind.skill_factor, []).append(k)
    for members in by_task.values():
        members.sort(key=lambda k: (individuals[k].cost_cents, individuals[k].age, k))
        for rank, k in enumerate(members, start=1):
            individuals[k].factorial_rank = rank
            individuals[k].scalar_fitness = 1.0 / rank


def select_survivors(candidates: Sequence[EvaluatedIndividual], cfg: MfeaConfig, problem: Problem,
                     mutation_rng: np.random.Generator | None = None) -> list[EvaluatedIndividual]:
    """Keep the ``individuals_per_task`` best of every task (equal survival per task)."""
    candidates = list(candidates)
    assign_ranks(candidates)
    by_task: dict[int, list[EvaluatedIndividual]] = {}
    for c in candidates:
        by_task.setdefault(c.skill_factor, []).append(c)
    survivors = []
    for task in range(1, problem.n_tasks + 1):
        members = sorted(by_task.get(task, []), key=lambda c: c.factorial_rank)
        kept = members[:cfg.individuals_per_task]
        if len(kept) < cfg.individuals_per_task:
            if not kept:
                raise RuntimeError(f"task {task} has no individuals left")
            logger.info("task %d has %d candidates, refilling to %d", task, len(kept), cfg.individuals_per_task)
            rng = mutation_rng if mutation_rng is not None else np.random.default_rng(task)
            best = kept[0]
            while len(kept) < cfg.individuals_per_task:
                g = Genotype(mutate(best.genotype.order, rng, 1.0), task)
                kept.append(evaluate(g, problem))
        survivors.extend(kept)
    for s in survivors:
        s.age = 0
    assign_ranks(survivors)
    return survivors


def merged_cost_cents(best: Sequence[EvaluatedIndividual], problem: Problem) -> int:
    """Cost of re-migrating and merging the given individuals, on arrays.

    Mirrors :func:`consolidation.remigrate_and_merge` without building
    placement objects; used for per-iteration tracing.
    """
    kept_cost = 0
    kept_per_type = np.zeros(len(problem.caps), dtype=np.int64)
    pool = []
    for ind in best:
        ph = ind.phenotype
        surplus = (ph.load < problem.caps[ph.server_type]).all(axis=1)
        kept_types = ph.server_type[~surplus]
        kept_cost += int(problem.cost_cents[kept_types].sum())
        kept_per_type += np.bincount(kept_types, minlength=len(problem.caps))
        for k in np.flatnonzero(surplus):
            pool.append(ph.grouped[ph.offsets[k]:ph.offsets[k + 1]])
    if not pool:
        return kept_cost
    demand = problem.slot_demand[np.concatenate(pool)]
    budget = np.array(problem.instance.ps_availability, dtype=np.int64) - kept_per_type
    server_type, _ = allocate_arrays(demand, problem.caps, budget, problem.type_order)
    return kept_cost + int(problem.cost_cents[server_type].sum())


def best_per_task(population: Sequence[EvaluatedIndividual], n_tasks: int) -> list[EvaluatedIndividual]:
    best: dict[int, EvaluatedIndividual] = {}
    for ind in population:
        cur = best.get(ind.skill_factor)
        if cur is None or (ind.cost_cents, ind.factorial_rank) < (cur.cost_cents, cur.factorial_rank):
            best[ind.skill_factor] = ind
    return [best[t] for t in range(1, n_tasks + 1)]


@dataclass
class MfeaResult:
    best_individuals: list[EvaluatedIndividual]
    best_placements: list[Placement]
    trace: RunTrace
    tasks: list[TaskSpec]
    space: UnifiedSpace
    population: list[EvaluatedIndividual]


def run(instance: Instance, cfg: MfeaConfig | None = None, tasks: Sequence[TaskSpec] | None = None) -> MfeaResult:
    """Evolve all tasks in one population and return each task's best placement.

    ``tasks`` overrides the random split (the single-task ablation passes the
    undivided instance here).
    """
    cfg = cfg or MfeaConfig()
    t0 = time.perf_counter()
    if tasks is None:
        tasks = split(instance, min(cfg.n_per_task, instance.n_vms), rng=stream(cfg.seed, STREAM_SPLIT))
    tasks = list(tasks)
    space = build_unified_space(tasks)
    problem = Problem(instance, tasks, space)
    mating_rng = stream(cfg.seed, STREAM_MATING)
    mutation_rng = stream(cfg.seed, STREAM_MUTATION)

    pop = initialize_population(problem, cfg, stream(cfg.seed, STREAM_INIT))
    trace = RunTrace()

    def record(it: int) -> None:
        best = best_per_task(pop, problem.n_tasks)
        ms = (time.perf_counter() - t0) * 1000
        for ind in best:
            trace.add(it, ind.skill_factor, ind.factorial_cost, ms)
        if cfg.merge_every and (it % cfg.merge_every == 0 or it == cfg.max_iterations):
            trace.add(it, 0, merged_cost_cents(best, problem) / 100, (time.perf_counter() - t0) * 1000)

    record(0)
    for it in range(1, cfg.max_iterations + 1):
        children = reproduce(pop, cfg, problem.n_slots, mating_rng, mutation_rng)
        offspring = [evaluate(g, problem) for g in children]
        pop = select_survivors(pop + offspring, cfg, problem, mutation_rng)
        record(it)

    best = best_per_task(pop, problem.n_tasks)
    return MfeaResult(best, [problem.phenotype_placement(b) for b in best], trace, tasks, space, pop)


def solve(instance: Instance, cfg: MfeaConfig | None = None) -> tuple[Placement, MfeaResult]:
    """Full pipeline: evolve the sub-tasks, then re-migrate and merge their best servers."""
    result = run(instance, cfg)
    return remigrate_and_merge(result.best_placements, instance), result
