"""Splitting a large instance into sub-tasks and the shared genotype space.

The unified space holds, for every VM type, as many slots as the largest
count of that type in any task. A genotype is a permutation of slot ids;
decoding it for a task keeps the first slots of each type until that task's
demand is met.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .domain import Instance, PsType, VmType


class TaskSizeError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    index: int  # 1-based
    vm_indices: tuple[int, ...]  # instance VM indices, in assignment order
    ps_budget: dict[PsType, int] = field(hash=False)
    vm_types: tuple[VmType, ...] = field(default=(), repr=False)

    @property
    def size(self) -> int:
        return len(self.vm_indices)

    @property
    def vm_multiset(self) -> Counter:
        return Counter(v.type_id for v in self.vm_types)

    def vms_by_type(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for i, v in zip(self.vm_indices, self.vm_types):
            out.setdefault(v.type_id, []).append(i)
        return out


def task_sizes(n_vms: int, n_per_task: int) -> list[int]:
    """Sizes of the H tasks: H-1 of floor(V/H), the last takes the remainder too."""
    if n_per_task < 1:
        raise TaskSizeError("task size must be positive")
    if n_per_task > n_vms:
        raise TaskSizeError(f"task size exceeds instance ({n_per_task} > {n_vms} VMs)")
    h = max(n_vms // n_per_task, 1)
    base = n_vms // h
    return [base] * (h - 1) + [base + n_vms % h]


def split_budget(count: int, h: int) -> list[int]:
    return [count // h] * (h - 1) + [count // h + count % h]


def split(instance: Instance, n_per_task: int, seed=None, rng: np.random.Generator | None = None) -> list[TaskSpec]:
    """Randomly assign the instance's VMs to ``floor(V / n_per_task)`` tasks."""
    sizes = task_sizes(instance.n_vms, n_per_task)
    h = len(sizes)
    if rng is None:
        rng = np.random.default_rng(seed)
    perm = rng.permutation(instance.n_vms)
    budgets = [split_budget(c, h) for c in instance.ps_availability]
    tasks = []
    start = 0
    for i, size in enumerate(sizes):
        idx = tuple(int(j) for j in perm[start:start + size])
        start += size
        tasks.append(TaskSpec(
            index=i + 1,
            vm_indices=idx,
            ps_budget={t: budgets[l][i] for l, t in enumerate(instance.ps_types)},
            vm_types=tuple(instance.vm_requests[j] for j in idx),
        ))
    return tasks


def whole_task(instance: Instance) -> TaskSpec:
    """The undivided instance as a single task."""
    return TaskSpec(1, tuple(range(instance.n_vms)), instance.availability(), instance.vm_requests)


@dataclass(frozen=True)
class UnifiedSpace:
    type_counts: dict[int, int]
    slot_types: tuple[VmType, ...]  # slot id -> VM type, ascending type id
    per_task_requirements: tuple[Counter, ...]

    @property
    def size(self) -> int:
        return len(self.slot_types)

    def slot_type_ids(self) -> np.ndarray:
        return np.array([v.type_id for v in self.slot_types], dtype=np.int64)

    def slot_demands(self) -> np.ndarray:
        return np.array([v.demand.as_tuple() for v in self.slot_types], dtype=np.int64).reshape(-1, 3)


def build_unified_space(tasks: Sequence[TaskSpec]) -> UnifiedSpace:
    if not tasks:
        raise ValueError("need at least one task")
    counts: dict[int, int] = {}
    by_id: dict[int, VmType] = {}
    for task in tasks:
        for type_id, c in task.vm_multiset.items():
            if c > counts.get(type_id, 0):
                counts[type_id] = c
        for v in task.vm_types:
            by_id.setdefault(v.type_id, v)
    slots = []
    for type_id in sorted(counts):
        slots.extend([by_id[type_id]] * counts[type_id])
    return UnifiedSpace(
        type_counts={k: counts[k] for k in sorted(counts)},
        slot_types=tuple(slots),
        per_task_requirements=tuple(t.vm_multiset for t in tasks),
    )


def decode_types(order: Sequence[int], requirement: Counter) -> list[int]:
    """Keep each entry of ``order`` whose type still has unmet demand.

    Works on any sequence of type ids; used for the worked examples and as
    the plain reference for :func:`decode_slots`.
    """
    need = Counter(requirement)
    left = sum(need.values())
    out = []
    for t in order:
        if left == 0:
            break
        if need[t] > 0:
            need[t] -= 1
            left -= 1
            out.append(t)
    if left:
        raise RuntimeError("unified space cannot satisfy the task requirement")
    return out


@numba.njit(cache=True)
def _decode_kernel(order, slot_kind, need, total):
    left = need.copy()
    out = np.empty(total, dtype=np.int64)
    w = 0
    for s in order:
        if w == total:
            break
        k = slot_kind[s]
        if left[k] > 0:
            left[k] -= 1
            out[w] = s
            w += 1
    return out[:w]


class Decoder:
    """Decode slot permutations for one task."""

    def __init__(self, space: UnifiedSpace, task: TaskSpec):
        self.task = task
        type_ids = space.slot_type_ids()
        req = task.vm_multiset
        for type_id, c in req.items():
            if space.type_counts.get(type_id, 0) < c:
                raise RuntimeError(f"unified space lacks slots of type {type_id} for task {task.index}")
        kinds = sorted(space.type_counts)
        kind_of = {t: k for k, t in enumerate(kinds)}
        self.type_ids = type_ids
        self.slot_kind = np.array([kind_of[int(t)] for t in type_ids], dtype=np.int64)
        self.need = np.array([req.get(t, 0) for t in kinds], dtype=np.int64)
        self.total = int(self.need.sum())
        self.vm_lookup = task.vms_by_type()

    def decode_slots(self, order: np.ndarray) -> np.ndarray:
        """Slot ids kept for this task, in scan order."""
        kept = _decode_kernel(np.asarray(order, dtype=np.int64), self.slot_kind, self.need, self.total)
        if len(kept) != self.total:
            raise RuntimeError("unified space cannot satisfy the task requirement")
        return kept

    def vm_indices(self, kept_slots: np.ndarray) -> list[int]:
        """Map kept slots (scan order) to the task's instance VM indices.

        The k-th kept slot of type t becomes the task's k-th VM of type t.
        """
        used: Counter = Counter()
        out = []
        for s in kept_slots:
            t = int(self.type_ids[s])
            out.append(self.vm_lookup[t][used[t]])
            used[t] += 1
        return out


def decode(order: Sequence[int], space: UnifiedSpace, task: TaskSpec) -> list[int]:
    """Instance VM indices of ``task`` in the order induced by slot permutation ``order``."""
    dec = Decoder(space, task)
    return dec.vm_indices(dec.decode_slots(np.asarray(order)))
