"""Greedy utilization-driven allocation of an ordered VM list onto servers.

Each round opens one trial server per type that still has stock, fills it
first-fit in list order, and commits the trial with the highest
comprehensive utilization (mean of the cpu/ram/disk load fractions).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numba
import numpy as np

from .domain import ActivatedPs, Instance, Placement, PsType, server_load

UTIL_EPS = 1e-12

# kernel status codes
_OK = 0
_BUDGET_EXHAUSTED = 1
_NO_TRIAL = 2
_UNPLACEABLE = 3


class AllocationError(RuntimeError):
    pass


class UnplaceableVM(AllocationError):
    def __init__(self, vm, demand):
        self.vm = vm
        super().__init__(f"unplaceable VM {vm}: demand {tuple(int(x) for x in demand)} fits no server type with stock left")


class BudgetExhausted(AllocationError):
    def __init__(self, remaining: int):
        self.remaining = remaining
        super().__init__(f"PS budget exhausted with {remaining} VMs still unplaced")


@dataclass(frozen=True)
class TrialFill:
    ps_type: PsType
    loaded: tuple[int, ...]
    utilization: float


def utilization_of(load, capacity) -> float:
    return (load[0] / capacity[0] + load[1] / capacity[1] + load[2] / capacity[2]) / 3


@numba.njit(cache=True)
def _greedy_kernel(demand, caps, budget):
    """Core loop. ``caps`` rows must already be in tie-break order.

    Returns (status, n_servers, server_type, assign) where ``assign[j]`` is
    the server index of list position ``j``. On ``_UNPLACEABLE`` the second
    field is the offending list position instead.
    """
    n = demand.shape[0]
    n_types = caps.shape[0]
    budget = budget.copy()
    for j in range(n):
        fits = False
        for t in range(n_types):
            if (budget[t] > 0 and demand[j, 0] <= caps[t, 0] and demand[j, 1] <= caps[t, 1]
                    and demand[j, 2] <= caps[t, 2]):
                fits = True
                break
        if not fits:
            return _UNPLACEABLE, j, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    remaining = np.arange(n)
    n_rem = n
    assign = np.full(n, -1, dtype=np.int64)
    server_type = np.empty(n, dtype=np.int64)
    n_servers = 0
    trial = np.empty((n_types, n), dtype=np.int64)
    trial_len = np.zeros(n_types, dtype=np.int64)

    while n_rem > 0:
        # no remaining VM can fit once any residual drops below these
        min0 = demand[remaining[0], 0]
        min1 = demand[remaining[0], 1]
        min2 = demand[remaining[0], 2]
        for k in range(1, n_rem):
            j = remaining[k]
            if demand[j, 0] < min0:
                min0 = demand[j, 0]
            if demand[j, 1] < min1:
                min1 = demand[j, 1]
            if demand[j, 2] < min2:
                min2 = demand[j, 2]

        best = -1
        best_u = -1.0
        any_stock = False
        for t in range(n_types):
            trial_len[t] = 0
            if budget[t] <= 0:
                continue
            any_stock = True
            r0 = caps[t, 0]
            r1 = caps[t, 1]
            r2 = caps[t, 2]
            if r0 < min0 or r1 < min1 or r2 < min2:
                continue
            cnt = 0
            for k in range(n_rem):
                j = remaining[k]
                if demand[j, 0] <= r0 and demand[j, 1] <= r1 and demand[j, 2] <= r2:
                    r0 -= demand[j, 0]
                    r1 -= demand[j, 1]
                    r2 -= demand[j, 2]
                    trial[t, cnt] = k
                    cnt += 1
                    if r0 < min0 or r1 < min1 or r2 < min2:
                        break
            trial_len[t] = cnt
            if cnt == 0:
                continue
            u = ((caps[t, 0] - r0) / caps[t, 0] + (caps[t, 1] - r1) / caps[t, 1]
                 + (caps[t, 2] - r2) / caps[t, 2]) / 3.0
            if u > best_u + UTIL_EPS:
                best_u = u
                best = t

        if best < 0:
            if any_stock:
                return _NO_TRIAL, n_servers, server_type, assign
            return _BUDGET_EXHAUSTED, n_servers, server_type, assign

        cnt = trial_len[best]
        for c in range(cnt):
            k = trial[best, c]
            assign[remaining[k]] = n_servers
            remaining[k] = -1
        w = 0
        for k in range(n_rem):
            if remaining[k] >= 0:
                remaining[w] = remaining[k]
                w += 1
        n_rem = w
        server_type[n_servers] = best
        n_servers += 1
        budget[best] -= 1

    return _OK, n_servers, server_type, assign


def tie_break_order(ps_types: Sequence[PsType]) -> np.ndarray:
    """Type indices ordered cheapest first, then by type id."""
    return np.array(sorted(range(len(ps_types)), key=lambda t: (ps_types[t].cost_cents, ps_types[t].type_id)),
                    dtype=np.int64)


def allocate_arrays(demand: np.ndarray, caps: np.ndarray, budget: np.ndarray,
                    order: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Array-level greedy allocation.

    ``demand`` is (n, 3) in list order, ``caps`` (L, 3), ``budget`` (L,).
    ``order`` is the tie-break order of type indices (cheapest first).
    Returns ``(server_type, assign)``: type index per opened server and the
    server index of every list position.
    """
    demand = np.ascontiguousarray(demand, dtype=np.int64).reshape(-1, 3)
    caps = np.asarray(caps, dtype=np.int64)
    budget = np.asarray(budget, dtype=np.int64)
    if order is None:
        order = np.arange(caps.shape[0], dtype=np.int64)
    if demand.shape[0] == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)

    status, n_servers, server_type, assign = _greedy_kernel(
        demand, np.ascontiguousarray(caps[order]), np.ascontiguousarray(budget[order]))
    if status == _UNPLACEABLE:
        raise UnplaceableVM(n_servers, demand[n_servers])
    if status != _OK:
        raise BudgetExhausted(int((assign < 0).sum()))
    return order[server_type[:n_servers]], assign


def greedy_allocate(vm_list: Sequence[int], instance: Instance,
                    ps_budget: Mapping[PsType, int] | None = None) -> Placement:
    """Place the instance VMs listed in ``vm_list`` (in that order).

    ``ps_budget`` defaults to the instance's full server stock. Servers in
    the result appear in commit order, VMs inside a server in list order.
    """
    vm_list = [int(i) for i in vm_list]
    if not vm_list:
        return Placement(())
    types = instance.ps_types
    if ps_budget is None:
        budget = np.array(instance.ps_availability, dtype=np.int64)
    else:
        budget = np.array([int(ps_budget.get(t, 0)) for t in types], dtype=np.int64)
    demand = instance.demand_matrix()[vm_list]
    try:
        server_type, assign = allocate_arrays(demand, instance.capacity_matrix(), budget, tie_break_order(types))
    except UnplaceableVM as exc:
        raise UnplaceableVM(vm_list[exc.vm], demand[exc.vm]) from None
    return placement_from_assignment(vm_list, server_type, assign, types)


def placement_from_assignment(items: Sequence[int], server_type, assign, ps_types: Sequence[PsType]) -> Placement:
    groups: list[list[int]] = [[] for _ in range(len(server_type))]
    for item, k in zip(items, assign):
        groups[k].append(int(item))
    return Placement(tuple(ActivatedPs(ps_types[int(t)], tuple(g)) for t, g in zip(server_type, groups)))


def trial_fill(vm_list: Sequence[int], instance: Instance, ps_type: PsType) -> TrialFill:
    """One first-fit trial server of ``ps_type`` over ``vm_list`` (reference, unoptimised)."""
    cap = ps_type.capacity.as_tuple()
    residual = list(cap)
    loaded = []
    for i in vm_list:
        d = instance.vm_requests[i].demand.as_tuple()
        if all(d[r] <= residual[r] for r in range(3)):
            for r in range(3):
                residual[r] -= d[r]
            loaded.append(i)
    load = [cap[r] - residual[r] for r in range(3)]
    return TrialFill(ps_type, tuple(loaded), utilization_of(load, cap))


def server_has_surplus(server: ActivatedPs, instance: Instance) -> bool:
    """True when every resource of the server still has spare capacity."""
    load = server_load(server, instance)
    cap = server.ps_type.capacity
    return load.cpu < cap.cpu and load.ram < cap.ram and load.disk < cap.disk
