"""Reference solvers: first-fit decreasing, the single-task evolutionary
ablation, an exhaustive branch-and-bound for tiny instances and a
fractional lower bound.
"""
from __future__ import annotations

import math

import numpy as np

from . import mfea
from .decomposition import whole_task
from .domain import ActivatedPs, Instance, Placement, placement_cost_cents


class InstanceTooLarge(ValueError):
    pass


def ffd_order(instance: Instance) -> list[int]:
    vms = instance.vm_requests
    return sorted(range(instance.n_vms), key=lambda i: (-vms[i].cpu, -vms[i].ram, -vms[i].disk, i))


def ffd_solve(instance: Instance) -> Placement:
    """First-fit decreasing by (cpu, ram, disk).

    Open servers are scanned in creation order; a VM that fits none opens
    the cheapest server type (with stock left) that can hold it.
    """
    caps = instance.capacity_matrix()
    stock = list(instance.ps_availability)
    by_price = sorted(range(len(instance.ps_types)),
                      key=lambda t: (instance.ps_types[t].cost_cents, instance.ps_types[t].type_id))
    demand = instance.demand_matrix()
    residual: list[list[int]] = []
    server_type: list[int] = []
    loaded: list[list[int]] = []
    for i in ffd_order(instance):
        d0, d1, d2 = (int(x) for x in demand[i])
        for k, r in enumerate(residual):
            if d0 <= r[0] and d1 <= r[1] and d2 <= r[2]:
                r[0] -= d0
                r[1] -= d1
                r[2] -= d2
                loaded[k].append(i)
                break
        else:
            for t in by_price:
                c = caps[t]
                if stock[t] > 0 and d0 <= c[0] and d1 <= c[1] and d2 <= c[2]:
                    break
            else:
                raise ValueError(f"VM {i} with demand {(d0, d1, d2)} fits no server type with stock left")
            stock[t] -= 1
            residual.append([int(c[0]) - d0, int(c[1]) - d1, int(c[2]) - d2])
            server_type.append(t)
            loaded.append([i])
    types = instance.ps_types
    return Placement(tuple(ActivatedPs(types[t], tuple(v)) for t, v in zip(server_type, loaded)))


def sfea_solve(instance: Instance, cfg: mfea.MfeaConfig | None = None) -> tuple[Placement, mfea.MfeaResult]:
    """Same engine and operators as the multi-factorial run, on one undivided task, no merge."""
    cfg = cfg or mfea.MfeaConfig()
    result = mfea.run(instance, cfg, tasks=[whole_task(instance)])
    return result.best_placements[0], result


def lower_bound(instance: Instance) -> float:
    """max over resources of total demand times the cheapest cost per unit of that resource."""
    if instance.n_vms == 0:
        return 0.0
    return _lower_bound_cents(instance, instance.demand_matrix().sum(axis=0)) / 100


def _lower_bound_cents(instance: Instance, demand_total) -> float:
    caps = instance.capacity_matrix()
    cost = instance.cost_cents_vector()
    usable = np.array(instance.ps_availability) > 0
    if not usable.any():
        return math.inf if np.any(demand_total > 0) else 0.0
    per_unit = (cost[usable, None] / caps[usable]).min(axis=0)
    return float((np.asarray(demand_total) * per_unit).max())


EXACT_MAX_VMS = 10


def exact_solve(instance: Instance, max_vms: int = EXACT_MAX_VMS) -> tuple[float, Placement]:
    """Provably cheapest placement by branch and bound.

    VMs are branched in decreasing size order onto any open server or onto a
    newly opened server of each type. Partial cost plus a fractional bound
    on the demand that open servers cannot absorb prunes the search.
    """
    n = instance.n_vms
    if n > max_vms:
        raise InstanceTooLarge(f"instance too large for exact solver ({n} > {max_vms} VMs)")
    if n == 0:
        return 0.0, Placement(())
    demand = instance.demand_matrix()
    caps = instance.capacity_matrix()
    cost = instance.cost_cents_vector()
    n_types = len(caps)
    usable = np.array(instance.ps_availability) > 0
    per_unit = (cost[usable, None] / caps[usable]).min(axis=0) if usable.any() else np.full(3, np.inf)
    order = sorted(range(n), key=lambda i: (-demand[i, 2], -demand[i, 0], -demand[i, 1], i))
    dem = [tuple(int(x) for x in demand[i]) for i in order]
    suffix = np.zeros((n + 1, 3), dtype=np.int64)
    for k in range(n - 1, -1, -1):
        suffix[k] = suffix[k + 1] + dem[k]

    best_cost = math.inf
    best_assign: list[tuple[int, list[int]]] | None = None
    servers: list[list] = []  # [type, r0, r1, r2, [positions]]
    stock = list(instance.ps_availability)

    def bound(k: int, spent: int) -> float:
        if k == n:
            return spent
        free = np.zeros(3, dtype=np.int64)
        for s in servers:
            free += s[1:4]
        excess = np.maximum(suffix[k] - free, 0)
        return spent + float((excess * per_unit).max()) if excess.any() else spent

    def search(k: int, spent: int) -> None:
        nonlocal best_cost, best_assign
        if bound(k, spent) >= best_cost - 1e-9:
            return
        if k == n:
            best_cost = spent
            best_assign = [(s[0], list(s[4])) for s in servers]
            return
        d0, d1, d2 = dem[k]
        for s in servers:
            if d0 <= s[1] and d1 <= s[2] and d2 <= s[3]:
                s[1] -= d0
                s[2] -= d1
                s[3] -= d2
                s[4].append(k)
                search(k + 1, spent)
                s[4].pop()
                s[1] += d0
                s[2] += d1
                s[3] += d2
        for t in sorted(range(n_types), key=lambda t: cost[t]):
            c = caps[t]
            if stock[t] > 0 and d0 <= c[0] and d1 <= c[1] and d2 <= c[2]:
                stock[t] -= 1
                servers.append([t, int(c[0]) - d0, int(c[1]) - d1, int(c[2]) - d2, [k]])
                search(k + 1, spent + int(cost[t]))
                servers.pop()
                stock[t] += 1

    search(0, 0)
    if best_assign is None:
        raise ValueError("instance has no feasible placement")
    types = instance.ps_types
    placement = Placement(tuple(ActivatedPs(types[t], tuple(sorted(order[p] for p in pos)))
                                for t, pos in best_assign))
    return placement_cost_cents(placement) / 100, placement
