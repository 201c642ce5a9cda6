"""Re-migration and merge of per-task placements into one global placement."""
from __future__ import annotations

from collections import Counter
from typing import Mapping, Sequence

from .allocation import greedy_allocate, server_has_surplus
from .domain import Instance, Placement, PsType


def remigrate_and_merge(best_per_task: Sequence[Placement], instance: Instance,
                        remaining_budget: Mapping[PsType, int] | None = None) -> Placement:
    """Keep servers that are full in at least one resource, re-place the rest.

    VMs from servers with spare capacity in all three resources are pooled
    in encounter order (task, then server commit order, then load order) and
    backfilled onto new servers with the greedy allocator.
    ``remaining_budget`` defaults to the global stock minus the kept servers.
    """
    kept = []
    pool: list[int] = []
    for placement in best_per_task:
        for server in placement.servers:
            if server_has_surplus(server, instance):
                pool.extend(server.loaded_vms)
            else:
                kept.append(server)
    if remaining_budget is None:
        used = Counter(s.ps_type for s in kept)
        remaining_budget = {t: c - used[t] for t, c in zip(instance.ps_types, instance.ps_availability)}
    backfill = greedy_allocate(pool, instance, remaining_budget)
    return Placement(tuple(kept)) + backfill
