import numpy as np
import pytest

from mfvmp.allocation import trial_fill
from mfvmp.domain import (VM_TYPES, ActivatedPs, Instance, Placement, Resources, VmType, builtin_ps_types,
                          generate_instance)


@pytest.fixture(scope="session")
def ps_types():
    return builtin_ps_types()


@pytest.fixture(scope="session")
def general(ps_types):
    return ps_types[0]


def make_instance(type_ids, availability=None, ps_types=None):
    """Instance from catalogue type ids (1-based)."""
    types = tuple(ps_types or builtin_ps_types())
    vms = tuple(VM_TYPES[t - 1] for t in type_ids)
    avail = availability if availability is not None else (max(len(vms), 1),) * len(types)
    return Instance(vms, types, tuple(avail))


def custom_instance(demands, availability=None, ps_types=None):
    types = tuple(ps_types or builtin_ps_types())
    vms = tuple(VmType(1001 + k, Resources(*d)) for k, d in enumerate(demands))
    avail = availability if availability is not None else (max(len(vms), 1),) * len(types)
    return Instance(vms, types, tuple(avail))


def reference_greedy(vm_list, instance, budget=None):
    """Plain transcription of the greedy operator, for cross-checking the kernel."""
    remaining = list(vm_list)
    stock = dict(zip(instance.ps_types, budget if budget is not None else instance.ps_availability))
    servers = []
    while remaining:
        best = None
        for t in instance.ps_types:
            if stock[t] <= 0:
                continue
            fill = trial_fill(remaining, instance, t)
            if not fill.loaded:
                continue
            key = (fill.utilization, -t.cost_cents, -t.type_id)
            if best is None or key[0] > best[0][0] + 1e-12 or (abs(key[0] - best[0][0]) <= 1e-12 and key[1:] > best[0][1:]):
                best = (key, fill)
        if best is None:
            raise RuntimeError("stuck")
        fill = best[1]
        stock[fill.ps_type] -= 1
        servers.append(ActivatedPs(fill.ps_type, fill.loaded))
        taken = set(fill.loaded)
        remaining = [i for i in remaining if i not in taken]
    return Placement(tuple(servers))


def set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]
        yield [[first]] + part


def brute_force_cost_cents(instance):
    """Cheapest placement by enumerating every partition of the VMs into servers."""
    demand = instance.demand_matrix()
    types = instance.ps_types
    best = None
    for part in set_partitions(list(range(instance.n_vms))):
        used = [0] * len(types)
        cost = 0
        for block in part:
            load = demand[block].sum(axis=0)
            options = [k for k, t in enumerate(types)
                       if (load <= np.array(t.capacity.as_tuple())).all()]
            if not options:
                cost = None
                break
            # cheapest fitting type; stock is plentiful in these tests
            k = min(options, key=lambda k: types[k].cost_cents)
            used[k] += 1
            cost += types[k].cost_cents
        if cost is None or any(u > a for u, a in zip(used, instance.ps_availability)):
            continue
        if best is None or cost < best:
            best = cost
    return best


@pytest.fixture(scope="session")
def small_instance():
    return generate_instance(60, seed=7)


@pytest.fixture(scope="session")
def medium_instance():
    return generate_instance(600, seed=3)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert."""

    def report(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
