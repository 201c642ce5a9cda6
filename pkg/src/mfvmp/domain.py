"""Value types for VMs, physical servers, instances and placements.

Also holds the 100-type VM catalogue, the three built-in server types, the
synthetic instance generator and the line-oriented instance file format.
"""
from __future__ import annotations

import hashlib
import io
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

RESOURCES = ("cpu", "ram", "disk")


@dataclass(frozen=True, order=True)
class Resources:
    cpu: int
    ram: int
    disk: int

    def __post_init__(self):
        if min(self.cpu, self.ram, self.disk) < 0:
            raise ValueError(f"negative resource amount in {self!r}")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.cpu, self.ram, self.disk)

    def fits_in(self, other: "Resources") -> bool:
        return self.cpu <= other.cpu and self.ram <= other.ram and self.disk <= other.disk

    def __add__(self, other: "Resources") -> "Resources":
        return Resources(self.cpu + other.cpu, self.ram + other.ram, self.disk + other.disk)


@dataclass(frozen=True)
class VmType:
    type_id: int
    demand: Resources

    @property
    def cpu(self) -> int:
        return self.demand.cpu

    @property
    def ram(self) -> int:
        return self.demand.ram

    @property
    def disk(self) -> int:
        return self.demand.disk


@dataclass(frozen=True)
class PsType:
    """A physical server configuration.

    ``cost_cents`` is the deployment cost in hundredths so sums stay exact;
    ``cost`` gives the decimal value.
    """

    type_id: int
    name: str
    capacity: Resources
    cost_cents: int

    def __post_init__(self):
        if min(self.capacity.as_tuple()) <= 0:
            raise ValueError(f"server type {self.name!r} needs positive capacity")
        if self.cost_cents <= 0:
            raise ValueError(f"server type {self.name!r} needs a positive cost")

    @property
    def cost(self) -> float:
        return self.cost_cents / 100

    @classmethod
    def from_cost(cls, type_id: int, name: str, capacity: Resources, cost) -> "PsType":
        cents = Decimal(str(cost)) * 100
        if cents != cents.to_integral_value():
            raise ValueError(f"cost {cost!r} has more than two decimals")
        return cls(type_id, name, capacity, int(cents))


def _build_vm_catalogue() -> tuple[VmType, ...]:
    # 20 (cpu, ram) shapes, each paired with disks 100..500 in that order
    shapes = [
        (1, 1), (1, 2), (1, 4), (1, 8),
        (2, 2), (2, 4), (2, 8), (2, 16),
        (4, 4), (4, 8), (4, 16), (4, 32),
        (8, 8), (8, 16), (8, 32), (8, 64),
        (16, 16), (16, 32), (16, 64), (16, 128),
    ]
    out = []
    for cpu, ram in shapes:
        for disk in (100, 200, 300, 400, 500):
            out.append(VmType(len(out) + 1, Resources(cpu, ram, disk)))
    return tuple(out)


VM_TYPES: tuple[VmType, ...] = _build_vm_catalogue()


def builtin_ps_types() -> list[PsType]:
    return [
        PsType(1, "General", Resources(56, 128, 1200), 349),
        PsType(2, "LargeRAM", Resources(84, 256, 2400), 436),
        PsType(3, "HighPerformance", Resources(112, 192, 3600), 545),
    ]


@dataclass(frozen=True)
class Instance:
    """A static placement problem: VM requests plus server stock per type.

    ``ps_availability`` is aligned with ``ps_types``.
    """

    vm_requests: tuple[VmType, ...]
    ps_types: tuple[PsType, ...]
    ps_availability: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "vm_requests", tuple(self.vm_requests))
        object.__setattr__(self, "ps_types", tuple(self.ps_types))
        object.__setattr__(self, "ps_availability", tuple(int(c) for c in self.ps_availability))
        if not self.ps_types:
            raise ValueError("instance needs at least one server type")
        if len(self.ps_availability) != len(self.ps_types):
            raise ValueError("ps_availability must have one count per server type")
        if any(c < 0 for c in self.ps_availability):
            raise ValueError("server counts must be non-negative")
        if len({t.type_id for t in self.ps_types}) != len(self.ps_types):
            raise ValueError("duplicate server type ids")

    @property
    def n_vms(self) -> int:
        return len(self.vm_requests)

    @cached_property
    def _demand(self) -> np.ndarray:
        arr = np.array([v.demand.as_tuple() for v in self.vm_requests], dtype=np.int64).reshape(-1, 3)
        arr.setflags(write=False)
        return arr

    def demand_matrix(self) -> np.ndarray:
        """(V, 3) demand rows; shared and read-only."""
        return self._demand

    def capacity_matrix(self) -> np.ndarray:
        return np.array([t.capacity.as_tuple() for t in self.ps_types], dtype=np.int64)

    def cost_cents_vector(self) -> np.ndarray:
        return np.array([t.cost_cents for t in self.ps_types], dtype=np.int64)

    def availability(self) -> dict[PsType, int]:
        return dict(zip(self.ps_types, self.ps_availability))

    def type_counts(self) -> Counter:
        return Counter(v.type_id for v in self.vm_requests)


@dataclass(frozen=True)
class ActivatedPs:
    ps_type: PsType
    loaded_vms: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "loaded_vms", tuple(int(i) for i in self.loaded_vms))


@dataclass(frozen=True)
class Placement:
    servers: tuple[ActivatedPs, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "servers", tuple(self.servers))

    def __len__(self) -> int:
        return len(self.servers)

    def __add__(self, other: "Placement") -> "Placement":
        return Placement(self.servers + other.servers)

    def vm_indices(self) -> list[int]:
        return [i for s in self.servers for i in s.loaded_vms]

    def labels(self, n_vms: int) -> np.ndarray:
        """Server index per VM; -1 for VMs that are not placed."""
        out = np.full(n_vms, -1, dtype=np.int64)
        for k, s in enumerate(self.servers):
            out[list(s.loaded_vms)] = k
        return out


class InfeasiblePlacement(ValueError):
    pass


def server_load(server: ActivatedPs, instance: Instance) -> Resources:
    cpu = ram = disk = 0
    for i in server.loaded_vms:
        d = instance.vm_requests[i].demand
        cpu += d.cpu
        ram += d.ram
        disk += d.disk
    return Resources(cpu, ram, disk)


def check_placement(p: Placement, instance: Instance, complete: bool = True) -> None:
    """Raise :class:`InfeasiblePlacement` on any capacity, coverage or stock violation."""
    seen: set[int] = set()
    used = Counter()
    for k, s in enumerate(p.servers):
        if not s.loaded_vms:
            raise InfeasiblePlacement(f"server {k} is activated but empty")
        if s.ps_type not in instance.ps_types:
            raise InfeasiblePlacement(f"server {k} has unknown type {s.ps_type.name}")
        for i in s.loaded_vms:
            if not 0 <= i < instance.n_vms:
                raise InfeasiblePlacement(f"server {k} holds unknown VM {i}")
            if i in seen:
                raise InfeasiblePlacement(f"VM {i} placed more than once")
            seen.add(i)
        load = server_load(s, instance)
        if not load.fits_in(s.ps_type.capacity):
            raise InfeasiblePlacement(
                f"server {k} ({s.ps_type.name}) overloaded: {load.as_tuple()} > {s.ps_type.capacity.as_tuple()}"
            )
        used[s.ps_type] += 1
    if complete and len(seen) != instance.n_vms:
        missing = sorted(set(range(instance.n_vms)) - seen)
        raise InfeasiblePlacement(f"{len(missing)} VMs unplaced, first {missing[:5]}")
    for t, count in zip(instance.ps_types, instance.ps_availability):
        if used[t] > count:
            raise InfeasiblePlacement(f"{used[t]} {t.name} servers used, only {count} available")


def placement_cost_cents(p: Placement) -> int:
    return sum(s.ps_type.cost_cents for s in p.servers)


def placement_cost(p: Placement) -> float:
    return placement_cost_cents(p) / 100


@dataclass(frozen=True)
class Utilization:
    cpu: float
    ram: float
    disk: float
    empty: bool = False

    @property
    def comprehensive(self) -> float:
        return (self.cpu + self.ram + self.disk) / 3


def cluster_utilization(p: Placement, instance: Instance) -> Utilization:
    """Aggregate loaded demand over aggregate activated capacity, per resource.

    An empty placement yields zeros with ``empty=True``.
    """
    if not p.servers:
        return Utilization(0.0, 0.0, 0.0, empty=True)
    demand = np.zeros(3, dtype=np.int64)
    cap = np.zeros(3, dtype=np.int64)
    for s in p.servers:
        demand += server_load(s, instance).as_tuple()
        cap += s.ps_type.capacity.as_tuple()
    u = demand / cap
    return Utilization(float(u[0]), float(u[1]), float(u[2]))


def generate_instance(num_vms: int, seed: int, ps_per_type: int | str = "unbounded",
                      ps_types: Sequence[PsType] | None = None) -> Instance:
    """Draw ``num_vms`` requests i.i.d. uniform over the 100 catalogue types."""
    if num_vms < 1:
        raise ValueError("num_vms must be at least 1")
    types = tuple(ps_types) if ps_types is not None else tuple(builtin_ps_types())
    if ps_per_type == "unbounded":
        count = num_vms
    else:
        count = int(ps_per_type)
        if count < 0:
            raise ValueError("ps_per_type must be non-negative")
    # PCG64 stream is platform independent for integers()
    rng = np.random.Generator(np.random.PCG64(seed))
    picks = rng.integers(0, len(VM_TYPES), size=num_vms)
    return Instance(tuple(VM_TYPES[k] for k in picks), types, (count,) * len(types))


def instance_from_demands(demands, ps_types: Sequence[PsType] | None = None,
                          ps_availability: Iterable[int] | str | None = None) -> Instance:
    """Wrap an (n, 3) demand array as an instance.

    Rows matching a catalogue entry reuse its type id; others get ids from 1001 up.
    """
    types = tuple(ps_types) if ps_types is not None else tuple(builtin_ps_types())
    lookup = {v.demand.as_tuple(): v for v in VM_TYPES}
    custom: dict[tuple, VmType] = {}
    vms = []
    for row in np.asarray(demands, dtype=np.int64):
        key = tuple(int(x) for x in row)
        vm = lookup.get(key) or custom.get(key)
        if vm is None:
            vm = custom[key] = VmType(1001 + len(custom), Resources(*key))
        vms.append(vm)
    if ps_availability is None or ps_availability == "unbounded":
        avail = (max(len(vms), 1),) * len(types)
    else:
        avail = tuple(ps_availability)
    return Instance(tuple(vms), types, avail)


# -- instance file format ---------------------------------------------------
#
#   instance,<V>,<L>
#   availability,<PS_1>,...,<PS_L>
#   ps,<type_id>,<name>,<cpu>,<ram>,<disk>,<cost>      (L lines)
#   <vm_index>,<type_id>,<cpu>,<ram>,<disk>            (V lines)


class InstanceFormatError(ValueError):
    pass


def dumps_instance(instance: Instance) -> str:
    buf = io.StringIO()
    buf.write(f"instance,{instance.n_vms},{len(instance.ps_types)}\n")
    buf.write("availability," + ",".join(str(c) for c in instance.ps_availability) + "\n")
    for t in instance.ps_types:
        c = t.capacity
        buf.write(f"ps,{t.type_id},{t.name},{c.cpu},{c.ram},{c.disk},{t.cost_cents // 100}.{t.cost_cents % 100:02d}\n")
    for i, v in enumerate(instance.vm_requests):
        d = v.demand
        buf.write(f"{i},{v.type_id},{d.cpu},{d.ram},{d.disk}\n")
    return buf.getvalue()


def loads_instance(text: str) -> Instance:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    try:
        head = lines[0].split(",")
        if head[0] != "instance" or len(head) != 3:
            raise InstanceFormatError(f"bad header line: {lines[0]!r}")
        n_vms, n_types = int(head[1]), int(head[2])
        avail_line = lines[1].split(",")
        if avail_line[0] != "availability" or len(avail_line) != n_types + 1:
            raise InstanceFormatError(f"bad availability line: {lines[1]!r}")
        avail = tuple(int(x) for x in avail_line[1:])
        ps_types = []
        for ln in lines[2:2 + n_types]:
            f = ln.split(",")
            if f[0] != "ps" or len(f) != 7:
                raise InstanceFormatError(f"bad server type line: {ln!r}")
            ps_types.append(PsType.from_cost(int(f[1]), f[2], Resources(int(f[3]), int(f[4]), int(f[5])), f[6]))
        vm_lines = lines[2 + n_types:]
        if len(vm_lines) != n_vms:
            raise InstanceFormatError(f"header announces {n_vms} VMs, found {len(vm_lines)}")
        vms = []
        known: dict[tuple, VmType] = {}
        for k, ln in enumerate(vm_lines):
            f = ln.split(",")
            if len(f) != 5 or int(f[0]) != k:
                raise InstanceFormatError(f"bad VM line {k}: {ln!r}")
            key = tuple(int(x) for x in f[1:])
            vm = known.get(key)
            if vm is None:
                vm = known[key] = VmType(key[0], Resources(*key[1:]))
            vms.append(vm)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, InstanceFormatError):
            raise
        raise InstanceFormatError(str(exc)) from exc
    return Instance(tuple(vms), tuple(ps_types), avail)


def save_instance(instance: Instance, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_instance(instance))


def load_instance(path) -> Instance:
    with open(path) as fh:
        return loads_instance(fh.read())


def instance_hash(instance: Instance) -> str:
    return hashlib.sha256(dumps_instance(instance).encode()).hexdigest()[:16]


def aggregate_demand(instance: Instance) -> Resources:
    total = Resources(0, 0, 0)
    for v in instance.vm_requests:
        total = total + v.demand
    return total


def as_mapping(budget: Mapping[PsType, int] | Sequence[int], ps_types: Sequence[PsType]) -> dict[PsType, int]:
    if isinstance(budget, Mapping):
        return {t: int(budget.get(t, 0)) for t in ps_types}
    return {t: int(c) for t, c in zip(ps_types, budget)}
