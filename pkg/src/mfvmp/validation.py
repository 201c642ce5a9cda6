"""Input checks shared by the estimators and the CLI."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.utils import check_array, check_random_state

from .domain import Instance, PsType, builtin_ps_types, instance_from_demands


def check_demands(X) -> np.ndarray:
    """Validate an (n_vms, 3) array of non-negative integer cpu/ram/disk demands."""
    arr = check_array(X, dtype=None, ensure_min_samples=1, ensure_2d=True)
    if arr.shape[1] != 3:
        raise ValueError(f"expected 3 columns (cpu, ram, disk), got {arr.shape[1]}")
    if not np.issubdtype(arr.dtype, np.integer):
        as_int = np.rint(arr)
        if not np.array_equal(as_int, arr):
            raise ValueError("resource demands must be whole numbers")
        arr = as_int
    arr = arr.astype(np.int64)
    if (arr < 0).any():
        raise ValueError("resource demands must be non-negative")
    return arr


def check_ps_types(ps_types: Sequence[PsType] | None) -> tuple[PsType, ...]:
    if ps_types is None:
        return tuple(builtin_ps_types())
    types = tuple(ps_types)
    if not types:
        raise ValueError("need at least one server type")
    for t in types:
        if not isinstance(t, PsType):
            raise TypeError(f"expected PsType, got {type(t).__name__}")
    return types


def check_instance(X, ps_types: Sequence[PsType] | None = None, ps_availability="unbounded") -> Instance:
    """Accept an :class:`Instance` as is, or build one from a demand array."""
    if isinstance(X, Instance):
        return X
    demands = check_demands(X)
    return instance_from_demands(demands, check_ps_types(ps_types), ps_availability)


def check_probability(value, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def seed_from(random_state) -> int:
    """Integer seed from an int, None or a numpy RandomState."""
    if isinstance(random_state, (int, np.integer)):
        return int(random_state)
    return int(check_random_state(random_state).randint(0, 2**31 - 1))
