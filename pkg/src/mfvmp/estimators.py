"""scikit-learn style front ends for the placement solvers.

Each placer treats the VM demand matrix like a clustering problem: ``fit``
packs the rows onto servers and ``labels_`` holds the server index of every
VM. Hyper-parameters live in ``__init__`` so ``get_params``/``set_params``,
``clone`` and grid searches work as usual.

>>> from mfvmp.estimators import FFDPlacer
>>> FFDPlacer().fit_predict([[1, 1, 100], [2, 4, 300]]).tolist()
[0, 0]
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from . import baselines, mfea
from .domain import Instance, Placement, check_placement, cluster_utilization, placement_cost
from .validation import check_instance, check_probability, seed_from


class _BasePlacer(ClusterMixin, BaseEstimator):

    def _solve(self, instance: Instance) -> Placement:
        raise NotImplementedError

    def fit(self, X, y=None):
        """Place the VMs in ``X`` (an Instance or an (n_vms, 3) demand array)."""
        instance = check_instance(X, getattr(self, "ps_types", None), getattr(self, "ps_availability", "unbounded"))
        placement = self._solve(instance)
        check_placement(placement, instance)
        self.instance_ = instance
        self.placement_ = placement
        self.labels_ = placement.labels(instance.n_vms)
        self.server_types_ = np.array([s.ps_type.type_id for s in placement.servers], dtype=np.int64)
        self.n_servers_ = len(placement)
        self.cost_ = placement_cost(placement)
        self.utilization_ = cluster_utilization(placement, instance)
        return self

    def score(self, X=None, y=None) -> float:
        """Negative deployment cost of the fitted placement (higher is better)."""
        check_is_fitted(self, "placement_")
        return -self.cost_


class FFDPlacer(_BasePlacer):
    """First-fit decreasing by (cpu, ram, disk)."""

    def __init__(self, ps_types=None, ps_availability="unbounded"):
        self.ps_types = ps_types
        self.ps_availability = ps_availability

    def _solve(self, instance):
        return baselines.ffd_solve(instance)


class MFEAPlacer(_BasePlacer):
    """Multi-factorial evolutionary placement followed by re-migration and merge.

    Parameters
    ----------
    rmp : float
        Probability that two parents from different tasks are crossed.
    task_size : int
        VMs per sub-task; the instance is split into ``V // task_size`` tasks.
    pop_per_task : int
        Individuals per task; the population holds ``pop_per_task * n_tasks``.
    max_iter : int
        Generations.
    mutation_prob : float
        Chance that a crossover child gets one random swap.
    merge_every : int
        Trace the merged-solution cost every this many generations (0 = never).
    random_state : int, RandomState or None
    """

    def __init__(self, rmp=0.3, task_size=200, pop_per_task=5, max_iter=50, mutation_prob=0.1,
                 merge_every=1, random_state=None, ps_types=None, ps_availability="unbounded"):
        self.rmp = rmp
        self.task_size = task_size
        self.pop_per_task = pop_per_task
        self.max_iter = max_iter
        self.mutation_prob = mutation_prob
        self.merge_every = merge_every
        self.random_state = random_state
        self.ps_types = ps_types
        self.ps_availability = ps_availability

    def _config(self, instance: Instance) -> mfea.MfeaConfig:
        return mfea.MfeaConfig(
            rmp=check_probability(self.rmp, "rmp"),
            n_per_task=int(self.task_size),
            individuals_per_task=int(self.pop_per_task),
            max_iterations=int(self.max_iter),
            mutation_prob=check_probability(self.mutation_prob, "mutation_prob"),
            seed=seed_from(self.random_state),
            merge_every=int(self.merge_every),
        )

    def _solve(self, instance):
        placement, result = mfea.solve(instance, self._config(instance))
        self.trace_ = result.trace
        self.tasks_ = result.tasks
        self.best_per_task_ = result.best_placements
        self.n_tasks_ = len(result.tasks)
        return placement


class SFEAPlacer(MFEAPlacer):
    """Single-task ablation: same operators, whole instance as one task, no merge."""

    def _solve(self, instance):
        cfg = self._config(instance)
        cfg.merge_every = 0
        placement, result = baselines.sfea_solve(instance, cfg)
        self.trace_ = result.trace
        self.n_tasks_ = 1
        return placement


class ExactPlacer(_BasePlacer):
    """Branch-and-bound optimum for tiny instances."""

    def __init__(self, max_vms=baselines.EXACT_MAX_VMS, ps_types=None, ps_availability="unbounded"):
        self.max_vms = max_vms
        self.ps_types = ps_types
        self.ps_availability = ps_availability

    def _solve(self, instance):
        _, placement = baselines.exact_solve(instance, max_vms=self.max_vms)
        return placement


PLACERS = {
    "mfea": MFEAPlacer,
    "sfea": SFEAPlacer,
    "ffd": FFDPlacer,
    "exact": ExactPlacer,
}
