"""Dynamic job ordering from compute intensity, bandwidth sensitivity and congestion."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

from .cost_model import (
    DEFAULT_PROFILE,
    ComputeProfile,
    JobSpec,
    job_order_key,
    min_bandwidth,
    optimal_gpu_count,
    single_gpu_duration,
)
from .topology import ClusterState


class NoPendingJobs(ValueError):
    pass


def congestion(cluster: ClusterState) -> float:
    """Fraction of total inter-region capacity reserved by active jobs."""
    capacity = math.fsum(l.capacity for l in cluster.links.values())
    if capacity <= 0:
        return 0.0
    used = math.fsum(
        plan.b_reserved * len(plan.links) for plan in cluster.active_plans.values()
    )
    return min(max(used / capacity, 0.0), 1.0)


@dataclass
class PriorityContext:
    pending: List[JobSpec]
    alpha: float
    e1: Dict[str, float]
    bw: Dict[str, float]

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    @classmethod
    def build(cls, pending: Sequence[JobSpec], alpha: float, cluster_total: int,
              profile: ComputeProfile = DEFAULT_PROFILE) -> "PriorityContext":
        e1 = {j.id: single_gpu_duration(j, profile) for j in pending}
        bw = {
            j.id: min_bandwidth(j, optimal_gpu_count(j, cluster_total, profile), profile)
            for j in pending
        }
        return cls(list(pending), alpha, e1, bw)

    def _check(self, job: JobSpec):
        if not self.pending:
            raise NoPendingJobs("priority needs at least one pending job")
        if job.id not in self.e1:
            raise KeyError(f"job {job.id} is not pending")

    def intensity(self, job: JobSpec) -> float:
        self._check(job)
        return self.e1[job.id] / max(self.e1[j.id] for j in self.pending)

    def sensitivity(self, job: JobSpec) -> float:
        self._check(job)
        return self.bw[job.id] / max(self.bw[j.id] for j in self.pending)

    def score(self, job: JobSpec) -> float:
        return priority_score(self.intensity(job), self.sensitivity(job), self.alpha)


def priority_score(intensity: float, sensitivity: float, alpha: float) -> float:
    return (1 - alpha) * (1 - intensity) + alpha * (1 - sensitivity)


def order_queue(pending: Sequence[JobSpec], cluster: ClusterState,
                profile: ComputeProfile = DEFAULT_PROFILE,
                alpha: Optional[float] = None,
                e1: Optional[Mapping[str, float]] = None,
                bw: Optional[Mapping[str, float]] = None) -> List[JobSpec]:
    """Pending jobs by descending score; ties go to earlier submission, then id.

    ``e1`` and ``bw`` may carry precomputed single-GPU durations and
    bandwidth requirements keyed by job id; both are per-job constants.
    """
    if not pending:
        return []
    if alpha is None:
        alpha = congestion(cluster)
    if e1 is None or bw is None:
        ctx = PriorityContext.build(pending, alpha, cluster.total_gpus(), profile)
    else:
        ctx = PriorityContext(list(pending), alpha,
                              {j.id: e1[j.id] for j in pending},
                              {j.id: bw[j.id] for j in pending})
    scores = {j.id: ctx.score(j) for j in pending}
    return sorted(pending, key=lambda j: (-scores[j.id], job_order_key(j)))


def fcfs_order(pending: Sequence[JobSpec]) -> List[JobSpec]:
    return sorted(pending, key=job_order_key)
