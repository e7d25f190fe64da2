"""Per-job timing and electricity cost for GPipe-style pipeline training.

Stages are layer-balanced: with ``k`` GPUs the slowest stage hosts
``ceil(layers / k)`` layers.  A plan places its stages region by region in
path order, so adjacent stages either share a region (intra-region copy) or
straddle one inter-region link (which runs at the job's reserved rate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

from .topology import DEFAULT_INTRA_BANDWIDTH, ConfigurationError

BITS_PER_BYTE = 8
JOULES_PER_KWH = 3.6e6


class InvalidStageCount(ValueError):
    pass


class MalformedPlan(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    name: str
    params: float
    layers: int
    hidden: int
    batch_size: int
    seq_len: int = 2048
    bytes_per_elem: int = 2

    def __post_init__(self):
        if min(self.layers, self.hidden, self.batch_size, self.seq_len) < 1:
            raise ConfigurationError(f"model {self.name}: sizes must be >= 1")
        if self.bytes_per_elem not in (1, 2, 4):
            raise ConfigurationError(f"model {self.name}: bytes_per_elem must be 1, 2 or 4")


@dataclass(frozen=True)
class JobSpec:
    id: str
    model: ModelConfig
    micro_batches: int
    iterations: int
    submit_time: float = 0.0
    dataset: str = ""
    dataset_samples: Optional[int] = None

    def __post_init__(self):
        if self.micro_batches < 1:
            raise ConfigurationError(f"job {self.id}: micro_batches must be >= 1")
        if self.iterations < 1:
            raise ConfigurationError(f"job {self.id}: iterations must be >= 1")
        if self.submit_time < 0:
            raise ConfigurationError(f"job {self.id}: submit_time must be >= 0")

    @property
    def micro_batch_size(self) -> int:
        return -(-self.model.batch_size // self.micro_batches)


def iterations_for(dataset_samples: int, batch_size: int, epochs: int = 1) -> int:
    return -(-dataset_samples // batch_size) * epochs


@dataclass(frozen=True)
class ComputeProfile:
    """Parameters of the per-micro-batch compute time and power draw.

    ``per_layer_time`` pins seconds per layer per micro-batch for a model
    name; models without an entry use the analytic FLOP estimate.
    """

    gpu_power: float = 300.0  # watts
    calibration: float = 2.5
    peak_flops: float = 155e12
    ideal_intra_bandwidth: float = DEFAULT_INTRA_BANDWIDTH
    per_layer_time: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.gpu_power <= 0 or self.calibration <= 0 or self.peak_flops <= 0:
            raise ConfigurationError("compute profile parameters must be > 0")
        for name, t in self.per_layer_time.items():
            if t <= 0:
                raise ConfigurationError(f"per_layer_time[{name}] must be > 0")

    def layer_time(self, job: JobSpec) -> float:
        pinned = self.per_layer_time.get(job.model.name)
        if pinned is not None:
            return pinned
        m = job.model
        flops = job.micro_batch_size * m.seq_len * (24 * m.hidden**2 + 4 * m.seq_len * m.hidden)
        return self.calibration * flops / self.peak_flops

    def price_per_gpu_second(self, elec_price: float) -> float:
        return elec_price * self.gpu_power / JOULES_PER_KWH


DEFAULT_PROFILE = ComputeProfile()


def activation_size(job: JobSpec) -> int:
    """Bytes crossing one stage boundary per micro-batch."""
    m = job.model
    return job.micro_batch_size * m.seq_len * m.hidden * m.bytes_per_elem


def comp_time(job: JobSpec, k: int, profile: ComputeProfile = DEFAULT_PROFILE) -> float:
    if not 1 <= k <= job.model.layers:
        raise InvalidStageCount(f"job {job.id}: {k} stages for {job.model.layers} layers")
    return profile.layer_time(job) * -(-job.model.layers // k)


def min_bandwidth(job: JobSpec, k: int, profile: ComputeProfile = DEFAULT_PROFILE) -> float:
    """Link rate (bits/s) at which one boundary transfer takes one compute slot."""
    return BITS_PER_BYTE * activation_size(job) / comp_time(job, k, profile)


def stage_regions(plan) -> List[str]:
    out: List[str] = []
    if len(set(plan.path)) != len(plan.path) or set(plan.path) != set(plan.alloc):
        raise MalformedPlan(f"job {plan.job_id}: path {plan.path} vs alloc {dict(plan.alloc)}")
    for r in plan.path:
        n = plan.alloc[r]
        if n < 1:
            raise MalformedPlan(f"job {plan.job_id}: region {r} has {n} GPUs")
        out.extend([r] * n)
    return out


def boundary_comm_times(job: JobSpec, plan, intra_bandwidth: Mapping[str, float]) -> List[float]:
    """Communication time of each of the L-1 stage boundaries, in order."""
    stages = stage_regions(plan)
    bits = BITS_PER_BYTE * activation_size(job)
    times = []
    for a, b in zip(stages, stages[1:]):
        if a == b:
            times.append(bits / intra_bandwidth.get(a, DEFAULT_INTRA_BANDWIDTH))
        else:
            if plan.b_reserved <= 0:
                raise MalformedPlan(f"job {plan.job_id}: cross-region plan without bandwidth")
            times.append(bits / plan.b_reserved)
    return times


def pipeline_iter_time(t_comp: float, comms: Sequence[float], micro_batches: int) -> float:
    """Forward fill plus steady state, doubled for the backward pass."""
    stages = len(comms) + 1
    delta = max([t_comp, *comms])
    return (math.fsum(comms) + stages * t_comp + (micro_batches - 1) * delta) * 2


def bottleneck(job: JobSpec, plan, intra_bandwidth: Mapping[str, float],
               profile: ComputeProfile = DEFAULT_PROFILE) -> float:
    t = comp_time(job, plan.total_gpus, profile)
    return max([t, *boundary_comm_times(job, plan, intra_bandwidth)])


def job_order_key(job: JobSpec):
    """Submission time, then id (numeric ids compare as numbers)."""
    ident = (0, int(job.id), "") if job.id.isdigit() else (1, 0, job.id)
    return (job.submit_time, ident)


def iter_time(job: JobSpec, plan, intra_bandwidth: Mapping[str, float],
              profile: ComputeProfile = DEFAULT_PROFILE) -> float:
    comms = boundary_comm_times(job, plan, intra_bandwidth)
    return pipeline_iter_time(comp_time(job, plan.total_gpus, profile), comms, job.micro_batches)


def ideal_iter_time(job: JobSpec, k: int, profile: ComputeProfile = DEFAULT_PROFILE) -> float:
    """Iteration time on k GPUs inside one region at the profile's intra bandwidth."""
    c = BITS_PER_BYTE * activation_size(job) / profile.ideal_intra_bandwidth
    t = comp_time(job, k, profile)
    return ((k - 1) * c + k * t + (job.micro_batches - 1) * max(t, c)) * 2


def exec_duration(job: JobSpec, plan, intra_bandwidth: Mapping[str, float],
                  profile: ComputeProfile = DEFAULT_PROFILE) -> float:
    return job.iterations * iter_time(job, plan, intra_bandwidth, profile)


def single_gpu_duration(job: JobSpec, profile: ComputeProfile = DEFAULT_PROFILE) -> float:
    """Execution duration on one GPU (no communication at all)."""
    return job.iterations * ideal_iter_time(job, 1, profile)


def job_cost(alloc: Mapping[str, int], prices: Mapping[str, float], duration: float,
             profile: ComputeProfile = DEFAULT_PROFILE) -> float:
    """Electricity cost of holding ``alloc`` for ``duration`` seconds."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    rate = math.fsum(n * profile.price_per_gpu_second(prices[r]) for r, n in alloc.items())
    return duration * rate


def optimal_gpu_count(job: JobSpec, cluster_total: int,
                      profile: ComputeProfile = DEFAULT_PROFILE) -> int:
    """Stage count minimizing ideal iteration time; smallest k wins ties."""
    if cluster_total < 1:
        raise ValueError("cluster_total must be >= 1")
    best_k, best_t = 1, ideal_iter_time(job, 1, profile)
    for k in range(2, min(cluster_total, job.model.layers) + 1):
        t = ideal_iter_time(job, k, profile)
        if t < best_t:
            best_k, best_t = k, t
    return best_k


def intra_bandwidths(regions: Mapping[str, object]) -> Dict[str, float]:
    return {rid: r.intra_bandwidth for rid, r in regions.items()}
