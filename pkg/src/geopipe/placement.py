"""Placement engines: bandwidth-aware path search, cost-min allocation, baselines.

Every engine has the signature ``(job, cluster, k_star, profile) -> plan | None``
and is pure with respect to the cluster; the simulator does the reserving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .cost_model import (
    BITS_PER_BYTE,
    DEFAULT_PROFILE,
    ComputeProfile,
    JobSpec,
    activation_size,
    comp_time,
    min_bandwidth,
)
from .topology import ClusterState


class InfeasibleAllocation(ValueError):
    pass


@dataclass(frozen=True)
class PlacementPlan:
    job_id: str
    path: Tuple[str, ...]
    alloc: Mapping[str, int]
    b_reserved: float
    links: Tuple[Tuple[str, str], ...] = field(init=False)

    def __post_init__(self):
        if not self.path or len(set(self.path)) != len(self.path):
            raise ValueError(f"plan for {self.job_id}: path must be non-empty and repeat-free")
        if set(self.alloc) != set(self.path) or min(self.alloc.values()) < 1:
            raise ValueError(f"plan for {self.job_id}: every path region needs >= 1 GPU")
        object.__setattr__(self, "links", tuple(zip(self.path, self.path[1:])))

    @property
    def total_gpus(self) -> int:
        return sum(self.alloc.values())

    def avg_price(self, cluster: ClusterState) -> float:
        return math.fsum(n * cluster.price(r) for r, n in self.alloc.items()) / self.total_gpus

    def to_dict(self) -> dict:
        return {
            "path": list(self.path),
            "alloc": {r: self.alloc[r] for r in self.path},
            "b_reserved": self.b_reserved,
        }

    @classmethod
    def from_dict(cls, job_id: str, d: Mapping) -> "PlacementPlan":
        return cls(job_id, tuple(d["path"]), dict(d["alloc"]), float(d["b_reserved"]))


Allocator = Callable[[Sequence[str], int, ClusterState], Dict[str, int]]
Placer = Callable[[JobSpec, ClusterState, int, ComputeProfile], Optional[PlacementPlan]]


def make_plan(job: JobSpec, path: Sequence[str], alloc: Mapping[str, int],
              profile: ComputeProfile = DEFAULT_PROFILE) -> PlacementPlan:
    g = sum(alloc.values())
    return PlacementPlan(job.id, tuple(path), {r: alloc[r] for r in path},
                         min_bandwidth(job, g, profile))


def link_feasible(job: JobSpec, b_tmp: float, g: int, profile: ComputeProfile) -> bool:
    """Boundary transfer at the path bottleneck must fit in one compute slot."""
    return b_tmp > 0 and BITS_PER_BYTE * activation_size(job) / b_tmp <= comp_time(job, g, profile)


def _stage_cap(job: JobSpec, k_star: int) -> int:
    """A job never uses more stages than it has layers."""
    if k_star < 1:
        raise ValueError("k_star must be >= 1")
    return min(k_star, job.model.layers)


def _free(cluster: ClusterState) -> Dict[str, int]:
    return {rid: r.gpu_free for rid, r in cluster.regions.items()}


# -- allocators -----------------------------------------------------------

def cost_min_allocate(path: Sequence[str], g: int, cluster: ClusterState) -> Dict[str, int]:
    """One GPU per region, then fill cheapest regions first up to their free GPUs."""
    free = _free(cluster)
    if g < len(path) or any(free[r] < 1 for r in path) or sum(free[r] for r in path) < g:
        raise InfeasibleAllocation(f"cannot place {g} GPUs on {list(path)}")
    alloc = {r: 1 for r in path}
    rem = g - len(path)
    for r in sorted(path, key=cluster.price):
        if rem == 0:
            break
        add = min(free[r] - 1, rem)
        alloc[r] += add
        rem -= add
    return alloc


def uniform_allocate(path: Sequence[str], g: int, cluster: ClusterState) -> Dict[str, int]:
    """Round-robin along the path, skipping regions that are already full."""
    free = _free(cluster)
    if g < len(path) or any(free[r] < 1 for r in path) or sum(free[r] for r in path) < g:
        raise InfeasibleAllocation(f"cannot place {g} GPUs on {list(path)}")
    alloc = {r: 1 for r in path}
    rem = g - len(path)
    while rem:
        for r in path:
            if rem and alloc[r] < free[r]:
                alloc[r] += 1
                rem -= 1
    return alloc


def fill_in_order(path: Sequence[str], g: int, cluster: ClusterState) -> Dict[str, int]:
    """Fill each region to its free capacity in path order (used by the CR baselines)."""
    alloc, rem = {}, g
    for r in path:
        alloc[r] = min(cluster.regions[r].gpu_free, rem)
        rem -= alloc[r]
    if rem or min(alloc.values()) < 1:
        raise InfeasibleAllocation(f"cannot place {g} GPUs on {list(path)}")
    return alloc


# -- BACE pathfinder ------------------------------------------------------

def explore_paths(job: JobSpec, cluster: ClusterState, k_star: int,
                  profile: ComputeProfile = DEFAULT_PROFILE) -> List[Tuple[List[str], int]]:
    """Greedy widest-next-hop expansion from every seed with a free GPU.

    Returns ``(path, g)`` for each seed, in region order.
    """
    k_star = _stage_cap(job, k_star)
    free = _free(cluster)
    n_regions = len(cluster.regions)
    out = []
    for seed in cluster.regions:
        if free[seed] < 1:
            continue
        path, tail = [seed], seed
        g = min(free[seed], k_star)
        b_min = math.inf
        while len(path) < n_regions and g < k_star:
            candidates = [
                u for u in cluster.regions
                if u not in path and free[u] > 0 and cluster.residual(tail, u) > 0
            ]
            if not candidates:
                break
            u = max(candidates, key=lambda c: cluster.residual(tail, c))
            b_tmp = min(b_min, cluster.residual(tail, u))
            g_next = min(g + free[u], k_star)
            if not link_feasible(job, b_tmp, g_next, profile):
                break
            path.append(u)
            tail, b_min, g = u, b_tmp, g_next
        out.append((path, g))
    return out


def find_path(job: JobSpec, cluster: ClusterState, k_star: int,
              profile: ComputeProfile = DEFAULT_PROFILE,
              allocator: Allocator = cost_min_allocate) -> Optional[PlacementPlan]:
    k_star = _stage_cap(job, k_star)
    free = _free(cluster)
    roomy = [r for r in cluster.regions if free[r] >= k_star]
    if roomy:
        best = min(roomy, key=cluster.price)
        return make_plan(job, [best], {best: k_star}, profile)

    best_plan, best_g, best_cost = None, 0, math.inf
    for path, g in explore_paths(job, cluster, k_star, profile):
        alloc = allocator(path, g, cluster)
        c_avg = math.fsum(alloc[r] * cluster.price(r) for r in path) / g
        if g > best_g or (g == best_g and c_avg < best_cost):
            best_plan = make_plan(job, path, alloc, profile)
            best_g, best_cost = g, c_avg
    return best_plan


def find_path_uniform(job, cluster, k_star, profile=DEFAULT_PROFILE):
    return find_path(job, cluster, k_star, profile, allocator=uniform_allocate)


# -- baselines ------------------------------------------------------------

def place_lcf(job: JobSpec, cluster: ClusterState, k_star: int,
              profile: ComputeProfile = DEFAULT_PROFILE) -> Optional[PlacementPlan]:
    """Whole job in the cheapest region that has any free GPU."""
    k_star = _stage_cap(job, k_star)
    free = _free(cluster)
    avail = [r for r in cluster.regions if free[r] >= 1]
    if not avail:
        return None
    r = min(avail, key=cluster.price)
    return make_plan(job, [r], {r: min(k_star, free[r])}, profile)


def _ldf_key(cluster: ClusterState):
    return lambda r: (-cluster.regions[r].gpu_free, cluster.price(r))


def place_ldf(job: JobSpec, cluster: ClusterState, k_star: int,
              profile: ComputeProfile = DEFAULT_PROFILE) -> Optional[PlacementPlan]:
    """Whole job in the region with the most free GPUs (cheaper wins ties)."""
    k_star = _stage_cap(job, k_star)
    free = _free(cluster)
    avail = [r for r in cluster.regions if free[r] >= 1]
    if not avail:
        return None
    r = min(avail, key=_ldf_key(cluster))
    return make_plan(job, [r], {r: min(k_star, free[r])}, profile)


def place_cr_lcf(job: JobSpec, cluster: ClusterState, k_star: int,
                 profile: ComputeProfile = DEFAULT_PROFILE) -> Optional[PlacementPlan]:
    """Aggregate regions in ascending price order, skipping infeasible hops."""
    k_star = _stage_cap(job, k_star)
    free = _free(cluster)
    order = sorted((r for r in cluster.regions if free[r] >= 1), key=cluster.price)
    if not order:
        return None
    path = [order[0]]
    g = min(free[order[0]], k_star)
    b_min = math.inf
    for u in order[1:]:
        if g >= k_star:
            break
        b_tmp = min(b_min, cluster.residual(path[-1], u))
        g_next = min(g + free[u], k_star)
        if link_feasible(job, b_tmp, g_next, profile):
            path.append(u)
            b_min, g = b_tmp, g_next
    return make_plan(job, path, fill_in_order(path, g, cluster), profile)


def place_cr_ldf(job: JobSpec, cluster: ClusterState, k_star: int,
                 profile: ComputeProfile = DEFAULT_PROFILE) -> Optional[PlacementPlan]:
    """Seed at the largest free region, then append widest feasible next hops."""
    k_star = _stage_cap(job, k_star)
    free = _free(cluster)
    avail = [r for r in cluster.regions if free[r] >= 1]
    if not avail:
        return None
    seed = min(avail, key=_ldf_key(cluster))
    path, g, b_min = [seed], min(free[seed], k_star), math.inf
    while g < k_star:
        tail = path[-1]
        candidates = sorted(
            (u for u in avail if u not in path and cluster.residual(tail, u) > 0),
            key=lambda u: -cluster.residual(tail, u),
        )
        for u in candidates:
            b_tmp = min(b_min, cluster.residual(tail, u))
            g_next = min(g + free[u], k_star)
            if link_feasible(job, b_tmp, g_next, profile):
                path.append(u)
                b_min, g = b_tmp, g_next
                break
        else:
            break
    return make_plan(job, path, fill_in_order(path, g, cluster), profile)
