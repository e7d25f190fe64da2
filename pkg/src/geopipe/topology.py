"""Geo-distributed cluster state: regions, directed links, and admission.

All mutation goes through :meth:`ClusterState.reserve` and
:meth:`ClusterState.release`, which keep per-region GPU counts and per-link
reserved bandwidth consistent with the set of active plans.  Bandwidths are
in bits per second throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Tuple

if TYPE_CHECKING:
    from .placement import PlacementPlan

DEFAULT_INTRA_BANDWIDTH = 100e9

LinkKey = Tuple[str, str]


class ConfigurationError(ValueError):
    pass


class AdmissionRejected(RuntimeError):
    pass


class NotActive(KeyError):
    pass


def derive_link_capacity(b_u: float, b_v: float) -> float:
    """Inter-region link capacity as the mean of the two node bandwidths."""
    if not (b_u > 0 and b_v > 0):
        raise ConfigurationError(f"node bandwidths must be positive, got {b_u!r}, {b_v!r}")
    return (b_u + b_v) / 2


@dataclass
class RegionState:
    id: str
    name: str
    gpu_capacity: int
    elec_price: float  # $/kWh
    node_bandwidth: float
    intra_bandwidth: float = DEFAULT_INTRA_BANDWIDTH
    gpu_free: Optional[int] = None

    def __post_init__(self):
        if self.gpu_free is None:
            self.gpu_free = self.gpu_capacity
        if self.gpu_capacity < 0 or not 0 <= self.gpu_free <= self.gpu_capacity:
            raise ConfigurationError(f"region {self.id}: bad GPU counts")
        if self.elec_price <= 0:
            raise ConfigurationError(f"region {self.id}: elec_price must be > 0")
        if self.node_bandwidth <= 0 or self.intra_bandwidth <= 0:
            raise ConfigurationError(f"region {self.id}: bandwidths must be > 0")


@dataclass
class LinkState:
    src: str
    dst: str
    capacity: float
    reserved: float = 0.0

    @property
    def residual(self) -> float:
        return max(self.capacity - self.reserved, 0.0)


@dataclass
class ClusterState:
    regions: Dict[str, RegionState]
    links: Dict[LinkKey, LinkState]
    active_plans: Dict[str, "PlacementPlan"] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        regions: Iterable[RegionState],
        overrides: Iterable[Tuple[str, str, float]] = (),
        bw_scale: float = 1.0,
    ) -> "ClusterState":
        """Full directed mesh with capacities from node bandwidths.

        An override with capacity 0 removes the link.
        """
        regs = {}
        for r in regions:
            if r.id in regs:
                raise ConfigurationError(f"duplicate region id {r.id!r}")
            regs[r.id] = r
        caps: Dict[LinkKey, float] = {}
        for u in regs.values():
            for v in regs.values():
                if u.id != v.id:
                    caps[(u.id, v.id)] = derive_link_capacity(u.node_bandwidth, v.node_bandwidth)
        for src, dst, cap in overrides:
            if (src, dst) not in caps:
                raise ConfigurationError(f"link override references unknown link {src}->{dst}")
            if cap < 0:
                raise ConfigurationError(f"link {src}->{dst}: negative capacity")
            caps[(src, dst)] = cap
        links = {k: LinkState(k[0], k[1], c * bw_scale) for k, c in caps.items() if c > 0}
        return cls(regs, links)

    # -- queries ---------------------------------------------------------

    def residual(self, u: str, v: str) -> float:
        link = self.links.get((u, v))
        return link.residual if link is not None else 0.0

    def total_gpus(self) -> int:
        return sum(r.gpu_capacity for r in self.regions.values())

    def free_gpus(self) -> int:
        return sum(r.gpu_free for r in self.regions.values())

    def price(self, region_id: str) -> float:
        return self.regions[region_id].elec_price

    def snapshot(self) -> dict:
        """Plain-value copy of all mutable state, for equality checks."""
        return {
            "free": {rid: r.gpu_free for rid, r in self.regions.items()},
            "reserved": {k: l.reserved for k, l in self.links.items()},
            "active": sorted(self.active_plans),
        }

    # -- mutation --------------------------------------------------------

    def check_admissible(self, plan: "PlacementPlan") -> List[str]:
        problems = []
        if plan.job_id in self.active_plans:
            problems.append(f"job {plan.job_id} already active")
        for rid, n in plan.alloc.items():
            region = self.regions.get(rid)
            if region is None:
                problems.append(f"unknown region {rid}")
            elif n > region.gpu_free:
                problems.append(f"region {rid}: need {n} GPUs, {region.gpu_free} free")
        for key in plan.links:
            link = self.links.get(key)
            if link is None:
                problems.append(f"no link {key[0]}->{key[1]}")
            elif link.capacity - link.reserved < plan.b_reserved:
                problems.append(
                    f"link {key[0]}->{key[1]}: need {plan.b_reserved:.6g} b/s, "
                    f"{link.capacity - link.reserved:.6g} residual"
                )
        return problems

    def reserve(self, plan: "PlacementPlan") -> None:
        problems = self.check_admissible(plan)
        if problems:
            raise AdmissionRejected("; ".join(problems))
        for rid, n in plan.alloc.items():
            self.regions[rid].gpu_free -= n
        self.active_plans[plan.job_id] = plan
        self._resum(plan.links)

    def release(self, job_id: str) -> "PlacementPlan":
        plan = self.active_plans.pop(job_id, None)
        if plan is None:
            raise NotActive(job_id)
        for rid, n in plan.alloc.items():
            self.regions[rid].gpu_free += n
        self._resum(plan.links)
        return plan

    def _resum(self, keys: Iterable[LinkKey]) -> None:
        # Recompute from active plans rather than add/subtract, so long runs
        # never drift away from the exact sum.
        for key in keys:
            self.links[key].reserved = math.fsum(
                p.b_reserved for p in self.active_plans.values() if key in p.links
            )
