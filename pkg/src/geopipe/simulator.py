"""Deterministic discrete-event simulation of a multi-job scheduling policy.

Events are job submissions and completions.  All events at one instant are
applied together (completions first), then one scheduling pass walks the
ordered queue and starts every job its placer can fit.  Jobs that cannot be
placed stay queued without blocking the jobs behind them, unless the
scenario asks for strict FCFS.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .cost_model import (
    ComputeProfile,
    JobSpec,
    exec_duration,
    intra_bandwidths,
    job_cost,
    job_order_key,
    min_bandwidth,
    optimal_gpu_count,
    single_gpu_duration,
)
from .placement import (
    PlacementPlan,
    Placer,
    find_path,
    find_path_uniform,
    place_cr_lcf,
    place_cr_ldf,
    place_lcf,
    place_ldf,
)
from .priority import congestion, fcfs_order, order_queue
from .scenario import Scenario
from .topology import AdmissionRejected, ClusterState


class InfeasibleScenario(RuntimeError):
    pass


@dataclass(frozen=True)
class Policy:
    name: str
    ordering: str  # "priority" | "fcfs"
    placer: Placer


POLICIES: Dict[str, Policy] = {
    p.name: p
    for p in [
        Policy("BACE", "priority", find_path),
        Policy("LCF", "fcfs", place_lcf),
        Policy("LDF", "fcfs", place_ldf),
        Policy("CR-LCF", "fcfs", place_cr_lcf),
        Policy("CR-LDF", "fcfs", place_cr_ldf),
        Policy("BACE-noPriority", "fcfs", find_path),
        Policy("BACE-noPathfinder", "priority", place_cr_ldf),
        Policy("BACE-noCostMin", "priority", find_path_uniform),
    ]
}
MAIN_POLICIES = ("BACE", "LCF", "LDF", "CR-LCF", "CR-LDF")
ABLATION_POLICIES = ("BACE", "BACE-noPriority", "BACE-noPathfinder", "BACE-noCostMin")


def get_policy(name: str) -> Policy:
    try:
        return POLICIES[name]
    except KeyError:
        raise KeyError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}") from None


@dataclass
class JobRecord:
    job_id: str
    submit: float
    start: float
    exec: float
    cost: float
    plan: PlacementPlan
    k_star: int = 0

    @property
    def wait(self) -> float:
        return self.start - self.submit

    @property
    def jct(self) -> float:
        return self.wait + self.exec

    @property
    def finish(self) -> float:
        return self.start + self.exec

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "submit": self.submit,
            "start": self.start,
            "wait": self.wait,
            "exec": self.exec,
            "jct": self.jct,
            "cost": self.cost,
            "k_star": self.k_star,
            "plan": self.plan.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JobRecord":
        return cls(d["job_id"], float(d["submit"]), float(d["start"]), float(d["exec"]),
                   float(d["cost"]), PlacementPlan.from_dict(d["job_id"], d["plan"]),
                   int(d.get("k_star", 0)))


@dataclass
class SimReport:
    policy: str
    scenario_hash: str
    seed: int
    records: List[JobRecord]
    timeline: List[Tuple[float, str, str]] = field(default_factory=list)  # (t, start|finish, job)
    peak_link_util: Dict[str, float] = field(default_factory=dict)
    alphas: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.records

    @property
    def avg_jct(self) -> float:
        return objectives(self)[0]

    @property
    def total_cost(self) -> float:
        return objectives(self)[1]

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "avg_jct": self.avg_jct,
            "total_cost": self.total_cost,
            "empty": self.empty,
            "peak_link_util": dict(sorted(self.peak_link_util.items())),
            "records": [r.to_dict() for r in self.records],
            "timeline": [list(e) for e in self.timeline],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimReport":
        return cls(
            d["policy"], d.get("scenario_hash", ""), int(d.get("seed", 0)),
            [JobRecord.from_dict(r) for r in d["records"]],
            [(float(t), kind, str(j)) for t, kind, j in d.get("timeline", [])],
            dict(d.get("peak_link_util", {})),
        )


def objectives(report: SimReport) -> Tuple[float, float]:
    """Mean JCT and total cost; an empty report yields (0, 0)."""
    if not report.records:
        return 0.0, 0.0
    n = len(report.records)
    return (math.fsum(r.jct for r in report.records) / n,
            math.fsum(r.cost for r in report.records))


def link_name(key: Tuple[str, str]) -> str:
    return f"{key[0]}->{key[1]}"


def run(scenario: Scenario, policy, seed: int = 0) -> SimReport:
    if isinstance(policy, str):
        policy = get_policy(policy)
    scenario = scenario.resolved(seed)
    profile = scenario.compute_profile()
    jobs = {j.id: j for j in scenario.job_specs()}
    cluster = scenario.build_cluster()
    total = cluster.total_gpus()
    if jobs and total < 1:
        raise InfeasibleScenario("cluster has no GPUs")
    intra = intra_bandwidths(cluster.regions)
    prices = {rid: r.elec_price for rid, r in cluster.regions.items()}

    k_star = {jid: optimal_gpu_count(j, total, profile) for jid, j in jobs.items()}
    e1 = {jid: single_gpu_duration(j, profile) for jid, j in jobs.items()}
    bw = {jid: min_bandwidth(j, k_star[jid], profile) for jid, j in jobs.items()}

    # (time, 0=completion|1=submission, order key, job id)
    events: List[tuple] = []
    for j in jobs.values():
        heapq.heappush(events, (j.submit_time, 1, job_order_key(j), j.id))

    pending: List[JobSpec] = []
    records: Dict[str, JobRecord] = {}
    timeline: List[Tuple[float, str, str]] = []
    alphas: List[Tuple[float, float]] = []
    peak = {link_name(k): 0.0 for k in cluster.links}

    while events:
        now = events[0][0]
        while events and events[0][0] == now:
            _, kind, _, jid = heapq.heappop(events)
            if kind == 0:
                cluster.release(jid)
                timeline.append((now, "finish", jid))
            else:
                pending.append(jobs[jid])
        if not pending:
            continue

        alpha = congestion(cluster)
        alphas.append((now, alpha))
        if policy.ordering == "priority":
            queue = order_queue(pending, cluster, profile, alpha, e1, bw)
        else:
            queue = fcfs_order(pending)

        started = set()
        for job in queue:
            if cluster.free_gpus() == 0:
                break
            plan = policy.placer(job, cluster, k_star[job.id], profile)
            if plan is None:
                if scenario.strict_fcfs:
                    break
                continue
            try:
                cluster.reserve(plan)
            except AdmissionRejected as exc:
                raise AssertionError(f"{policy.name} produced an inadmissible plan: {exc}") from None
            duration = exec_duration(job, plan, intra, profile)
            records[job.id] = JobRecord(
                job.id, job.submit_time, now, duration,
                job_cost(plan.alloc, prices, duration, profile), plan, k_star[job.id],
            )
            timeline.append((now, "start", job.id))
            heapq.heappush(events, (now + duration, 0, job_order_key(job), job.id))
            started.add(job.id)
        pending = [j for j in pending if j.id not in started]

        for key, link in cluster.links.items():
            if link.capacity > 0:
                name = link_name(key)
                peak[name] = max(peak[name], link.reserved / link.capacity)

        if pending and not events:
            raise InfeasibleScenario(
                f"{len(pending)} job(s) can never be placed: "
                + ", ".join(j.id for j in fcfs_order(pending))
            )

    ordered = [records[j.id] for j in sorted(jobs.values(), key=job_order_key)]
    return SimReport(policy.name, scenario.digest(), seed, ordered, timeline, peak, alphas)


def verify_invariants(report: SimReport, scenario: Scenario, seed: Optional[int] = None) -> List[str]:
    """Replay a report against the scenario; returns human-readable violations."""
    scenario = scenario.resolved(report.seed if seed is None else seed)
    violations: List[str] = []
    jobs = {j.id: j for j in scenario.job_specs()}
    cluster = scenario.build_cluster()
    by_id = {r.job_id: r for r in report.records}

    missing = set(jobs) - set(by_id)
    if missing:
        violations.append(f"jobs never completed: {sorted(missing)}")
    for r in report.records:
        if r.job_id not in jobs:
            violations.append(f"record for unknown job {r.job_id}")
            continue
        if r.wait < 0:
            violations.append(f"job {r.job_id}: negative wait {r.wait}")
        if r.jct != r.wait + r.exec:
            violations.append(f"job {r.job_id}: JCT != wait + exec")
        if r.cost < 0:
            violations.append(f"job {r.job_id}: negative cost")
        if r.submit != jobs[r.job_id].submit_time:
            violations.append(f"job {r.job_id}: submit time mismatch")

    # Admission replay: each start must be admissible on the state left by all
    # earlier events; this also checks the GPU and link capacity bounds.
    events = []
    for r in report.records:
        events.append((r.start, 1, r.job_id))
        events.append((r.finish, 0, r.job_id))
    for t, kind, jid in sorted(events):
        rec = by_id[jid]
        if kind == 0:
            if jid in cluster.active_plans:
                cluster.release(jid)
            continue
        problems = cluster.check_admissible(rec.plan)
        if problems:
            violations.append(f"t={t:.9g} job {jid}: " + "; ".join(problems))
            continue
        cluster.reserve(rec.plan)
        for rid, region in cluster.regions.items():
            used = sum(p.alloc.get(rid, 0) for p in cluster.active_plans.values())
            if used > region.gpu_capacity or used != region.gpu_capacity - region.gpu_free:
                violations.append(f"t={t:.9g} region {rid}: {used} GPUs in use of {region.gpu_capacity}")
        for key, link in cluster.links.items():
            load = math.fsum(p.b_reserved for p in cluster.active_plans.values() if key in p.links)
            if load > link.capacity:
                violations.append(f"t={t:.9g} link {link_name(key)}: {load:.9g} > {link.capacity:.9g}")
    return violations


def busy_gpu_seconds(report: SimReport) -> float:
    """Integral of the number of allocated GPUs over the report's timeline."""
    deltas: Dict[float, int] = {}
    for r in report.records:
        deltas[r.start] = deltas.get(r.start, 0) + r.plan.total_gpus
        deltas[r.finish] = deltas.get(r.finish, 0) - r.plan.total_gpus
    area, busy, last = [], 0, None
    for t in sorted(deltas):
        if last is not None:
            area.append(busy * (t - last))
        busy += deltas[t]
        last = t
    return math.fsum(area)
