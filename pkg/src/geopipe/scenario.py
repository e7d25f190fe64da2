"""Scenario definitions: built-ins, YAML files, scaling and job expansion.

A scenario file is YAML::

    name: my-cluster
    regions:
      - {id: us, name: US-East-2, gpus: 64, price: 0.156, bandwidth_gbps: 90}
    links:                      # optional; capacity 0 removes a link
      - {src: us, dst: eu, capacity_gbps: 20, symmetric: true}
    models:                     # optional; extends the built-in catalogue
      - {name: Tiny, params: 1e9, layers: 4, hidden: 512, batch_size: 32}
    jobs:
      - {id: "1", model: Llama-3.1-70B, dataset: Alpaca-52k}
    profile:                    # all optional
      gpu_power_w: 300
      calibration: 2.5
      peak_tflops: 155
      seq_len: 2048
      bytes_per_elem: 2
      micro_batch_size: 8       # default micro-batches = batch_size / this
      epochs: 1
      per_layer_time: {Llama-3.1-70B: 0.4}
    scale: {bandwidth: 1.0, gpu: 1.0}
    job_count: 8                # optional; cycles the job list
    strict_fcfs: false

Jobs may also set ``micro_batches``, ``iterations``, ``epochs`` and
``submit_time``.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import yaml

from .cost_model import ComputeProfile, JobSpec, ModelConfig, iterations_for
from .topology import DEFAULT_INTRA_BANDWIDTH, ClusterState, ConfigurationError, RegionState

GBPS = 1e9

DATASETS: Dict[str, int] = {
    "Alpaca-52k": 52_002,
    "WikiText-103": 1_810_000,
    "OpenWebText": 8_010_000,
}
DATASET_ORDER = ("Alpaca-52k", "WikiText-103", "OpenWebText")

MODELS: Dict[str, ModelConfig] = {
    m.name: m
    for m in [
        ModelConfig("FLM-101B", 101e9, 80, 10240, 128),
        ModelConfig("Solar-Open-100B", 100e9, 48, 4096, 128),
        ModelConfig("Llama-3.1-70B", 70e9, 80, 8192, 128),
        ModelConfig("Falcon-40B", 40e9, 60, 8192, 256),
        ModelConfig("Qwen2.5-32B", 32e9, 64, 5120, 256),
        ModelConfig("Gemma-3-27B", 27e9, 62, 5376, 256),
        ModelConfig("Ministral-3-14B", 14e9, 40, 5120, 512),
        ModelConfig("Qwen2.5-14B", 14e9, 48, 5120, 512),
    ]
}
DEFAULT_MODELS = list(MODELS)

DEFAULT_REGIONS = [
    ("eu-west", "EU-West", 64, 0.251, 50),
    ("us-east-2", "US-East-2", 64, 0.156, 90),
    ("eu-central", "EU-Central", 16, 0.288, 30),
    ("ea-east", "EA-East", 128, 0.191, 70),
    ("sea-south", "SEA-South", 32, 0.222, 50),
    ("oc-east", "OC-East", 32, 0.295, 70),
]


class ScenarioError(ConfigurationError):
    pass


@dataclass(frozen=True)
class RegionSeed:
    id: str
    name: str
    gpus: int
    price: float  # $/kWh
    bandwidth_gbps: float
    intra_gbps: float = DEFAULT_INTRA_BANDWIDTH / GBPS


@dataclass(frozen=True)
class JobSeed:
    """A job before profile defaults (sequence length, micro-batching) are applied."""

    id: str
    model: str
    dataset: str = "Alpaca-52k"
    micro_batches: Optional[int] = None
    iterations: Optional[int] = None
    epochs: Optional[int] = None
    submit_time: float = 0.0


@dataclass(frozen=True)
class ProfileSpec:
    gpu_power: float = 300.0
    calibration: float = 2.5
    peak_flops: float = 155e12
    seq_len: int = 2048
    bytes_per_elem: int = 2
    micro_batch_size: int = 8
    epochs: int = 1
    per_layer_time: Tuple[Tuple[str, float], ...] = ()


@dataclass(frozen=True)
class Scenario:
    name: str
    regions: Tuple[RegionSeed, ...]
    jobs: Tuple[JobSeed, ...]
    link_overrides: Tuple[Tuple[str, str, float], ...] = ()  # (src, dst, Gbps)
    models: Tuple[ModelConfig, ...] = ()
    profile: ProfileSpec = ProfileSpec()
    bw_scale: float = 1.0
    gpu_scale: float = 1.0
    job_count: Optional[int] = None
    strict_fcfs: bool = False

    def __post_init__(self):
        ids = [r.id for r in self.regions]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"duplicate region ids in {ids}")
        jids = [j.id for j in self.jobs]
        if len(set(jids)) != len(jids):
            raise ScenarioError(f"duplicate job ids in {jids}")
        if not (self.bw_scale > 0 and self.gpu_scale > 0):
            raise ScenarioError("scale factors must be > 0")
        known = set(MODELS) | {m.name for m in self.models}
        for j in self.jobs:
            if j.model not in known:
                raise ScenarioError(f"job {j.id}: unknown model {j.model!r}")
            if j.dataset not in DATASETS and j.iterations is None:
                raise ScenarioError(f"job {j.id}: unknown dataset {j.dataset!r} and no iterations")
        for src, dst, _ in self.link_overrides:
            if src not in ids or dst not in ids:
                raise ScenarioError(f"link override {src}->{dst} names an unknown region")

    # -- resolution ----------------------------------------------------------

    def model(self, name: str) -> ModelConfig:
        for m in self.models:
            if m.name == name:
                return m
        return MODELS[name]

    def compute_profile(self) -> ComputeProfile:
        p = self.profile
        return ComputeProfile(
            gpu_power=p.gpu_power,
            calibration=p.calibration,
            peak_flops=p.peak_flops,
            per_layer_time=dict(p.per_layer_time),
        )

    def job_specs(self) -> List[JobSpec]:
        p = self.profile
        out = []
        for seed in self.jobs:
            base = self.model(seed.model)
            m = replace(base, seq_len=p.seq_len, bytes_per_elem=p.bytes_per_elem)
            mb = seed.micro_batches or max(1, m.batch_size // p.micro_batch_size)
            samples = DATASETS.get(seed.dataset)
            iters = seed.iterations or iterations_for(samples, m.batch_size, seed.epochs or p.epochs)
            out.append(JobSpec(seed.id, m, mb, iters, seed.submit_time, seed.dataset, samples))
        return out

    def scaled_regions(self) -> List[RegionState]:
        return [
            RegionState(
                r.id, r.name, scale_gpus(r.gpus, self.gpu_scale), r.price,
                r.bandwidth_gbps * GBPS, r.intra_gbps * GBPS,
            )
            for r in self.regions
        ]

    def build_cluster(self) -> ClusterState:
        overrides = [(u, v, c * GBPS) for u, v, c in self.link_overrides]
        return ClusterState.build(self.scaled_regions(), overrides, self.bw_scale)

    def with_jobs(self, count: int, seed: int = 0) -> "Scenario":
        return replace(self, jobs=tuple(expand_jobs(self.jobs, count, seed)), job_count=None)

    def resolved(self, seed: int = 0) -> "Scenario":
        """Apply ``job_count`` so the job list is explicit."""
        if self.job_count is None:
            return self
        return self.with_jobs(self.job_count, seed)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        p = self.profile
        d: Dict[str, Any] = {
            "name": self.name,
            "regions": [
                {
                    "id": r.id, "name": r.name, "gpus": r.gpus, "price": r.price,
                    "bandwidth_gbps": r.bandwidth_gbps,
                    "intra_gbps": r.intra_gbps,
                }
                for r in self.regions
            ],
            "links": [
                {"src": s, "dst": t, "capacity_gbps": c} for s, t, c in self.link_overrides
            ],
            "models": [
                {
                    "name": m.name, "params": m.params, "layers": m.layers,
                    "hidden": m.hidden, "batch_size": m.batch_size,
                }
                for m in self.models
            ],
            "jobs": [_job_to_dict(j) for j in self.jobs],
            "profile": {
                "gpu_power_w": p.gpu_power,
                "calibration": p.calibration,
                "peak_tflops": p.peak_flops / 1e12,
                "seq_len": p.seq_len,
                "bytes_per_elem": p.bytes_per_elem,
                "micro_batch_size": p.micro_batch_size,
                "epochs": p.epochs,
                "per_layer_time": dict(p.per_layer_time),
            },
            "scale": {"bandwidth": self.bw_scale, "gpu": self.gpu_scale},
            "strict_fcfs": self.strict_fcfs,
        }
        if self.job_count is not None:
            d["job_count"] = self.job_count
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _job_to_dict(j: JobSeed) -> Dict[str, Any]:
    d: Dict[str, Any] = {"id": j.id, "model": j.model, "dataset": j.dataset}
    for key in ("micro_batches", "iterations", "epochs"):
        if getattr(j, key) is not None:
            d[key] = getattr(j, key)
    if j.submit_time:
        d["submit_time"] = j.submit_time
    return d


def scale_gpus(capacity: int, factor: float) -> int:
    if factor == 1.0:
        return capacity
    return max(1, math.floor(capacity * factor))


# -- loading -------------------------------------------------------------------

def _req(d: Mapping, key: str, where: str):
    if key not in d:
        raise ScenarioError(f"{where}: missing field {key!r}")
    return d[key]


def _num(d: Mapping, key: str, where: str, kind=float, default=None, positive=True):
    if key not in d:
        if default is None:
            raise ScenarioError(f"{where}: missing field {key!r}")
        return default
    try:
        v = kind(d[key])
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}.{key}: expected a number, got {d[key]!r}") from None
    if positive and not v > 0:
        raise ScenarioError(f"{where}.{key}: must be > 0, got {v!r}")
    return v


def scenario_from_dict(d: Mapping[str, Any]) -> Scenario:
    if not isinstance(d, Mapping):
        raise ScenarioError("scenario: top level must be a mapping")
    regions = []
    for i, r in enumerate(_req(d, "regions", "scenario")):
        where = f"regions[{i}]"
        rid = str(_req(r, "id", where))
        regions.append(RegionSeed(
            rid,
            str(r.get("name", rid)),
            _num(r, "gpus", where, int),
            _num(r, "price", where),
            _num(r, "bandwidth_gbps", where),
            _num(r, "intra_gbps", where, default=DEFAULT_INTRA_BANDWIDTH / GBPS),
        ))
    links = []
    for i, l in enumerate(d.get("links") or []):
        where = f"links[{i}]"
        src, dst = str(_req(l, "src", where)), str(_req(l, "dst", where))
        if "capacity_mbps" in l:
            cap = _num(l, "capacity_mbps", where, positive=False) / 1000
        else:
            cap = _num(l, "capacity_gbps", where, positive=False)
        if cap < 0:
            raise ScenarioError(f"{where}: capacity must be >= 0")
        links.append((src, dst, cap))
        if l.get("symmetric", False):
            links.append((dst, src, cap))
    models = []
    for i, m in enumerate(d.get("models") or []):
        where = f"models[{i}]"
        models.append(ModelConfig(
            str(_req(m, "name", where)),
            _num(m, "params", where, default=0.0, positive=False),
            _num(m, "layers", where, int),
            _num(m, "hidden", where, int),
            _num(m, "batch_size", where, int),
        ))
    jobs = []
    for i, j in enumerate(_req(d, "jobs", "scenario")):
        where = f"jobs[{i}]"
        jobs.append(JobSeed(
            str(_req(j, "id", where)),
            str(_req(j, "model", where)),
            str(j.get("dataset", "Alpaca-52k")),
            _num(j, "micro_batches", where, int) if "micro_batches" in j else None,
            _num(j, "iterations", where, int) if "iterations" in j else None,
            _num(j, "epochs", where, int) if "epochs" in j else None,
            _num(j, "submit_time", where, default=0.0, positive=False),
        ))
    p = d.get("profile") or {}
    profile = ProfileSpec(
        gpu_power=_num(p, "gpu_power_w", "profile", default=300.0),
        calibration=_num(p, "calibration", "profile", default=2.5),
        peak_flops=_num(p, "peak_tflops", "profile", default=155.0) * 1e12,
        seq_len=_num(p, "seq_len", "profile", int, default=2048),
        bytes_per_elem=_num(p, "bytes_per_elem", "profile", int, default=2),
        micro_batch_size=_num(p, "micro_batch_size", "profile", int, default=8),
        epochs=_num(p, "epochs", "profile", int, default=1),
        per_layer_time=tuple(sorted(
            (str(k), _num(p["per_layer_time"], k, "profile.per_layer_time"))
            for k in (p.get("per_layer_time") or {})
        )),
    )
    if profile.bytes_per_elem not in (1, 2, 4):
        raise ScenarioError("profile.bytes_per_elem: must be 1, 2 or 4")
    if any(j.submit_time < 0 for j in jobs):
        raise ScenarioError("jobs: submit_time must be >= 0")
    scale = d.get("scale") or {}
    job_count = d.get("job_count")
    try:
        return Scenario(
            name=str(d.get("name", "unnamed")),
            regions=tuple(regions),
            jobs=tuple(jobs),
            link_overrides=tuple(links),
            models=tuple(models),
            profile=profile,
            bw_scale=_num(scale, "bandwidth", "scale", default=1.0),
            gpu_scale=_num(scale, "gpu", "scale", default=1.0),
            job_count=None if job_count is None else _num(d, "job_count", "scenario", int),
            strict_fcfs=bool(d.get("strict_fcfs", False)),
        )
    except ConfigurationError as exc:
        raise ScenarioError(str(exc)) from None


def load_scenario(source: str) -> Scenario:
    """A built-in name (``default``, ``motivation``) or a path to a YAML file."""
    if source in BUILTINS:
        return BUILTINS[source]()
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {source}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{source}: parse error: {exc}") from None
    return scenario_from_dict(data)


def dump_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.to_dict(), sort_keys=False)


# -- built-ins -----------------------------------------------------------------

def default_scenario() -> Scenario:
    regions = tuple(RegionSeed(rid, name, g, p, float(bw)) for rid, name, g, p, bw in DEFAULT_REGIONS)
    jobs = tuple(
        JobSeed(str(i + 1), name, DATASET_ORDER[i % len(DATASET_ORDER)])
        for i, name in enumerate(DEFAULT_MODELS)
    )
    return Scenario("default", regions, jobs)


MOTIVATION_NODE_GBPS = 0.1


def motivation_scenario() -> Scenario:
    """Four small regions; only A-C and B-D have usable wide-area links."""
    regions = tuple(
        RegionSeed(rid, f"Region {rid}", g, p, MOTIVATION_NODE_GBPS)
        for rid, g, p in [("A", 4, 0.230), ("B", 3, 0.222), ("C", 2, 0.191), ("D", 2, 0.291)]
    )
    links = (
        ("A", "C", 1.0), ("C", "A", 1.0),
        ("B", "D", 0.2), ("D", "B", 0.2),
    )
    jobs = (JobSeed("P", "Qwen2.5-14B"), JobSeed("Q", "Llama-3.1-70B"))
    return Scenario("motivation", regions, jobs, link_overrides=links)


BUILTINS = {"default": default_scenario, "motivation": motivation_scenario}


# -- workload expansion --------------------------------------------------------

def expand_jobs(base_jobs, target_count: int, seed: int = 0) -> List[JobSeed]:
    """Cycle the base jobs until ``target_count`` exist.

    The first ``len(base_jobs)`` keep their ids and datasets; extra copies get
    fresh numeric ids and a seed-determined dataset.
    """
    base = list(base_jobs)
    if target_count < 0 or (target_count and not base):
        raise ScenarioError(f"cannot expand {len(base)} jobs to {target_count}")
    if target_count <= len(base):
        return base[:target_count]
    rng = random.Random(seed)
    used = {j.id for j in base}
    next_id = len(base) + 1
    out = list(base)
    while len(out) < target_count:
        tmpl = base[len(out) % len(base)]
        while str(next_id) in used:
            next_id += 1
        used.add(str(next_id))
        out.append(replace(tmpl, id=str(next_id), dataset=rng.choice(DATASET_ORDER),
                           iterations=None))
    return out


# -- fuzzing -------------------------------------------------------------------

def random_scenario(seed: int) -> Scenario:
    """A small random cluster and workload for invariant fuzzing."""
    rng = random.Random(seed)
    n_regions = rng.randint(2, 8)
    regions = tuple(
        RegionSeed(
            f"r{i}", f"R{i}", rng.choice([1, 2, 4, 8, 16, 32, 64]),
            round(rng.uniform(0.05, 0.4), 3), rng.uniform(0.05, 100),
            float(rng.choice([25, 100, 400])),
        )
        for i in range(n_regions)
    )
    ids = [r.id for r in regions]
    links = []
    for _ in range(rng.randint(0, n_regions)):
        u, v = rng.sample(ids, 2)
        links.append((u, v, rng.choice([0.0, rng.uniform(0.01, 50)])))
    n_jobs = rng.randint(2, 24)
    jobs = tuple(
        JobSeed(
            str(i + 1), rng.choice(DEFAULT_MODELS), rng.choice(DATASET_ORDER),
            micro_batches=rng.choice([None, 1, 4, 16]),
            iterations=rng.choice([None, rng.randint(1, 500)]),
            submit_time=rng.choice([0.0, 0.0, rng.uniform(0, 5e4)]),
        )
        for i in range(n_jobs)
    )
    # Overrides are applied in order; keep the last one per link.
    dedup = {(u, v): (u, v, c) for u, v, c in links}
    return Scenario(
        f"fuzz-{seed}", regions, jobs,
        link_overrides=tuple(dedup.values()),
        bw_scale=rng.choice([0.3, 1.0, rng.uniform(0.1, 3.0)]),
        gpu_scale=rng.choice([0.5, 1.0, rng.uniform(0.25, 2.0)]),
    )
