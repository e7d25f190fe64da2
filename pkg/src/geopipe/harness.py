"""Sensitivity sweeps, BACE-normalized tables and report files."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from .scenario import Scenario, ScenarioError, scenario_from_dict
from .simulator import MAIN_POLICIES, POLICIES, SimReport, objectives, run

AXES = ("bandwidth", "gpu", "jobs")
REFERENCE_POLICY = "BACE"
CSV_HEADER = ["job_id", "policy", "submit", "start", "wait", "exec", "jct", "cost", "path", "alloc"]
FORMATS = ("csv", "summary", "both")

DEFAULT_SWEEPS = {
    "bandwidth": (0.3, 0.9, 1.5),
    "gpu": (0.5, 0.75, 1.25),
    "jobs": (8, 12, 16, 20, 24),
}


def fmt_float(x: float) -> str:
    return f"{x:.9g}"


def round9(x: float) -> float:
    return float(fmt_float(x))


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: Tuple[float, ...]
    policies: Tuple[str, ...] = MAIN_POLICIES

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {', '.join(AXES)}, got {self.axis!r}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if not self.policies:
            raise ValueError("sweep needs at least one policy")
        for p in self.policies:
            if p not in POLICIES:
                raise ValueError(f"unknown policy {p!r}")
        for v in self.values:
            if self.axis == "jobs":
                if v != int(v) or v < 1:
                    raise ValueError(f"job count must be a positive integer, got {v}")
            elif not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{self.axis} scale must be a positive number, got {v}")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "policies", tuple(self.policies))


def apply_axis(scenario: Scenario, axis: str, value) -> Scenario:
    if axis == "bandwidth":
        return replace(scenario, bw_scale=float(value))
    if axis == "gpu":
        return replace(scenario, gpu_scale=float(value))
    if axis == "jobs":
        return replace(scenario, job_count=int(value))
    raise ValueError(f"unknown axis {axis!r}")


@dataclass
class Cell:
    """One simulation: a policy on a (possibly axis-adjusted) scenario."""

    axis: Optional[str]
    value: Any
    policy: str
    scenario: Scenario
    report: SimReport


@dataclass
class SweepResult:
    cells: List[Cell]
    spec: Optional[SweepSpec] = None

    def get(self, value, policy: str) -> SimReport:
        for c in self.cells:
            if c.value == value and c.policy == policy:
                return c.report
        raise KeyError((value, policy))

    def matrix(self) -> Dict[Any, Dict[str, SimReport]]:
        out: Dict[Any, Dict[str, SimReport]] = {}
        for c in self.cells:
            out.setdefault(c.value, {})[c.policy] = c.report
        return out

    def normalized(self) -> Dict[Tuple[Any, str], Dict[str, Optional[float]]]:
        return normalize(self.cells)


def _ratio(x: float, base: float) -> Optional[float]:
    return None if base == 0 else x / base


def normalize(cells: Sequence[Cell]) -> Dict[Tuple[Any, str], Dict[str, Optional[float]]]:
    """Objectives divided by the BACE cell at the same axis value.

    A ratio is ``None`` when the reference value is zero; cells without a
    BACE run at their axis value are left out.
    """
    ref = {c.value: objectives(c.report) for c in cells if c.policy == REFERENCE_POLICY}
    out = {}
    for c in cells:
        if c.value not in ref:
            continue
        jct, cost = objectives(c.report)
        rj, rc = ref[c.value]
        out[(c.value, c.policy)] = {"avg_jct": _ratio(jct, rj), "total_cost": _ratio(cost, rc)}
    return out


def simulate(scenario: Scenario, policies: Iterable[str], seed: int = 0) -> SweepResult:
    resolved = scenario.resolved(seed)
    cells = [Cell(None, None, p, resolved, run(resolved, p, seed)) for p in policies]
    return SweepResult(cells)


def run_sweep(scenario: Scenario, sweep: SweepSpec, seed: int = 0) -> SweepResult:
    """Every (axis value, policy) pair, each run on its own cluster."""
    cells = []
    for value in sweep.values:
        sc = apply_axis(scenario, sweep.axis, value).resolved(seed)
        for p in sweep.policies:
            cells.append(Cell(sweep.axis, value, p, sc, run(sc, p, seed)))
    return SweepResult(cells, sweep)


def default_sweeps(scenario: Scenario, seed: int = 0,
                   policies: Sequence[str] = MAIN_POLICIES) -> List[SweepResult]:
    return [run_sweep(scenario, SweepSpec(axis, vals, tuple(policies)), seed)
            for axis, vals in DEFAULT_SWEEPS.items()]


# -- emission --------------------------------------------------------------

def _sorted_cells(cells: Iterable[Cell]) -> List[Cell]:
    def key(c: Cell):
        v = c.value
        return (c.axis or "", v is not None, v if v is not None else 0, c.policy)
    return sorted(cells, key=key)


def _json_ready(x):
    if isinstance(x, float):
        return round9(x)
    if isinstance(x, dict):
        return {k: _json_ready(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_ready(v) for v in x]
    return x


def csv_text(cells: Iterable[Cell]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for c in _sorted_cells(cells):
        for r in c.report.records:
            w.writerow([
                r.job_id, c.policy,
                *(fmt_float(x) for x in (r.submit, r.start, r.wait, r.exec, r.jct, r.cost)),
                ">".join(r.plan.path),
                ";".join(f"{reg}:{r.plan.alloc[reg]}" for reg in r.plan.path),
            ])
    return buf.getvalue()


def summary_doc(cells: Iterable[Cell]) -> Dict[str, Any]:
    """Objectives, ratios and link peaks (9 significant digits) plus replay data.

    ``replay`` holds each report at full precision and ``scenarios`` the
    resolved scenarios keyed by hash, which is what ``verify`` consumes.
    """
    cells = _sorted_cells(cells)
    ratios = normalize(cells)
    rows, replay, scenarios = [], [], {}
    for c in cells:
        jct, cost = objectives(c.report)
        ratio = ratios.get((c.value, c.policy))
        rows.append(_json_ready({
            "axis": c.axis,
            "value": c.value,
            "policy": c.policy,
            "scenario_hash": c.report.scenario_hash,
            "seed": c.report.seed,
            "jobs": len(c.report.records),
            "avg_jct": jct,
            "total_cost": cost,
            "avg_jct_undefined": c.report.empty,
            "normalized": None if ratio is None else {
                k: ("reference is zero" if v is None else v) for k, v in ratio.items()
            },
            "peak_link_util": dict(sorted(c.report.peak_link_util.items())),
        }))
        replay.append(c.report.to_dict())
        scenarios[c.report.scenario_hash] = c.scenario.to_dict()
    return {"cells": rows, "replay": replay, "scenarios": dict(sorted(scenarios.items()))}


def emit_report(cells: Iterable[Cell], fmt: str, out_dir) -> List[Path]:
    """Write ``jobs.csv`` and/or ``summary.json`` under ``out_dir``."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {', '.join(FORMATS)}")
    cells = list(cells)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("csv", "both"):
        p = out / "jobs.csv"
        p.write_text(csv_text(cells))
        written.append(p)
    if fmt in ("summary", "both"):
        p = out / "summary.json"
        p.write_text(json.dumps(summary_doc(cells), indent=2, sort_keys=False) + "\n")
        written.append(p)
    return written


def load_summary(path) -> List[Tuple[SimReport, Scenario]]:
    """Reports and their resolved scenarios from a ``summary.json``."""
    try:
        doc = json.loads(Path(path).read_text())
        scenarios = {h: scenario_from_dict(d) for h, d in doc["scenarios"].items()}
        out = []
        for d in doc["replay"]:
            rep = SimReport.from_dict(d)
            out.append((rep, scenarios[rep.scenario_hash]))
        return out
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}: not a summary report ({exc})") from None


def table_text(result: SweepResult) -> str:
    """Plain-text table of normalized avg JCT / total cost per axis value."""
    ratios = result.normalized()
    values = list(dict.fromkeys(c.value for c in result.cells))
    policies = list(dict.fromkeys(c.policy for c in result.cells))
    axis = result.cells[0].axis if result.cells else None
    head = [axis or "run"] + policies
    lines = ["  ".join(f"{h:>17}" for h in head)]
    for v in values:
        row = [str(v) if v is not None else "-"]
        for p in policies:
            r = ratios.get((v, p))
            if r is None:
                row.append("n/a")
            else:
                row.append("/".join("ref=0" if x is None else f"{x:.3f}"
                                    for x in (r["avg_jct"], r["total_cost"])))
        lines.append("  ".join(f"{c:>17}" for c in row))
    return "\n".join(lines)
