import csv
import json
from dataclasses import replace

import pytest

from geopipe.harness import (
    CSV_HEADER,
    Cell,
    SweepSpec,
    apply_axis,
    emit_report,
    load_summary,
    normalize,
    run_sweep,
    simulate,
    table_text,
)
from geopipe.scenario import default_scenario
from geopipe.simulator import MAIN_POLICIES, SimReport, run, verify_invariants


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("latency", (1.0,))
    with pytest.raises(ValueError):
        SweepSpec("gpu", ())
    with pytest.raises(ValueError):
        SweepSpec("gpu", (0.0,))
    with pytest.raises(ValueError):
        SweepSpec("jobs", (8.5,))
    with pytest.raises(ValueError):
        SweepSpec("jobs", (8,), ("Nope",))


def test_single_cell_equals_direct_run():
    sc = default_scenario()
    res = run_sweep(sc, SweepSpec("gpu", (0.75,), ("LDF",)))
    assert len(res.cells) == 1
    direct = run(replace(sc, gpu_scale=0.75), "LDF")
    assert res.get(0.75, "LDF").to_dict() == direct.to_dict()


def test_bandwidth_sweep_shape_and_self_normalization():
    res = run_sweep(default_scenario(), SweepSpec("bandwidth", (0.3, 0.9, 1.5)))
    assert len(res.cells) == 15
    assert set(res.matrix()) == {0.3, 0.9, 1.5}
    ratios = res.normalized()
    for v in (0.3, 0.9, 1.5):
        assert ratios[(v, "BACE")] == {"avg_jct": 1.0, "total_cost": 1.0}
        assert set(p for (x, p) in ratios if x == v) == set(MAIN_POLICIES)


def test_apply_axis():
    sc = default_scenario()
    assert apply_axis(sc, "bandwidth", 0.3).bw_scale == 0.3
    assert apply_axis(sc, "gpu", 1.25).gpu_scale == 1.25
    assert len(apply_axis(sc, "jobs", 20).resolved().jobs) == 20


def test_zero_reference_is_flagged():
    empty = SimReport("BACE", "h", 0, [])
    other = SimReport("LCF", "h", 0, [])
    sc = default_scenario()
    ratios = normalize([Cell("gpu", 1, "BACE", sc, empty), Cell("gpu", 1, "LCF", sc, other)])
    assert ratios[(1, "LCF")] == {"avg_jct": None, "total_cost": None}


def test_emit_empty(tmp_path):
    emit_report([], "both", tmp_path)
    assert (tmp_path / "jobs.csv").read_text() == ",".join(CSV_HEADER) + "\n"
    assert json.loads((tmp_path / "summary.json").read_text()) == {
        "cells": [], "replay": [], "scenarios": {}}


def test_emit_single_run(tmp_path):
    res = simulate(default_scenario(), ["BACE"])
    paths = emit_report(res.cells, "both", tmp_path)
    assert [p.name for p in paths] == ["jobs.csv", "summary.json"]
    rows = list(csv.DictReader((tmp_path / "jobs.csv").open()))
    assert len(rows) == 8 and list(rows[0]) == CSV_HEADER
    for row in rows:
        for key in ("submit", "start", "wait", "exec", "jct", "cost"):
            assert row[key] == f"{float(row[key]):.9g}"
    doc = json.loads((tmp_path / "summary.json").read_text())
    cell = doc["cells"][0]
    assert cell["policy"] == "BACE" and cell["normalized"]["avg_jct"] == 1.0
    assert cell["scenario_hash"] in doc["scenarios"]


def test_emit_formats(tmp_path):
    res = simulate(default_scenario(), ["LCF"])
    assert [p.name for p in emit_report(res.cells, "csv", tmp_path / "a")] == ["jobs.csv"]
    assert [p.name for p in emit_report(res.cells, "summary", tmp_path / "b")] == ["summary.json"]
    with pytest.raises(ValueError):
        emit_report(res.cells, "xml", tmp_path)


def test_emit_is_byte_stable_and_ordered(tmp_path):
    sc = default_scenario()
    spec = SweepSpec("jobs", (12, 8), ("LDF", "BACE"))
    emit_report(run_sweep(sc, spec).cells, "both", tmp_path / "a")
    emit_report(list(reversed(run_sweep(sc, spec).cells)), "both", tmp_path / "b")
    for name in ("jobs.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    cells = json.loads((tmp_path / "a" / "summary.json").read_text())["cells"]
    assert [(c["value"], c["policy"]) for c in cells] == [(8, "BACE"), (8, "LDF"), (12, "BACE"), (12, "LDF")]


def test_summary_replays_clean(tmp_path):
    res = run_sweep(default_scenario(), SweepSpec("gpu", (0.5,), ("BACE", "CR-LDF")))
    emit_report(res.cells, "summary", tmp_path)
    pairs = load_summary(tmp_path / "summary.json")
    assert len(pairs) == 2
    for rep, sc in pairs:
        assert verify_invariants(rep, sc) == []


def test_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report([], "csv", blocker / "sub")


def test_table_text():
    res = run_sweep(default_scenario(), SweepSpec("gpu", (0.5, 1.25), ("BACE", "LCF")))
    text = table_text(res)
    assert "1.000/1.000" in text and text.count("\n") == 2
