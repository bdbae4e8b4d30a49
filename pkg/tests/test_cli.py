"""Command-line behavior: flag validation, exit codes, deterministic bytes."""

import json

from click.testing import CliRunner

from tripeel.cli import cli
from tripeel.experiments import report_from_csv, report_from_json
from tripeel.peeling import hull_from_csv, replay_trace, trace_from_csv


def invoke(*args):
    return CliRunner().invoke(cli, list(args))


def test_constants_reports_drift_and_limit():
    res = invoke("constants", "--kappa", "2/27")
    assert res.exit_code == 0
    doc = json.loads(res.output)
    assert doc["results"]["drift"] == 0.0
    assert doc["results"]["critical"] is True
    assert doc["results"]["ctilde_limit"] is None

    res = invoke("constants", "--alpha", "0.75")
    doc = json.loads(res.output)
    assert abs(doc["results"]["ctilde_limit"] - 3.079201) < 1e-4
    assert doc["results"]["residuals"]["normalization"] < 1e-9


def test_constants_rejects_bad_coupling():
    res = invoke("constants", "--kappa", "0.08")
    assert res.exit_code == 2
    res = invoke("constants", "--kappa", "9/128", "--alpha", "0.75")
    assert res.exit_code == 2
    res = invoke("constants")
    assert res.exit_code == 2


def test_constants_csv_round_trips():
    as_json = invoke("constants", "--alpha", "3/4").output
    as_csv = invoke("constants", "--alpha", "3/4", "--format", "csv").output
    assert report_from_csv(as_csv) == report_from_json(as_json)


def test_sample_map_bytes_reproducible():
    args = ("sample-map", "--alpha", "0.75", "--seed", "11", "--radius", "3")
    first = invoke(*args)
    second = invoke(*args)
    assert first.exit_code == 0
    assert first.output == second.output
    doc = json.loads(first.output)
    assert doc["truncated"] is False
    hull = doc["trace"]["hull"]
    assert [h["r"] for h in hull] == [1, 2, 3]
    assert all(h["perimeter"] > 0 for h in hull)


def test_sample_map_csv_files_replayable(tmp_path):
    out = tmp_path / "map.csv"
    res = invoke(
        "sample-map", "--alpha", "0.75", "--seed", "11", "--radius", "3",
        "--format", "csv", "--out", str(out),
    )
    assert res.exit_code == 0
    trace = trace_from_csv(out.read_text())
    assert trace.records[0].kind == "fresh"
    hull, meta = hull_from_csv((tmp_path / "map.csv.hull.csv").read_text())
    assert meta["truncated"] is False
    assert [h.perimeter for h in hull] == [
        r.perimeter for r in trace.records if r.step in {h.tau for h in hull}
    ]
    replayed = replay_trace(out.read_text())
    direct = json.loads(invoke(
        "sample-map", "--alpha", "0.75", "--seed", "11", "--radius", "3"
    ).output)
    assert [list(t) for t in replayed["canonical_code"]] == direct["canonical_code"]


def test_sample_map_budget_partial(tmp_path):
    out = tmp_path / "part.json"
    res = invoke(
        "sample-map", "--alpha", "0.75", "--seed", "5", "--radius", "9",
        "--budget-steps", "40", "--out", str(out),
    )
    assert res.exit_code == 3
    doc = json.loads(out.read_text())
    assert doc["truncated"] is True
    assert len(doc["trace"]["records"]) == 40


def test_experiment_enumerate_formats_agree():
    as_json = invoke("experiment", "--experiment", "enumerate").output
    as_csv = invoke("experiment", "--experiment", "enumerate", "--format", "csv").output
    doc = report_from_json(as_json)
    assert doc["results"]["mismatches"] == 0
    assert report_from_csv(as_csv) == doc


def test_experiment_seeded_and_deterministic():
    args = (
        "experiment", "--experiment", "intersection", "--alpha", "3/4",
        "--seed", "4", "--trials", "6", "--steps", "40",
    )
    first = invoke(*args)
    assert first.exit_code == 0
    assert first.output == invoke(*args).output
    doc = json.loads(first.output)
    assert doc["seed"] == 4
    assert doc["settings"]["trials"] == 6
    assert doc["settings"]["n_steps"] == 40
    assert doc["params"]["digest"]


def test_experiment_flag_validation():
    res = invoke(
        "experiment", "--experiment", "inv-degree", "--kappa", "2/27",
        "--trials", "4", "--steps", "9",
    )
    assert res.exit_code == 2
    assert "--steps" in res.stderr

    res = invoke("experiment", "--experiment", "enumerate", "--kappa", "2/27")
    assert res.exit_code == 2

    res = invoke("experiment", "--experiment", "no-such-thing")
    assert res.exit_code == 2

    res = invoke("experiment", "--experiment", "intersection")
    assert res.exit_code == 2
