"""Experiment runners: report shape, determinism, round-trips."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripeel.errors import DomainError
from tripeel.experiments import (
    REPORT_SCHEMA,
    constants_report,
    growth_targets,
    report_from_csv,
    report_from_json,
    report_to_csv,
    report_to_json,
    run_enumeration,
    run_experiment,
    run_law_equivalence,
    run_layer_stats,
    run_volume_growth,
)
from tripeel.params import build_params
from tripeel.rng import RngStream


@pytest.fixture(scope="module")
def p75():
    return build_params(alpha="3/4")


@pytest.fixture(scope="module")
def crit():
    return build_params(kappa="2/27")


def test_report_header_fields(p75):
    rep = run_volume_growth(p75, RngStream(9), trials=2, r_max=4, window=(2, 4))
    assert rep["schema"] == REPORT_SCHEMA
    assert rep["experiment"] == "volume-growth"
    assert rep["params"]["digest"] == p75.digest()
    assert rep["seed"] == 9 and rep["spawn_key"] == []
    assert len(rep["results"]["per_trial"]) == 2
    assert rep["results"]["targets"]["volume_per_boundary"] == pytest.approx(2.0)


def test_reports_are_seed_deterministic(p75):
    def make(seed):
        return run_layer_stats(p75, RngStream(seed), trials=3, window=(2, 4))

    assert report_to_json(make(3)) == report_to_json(make(3))
    assert report_to_json(make(3)) != report_to_json(make(4))


def test_report_round_trips(p75):
    rep = run_layer_stats(p75, RngStream(1), trials=2, window=(2, 3))
    assert report_from_json(report_to_json(rep)) == rep
    assert report_from_csv(report_to_csv(rep)) == rep


def test_report_parsers_reject_junk():
    with pytest.raises(DomainError):
        report_from_json(json.dumps({"schema": "something-else"}))
    with pytest.raises(DomainError):
        report_from_csv("not,a,report\n")


def test_growth_targets_need_subcritical(crit, p75):
    with pytest.raises(DomainError):
        growth_targets(crit)
    t = growth_targets(p75)
    assert t["boundary_ratio"] > 1
    assert t["layer_time_ratio"] == pytest.approx(6.3094, abs=1e-4)


def test_volume_growth_validates_window(p75, crit):
    with pytest.raises(DomainError):
        run_volume_growth(p75, RngStream(0), trials=2, r_max=4, window=(3, 5))
    with pytest.raises(DomainError):
        run_volume_growth(crit, RngStream(0), trials=2, r_max=4, window=(2, 4))


def test_law_equivalence_small(p75):
    rep = run_law_equivalence(p75, RngStream(5), runs=2000)
    res = rep["results"]
    for key in ("selector_invariance", "conditioned_walk"):
        assert 0.0 <= res[key]["p_value"] <= 1.0
    cw = res["conditioned_walk"]
    assert cw["accepted"] == 2000
    assert 0.0 < cw["acceptance_rate"] <= 1.0
    # readout values are perimeters of a chain that never drops under 2
    assert sum(cw["table"][1]) == 2000
    with pytest.raises(DomainError):
        run_law_equivalence(p75, RngStream(5), runs=10)


def test_enumeration_table():
    rep = run_enumeration(max_total=7)
    assert rep["results"]["mismatches"] == 0
    assert rep["params"] is None and rep["seed"] is None
    rows = rep["results"]["rows"]
    assert {(r["n"], r["p"]) for r in rows} == {
        (n, p) for p in range(2, 8) for n in range(0, 8 - p)
    }
    with pytest.raises(DomainError):
        run_enumeration(max_total=2)


def test_run_experiment_dispatch(p75):
    with pytest.raises(DomainError):
        run_experiment("no-such", p75, RngStream(0))
    with pytest.raises(DomainError):
        run_experiment("intersection", None, None)
    rep = run_experiment("enumerate", None, None, max_total=5)
    assert rep["experiment"] == "enumerate"


def test_constants_report_critical_vs_not(p75, crit):
    sub = constants_report(p75, head=4)["results"]
    assert sub["ctilde_limit"] == pytest.approx(3.079201, abs=1e-4)
    assert sub["residuals"]["normalization"] < 1e-9
    assert len(sub["q_head"]) == 5
    top = constants_report(crit, head=4)["results"]
    assert top["drift"] == 0.0
    assert top["residuals"]["normalization"] is None
    assert top["residuals"]["harmonicity_max_p"] < 1e-10


_key = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyz0123456789_-.", min_size=1, max_size=8
)
_scalar = st.one_of(
    st.none(),
    st.booleans(),
    st.integers(min_value=-(10**12), max_value=10**12),
    st.floats(allow_nan=False, allow_infinity=False),
    st.text(max_size=20),
)
_value = st.recursive(
    _scalar,
    lambda children: st.one_of(
        st.lists(children, max_size=4),
        st.dictionaries(_key, children, max_size=4),
    ),
    max_leaves=20,
)


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(_key, _value, min_size=1, max_size=6))
def test_csv_flattening_round_trips_any_report(body):
    doc = {"schema": REPORT_SCHEMA, **body}
    assert report_from_csv(report_to_csv(doc)) == doc
