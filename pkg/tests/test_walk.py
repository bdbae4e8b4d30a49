"""Walk-and-peel tests: counters, pioneer geometry, estimators, audits."""

from fractions import Fraction

import numpy as np
import pytest

from tripeel import (
    DomainError,
    RngStream,
    build_params,
)
from tripeel.walk import (
    distance_audit,
    estimate_inv_degree,
    intersection_experiment,
    pioneer_audit,
    range_growth,
    run_walk_peeling,
    speed_estimate,
    stationarity_test,
    walk_to_csv,
    walk_to_json,
)

PAR = build_params(kappa=Fraction(9, 128))


def test_counters_and_start_convention():
    trace = run_walk_peeling(PAR, 200, RngStream(101, (0,)))
    m = trace.map
    assert trace.positions[0] == trace.x0 == m.org[m.root]
    assert trace.positions[1] == m.target(m.root)
    assert trace.pioneer[0] is False
    assert trace.pioneer[1] is True  # the first pioneer point
    assert trace.n_steps == 200
    fs, gs = trace.f_series, trace.g_series
    assert all(f + g == k + 2 for k, (f, g) in enumerate(zip(fs, gs)))
    assert all(b >= a for a, b in zip(fs, fs[1:]))
    assert all(b >= a for a, b in zip(gs, gs[1:]))
    assert trace.g == 200
    m.validate()


def test_displacement_is_lipschitz_path_bound():
    trace = run_walk_peeling(PAR, 300, RngStream(103, (1,)))
    d = trace.displacement_series()
    assert d[0] == 0 and d[1] == 1
    assert all(int(d[n]) <= n for n in range(len(d)))
    assert all(abs(int(b) - int(a)) <= 1 for a, b in zip(d, d[1:]))


def test_pioneer_flag_matches_hull_boundary():
    for seed in (107, 109):
        trace = run_walk_peeling(PAR, 25, RngStream(seed, (2,)))
        audit = pioneer_audit(trace)
        assert audit["mismatches"] == []
        assert audit["checked"] == 25


def test_range_series_counts_distinct_vertices():
    trace = run_walk_peeling(PAR, 100, RngStream(113, (3,)))
    r = trace.range_series()
    assert r[0] == 1
    assert all(b - a in (0, 1) for a, b in zip(r, r[1:]))
    assert r[-1] == len(set(trace.positions))


def test_speed_estimate():
    trace = run_walk_peeling(PAR, 1500, RngStream(127, (4,)))
    est = speed_estimate(trace)
    assert est["low"] <= est["speed"] <= est["high"]
    assert 0 < est["speed"] < 1
    with pytest.raises(DomainError):
        speed_estimate(run_walk_peeling(PAR, 50, RngStream(127, (5,))))
    # a walker that never moves away has speed exactly zero
    trace._disp = np.zeros(trace.n_steps + 1, dtype=np.int64)
    frozen = speed_estimate(trace)
    assert frozen["speed"] == 0.0 and frozen["se"] == 0.0


def test_range_growth():
    trace = run_walk_peeling(PAR, 1500, RngStream(131, (6,)))
    est = range_growth(trace)
    assert 0 < est["eta"] <= 1
    assert abs(est["first_half"] - est["second_half"]) < 0.25


def test_intersection_experiment():
    res = intersection_experiment(PAR, 120, 80, RngStream(137, (7,)))
    assert 0 <= res["low_99"] <= res["frequency"] <= 1
    freqs = [f for _, f in res["survival"]]
    assert all(b <= a for a, b in zip(freqs, freqs[1:]))
    assert res["used"] == 80
    again = intersection_experiment(PAR, 120, 80, RngStream(137, (7,)))
    assert again["frequency"] == res["frequency"]
    assert again["survival"] == res["survival"]


def test_estimate_inv_degree_bounds_and_budget():
    res = estimate_inv_degree(PAR, 300, RngStream(139, (8,)))
    assert 0 < res["mean"] <= 0.5  # degrees are at least 2 in a loopless map
    assert res["used"] == 300 and res["discarded"] == 0
    tight = estimate_inv_degree(PAR, 40, RngStream(139, (9,)), max_steps_per_trial=2)
    assert tight["discarded"] > 0
    assert tight["used"] + tight["discarded"] == 40


def test_stationarity_modes():
    null = stationarity_test(PAR, 8, 240, RngStream(149, (10,)), mode="null")
    assert null["p_value"] > 0.001
    rev = stationarity_test(PAR, 8, 240, RngStream(151, (11,)), mode="reversed")
    assert rev["p_value"] > 0.001
    walk = stationarity_test(PAR, 8, 240, RngStream(157, (12,)), k=5)
    assert walk["p_value"] > 0.001
    assert walk["n_a"] + walk["n_b"] == 240 - walk["discarded"]
    with pytest.raises(DomainError):
        stationarity_test(PAR, 4, 10, RngStream(0), k=5)
    with pytest.raises(DomainError):
        stationarity_test(PAR, 8, 10, RngStream(0), mode="sideways")


def test_distance_audit_clean_at_small_radius():
    res = distance_audit(PAR, RngStream(163, (13,)), trials=4, n_steps=120, r0=5)
    assert res["audited"] > 50
    assert res["rate"] <= 0.02


def test_budget_truncates_trace():
    trace = run_walk_peeling(PAR, 5000, RngStream(167, (14,)), max_peel_steps=40)
    assert trace.truncated
    assert trace.meta["truncated"]
    assert trace.n_steps < 5000


def test_close_final_interiorizes_last_position():
    trace = run_walk_peeling(PAR, 40, RngStream(173, (15,)), close_final=True)
    assert trace.map.v_hole[trace.positions[-1]] == -1


def test_exports():
    trace = run_walk_peeling(PAR, 30, RngStream(179, (16,)), record_peels=True)
    text = walk_to_csv(trace)
    lines = text.splitlines()
    assert lines[0].startswith("#tripeel-walk-v1 ")
    assert lines[1].split(",")[0] == "op"
    assert len(lines) == 2 + len(trace.f_series)
    import json

    doc = json.loads(walk_to_json(trace))
    assert doc["positions"] == trace.positions
    assert doc["meta"]["digest"] == PAR.digest()
