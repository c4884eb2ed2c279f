"""Metrics, SES sweep, and file emission."""

import csv
import json

import numpy as np
import pytest

from sesopf.harness import (
    compute_metrics, emit, run_solve, ses_sweep, solve_document, sweep_rows,
)
from sesopf.solver import SolverOptions
from sesopf.welfare import normalized_satisfaction, social_objective


@pytest.fixture(scope="module")
def five_bus_run(five_bus):
    return run_solve(five_bus)


@pytest.fixture(scope="module")
def small_sweep(five_bus):
    return ses_sweep(five_bus, 90.0, 110.0, 10.0)


# ---------------------------------------------------------------------------
# metrics


def test_metrics_welfare_identity(five_bus_run):
    _, metrics = five_bus_run
    assert metrics.social_welfare == \
        metrics.total_satisfaction - metrics.total_cost


def test_metrics_recompute_from_primal_values(five_bus, five_bus_run):
    solution, metrics = five_bus_run
    w, sat, cost = social_objective(five_bus, solution.p_agg, solution.p_gen)
    assert metrics.total_satisfaction == pytest.approx(sat, rel=1e-9)
    assert metrics.total_cost == pytest.approx(cost, rel=1e-9)
    assert metrics.weighted_objective == pytest.approx(w, rel=1e-9)
    assert metrics.weighted_objective == pytest.approx(solution.objective,
                                                       rel=1e-9)


def test_metrics_normalized_satisfaction_range(five_bus, five_bus_run):
    _, metrics = five_bus_run
    assert len(metrics.normalized_satisfaction) == 7
    for (bus, idx), value in metrics.normalized_satisfaction.items():
        agg = five_bus.aggregator(bus, idx)
        floor = normalized_satisfaction(agg, agg.p_c)
        assert floor - 1e-9 <= value <= 1.0 + 1e-9


def test_metrics_curtailment_consistency(five_bus, five_bus_run):
    solution, metrics = five_bus_run
    per = np.array([metrics.curtailment[k]
                    for k in sorted(metrics.curtailment)])
    assert np.all(per >= -1e-4)
    assert metrics.total_curtailment == pytest.approx(
        float(np.sum(solution.p_gen) - np.sum(solution.p_agg)))


# ---------------------------------------------------------------------------
# sweep


def test_sweep_point_count_and_ordering(small_sweep):
    assert len(small_sweep.records) == 3
    pcts = [r.scale_pct for r in small_sweep.records]
    assert pcts == [90.0, 100.0, 110.0]
    assert all(r.status == "converged" for r in small_sweep.records)


def test_sweep_invalid_range(five_bus):
    with pytest.raises(ValueError):
        ses_sweep(five_bus, 100.0, 50.0, 2.0)
    with pytest.raises(ValueError):
        ses_sweep(five_bus, 10.0, 50.0, 0.0)


def test_sweep_identity_point_matches_run_solve(five_bus, five_bus_run,
                                                small_sweep):
    _, metrics = five_bus_run
    record = next(r for r in small_sweep.records if r.scale_pct == 100.0)
    assert record.metrics.total_satisfaction == \
        pytest.approx(metrics.total_satisfaction, rel=1e-9)
    assert record.metrics.total_cost == pytest.approx(metrics.total_cost,
                                                      rel=1e-9)
    assert record.metrics.social_welfare == \
        pytest.approx(metrics.social_welfare, rel=1e-9)


def test_sweep_records_normalized_satisfaction_bounds(five_bus, small_sweep):
    for record in small_sweep.records:
        for (bus, idx), value in record.metrics.normalized_satisfaction.items():
            agg = five_bus.aggregator(bus, idx)
            floor = normalized_satisfaction(agg, agg.p_c)
            assert floor - 1e-9 <= value <= 1.0 + 1e-9


def test_sweep_keeps_failed_points(five_bus):
    result = ses_sweep(five_bus, 100.0, 100.0, 2.0,
                       SolverOptions(max_iter=2))
    assert len(result.records) == 1
    assert result.records[0].status == "iteration_limit"


# ---------------------------------------------------------------------------
# emission


def test_sweep_csv_schema(tmp_path, small_sweep):
    path = tmp_path / "sweep.csv"
    emit(small_sweep, "csv", path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 4  # header + 3 records
    header = rows[0]
    assert header[:9] == ["scale_pct", "status", "iterations",
                          "total_satisfaction", "weighted_objective",
                          "total_cost", "social_welfare",
                          "total_curtailment_mw", "losses_mw"]
    assert header[9:] == [f"norm_sat_{b}_{i}" for b, i in small_sweep.agg_keys]
    # welfare column reproduces satisfaction - cost from the same row
    for row in rows[1:]:
        sat, cost, welfare = float(row[3]), float(row[5]), float(row[6])
        assert welfare == pytest.approx(sat - cost, rel=1e-9)


def test_sweep_values_have_full_precision(small_sweep):
    header, rows = sweep_rows(small_sweep)
    record = small_sweep.records[0]
    # 12 significant digits round-trip the metric to 1e-11 relative
    assert float(rows[0][3]) == pytest.approx(
        record.metrics.total_satisfaction, rel=1e-11)


def test_sweep_json_round_trip(tmp_path, small_sweep):
    path = tmp_path / "sweep.json"
    emit(small_sweep, "json", path)
    with open(path) as fh:
        doc = json.load(fh)
    assert doc["case"] == small_sweep.case_name
    assert len(doc["records"]) == 3
    rec = doc["records"][1]
    assert float(rec["total_cost"]) == pytest.approx(
        small_sweep.records[1].metrics.total_cost, rel=1e-11)


def test_solve_document_structure(five_bus, five_bus_run):
    solution, metrics = five_bus_run
    doc = solve_document(five_bus, solution, metrics)
    assert doc["status"] == "converged"
    assert len(doc["aggregators"]) == 7
    assert len(doc["lines"]) == 6
    assert len(doc["buses"]) == 5
    assert len(doc["generators"]) == 5
    for entry in doc["lines"]:
        assert entry["binding"] == (
            max(entry["p_from_to"], entry["p_to_from"]) > entry["s_max"] - 1e-4)


def test_solve_document_json_round_trip(tmp_path, five_bus, five_bus_run):
    solution, metrics = five_bus_run
    doc = solve_document(five_bus, solution, metrics)
    path = tmp_path / "solve.json"
    emit(doc, "json", path)
    with open(path) as fh:
        again = json.load(fh)
    assert again["objective"] == doc["objective"]
    assert again["metrics"] == doc["metrics"]
    assert again["buses"] == doc["buses"]


def test_emit_rejects_bad_inputs(tmp_path, small_sweep):
    with pytest.raises(ValueError):
        emit(small_sweep, "yaml", tmp_path / "x")
    with pytest.raises(TypeError):
        emit(42, "csv", tmp_path / "x")
