import numpy as np
import pytest

from airtk.dataset import GroundTruthTimeline, Ontology
from airtk.errors import CoverageGap, LengthMismatch, NoMatch
from airtk.forest import PatchPrediction
from airtk.metrics import MetricsRow
from airtk.retrieval import (
    ClassTimeline,
    evaluate_retrieval,
    extract_intervals,
    rasterize,
    resolve_query,
)


def prediction(probs, start_s, end_s, index=0):
    return PatchPrediction(np.asarray(probs, dtype=float), "c", index, start_s, end_s)


def timeline(cells, probs=None, class_index=0, threshold=0.5):
    cells = np.asarray(cells, dtype=np.uint8)
    probs = cells.astype(float) if probs is None else np.asarray(probs, dtype=float)
    return ClassTimeline(class_index, cells, probs, threshold)


# --- rasterize --------------------------------------------------------------


def test_single_patch_fills_grid():
    tls = rasterize([prediction([0.9, 0.1], 0.0, 0.96)], duration_s=0.96, threshold=0.5)
    assert tls[0].n_cells == 96
    assert tls[0].cells.all()
    assert not tls[1].cells.any()
    assert np.allclose(tls[0].probs, 0.9)


def test_threshold_boundary_is_inclusive():
    tls = rasterize([prediction([0.5], 0.0, 0.1)], duration_s=0.1, threshold=0.5)
    assert tls[0].cells.all()


def test_41_second_grid():
    preds = [prediction([0.2], k * 0.96, (k + 1) * 0.96, index=k) for k in range(43)]
    tls = rasterize(preds, duration_s=41.0, threshold=0.5)
    assert tls[0].n_cells == 4100


def test_padding_beyond_duration_excluded():
    # last patch nominally runs to 1.92 s but the clip ends at 1.5 s
    preds = [prediction([0.9], 0.0, 0.96), prediction([0.9], 0.96, 1.92, index=1)]
    tls = rasterize(preds, duration_s=1.5, threshold=0.5)
    assert tls[0].n_cells == 150


def test_coverage_gap_detected():
    with pytest.raises(CoverageGap):
        rasterize([prediction([0.9], 0.0, 0.5)], duration_s=1.0, threshold=0.5)


def test_threshold_monotonicity():
    rng = np.random.default_rng(0)
    preds = [prediction([float(rng.random())], k * 0.96, (k + 1) * 0.96, index=k)
             for k in range(20)]
    duration = 20 * 0.96
    counts = [rasterize(preds, duration, th)[0].cells.sum() for th in (0.2, 0.4, 0.6, 0.8)]
    assert counts == sorted(counts, reverse=True)


# --- extract_intervals ------------------------------------------------------


def test_run_extraction():
    out = extract_intervals(timeline([0, 0, 1, 1, 1, 0]))
    assert len(out) == 1
    start, end, conf = out[0]
    assert (start, end) == (pytest.approx(0.02), pytest.approx(0.05))
    assert conf == pytest.approx(1.0)


def test_gap_merging():
    cells = np.zeros(30, dtype=int)
    cells[0:10] = 1
    cells[15:30] = 1
    out = extract_intervals(timeline(cells), merge_gap_s=0.1)
    assert len(out) == 1
    assert out[0][:2] == (pytest.approx(0.0), pytest.approx(0.3))


def test_short_runs_dropped():
    cells = np.zeros(50, dtype=int)
    cells[0:10] = 1  # 0.1 s
    out = extract_intervals(timeline(cells), min_duration_s=0.2)
    assert out == []


def test_mean_confidence():
    probs = np.zeros(6)
    probs[2:5] = [0.6, 0.8, 1.0]
    out = extract_intervals(timeline([0, 0, 1, 1, 1, 0], probs))
    assert out[0][2] == pytest.approx(0.8)


def test_rasterize_extract_roundtrip_identity():
    rng = np.random.default_rng(1)
    for _ in range(100):
        cells = (rng.random(rng.integers(1, 400)) < 0.4).astype(np.uint8)
        tl = timeline(cells)
        back = np.zeros_like(cells)
        for start, end, _ in extract_intervals(tl):
            back[int(round(start / 0.01)) : int(round(end / 0.01))] = 1
        assert np.array_equal(back, cells)


def test_intervals_disjoint_and_in_range():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n = int(rng.integers(10, 500))
        tl = timeline((rng.random(n) < 0.5).astype(np.uint8))
        out = extract_intervals(tl, min_duration_s=0.02, merge_gap_s=0.03)
        prev_end = -1.0
        for start, end, conf in out:
            assert 0.0 <= start < end <= n * 0.01 + 1e-9
            assert start > prev_end
            assert 0.0 <= conf <= 1.0
            prev_end = end


# --- resolve_query ----------------------------------------------------------


def test_gunfire_resolves():
    onto = Ontology()
    q = resolve_query("gunfire", onto)
    assert q.class_indices == (2,)


def test_query_normalization():
    onto = Ontology()
    assert resolve_query("  CAT ", onto).class_indices == (onto.index_of("Cat"),)


def test_query_no_match():
    with pytest.raises(NoMatch):
        resolve_query("dog barking", Ontology())


def test_query_multi_class():
    onto = Ontology()
    q = resolve_query("cat and helicopter", onto)
    assert q.class_indices == (4, 5)


def test_query_defaults():
    q = resolve_query("radio", Ontology())
    assert q.threshold == 0.5
    assert q.min_duration_s == 0.2
    assert q.merge_gap_s == 0.1


# --- evaluate_retrieval -----------------------------------------------------


def truth_of(cells_by_class):
    return GroundTruthTimeline(np.asarray(cells_by_class, dtype=np.uint8))


def test_perfect_retrieval_scores_one():
    onto = Ontology(["a", "b"])
    cells = np.array([1, 1, 0, 0, 1])
    tls = [timeline(cells, class_index=0), timeline(1 - cells, class_index=1)]
    rep = evaluate_retrieval(tls, truth_of([cells, 1 - cells]), onto)
    assert rep.per_class["a"].accuracy == 1.0
    assert rep.per_class["a"].mcc == 1.0
    assert rep.mean.accuracy == 1.0


def test_all_zero_prediction_degeneracy():
    onto = Ontology(["a"])
    tls = [timeline([0, 0, 0, 0])]
    rep = evaluate_retrieval(tls, truth_of([[1, 1, 0, 0]]), onto)
    assert rep.per_class["a"].precision is None
    assert rep.per_class["a"].f1 is None


def test_three_class_report_shape():
    onto = Ontology()
    rng = np.random.default_rng(3)
    cells = rng.integers(0, 2, (6, 100)).astype(np.uint8)
    tls = [timeline(cells[c], probs=rng.random(100), class_index=c) for c in range(6)]
    rep = evaluate_retrieval(tls, truth_of(rng.integers(0, 2, (6, 100))), onto,
                             class_indices=[0, 1, 2])
    assert list(rep.per_class) == ["Rapping", "Cheering", "Gunshot, gunfire"]
    assert isinstance(rep.mean, MetricsRow)
    lines = rep.to_text().splitlines()
    assert len(lines) == 6  # header + 5 metric rows
    assert lines[0].split()[-1] == "Mean"


def test_grid_length_mismatch():
    onto = Ontology(["a"])
    with pytest.raises(LengthMismatch):
        evaluate_retrieval([timeline([1, 0])], truth_of([[1, 0, 1]]), onto)
