"""Metrics, sweeps, and report serialization."""

import json

import numpy as np
import pytest

from conftest import make_two_class_store
from guidedcrop.backends.fixture import FixtureBackend
from guidedcrop.datasets import (
    SynthParams,
    filter_by_object_size,
    generate_synthetic_dataset,
)
from guidedcrop.errors import InvalidParameterError
from guidedcrop.eval import (
    AccuracyReport,
    accuracy_from_records,
    dump_predictions,
    emit_report,
    load_predictions,
    margin_sweep,
    object_size_sweep,
    owl_classifier_eval,
    population_std,
    similarity_report,
    stability_experiment,
    topk_accuracy,
    topk_hit,
)
from guidedcrop.fusion import build_class_bank
from guidedcrop.pipeline import GcConfig, PredictionRecord, run_dataset, with_overrides


def _synth(params):
    manifest, store = generate_synthetic_dataset(params)
    backend = FixtureBackend(store)
    bank = build_class_bank(backend.encode_text, manifest.class_names)
    return manifest, backend, bank


def test_topk_accuracy_hand_case():
    logits = [
        [1.0, 0.0, 0.0],   # label 0: top-1 hit
        [0.0, 1.0, 0.5],   # label 1: top-1 hit
        [0.8, 0.6, 0.1],   # label 1: only top-2 hit
        [0.9, 0.8, 0.7],   # label 2: miss at both
    ]
    labels = [0, 1, 1, 2]
    acc = topk_accuracy(logits, labels, ks=(1, 2))
    assert acc[1] == 50.0
    assert acc[2] == 75.0


def test_topk_hit_uses_stable_tie_rule():
    # tie between classes 0 and 1 at k=1: the lower index wins the slot
    assert topk_hit([0.5, 0.5], 0, 1) is True
    assert topk_hit([0.5, 0.5], 1, 1) is False
    assert topk_hit([0.5, 0.5], 1, 2) is True


def test_population_std_hand_case():
    assert population_std([0.4, 0.6]) == pytest.approx(0.1, abs=1e-12)
    assert population_std([0.5, 0.5, 0.5]) == 0.0


def test_accuracy_from_records_counts_errors_as_wrong():
    recs = [
        PredictionRecord(sample_id="a", label=0, baseline_pred=0),
        PredictionRecord(sample_id="b", label=1, baseline_pred=0),
        PredictionRecord(sample_id="c", label=1, error="boom"),
    ]
    assert accuracy_from_records(recs, guided=False) == pytest.approx(100.0 / 3.0)


def test_margin_sweep_alpha_one_equals_baseline():
    manifest, backend, bank = _synth(SynthParams(n_samples=60, seed=14))
    report = margin_sweep(backend, manifest, bank, GcConfig(seed=3),
                          alphas=[0.1, 0.3, 1.0])
    assert [r["alpha"] for r in report.rows] == [0.1, 0.3, 1.0]
    assert report.accuracy_at(1.0) == report.baseline_accuracy
    assert report.accuracy_at(0.1) >= report.accuracy_at(1.0)


def test_margin_sweep_needs_alphas():
    manifest, backend, bank = _synth(SynthParams(n_samples=2, seed=1))
    with pytest.raises(InvalidParameterError):
        margin_sweep(backend, manifest, bank, GcConfig(), alphas=[])


def test_size_sweep_matches_direct_subset_runs():
    params = SynthParams(n_samples=60, object_size_range=(0.03, 1.0), seed=15)
    manifest, backend, bank = _synth(params)
    cfg = GcConfig(seed=4)
    report = object_size_sweep(backend, manifest, bank, cfg,
                               thresholds=[0.5, 1.0])
    row = report.row_at(0.5)
    subset = filter_by_object_size(manifest, 0.5, dims_resolver=backend.image_dims)
    assert row["n"] == len(subset)
    direct = run_dataset(backend, subset.samples, bank,
                         with_overrides(cfg, aug_mode="none"), guided=True)
    assert row["gc"] == accuracy_from_records(direct.records, guided=True)
    direct_maug = run_dataset(backend, subset.samples, bank,
                              with_overrides(cfg, aug_mode="maug"), guided=True)
    assert row["gc_maug"] == accuracy_from_records(direct_maug.records, guided=True)


def test_size_sweep_empty_subset_rows():
    params = SynthParams(n_samples=10, object_size_range=(0.5, 0.6), seed=16)
    manifest, backend, bank = _synth(params)
    report = object_size_sweep(backend, manifest, bank, GcConfig(seed=1),
                               thresholds=[0.05, 1.0])
    assert report.row_at(0.05)["n"] == 0
    assert report.row_at(0.05)["gc"] is None
    assert report.row_at(1.0)["n"] == 10


def test_stability_invariant_scene_has_zero_std():
    params = SynthParams(n_samples=6, object_size_range=(1.0, 1.0), seed=17)
    manifest, backend, bank = _synth(params)
    report = stability_experiment(backend, manifest, bank, n_crops=8, seed=2)
    assert report.stable_fraction == 1.0
    assert report.mean_std == 0.0
    for row in report.per_sample:
        assert row["true_prob_std"] == 0.0
        assert row["distinct_predictions"] == 1


def test_stability_varies_on_confusable_scenes():
    params = SynthParams(n_samples=6, object_size_range=(0.05, 0.1),
                         confusability=(0.6, 0.9), seed=18)
    manifest, backend, bank = _synth(params)
    report = stability_experiment(backend, manifest, bank, n_crops=10, seed=2)
    assert report.mean_std > 0.0


def test_stability_determinism():
    params = SynthParams(n_samples=4, seed=19)
    manifest, backend, bank = _synth(params)
    a = stability_experiment(backend, manifest, bank, n_crops=6, seed=3)
    b = stability_experiment(backend, manifest, bank, n_crops=6, seed=3)
    assert a.to_json_dict() == b.to_json_dict()


def test_similarity_report_counts_and_means():
    recs = [
        PredictionRecord(sample_id="a", label=0, baseline_pred=0,
                         baseline_logits=[3.0, 1.0], gc_pred=0, gc_logits=[5.0]),
        PredictionRecord(sample_id="b", label=1, baseline_pred=0,
                         baseline_logits=[4.0, 2.0], gc_pred=1, gc_logits=[7.0]),
    ]
    rep = similarity_report(recs)
    assert rep.n_baseline_correct == 1
    assert rep.baseline_mean_max_logit == 3.0
    assert rep.n_gc_correct == 2
    assert rep.gc_mean_max_logit == 6.0


def test_owl_eval_flow(two_class_store):
    backend = FixtureBackend(two_class_store)
    from guidedcrop.datasets import DatasetManifest, SampleRecord

    manifest = DatasetManifest(
        class_names=["cat", "dog"],
        samples=[SampleRecord(id="a", image="scene0", label=0)],
    )
    report, logits = owl_classifier_eval(backend, manifest, ["cat", "dog"])
    assert logits[0].tolist() == [1.0, 0.0]
    assert report.accuracy_by_k[1] == 100.0
    assert report.accuracy_by_k[10] == 100.0  # clamped to 2 classes
    assert report.n_errors == 0


def test_emit_report_json_and_csv_deterministic(tmp_path):
    rep = AccuracyReport(n_samples=4, n_errors=0,
                         accuracy_by_k={1: 50.0, 5: 75.0})
    jpath, cpath = tmp_path / "r.json", tmp_path / "r.csv"
    emit_report(rep, jpath)
    first = jpath.read_bytes()
    emit_report(rep, jpath)
    assert jpath.read_bytes() == first
    data = json.loads(first)
    assert data["kind"] == "accuracy"
    assert data["accuracy_by_k"] == {"1": 50.0, "5": 75.0}

    emit_report(rep, cpath)
    lines = cpath.read_text().splitlines()
    assert lines[0] == "k,accuracy"
    assert lines[1] == "1,50.0"


def test_emit_report_format_override(tmp_path):
    rep = AccuracyReport(n_samples=1, n_errors=0, accuracy_by_k={1: 100.0})
    path = tmp_path / "out.txt"
    emit_report(rep, path, fmt="csv")
    assert path.read_text().startswith("k,accuracy")
    with pytest.raises(InvalidParameterError):
        emit_report(rep, path, fmt="yaml")


def test_predictions_round_trip(tmp_path):
    recs = [
        PredictionRecord(sample_id="a", label=0, baseline_pred=1,
                         baseline_logits=[0.25, 0.5], topk=[1, 0],
                         gc_pred=0, gc_logits=[0.5, 0.75],
                         crop_box=[1.0, 2.0, 3.0, 4.0], primary_class=0,
                         primary_score=0.9, n_crops=3),
        PredictionRecord(sample_id="b", error="NoObjectError: nothing"),
    ]
    path = tmp_path / "preds.jsonl"
    dump_predictions(recs, path)
    loaded = load_predictions(path)
    assert [r.to_json_dict() for r in loaded] == [r.to_json_dict() for r in recs]


def test_topk_accuracy_validation():
    with pytest.raises(InvalidParameterError):
        topk_accuracy([], [], ks=(1,))
    with pytest.raises(InvalidParameterError):
        topk_accuracy([[1.0]], [0, 1], ks=(1,))
