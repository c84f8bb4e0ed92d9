"""Experiment harness: accuracy metrics, sweeps, stability, detector eval.

Reports are plain dataclasses that serialize to JSON or CSV with stable key
order and no environment-dependent content, so a rerun with the same seed
produces byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import boxgeom
from .datasets import DatasetManifest, ensure_object_sizes, size_sweep_thresholds
from .detection import owl_classifier_logits
from .errors import InvalidParameterError
from .fusion import TextClassBank, clip_logits, predict, softmax, top_k
from .pipeline import (
    AUG_MAUG,
    AUG_NONE,
    AUG_RAUG,
    GcConfig,
    PredictionRecord,
    RunResult,
    run_dataset,
    with_overrides,
)
from .seeding import stable_rng


def topk_hit(logits, label: int, k: int) -> bool:
    """Whether `label` is among the k best logits under the stable tie rule."""
    return label in top_k(np.asarray(logits, dtype=np.float64), k)


def topk_accuracy(logits_list, labels, ks) -> dict[int, float]:
    """Top-k accuracy in percent for each k, over per-sample logit vectors."""
    if len(logits_list) != len(labels):
        raise InvalidParameterError(
            f"{len(logits_list)} logit vectors vs {len(labels)} labels"
        )
    if not logits_list:
        raise InvalidParameterError("no samples to score")
    out = {}
    for k in ks:
        hits = sum(
            1 for lg, y in zip(logits_list, labels) if topk_hit(lg, int(y), k)
        )
        out[int(k)] = 100.0 * hits / len(labels)
    return out


def accuracy_from_records(records: list[PredictionRecord], guided: bool) -> float:
    """Top-1 accuracy in percent; failed samples count as wrong."""
    if not records:
        raise InvalidParameterError("no records to score")
    hits = 0
    for rec in records:
        pred = rec.final_pred(guided)
        if rec.error is None and pred is not None and pred == rec.label:
            hits += 1
    return 100.0 * hits / len(records)


def population_std(values) -> float:
    """Standard deviation with N in the denominator."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise InvalidParameterError("no values")
    return float(np.sqrt(np.mean((arr - arr.mean()) ** 2)))


# -- reports ------------------------------------------------------------------


class Report:
    """Serialization shared by every report type."""

    kind = "report"

    def to_json_dict(self) -> dict:
        raise NotImplementedError

    def csv_header(self) -> list[str]:
        raise NotImplementedError

    def csv_rows(self) -> list[list]:
        raise NotImplementedError


def emit_report(report: Report, path, fmt: str | None = None) -> None:
    """Write a report as JSON or CSV.  Format defaults to the file suffix."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "json"
    if fmt == "json":
        path.write_text(json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n")
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(report.csv_header())
        writer.writerows(report.csv_rows())
        path.write_text(buf.getvalue())
    else:
        raise InvalidParameterError(f"unknown report format '{fmt}'")


def dump_predictions(records: list[PredictionRecord], path) -> None:
    """One JSON object per line, stable key order."""
    lines = [json.dumps(r.to_json_dict(), sort_keys=True) for r in records]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def load_predictions(path) -> list[PredictionRecord]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(PredictionRecord.from_json_dict(json.loads(line)))
    return out


@dataclass
class AccuracyReport(Report):
    kind = "accuracy"
    n_samples: int
    n_errors: int
    accuracy_by_k: dict[int, float]

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_samples": self.n_samples,
            "n_errors": self.n_errors,
            "accuracy_by_k": {str(k): v for k, v in self.accuracy_by_k.items()},
        }

    def csv_header(self):
        return ["k", "accuracy"]

    def csv_rows(self):
        return [[k, v] for k, v in sorted(self.accuracy_by_k.items())]


@dataclass
class MarginSweepReport(Report):
    kind = "margin_sweep"
    baseline_accuracy: float
    rows: list[dict] = field(default_factory=list)  # alpha, gc_accuracy, fallback_rate

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "baseline_accuracy": self.baseline_accuracy,
            "rows": self.rows,
        }

    def csv_header(self):
        return ["alpha", "gc_accuracy", "baseline_accuracy", "fallback_rate"]

    def csv_rows(self):
        return [
            [r["alpha"], r["gc_accuracy"], self.baseline_accuracy, r["fallback_rate"]]
            for r in self.rows
        ]

    def accuracy_at(self, alpha: float, tol: float = 1e-9) -> float:
        for r in self.rows:
            if abs(r["alpha"] - alpha) <= tol:
                return r["gc_accuracy"]
        raise InvalidParameterError(f"no sweep row at alpha={alpha}")


SIZE_SWEEP_METHODS = ("baseline", "baseline_raug", "gc", "gc_raug", "gc_maug")


@dataclass
class SizeSweepReport(Report):
    kind = "size_sweep"
    rows: list[dict] = field(default_factory=list)  # threshold, n, per-method acc

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "methods": list(SIZE_SWEEP_METHODS), "rows": self.rows}

    def csv_header(self):
        return ["threshold", "n"] + list(SIZE_SWEEP_METHODS)

    def csv_rows(self):
        return [
            [r["threshold"], r["n"]] + [r[m] for m in SIZE_SWEEP_METHODS]
            for r in self.rows
        ]

    def row_at(self, threshold: float, tol: float = 1e-9) -> dict:
        for r in self.rows:
            if abs(r["threshold"] - threshold) <= tol:
                return r
        raise InvalidParameterError(f"no sweep row at threshold={threshold}")


@dataclass
class StabilityReport(Report):
    kind = "stability"
    n_crops: int
    beta: float
    per_sample: list[dict] = field(default_factory=list)  # id, std, distinct
    mean_std: float = 0.0
    stable_fraction: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_crops": self.n_crops,
            "beta": self.beta,
            "mean_std": self.mean_std,
            "stable_fraction": self.stable_fraction,
            "per_sample": self.per_sample,
        }

    def csv_header(self):
        return ["sample_id", "true_prob_std", "distinct_predictions"]

    def csv_rows(self):
        return [
            [r["sample_id"], r["true_prob_std"], r["distinct_predictions"]]
            for r in self.per_sample
        ]


@dataclass
class SimilarityReport(Report):
    kind = "similarity"
    baseline_mean_max_logit: float
    gc_mean_max_logit: float
    n_baseline_correct: int
    n_gc_correct: int

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "baseline_mean_max_logit": self.baseline_mean_max_logit,
            "gc_mean_max_logit": self.gc_mean_max_logit,
            "n_baseline_correct": self.n_baseline_correct,
            "n_gc_correct": self.n_gc_correct,
        }

    def csv_header(self):
        return ["method", "mean_max_logit", "n_correct"]

    def csv_rows(self):
        return [
            ["baseline", self.baseline_mean_max_logit, self.n_baseline_correct],
            ["gc", self.gc_mean_max_logit, self.n_gc_correct],
        ]


# -- experiments --------------------------------------------------------------


def margin_sweep(
    backend,
    manifest: DatasetManifest,
    bank: TextClassBank,
    cfg: GcConfig,
    alphas,
    parallelism: int = 1,
) -> MarginSweepReport:
    """Guided accuracy at each margin ratio, against the unguided baseline.

    The baseline number comes from the preliminary predictions of the first
    run; they do not depend on alpha.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise InvalidParameterError("margin sweep needs at least one alpha")
    report = MarginSweepReport(baseline_accuracy=0.0)
    for i, alpha in enumerate(alphas):
        result = run_dataset(
            backend, manifest.samples, bank, with_overrides(cfg, alpha=alpha),
            guided=True, parallelism=parallelism,
        )
        if i == 0:
            report.baseline_accuracy = accuracy_from_records(result.records, guided=False)
        n_fb = sum(1 for r in result.records if r.detector_fallback)
        report.rows.append(
            {
                "alpha": alpha,
                "gc_accuracy": accuracy_from_records(result.records, guided=True),
                "fallback_rate": n_fb / len(result.records),
            }
        )
    return report


def _method_runs(backend, manifest, bank, cfg, parallelism):
    """One full-manifest run per sweep method.

    Per-sample randomness is keyed by (seed, sample id), so accuracies over
    any subset equal what a run restricted to that subset would produce.
    """
    specs = {
        "baseline": (False, with_overrides(cfg, aug_mode=AUG_NONE)),
        "baseline_raug": (False, with_overrides(cfg, aug_mode=AUG_RAUG)),
        "gc": (True, with_overrides(cfg, aug_mode=AUG_NONE)),
        "gc_raug": (True, with_overrides(cfg, aug_mode=AUG_RAUG)),
        "gc_maug": (True, with_overrides(cfg, aug_mode=AUG_MAUG)),
    }
    runs: dict[str, RunResult] = {}
    for method, (guided, mcfg) in specs.items():
        runs[method] = run_dataset(
            backend, manifest.samples, bank, mcfg, guided=guided,
            parallelism=parallelism,
        )
    return runs


def object_size_sweep(
    backend,
    manifest: DatasetManifest,
    bank: TextClassBank,
    cfg: GcConfig,
    parallelism: int = 1,
    thresholds=None,
) -> SizeSweepReport:
    """Accuracy of five methods on nested subsets by relative object size.

    Subsets keep samples with size <= threshold (inclusive).  Thresholds with
    an empty subset produce a row with n=0 and null accuracies.
    """
    ensure_object_sizes(manifest, dims_resolver=backend.image_dims)
    thresholds = list(thresholds) if thresholds is not None else size_sweep_thresholds()
    runs = _method_runs(backend, manifest, bank, cfg, parallelism)
    report = SizeSweepReport()
    for t in thresholds:
        idx = [i for i, s in enumerate(manifest.samples) if s.size <= t]
        row: dict = {"threshold": t, "n": len(idx)}
        for method, result in runs.items():
            if not idx:
                row[method] = None
                continue
            subset = [result.records[i] for i in idx]
            row[method] = accuracy_from_records(subset, guided=result.guided)
        report.rows.append(row)
    return report


def stability_experiment(
    backend,
    manifest: DatasetManifest,
    bank: TextClassBank,
    n_crops: int = 10,
    beta: float = 0.9,
    logit_scale: float = 100.0,
    seed: int = 0,
) -> StabilityReport:
    """Prediction churn across random crops of each image.

    For every sample, n_crops random squares are scored; the report tracks
    the population std of the true-class probability and how many distinct
    argmax predictions appeared.  stable_fraction is the share of samples
    with exactly one distinct prediction.
    """
    if n_crops < 2:
        raise InvalidParameterError(f"stability needs n_crops >= 2, got {n_crops}")
    report = StabilityReport(n_crops=n_crops, beta=beta)
    stds = []
    n_stable = 0
    for rec in manifest.samples:
        dims = backend.image_dims(rec.image)
        rng = stable_rng(seed, rec.id, "stability")
        boxes = boxgeom.raug_boxes(dims, n_crops, beta, rng)
        probs, preds = [], []
        for box in boxes:
            logits = clip_logits(bank, backend.encode_region(rec.image, box), logit_scale)
            probs.append(float(softmax(logits)[rec.label]))
            preds.append(predict(logits))
        std = population_std(probs)
        distinct = len(set(preds))
        stds.append(std)
        n_stable += int(distinct == 1)
        report.per_sample.append(
            {"sample_id": rec.id, "true_prob_std": std, "distinct_predictions": distinct}
        )
    report.mean_std = float(np.mean(stds))
    report.stable_fraction = n_stable / len(manifest.samples)
    return report


def similarity_report(records: list[PredictionRecord]) -> SimilarityReport:
    """Mean max logit over correctly classified samples, per method.

    Needs records from a guided run (both logit sets present).
    """
    base_vals, gc_vals = [], []
    for rec in records:
        if rec.error is not None:
            continue
        if rec.baseline_pred == rec.label and rec.baseline_logits:
            base_vals.append(max(rec.baseline_logits))
        if rec.gc_pred == rec.label and rec.gc_logits:
            gc_vals.append(max(rec.gc_logits))
    return SimilarityReport(
        baseline_mean_max_logit=float(np.mean(base_vals)) if base_vals else 0.0,
        gc_mean_max_logit=float(np.mean(gc_vals)) if gc_vals else 0.0,
        n_baseline_correct=len(base_vals),
        n_gc_correct=len(gc_vals),
    )


def owl_classifier_eval(
    backend,
    manifest: DatasetManifest,
    class_names: list[str],
    ks=(1, 5, 10),
) -> tuple[AccuracyReport, list[np.ndarray]]:
    """Detector-as-classifier accuracy: logit = best box score per class.

    All class names are queried in one joint pass per image; classes with no
    box score exactly 0.  Returns the report and the per-sample logits.
    """
    n = len(class_names)
    ks_eff = [min(int(k), n) for k in ks]
    logits_list = []
    labels = []
    n_errors = 0
    for rec in manifest.samples:
        try:
            dets = backend.detect(rec.image, list(class_names))
            logits_list.append(owl_classifier_logits(dets, n))
            labels.append(rec.label)
        except Exception:
            n_errors += 1
            logits_list.append(np.zeros(n))
            labels.append(rec.label)
    acc = topk_accuracy(logits_list, labels, ks_eff)
    report = AccuracyReport(
        n_samples=len(manifest.samples),
        n_errors=n_errors,
        accuracy_by_k={int(k): acc[min(int(k), n)] for k in ks},
    )
    return report, logits_list
