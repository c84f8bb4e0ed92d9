"""Command-line interface.

Subcommands cover dataset generation, classification runs, the margin and
object-size sweeps, crop-stability measurement, detector-as-classifier
evaluation, and small-object filtering.  Every run writes its outputs plus a
provenance sidecar recording the exact configuration, seed, and a
fingerprint of the backend it ran against.

Exit codes: 0 success, 1 runtime failure (including any per-sample error),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .backends.fixture import FixtureBackend, SceneStore
from .datasets import (
    DatasetManifest,
    SynthParams,
    filter_by_object_size,
    load_descriptions,
    load_manifest,
    save_manifest,
    write_synthetic_dataset,
)
from .errors import GuidedCropError, InvalidParameterError
from .eval import (
    accuracy_from_records,
    dump_predictions,
    emit_report,
    margin_sweep,
    object_size_sweep,
    owl_classifier_eval,
    similarity_report,
    stability_experiment,
)
from .fusion import DEFAULT_TEMPLATE, build_class_bank
from .pipeline import GcConfig, run_dataset

logger = logging.getLogger(__name__)


def _parse_range(text: str, name: str) -> tuple[float, float] | float:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise InvalidParameterError(f"cannot parse {name} '{text}'") from exc
    if len(vals) == 1:
        return vals[0]
    if len(vals) == 2:
        return (vals[0], vals[1])
    raise InvalidParameterError(f"{name} wants 'value' or 'lo,hi', got '{text}'")


def parse_alpha_grid(text: str) -> list[float]:
    """Either 'a,b,c' or an inclusive 'start:stop:step' grid."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InvalidParameterError(f"grid wants start:stop:step, got '{text}'")
        try:
            start, stop, step = (float(p) for p in parts)
        except ValueError as exc:
            raise InvalidParameterError(f"cannot parse grid '{text}'") from exc
        if step <= 0 or stop < start:
            raise InvalidParameterError(f"bad grid '{text}'")
        count = int(round((stop - start) / step))
        vals = [round(start + i * step, 10) for i in range(count + 1)]
        return [v for v in vals if v <= stop + 1e-9]
    try:
        vals = [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise InvalidParameterError(f"cannot parse alpha list '{text}'") from exc
    if not vals:
        raise InvalidParameterError("alpha grid is empty")
    return vals


def _sibling(manifest_path: str, name: str) -> Path:
    return Path(manifest_path).parent / name


def _build_backend(args):
    if args.backend == "fixture":
        scenes = args.scenes or str(_sibling(args.manifest, "scenes.json"))
        if not Path(scenes).is_file():
            raise InvalidParameterError(
                f"fixture backend needs a scene file; '{scenes}' not found"
            )
        return FixtureBackend(SceneStore.load(scenes))
    if args.backend == "runtime":
        if not args.model_dir:
            raise InvalidParameterError("--backend runtime needs --model-dir")
        from .backends.runtime import GraphBackend

        return GraphBackend(args.model_dir)
    raise InvalidParameterError(f"unknown backend '{args.backend}'")


def _load_dataset(args) -> DatasetManifest:
    classes = args.classes or str(_sibling(args.manifest, "classes.json"))
    return load_manifest(args.manifest, classes)


def _build_bank(args, backend, class_names):
    descriptions = None
    if args.prompt_mode == "descriptions":
        if not args.prompts:
            raise InvalidParameterError("--prompt-mode descriptions needs --prompts")
        descriptions = load_descriptions(args.prompts)
    return build_class_bank(
        backend.encode_text,
        class_names,
        prompt_mode=args.prompt_mode,
        template=args.prompt_template,
        descriptions=descriptions,
        aggregation=args.aggregation,
    )


def _config_from_args(args) -> GcConfig:
    return GcConfig(
        k=args.k,
        alpha=args.alpha,
        aug_mode=args.aug,
        n_aug=args.n_aug,
        beta=args.beta,
        logit_scale=args.logit_scale,
        detection_strategy=args.detection,
        seed=args.seed,
    )


def _write_provenance(out_path: Path, args, cfg: GcConfig | None, backend=None,
                      extra: dict | None = None) -> None:
    data = {
        "command": args.command,
        "package_version": __version__,
        "seed": getattr(args, "seed", None),
        "parallelism": getattr(args, "parallelism", None),
        "config": asdict(cfg) if cfg is not None else None,
        "backend": None,
        "inputs": {
            "manifest": getattr(args, "manifest", None),
            "classes": getattr(args, "classes", None),
            "prompts": getattr(args, "prompts", None),
        },
    }
    if backend is not None:
        data["backend"] = {"name": backend.name, "fingerprint": backend.fingerprint()}
    if extra:
        data.update(extra)
    side = out_path.parent / (out_path.name + ".provenance.json")
    side.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")


def _maybe_filter(args, manifest: DatasetManifest, backend) -> DatasetManifest:
    if args.max_object_size is None:
        return manifest
    filtered = filter_by_object_size(
        manifest, args.max_object_size, dims_resolver=backend.image_dims
    )
    print(
        f"size filter <= {args.max_object_size}: kept "
        f"{len(filtered)} of {len(manifest)} samples"
    )
    return filtered


# -- subcommands ----------------------------------------------------------


def cmd_classify(args) -> int:
    backend = _build_backend(args)
    manifest = _load_dataset(args)
    bank = _build_bank(args, backend, manifest.class_names)
    manifest = _maybe_filter(args, manifest, backend)
    cfg = _config_from_args(args)
    result = run_dataset(
        backend, manifest.samples, bank, cfg, guided=args.guided,
        parallelism=args.parallelism,
    )
    out = Path(args.out)
    dump_predictions(result.records, out)
    _write_provenance(out, args, cfg, backend, extra={
        "guided": args.guided,
        "n_samples": len(result.records),
        "n_errors": result.n_errors,
    })
    acc = accuracy_from_records(result.records, guided=args.guided)
    print(f"samples: {len(result.records)}  errors: {result.n_errors}")
    print(f"top-1 accuracy: {acc:.2f}%")
    if args.guided:
        sim = similarity_report(result.records)
        print(
            f"mean max logit when correct: baseline "
            f"{sim.baseline_mean_max_logit:.2f} (n={sim.n_baseline_correct}), "
            f"guided {sim.gc_mean_max_logit:.2f} (n={sim.n_gc_correct})"
        )
    if result.n_errors:
        for rec in result.records:
            if rec.error is not None:
                print(f"sample {rec.sample_id}: {rec.error}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep_margin(args) -> int:
    backend = _build_backend(args)
    manifest = _load_dataset(args)
    bank = _build_bank(args, backend, manifest.class_names)
    manifest = _maybe_filter(args, manifest, backend)
    cfg = _config_from_args(args)
    alphas = parse_alpha_grid(args.alphas)
    report = margin_sweep(backend, manifest, bank, cfg, alphas, args.parallelism)
    out = Path(args.out)
    emit_report(report, out, args.format)
    _write_provenance(out, args, cfg, backend, extra={"alphas": alphas})
    print(f"baseline accuracy: {report.baseline_accuracy:.2f}%")
    for row in report.rows:
        print(f"alpha={row['alpha']:.2f}  gc accuracy: {row['gc_accuracy']:.2f}%")
    return 0


def cmd_sweep_size(args) -> int:
    backend = _build_backend(args)
    manifest = _load_dataset(args)
    bank = _build_bank(args, backend, manifest.class_names)
    cfg = _config_from_args(args)
    report = object_size_sweep(backend, manifest, bank, cfg, args.parallelism)
    out = Path(args.out)
    emit_report(report, out, args.format)
    _write_provenance(out, args, cfg, backend)
    for row in report.rows:
        gc = "-" if row["gc"] is None else f"{row['gc']:.2f}"
        base = "-" if row["baseline"] is None else f"{row['baseline']:.2f}"
        print(f"threshold {row['threshold']:.2f}: n={row['n']} baseline={base} gc={gc}")
    return 0


def cmd_stability(args) -> int:
    backend = _build_backend(args)
    manifest = _load_dataset(args)
    bank = _build_bank(args, backend, manifest.class_names)
    report = stability_experiment(
        backend, manifest, bank, n_crops=args.n_crops, beta=args.beta,
        logit_scale=args.logit_scale, seed=args.seed,
    )
    out = Path(args.out)
    emit_report(report, out, args.format)
    _write_provenance(out, args, None, backend, extra={
        "n_crops": args.n_crops, "beta": args.beta,
    })
    print(
        f"mean true-class prob std: {report.mean_std:.4f}  "
        f"stable samples: {100.0 * report.stable_fraction:.1f}%"
    )
    return 0


def cmd_owl_eval(args) -> int:
    backend = _build_backend(args)
    manifest = _load_dataset(args)
    report, _ = owl_classifier_eval(backend, manifest, manifest.class_names)
    out = Path(args.out)
    emit_report(report, out, args.format)
    _write_provenance(out, args, None, backend)
    for k, acc in sorted(report.accuracy_by_k.items()):
        print(f"detector-as-classifier top-{k}: {acc:.2f}%")
    return 1 if report.n_errors else 0


def cmd_gen_synth(args) -> int:
    params = SynthParams(
        n_samples=args.n_samples,
        n_classes=args.n_classes,
        feature_dim=args.feature_dim,
        image_side=args.image_side,
        object_size_range=_parse_range(args.object_size_range, "object-size-range"),
        confusability=_parse_range(args.confusability, "confusability"),
        class_cos=args.class_cos,
        aspect_jitter=args.aspect_jitter,
        jitter_fraction=args.jitter,
        fault_rate=args.fault_rate,
        absent_mode=args.absent_mode,
        prompt_match_threshold=args.match_threshold,
        score_noise=args.score_noise,
        seed=args.seed,
    )
    paths = write_synthetic_dataset(args.out, params)
    for role, path in sorted(paths.items()):
        print(f"{role}: {path}")
    return 0


def cmd_filter_sm(args) -> int:
    manifest = _load_dataset(args)
    resolver = None
    scenes = args.scenes or str(_sibling(args.manifest, "scenes.json"))
    if Path(scenes).is_file():
        resolver = FixtureBackend(SceneStore.load(scenes)).image_dims
    filtered = filter_by_object_size(manifest, args.max_object_size, resolver)
    out = Path(args.out)
    classes_out = out.parent / "classes.json"
    save_manifest(filtered, out, classes_out)
    print(f"kept {len(filtered)} of {len(manifest)} samples -> {out}")
    return 0


# -- parser ----------------------------------------------------------------


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=["fixture", "runtime"], default="fixture")
    p.add_argument("--model-dir", help="exported model directory (runtime backend)")
    p.add_argument("--scenes", help="scene store JSON (fixture backend); "
                   "defaults to scenes.json next to the manifest")


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, help="dataset manifest JSONL")
    p.add_argument("--classes", help="class list JSON; defaults to classes.json "
                   "next to the manifest")
    p.add_argument("--prompts", help="per-class description prompts JSON")
    p.add_argument("--prompt-mode", choices=["category", "descriptions"],
                   default="category")
    p.add_argument("--prompt-template", default=DEFAULT_TEMPLATE)
    p.add_argument("--aggregation", choices=["logit_mean", "embedding_mean"],
                   default="logit_mean")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--guided", action="store_true", help="run the guided pipeline")
    p.add_argument("--aug", choices=["none", "raug", "maug"], default="none")
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--n-aug", type=int, default=11)
    p.add_argument("--beta", type=float, default=0.9)
    p.add_argument("--logit-scale", type=float, default=100.0)
    p.add_argument("--detection", choices=["multi", "single"], default="multi")
    p.add_argument("--max-object-size", type=float, default=None,
                   help="keep only samples with relative object size <= this")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallelism", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="guidedcrop",
        description="Zero-shot classification with detector-guided cropping",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="classify a manifest and dump predictions")
    _add_backend_flags(p)
    _add_data_flags(p)
    _add_run_flags(p)
    p.add_argument("--out", required=True, help="predictions JSONL path")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("sweep-margin", help="guided accuracy across margin ratios")
    _add_backend_flags(p)
    _add_data_flags(p)
    _add_run_flags(p)
    p.add_argument("--alphas", default="0:1:0.1",
                   help="comma list or start:stop:step grid")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.set_defaults(func=cmd_sweep_margin)

    p = sub.add_parser("sweep-size", help="method accuracies across size thresholds")
    _add_backend_flags(p)
    _add_data_flags(p)
    _add_run_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.set_defaults(func=cmd_sweep_size)

    p = sub.add_parser("stability", help="prediction churn across random crops")
    _add_backend_flags(p)
    _add_data_flags(p)
    p.add_argument("--n-crops", type=int, default=10)
    p.add_argument("--beta", type=float, default=0.9)
    p.add_argument("--logit-scale", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("owl-eval", help="score the detector as a classifier")
    _add_backend_flags(p)
    _add_data_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.set_defaults(func=cmd_owl_eval)

    p = sub.add_parser("gen-synth", help="generate a synthetic scene dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-samples", type=int, default=500)
    p.add_argument("--n-classes", type=int, default=8)
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--image-side", type=int, default=224)
    p.add_argument("--object-size-range", default="0.03,0.2")
    p.add_argument("--confusability", default="0.1,0.7")
    p.add_argument("--class-cos", type=float, default=0.0)
    p.add_argument("--aspect-jitter", type=float, default=0.0)
    p.add_argument("--jitter", type=float, default=0.0,
                   help="detector box jitter fraction")
    p.add_argument("--fault-rate", type=float, default=0.0)
    p.add_argument("--absent-mode", choices=["fail", "decoy"], default="fail")
    p.add_argument("--match-threshold", type=float, default=None)
    p.add_argument("--score-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("filter-sm", help="keep samples with small objects")
    p.add_argument("--manifest", required=True)
    p.add_argument("--classes")
    p.add_argument("--scenes")
    p.add_argument("--max-object-size", type=float, required=True)
    p.add_argument("--out", required=True, help="filtered manifest JSONL path")
    p.set_defaults(func=cmd_filter_sm)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GuidedCropError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
