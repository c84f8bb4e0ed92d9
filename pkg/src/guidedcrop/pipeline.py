"""Classification pipeline: preliminary scoring, guided cropping, fusion.

The guided path runs in fixed stages: score the full image against every
class, keep the top-k classes, ask the detector for a box per candidate,
square and enlarge the best box, embed the crop (or an augmented set of
crops), and re-score only the candidate classes.  The final prediction is
always one of the top-k preliminary classes.

Per-sample randomness (random-crop augmentation) is seeded from the run seed
and the sample id, so results are independent of worker count and of which
other samples are in the manifest.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import boxgeom
from .boxgeom import Box, ImageDims
from .detection import STRATEGY_MULTI, STRATEGY_SINGLE, extract_candidates, primary_box
from .errors import InvalidParameterError
from .fusion import (
    TextClassBank,
    average_logits,
    clip_logits,
    predict,
    restricted_logits,
    top_k,
)
from .seeding import stable_rng, stable_seed

logger = logging.getLogger(__name__)

AUG_NONE = "none"
AUG_RAUG = "raug"
AUG_MAUG = "maug"

DEFAULT_ALPHA = 0.2


@dataclass(frozen=True)
class GcConfig:
    """Pipeline settings.  Defaults follow the reference configuration."""

    k: int = 5
    alpha: float = DEFAULT_ALPHA
    aug_mode: str = AUG_NONE
    n_aug: int = 11
    beta: float = 0.9
    logit_scale: float = 100.0
    detection_strategy: str = STRATEGY_MULTI
    score_floor: float = 0.0
    raug_space: str = "cropped"
    detection_prompt_template: str | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.k < 1:
            raise InvalidParameterError(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidParameterError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.aug_mode not in (AUG_NONE, AUG_RAUG, AUG_MAUG):
            raise InvalidParameterError(f"unknown aug_mode '{self.aug_mode}'")
        if self.aug_mode == AUG_RAUG and self.n_aug < 1:
            raise InvalidParameterError(f"raug needs n_aug >= 1, got {self.n_aug}")
        if self.aug_mode == AUG_MAUG and self.n_aug < 2:
            raise InvalidParameterError(f"maug needs n_aug >= 2, got {self.n_aug}")
        if not 0.0 < self.beta < 1.0:
            raise InvalidParameterError(f"beta must be in (0, 1), got {self.beta}")
        if self.logit_scale <= 0.0:
            raise InvalidParameterError(f"logit_scale must be > 0, got {self.logit_scale}")
        if self.detection_strategy not in (STRATEGY_MULTI, STRATEGY_SINGLE):
            raise InvalidParameterError(
                f"unknown detection strategy '{self.detection_strategy}'"
            )
        if self.raug_space not in ("cropped", "original"):
            raise InvalidParameterError(f"unknown raug_space '{self.raug_space}'")

    def warnings(self) -> list[str]:
        notes = []
        if self.aug_mode == AUG_MAUG and self.alpha != DEFAULT_ALPHA:
            notes.append(
                "alpha is ignored under margin augmentation; the crop set "
                "always spans ratios 0..1"
            )
        return notes


@dataclass
class PredictionRecord:
    """Everything one sample produced, serializable to one JSONL line."""

    sample_id: str
    label: int | None = None
    baseline_pred: int | None = None
    baseline_logits: list[float] | None = None
    topk: list[int] | None = None
    gc_pred: int | None = None
    gc_logits: list[float] | None = None
    crop_box: list[float] | None = None
    primary_class: int | None = None
    primary_score: float | None = None
    detector_fallback: bool = False
    n_crops: int = 0
    error: str | None = None

    def final_pred(self, guided: bool) -> int | None:
        return self.gc_pred if guided else self.baseline_pred

    def to_json_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "label": self.label,
            "baseline_pred": self.baseline_pred,
            "baseline_logits": self.baseline_logits,
            "topk": self.topk,
            "gc_pred": self.gc_pred,
            "gc_logits": self.gc_logits,
            "crop_box": self.crop_box,
            "primary_class": self.primary_class,
            "primary_score": self.primary_score,
            "detector_fallback": self.detector_fallback,
            "n_crops": self.n_crops,
            "error": self.error,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "PredictionRecord":
        return cls(**data)


def _float_list(arr) -> list[float]:
    return [float(x) for x in np.asarray(arr).ravel()]


def _raug_boxes_within(base: Box, n_aug: int, beta: float, rng) -> list[Box]:
    """Random squares inside an arbitrary square region (float side)."""
    side = min(base.width, base.height)
    out = []
    for _ in range(n_aug):
        s = rng.uniform(beta * side, side)
        x0 = rng.uniform(base.min_x, base.max_x - s)
        y0 = rng.uniform(base.min_y, base.max_y - s)
        out.append(Box(x0, y0, min(x0 + s, base.max_x), min(y0 + s, base.max_y)))
    return out


def classify_baseline(
    backend, image, bank: TextClassBank, cfg: GcConfig, sample_id: str = "",
    rng_seed: int | None = None,
) -> PredictionRecord:
    """Full-image classification, optionally averaged over random crops."""
    cfg.validate()
    if cfg.aug_mode == AUG_MAUG:
        raise InvalidParameterError(
            "margin augmentation needs a detector box; it does not apply to "
            "the unguided baseline"
        )
    dims = backend.image_dims(image)
    full = boxgeom.full_box(dims)
    if cfg.aug_mode == AUG_NONE:
        logits = clip_logits(bank, backend.encode_region(image, full), cfg.logit_scale)
        n_crops = 1
    else:
        rng = stable_rng(cfg.seed if rng_seed is None else rng_seed, sample_id, "raug")
        boxes = boxgeom.raug_boxes(dims, cfg.n_aug, cfg.beta, rng)
        logits = average_logits(
            [clip_logits(bank, backend.encode_region(image, b), cfg.logit_scale)
             for b in boxes]
        )
        n_crops = len(boxes)
    return PredictionRecord(
        sample_id=sample_id,
        baseline_pred=predict(logits),
        baseline_logits=_float_list(logits),
        n_crops=n_crops,
    )


def classify_gc(
    backend, image, bank: TextClassBank, cfg: GcConfig, sample_id: str = "",
    rng_seed: int | None = None,
) -> PredictionRecord:
    """Guided classification: crop around the best detected candidate box.

    When the detector returns nothing for any candidate class, the crop
    falls back to the full image, which reduces to the preliminary top-1
    under no augmentation.
    """
    cfg.validate()
    dims = backend.image_dims(image)
    full = boxgeom.full_box(dims)

    prelim_emb = backend.encode_region(image, full)
    prelim_logits = clip_logits(bank, prelim_emb, cfg.logit_scale)
    topk = top_k(prelim_logits, min(cfg.k, bank.n_classes))

    template = cfg.detection_prompt_template
    candidates = extract_candidates(
        backend,
        image,
        topk,
        bank.class_names,
        strategy=cfg.detection_strategy,
        score_floor=cfg.score_floor,
        prompt_for_class=(lambda n: template.format(name=n)) if template else None,
    )
    prim = primary_box(candidates)
    if prim is None:
        base_box, fallback = full, True
        primary_class = primary_score = None
    else:
        base_box, fallback = prim.box, False
        primary_class, primary_score = prim.class_index, prim.score

    square = boxgeom.square_adjust(base_box, dims)
    if cfg.aug_mode == AUG_NONE:
        crops = [boxgeom.enlarge_margin(square, dims, cfg.alpha)]
    elif cfg.aug_mode == AUG_MAUG:
        crops = boxgeom.maug_boxes(square, dims, cfg.n_aug)
    else:
        rng = stable_rng(cfg.seed if rng_seed is None else rng_seed, sample_id, "raug")
        enlarged = boxgeom.enlarge_margin(square, dims, cfg.alpha)
        if cfg.raug_space == "cropped":
            crops = _raug_boxes_within(enlarged, cfg.n_aug, cfg.beta, rng)
        else:
            crops = boxgeom.raug_boxes(dims, cfg.n_aug, cfg.beta, rng)

    per_crop = [
        restricted_logits(bank, topk, backend.encode_region(image, c), cfg.logit_scale)
        for c in crops
    ]
    gc = average_logits(per_crop)
    return PredictionRecord(
        sample_id=sample_id,
        baseline_pred=predict(prelim_logits),
        baseline_logits=_float_list(prelim_logits),
        topk=[int(i) for i in topk],
        gc_pred=predict(gc, index_map=topk),
        gc_logits=_float_list(gc),
        crop_box=list(crops[0].as_tuple()),
        primary_class=primary_class,
        primary_score=primary_score,
        detector_fallback=fallback,
        n_crops=len(crops),
    )


@dataclass
class RunResult:
    """Ordered per-sample records plus run-level bookkeeping."""

    records: list[PredictionRecord]
    guided: bool
    config: GcConfig
    n_errors: int = 0
    warnings: list[str] = field(default_factory=list)
    effective_parallelism: int = 1


def run_dataset(
    backend,
    samples,
    bank: TextClassBank,
    cfg: GcConfig,
    guided: bool = True,
    parallelism: int = 1,
) -> RunResult:
    """Classify every manifest sample; errors are isolated per sample.

    Args:
        backend: model backend.
        samples: iterable of objects with .id, .image, .label attributes.
        bank: text class bank; its order defines class indices.
        cfg: pipeline settings.
        guided: run the guided path (True) or the plain baseline.
        parallelism: worker threads; forced to 1 for backends that are not
            thread safe.  Results are identical at any worker count.

    Returns:
        RunResult with records in manifest order.
    """
    cfg.validate()
    if parallelism < 1:
        raise InvalidParameterError(f"parallelism must be >= 1, got {parallelism}")
    notes = cfg.warnings()
    for note in notes:
        logger.warning(note)
    workers = parallelism if backend.thread_safe else 1
    if workers != parallelism:
        msg = (
            f"backend '{backend.name}' is not thread safe; running serially "
            f"instead of with {parallelism} workers"
        )
        logger.warning(msg)
        notes = notes + [msg]

    sample_list = list(samples)

    def one(sample) -> PredictionRecord:
        seed = stable_seed(cfg.seed, sample.id)
        try:
            fn = classify_gc if guided else classify_baseline
            rec = fn(backend, sample.image, bank, cfg, sample_id=sample.id,
                     rng_seed=seed)
        except Exception as exc:  # per-sample isolation
            rec = PredictionRecord(sample_id=sample.id, error=f"{type(exc).__name__}: {exc}")
        rec.label = getattr(sample, "label", None)
        return rec

    if workers == 1 or len(sample_list) <= 1:
        records = [one(s) for s in sample_list]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, sample_list))
    n_errors = sum(1 for r in records if r.error is not None)
    if n_errors:
        logger.warning("%d of %d samples failed", n_errors, len(records))
    return RunResult(
        records=records,
        guided=guided,
        config=cfg,
        n_errors=n_errors,
        warnings=notes,
        effective_parallelism=workers,
    )


def with_overrides(cfg: GcConfig, **kwargs) -> GcConfig:
    """A copy of cfg with the given fields replaced."""
    return replace(cfg, **kwargs)
