"""Candidate box extraction from a text-conditioned detector.

Two query strategies are supported.  Multi-pass issues one detector call per
candidate class, so each class gets its own best box independently.  Single
pass sends all class prompts in one call and lets the detector assign boxes
jointly; it is cheaper but a bad pass degrades every class at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxgeom import Box
from .errors import InvalidParameterError

STRATEGY_MULTI = "multi"
STRATEGY_SINGLE = "single"


@dataclass(frozen=True)
class Detection:
    """One detected box with its confidence and the class it answers for."""

    box: Box
    score: float
    class_index: int

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise InvalidParameterError(f"detection score {self.score} outside [0, 1]")


@dataclass
class CandidateSet:
    """Best boxes found for a ranked list of candidate classes.

    `topk_order` preserves the candidate ranking used for tie-breaking:
    earlier classes beat later ones at equal detector score.
    """

    detections: list[Detection] = field(default_factory=list)
    topk_order: tuple[int, ...] = ()
    strategy: str = STRATEGY_MULTI

    def __post_init__(self):
        known = set(self.topk_order)
        for det in self.detections:
            if det.class_index not in known:
                raise InvalidParameterError(
                    f"detection for class {det.class_index} outside candidates "
                    f"{self.topk_order}"
                )

    def __len__(self) -> int:
        return len(self.detections)


def _best_per_position(dets, score_floor: float):
    """Highest-scoring detection per prompt position, first one wins ties."""
    best: dict[int, "Detection"] = {}
    for det in dets:
        if det.score < score_floor:
            continue
        cur = best.get(det.class_index)
        if cur is None or det.score > cur.score:
            best[det.class_index] = det
    return best


def extract_candidates(
    backend,
    image,
    topk: np.ndarray,
    class_names: list[str],
    strategy: str = STRATEGY_MULTI,
    score_floor: float = 0.0,
    prompt_for_class=None,
) -> CandidateSet:
    """Query the detector for each candidate class and collect best boxes.

    Args:
        backend: object with detect(image, prompts) -> list[Detection] where
            Detection.class_index refers to the position in `prompts`.
        image: backend-specific image reference.
        topk: candidate class indices, best first.
        class_names: full ordered class list; names double as detection
            prompts unless `prompt_for_class` overrides them.
        strategy: "multi" (one call per class) or "single" (one joint call).
        score_floor: drop detections scoring below this value.
        prompt_for_class: optional callable class name -> prompt string.

    Returns:
        CandidateSet with at most one detection per candidate class, indices
        remapped from prompt positions to real class indices.
    """
    order = tuple(int(i) for i in np.asarray(topk).ravel())
    if not order:
        raise InvalidParameterError("empty candidate list")
    prompts = [
        prompt_for_class(class_names[j]) if prompt_for_class else class_names[j]
        for j in order
    ]
    found: list[Detection] = []
    if strategy == STRATEGY_MULTI:
        for pos, class_j in enumerate(order):
            dets = backend.detect(image, [prompts[pos]])
            best = _best_per_position(dets, score_floor).get(0)
            if best is not None:
                found.append(Detection(best.box, best.score, class_j))
    elif strategy == STRATEGY_SINGLE:
        dets = backend.detect(image, prompts)
        best = _best_per_position(dets, score_floor)
        for pos, class_j in enumerate(order):
            hit = best.get(pos)
            if hit is not None:
                found.append(Detection(hit.box, hit.score, class_j))
    else:
        raise InvalidParameterError(f"unknown detection strategy '{strategy}'")
    return CandidateSet(detections=found, topk_order=order, strategy=strategy)


def primary_box(candidates: CandidateSet) -> Detection | None:
    """The highest-scoring candidate detection.

    Ties resolve to the class ranked earlier among the candidates.  Returns
    None when no class produced a box.
    """
    if not candidates.detections:
        return None
    rank = {c: i for i, c in enumerate(candidates.topk_order)}
    ordered = sorted(candidates.detections, key=lambda d: rank[d.class_index])
    best = ordered[0]
    for det in ordered[1:]:
        if det.score > best.score:
            best = det
    return best


def owl_classifier_logits(detections: list[Detection], n_classes: int) -> np.ndarray:
    """Detector-as-classifier scores: best box score per class, 0 if none.

    `detections` carry real class indices here (the caller queried every
    class); classes without any box keep a logit of exactly 0.
    """
    if n_classes < 1:
        raise InvalidParameterError(f"n_classes must be >= 1, got {n_classes}")
    logits = np.zeros(n_classes, dtype=np.float64)
    for det in detections:
        if not 0 <= det.class_index < n_classes:
            raise InvalidParameterError(
                f"class index {det.class_index} outside 0..{n_classes - 1}"
            )
        if det.score > logits[det.class_index]:
            logits[det.class_index] = det.score
    return logits
