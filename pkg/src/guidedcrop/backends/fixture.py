"""Analytic scene backend.

Scenes are geometric descriptions, not pixels: each has dimensions, a
background feature, and labelled objects with boxes and features.  Encoding
a region mixes the features of whatever the region covers, weighted by
covered area, so crop quality maps directly onto embedding quality.  The
detector finds objects by label (or by feature similarity when a match
threshold is configured) and can inject box jitter, score noise, and
deterministic failures.

Everything is reproducible: each random draw uses a generator derived from
the fixture seed plus the scene, object, and purpose, so a detection for one
prompt never depends on which other prompts were requested, except for the
explicit shared-pass failure rule described on detect().
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..boxgeom import Box, ImageDims, _place_interval
from ..detection import Detection
from ..errors import InvalidCropError, InvalidParameterError, UnknownImageError
from ..seeding import stable_rng

ABSENT_FAIL = "fail"
ABSENT_DECOY = "decoy"


@dataclass(frozen=True)
class SceneObject:
    label: str
    box: Box
    feature: np.ndarray


@dataclass(frozen=True)
class SceneSpec:
    """One synthetic image: dimensions, background, and objects."""

    dims: ImageDims
    background_label: str
    background_feature: np.ndarray
    objects: tuple[SceneObject, ...]


@dataclass(frozen=True)
class DetectorFaults:
    """Detector imperfection knobs, all off by default.

    jitter_fraction: box centers shift by up to this fraction of the box
        side in each axis.
    fault_rate: probability that the detector misses a present object.  The
        draw is per (scene, object label), so the same object fails or
        succeeds identically under any query strategy.
    absent_mode: what a miss returns; "fail" yields nothing, "decoy" yields
        a background box scored against the background feature.
    prompt_match_threshold: when set, a prompt also matches objects whose
        feature cosine against the prompt reaches the threshold, not just
        label matches.  Confusable classes then steal detections.
    score_noise: stddev of Gaussian noise added to detection scores.
    """

    jitter_fraction: float = 0.0
    fault_rate: float = 0.0
    absent_mode: str = ABSENT_FAIL
    prompt_match_threshold: float | None = None
    score_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.jitter_fraction <= 1.0:
            raise InvalidParameterError(f"jitter_fraction {self.jitter_fraction}")
        if not 0.0 <= self.fault_rate <= 1.0:
            raise InvalidParameterError(f"fault_rate {self.fault_rate}")
        if self.absent_mode not in (ABSENT_FAIL, ABSENT_DECOY):
            raise InvalidParameterError(f"absent_mode '{self.absent_mode}'")
        if self.prompt_match_threshold is not None and not (
            -1.0 <= self.prompt_match_threshold <= 1.0
        ):
            raise InvalidParameterError(
                f"prompt_match_threshold {self.prompt_match_threshold}"
            )
        if self.score_noise < 0.0:
            raise InvalidParameterError(f"score_noise {self.score_noise}")


@dataclass
class SceneStore:
    """A full fixture dataset: scenes plus the class feature table."""

    feature_dim: int
    class_features: dict[str, np.ndarray]
    scenes: dict[str, SceneSpec]
    faults: DetectorFaults = field(default_factory=DetectorFaults)

    def to_json_dict(self) -> dict:
        return {
            "feature_dim": self.feature_dim,
            "class_features": {
                name: [float(x) for x in vec]
                for name, vec in self.class_features.items()
            },
            "faults": {
                "jitter_fraction": self.faults.jitter_fraction,
                "fault_rate": self.faults.fault_rate,
                "absent_mode": self.faults.absent_mode,
                "prompt_match_threshold": self.faults.prompt_match_threshold,
                "score_noise": self.faults.score_noise,
                "seed": self.faults.seed,
            },
            "scenes": {
                sid: {
                    "dims": [scene.dims.width, scene.dims.height],
                    "background": {
                        "label": scene.background_label,
                        "feature": [float(x) for x in scene.background_feature],
                    },
                    "objects": [
                        {
                            "label": obj.label,
                            "box": list(obj.box.as_tuple()),
                            "feature": [float(x) for x in obj.feature],
                        }
                        for obj in scene.objects
                    ],
                }
                for sid, scene in self.scenes.items()
            },
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SceneStore":
        faults = DetectorFaults(**data.get("faults", {}))
        scenes = {}
        for sid, sd in data["scenes"].items():
            bg = sd["background"]
            scenes[sid] = SceneSpec(
                dims=ImageDims(*(int(v) for v in sd["dims"])),
                background_label=bg["label"],
                background_feature=np.asarray(bg["feature"], dtype=np.float64),
                objects=tuple(
                    SceneObject(
                        label=od["label"],
                        box=Box(*(float(v) for v in od["box"])),
                        feature=np.asarray(od["feature"], dtype=np.float64),
                    )
                    for od in sd["objects"]
                ),
            )
        return cls(
            feature_dim=int(data["feature_dim"]),
            class_features={
                name: np.asarray(vec, dtype=np.float64)
                for name, vec in data["class_features"].items()
            },
            scenes=scenes,
            faults=faults,
        )

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), sort_keys=True, indent=None)
        )

    @classmethod
    def load(cls, path) -> "SceneStore":
        return cls.from_json_dict(json.loads(Path(path).read_text()))

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_json_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


class FixtureBackend:
    """Backend over a SceneStore.  Stateless per call, safe to share."""

    thread_safe = True

    def __init__(self, store: SceneStore, name: str = "fixture"):
        self.store = store
        self.name = name
        self._labels_lower = {
            label.lower(): label for label in store.class_features
        }

    # -- contract -----------------------------------------------------------

    def image_dims(self, image) -> ImageDims:
        return self._scene(image).dims

    def encode_region(self, image, box: Box) -> np.ndarray:
        """Area-weighted feature mix of everything the box covers.

        Object weights are intersection area over crop area; the background
        takes the remaining weight.  Weights sum to 1 before the final
        renormalization (objects are assumed not to overlap each other).
        """
        scene = self._scene(image)
        crop_area = box.area
        if crop_area <= 0.0:
            raise InvalidCropError(f"region {box.as_tuple()} has zero area")
        vec = np.zeros(self.store.feature_dim, dtype=np.float64)
        covered = 0.0
        for obj in scene.objects:
            w = obj.box.intersection_area(box) / crop_area
            if w > 0.0:
                vec += w * obj.feature
                covered += w
        vec += (1.0 - covered) * scene.background_feature
        norm = float(np.linalg.norm(vec))
        if norm < 1e-12:
            raise InvalidCropError("region features cancel to a zero vector")
        return vec / norm

    def encode_text(self, text: str) -> np.ndarray:
        """Class feature lookup by name, with a hashed fallback.

        Exact label match wins, then the first class whose label occurs as a
        substring of the text (class order), then a deterministic pseudo
        random unit vector so unknown text still encodes to something.
        """
        lowered = text.lower().strip()
        exact = self._labels_lower.get(lowered)
        if exact is not None:
            return self.store.class_features[exact].copy()
        for label_lower, label in self._labels_lower.items():
            if label_lower in lowered:
                return self.store.class_features[label].copy()
        rng = stable_rng("fixture-text", text)
        vec = rng.standard_normal(self.store.feature_dim)
        return vec / np.linalg.norm(vec)

    def detect(self, image, prompts: Sequence[str]) -> list[Detection]:
        """Best box per prompt, with configured imperfections.

        Each prompt is matched to scene objects by label, or additionally by
        feature similarity when prompt_match_threshold is set.  A matched
        object may still be dropped by the fault draw for (scene, label).

        Shared-pass failure: when several prompts arrive in one call and any
        of them draws a fault, the whole pass is treated as bad and every
        prompt falls back to absent handling.  Single-prompt calls only ever
        see their own fault.  The underlying fault draws are identical either
        way, so strategies differ only in blast radius.
        """
        scene = self._scene(image)
        faults = self.store.faults
        matches: list[tuple[int, SceneObject | None, np.ndarray]] = []
        for pos, prompt in enumerate(prompts):
            feat = self.encode_text(prompt)
            matches.append((pos, self._match_object(scene, prompt, feat), feat))

        fault_flags = {}
        for pos, obj, _ in matches:
            if faults.fault_rate > 0.0:
                key = obj.label if obj is not None else prompts[pos].lower()
                rng = stable_rng(faults.seed, "fault", image, key)
                fault_flags[pos] = bool(rng.uniform() < faults.fault_rate)
            else:
                fault_flags[pos] = False
        pass_poisoned = len(prompts) > 1 and any(fault_flags.values())

        out: list[Detection] = []
        for pos, obj, feat in matches:
            prompt = prompts[pos]
            failed = obj is None or fault_flags[pos] or pass_poisoned
            if failed:
                if faults.absent_mode == ABSENT_DECOY:
                    out.append(self._decoy(scene, image, prompt, feat, pos))
                continue
            box = self._jitter_box(scene, image, obj)
            cos = float(np.dot(feat, obj.feature))
            score = self._score(cos, image, prompt)
            out.append(Detection(box=box, score=score, class_index=pos))
        return out

    # -- internals ----------------------------------------------------------

    def _scene(self, image) -> SceneSpec:
        scene = self.store.scenes.get(str(image))
        if scene is None:
            raise UnknownImageError(f"no scene named '{image}'")
        return scene

    def _match_object(self, scene, prompt, prompt_feature):
        lowered = prompt.lower()
        best = None
        best_cos = -2.0
        threshold = self.store.faults.prompt_match_threshold
        for obj in scene.objects:
            label_hit = obj.label.lower() in lowered
            cos = float(np.dot(prompt_feature, obj.feature))
            sim_hit = threshold is not None and cos >= threshold
            if (label_hit or sim_hit) and cos > best_cos:
                best, best_cos = obj, cos
        return best

    def _jitter_box(self, scene, image, obj) -> Box:
        j = self.store.faults.jitter_fraction
        if j <= 0.0:
            return obj.box
        rng = stable_rng(self.store.faults.seed, "jitter", image, obj.label)
        dx = rng.uniform(-j, j) * obj.box.width
        dy = rng.uniform(-j, j) * obj.box.height
        cx, cy = obj.box.center
        x0, x1 = _place_interval(cx + dx, obj.box.width, float(scene.dims.width))
        y0, y1 = _place_interval(cy + dy, obj.box.height, float(scene.dims.height))
        return Box(x0, y0, x1, y1)

    def _score(self, cos: float, image, prompt: str) -> float:
        score = 0.5 * (cos + 1.0)
        sigma = self.store.faults.score_noise
        if sigma > 0.0:
            rng = stable_rng(self.store.faults.seed, "noise", image, prompt)
            score += rng.normal(0.0, sigma)
        return float(np.clip(score, 0.0, 1.0))

    def _decoy(self, scene, image, prompt, prompt_feature, pos) -> Detection:
        rng = stable_rng(self.store.faults.seed, "decoy", image, prompt)
        short = float(scene.dims.short_side)
        side = rng.uniform(0.2, 0.5) * short
        x0 = rng.uniform(0.0, scene.dims.width - side)
        y0 = rng.uniform(0.0, scene.dims.height - side)
        cos = float(np.dot(prompt_feature, scene.background_feature))
        return Detection(
            box=Box(x0, y0, x0 + side, y0 + side),
            score=self._score(cos, image, prompt),
            class_index=pos,
        )

    def fingerprint(self) -> str:
        return self.store.fingerprint()
