"""Dataset manifests, object-size utilities, and the synthetic generator.

A manifest is a JSONL file with one sample per line plus a JSON file listing
class names in index order.  Samples carry either an inline bounding box or
a path to a mask image; relative object size is box area over image area.

The synthetic generator builds scene fixtures with controlled geometry:
class features are constructed with a chosen pairwise cosine, and each scene
places one object on a background whose feature has a chosen cosine (the
"confusability") against a distractor class.  Because the features are
orthonormal up to those two knobs, baseline and guided outcomes are
predictable analytically, which is what the claim experiments lean on.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import cv2
import numpy as np

from .backends.fixture import (
    ABSENT_FAIL,
    DetectorFaults,
    SceneObject,
    SceneSpec,
    SceneStore,
)
from .boxgeom import Box, ImageDims, box_from_mask, relative_object_size
from .errors import InvalidParameterError, NoObjectError, UnknownImageError


@dataclass
class SampleRecord:
    """One manifest line."""

    id: str
    image: str
    label: int
    bbox: Box | None = None
    mask: str | None = None
    dims: tuple[int, int] | None = None
    size: float | None = None

    def to_json_dict(self) -> dict:
        out: dict = {"id": self.id, "image": self.image, "label": self.label}
        if self.bbox is not None:
            out["bbox"] = list(self.bbox.as_tuple())
        if self.mask is not None:
            out["mask"] = self.mask
        if self.dims is not None:
            out["dims"] = list(self.dims)
        if self.size is not None:
            out["size"] = self.size
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "SampleRecord":
        bbox = data.get("bbox")
        dims = data.get("dims")
        return cls(
            id=str(data["id"]),
            image=str(data["image"]),
            label=int(data["label"]),
            bbox=Box(*(float(v) for v in bbox)) if bbox is not None else None,
            mask=data.get("mask"),
            dims=(int(dims[0]), int(dims[1])) if dims is not None else None,
            size=float(data["size"]) if data.get("size") is not None else None,
        )


@dataclass
class DatasetManifest:
    class_names: list[str]
    samples: list[SampleRecord]

    def __post_init__(self):
        if len(set(self.class_names)) != len(self.class_names):
            raise InvalidParameterError("class names must be unique")
        for s in self.samples:
            if not 0 <= s.label < len(self.class_names):
                raise InvalidParameterError(
                    f"sample '{s.id}' label {s.label} outside "
                    f"0..{len(self.class_names) - 1}"
                )

    def __len__(self) -> int:
        return len(self.samples)


def save_manifest(manifest: DatasetManifest, samples_path, classes_path) -> None:
    lines = [
        json.dumps(s.to_json_dict(), sort_keys=True) for s in manifest.samples
    ]
    samples_path, classes_path = Path(samples_path), Path(classes_path)
    samples_path.parent.mkdir(parents=True, exist_ok=True)
    classes_path.parent.mkdir(parents=True, exist_ok=True)
    samples_path.write_text("\n".join(lines) + ("\n" if lines else ""))
    classes_path.write_text(json.dumps(manifest.class_names, indent=0))


def load_manifest(samples_path, classes_path) -> DatasetManifest:
    class_names = json.loads(Path(classes_path).read_text())
    if not isinstance(class_names, list) or not all(
        isinstance(c, str) for c in class_names
    ):
        raise InvalidParameterError(f"{classes_path} must hold a JSON list of names")
    samples = []
    for ln, line in enumerate(Path(samples_path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            samples.append(SampleRecord.from_json_dict(json.loads(line)))
        except (KeyError, ValueError, TypeError) as exc:
            raise InvalidParameterError(
                f"{samples_path}:{ln}: bad manifest line: {exc}"
            ) from exc
    return DatasetManifest(class_names=class_names, samples=samples)


def load_descriptions(path) -> dict[str, list[str]]:
    """Class name -> prompt list, from a JSON object file."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise InvalidParameterError(f"{path} must hold a JSON object")
    out = {}
    for name, prompts in data.items():
        if not isinstance(prompts, list) or not all(
            isinstance(p, str) for p in prompts
        ):
            raise InvalidParameterError(
                f"{path}: prompts for '{name}' must be a list of strings"
            )
        out[str(name)] = list(prompts)
    return out


def load_mask(path) -> np.ndarray:
    arr = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if arr is None:
        raise UnknownImageError(f"cannot read mask file '{path}'")
    return arr


def annotation_box(record: SampleRecord, mask_root=None) -> Box:
    """The sample's object box, from its inline bbox or its mask file."""
    if record.bbox is not None:
        return record.bbox
    if record.mask is None:
        raise NoObjectError(f"sample '{record.id}' has neither bbox nor mask")
    path = Path(mask_root) / record.mask if mask_root else Path(record.mask)
    return box_from_mask(load_mask(path))


def compute_object_size(
    record: SampleRecord, dims: ImageDims | None = None, mask_root=None
) -> float:
    """Relative object size for one sample.

    Args:
        record: the sample; its cached `size` is ignored here.
        dims: image dimensions; falls back to the record's dims field.
        mask_root: directory that mask paths are relative to.
    """
    if dims is None:
        if record.dims is None:
            raise InvalidParameterError(
                f"sample '{record.id}' has no dims and none were provided"
            )
        dims = ImageDims(*record.dims)
    return relative_object_size(annotation_box(record, mask_root), dims)


def ensure_object_sizes(
    manifest: DatasetManifest, dims_resolver=None, mask_root=None
) -> None:
    """Fill in missing `size` fields in place.

    dims_resolver maps a sample's image reference to ImageDims when the
    record itself lacks dimensions (a backend's image_dims works).
    """
    for rec in manifest.samples:
        if rec.size is not None:
            continue
        dims = None
        if rec.dims is not None:
            dims = ImageDims(*rec.dims)
        elif dims_resolver is not None:
            dims = dims_resolver(rec.image)
        rec.size = compute_object_size(rec, dims, mask_root)


def filter_by_object_size(
    manifest: DatasetManifest, max_ratio: float, dims_resolver=None, mask_root=None
) -> DatasetManifest:
    """Samples whose relative object size does not exceed max_ratio.

    The comparison is inclusive: size == max_ratio stays in.
    """
    if not 0.0 < max_ratio <= 1.0:
        raise InvalidParameterError(f"max_ratio must be in (0, 1], got {max_ratio}")
    ensure_object_sizes(manifest, dims_resolver, mask_root)
    kept = [r for r in manifest.samples if r.size <= max_ratio]
    return DatasetManifest(class_names=list(manifest.class_names), samples=kept)


def size_sweep_thresholds() -> list[float]:
    """The 20 size thresholds 0.05, 0.10, ..., 1.00."""
    return [i / 20 for i in range(1, 21)]


# -- synthetic generation -----------------------------------------------------


def _as_range(value, name: str) -> tuple[float, float]:
    if isinstance(value, (int, float)):
        value = (float(value), float(value))
    lo, hi = float(value[0]), float(value[1])
    if lo > hi:
        raise InvalidParameterError(f"{name} range {value} is inverted")
    return lo, hi


@dataclass(frozen=True)
class SynthParams:
    """Generator settings.

    object_size_range and confusability accept a scalar or a (lo, hi) pair;
    scalars mean a degenerate range.  confusability is the cosine between a
    scene's background feature and its distractor class feature, so 0 means
    backgrounds carry no class signal at all and values near 1 make the
    full-image embedding look like the wrong class.
    """

    n_samples: int = 500
    n_classes: int = 8
    feature_dim: int = 32
    image_side: int = 224
    object_size_range: tuple[float, float] | float = (0.03, 0.2)
    confusability: tuple[float, float] | float = (0.1, 0.7)
    class_cos: float = 0.0
    aspect_jitter: float = 0.0
    jitter_fraction: float = 0.0
    fault_rate: float = 0.0
    absent_mode: str = ABSENT_FAIL
    prompt_match_threshold: float | None = None
    score_noise: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_samples < 1:
            raise InvalidParameterError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.n_classes < 2:
            raise InvalidParameterError(f"n_classes must be >= 2, got {self.n_classes}")
        needed = self.n_classes + (2 if self.class_cos > 0.0 else 1)
        if self.feature_dim < needed:
            raise InvalidParameterError(
                f"feature_dim {self.feature_dim} too small for {self.n_classes} "
                f"classes plus background directions (need >= {needed})"
            )
        if self.image_side < 8:
            raise InvalidParameterError(f"image_side must be >= 8, got {self.image_side}")
        lo, hi = _as_range(self.object_size_range, "object_size_range")
        if not (0.0 < lo and hi <= 1.0):
            raise InvalidParameterError(
                f"object_size_range {self.object_size_range} outside (0, 1]"
            )
        lo, hi = _as_range(self.confusability, "confusability")
        if not (0.0 <= lo and hi <= 1.0):
            raise InvalidParameterError(
                f"confusability {self.confusability} outside [0, 1]"
            )
        if not 0.0 <= self.class_cos < 1.0:
            raise InvalidParameterError(f"class_cos must be in [0, 1), got {self.class_cos}")
        if not 0.0 <= self.aspect_jitter < 0.5:
            raise InvalidParameterError(
                f"aspect_jitter must be in [0, 0.5), got {self.aspect_jitter}"
            )


def _orthonormal_columns(rng, dim: int, count: int) -> np.ndarray:
    """`count` orthonormal dim-vectors (columns), deterministic for a rng."""
    mat = rng.standard_normal((dim, count))
    q, r = np.linalg.qr(mat)
    return q * np.sign(np.diag(r))


def class_feature_table(
    rng, dim: int, n_classes: int, class_cos: float
) -> tuple[np.ndarray, np.ndarray]:
    """Unit class features with the requested pairwise cosine.

    Returns (features [n, dim], basis [dim, m]) where `basis` spans every
    direction the features use; background perpendiculars are drawn outside
    that span.
    """
    if class_cos == 0.0:
        basis = _orthonormal_columns(rng, dim, n_classes)
        return basis.T.copy(), basis
    basis = _orthonormal_columns(rng, dim, n_classes + 1)
    shared = basis[:, 0]
    uniques = basis[:, 1:]
    a = np.sqrt(class_cos)
    b = np.sqrt(1.0 - class_cos)
    feats = (a * shared[:, None] + b * uniques).T
    return feats.copy(), basis


def _perpendicular(rng, basis: np.ndarray) -> np.ndarray:
    """Unit vector orthogonal to every column of `basis`."""
    dim = basis.shape[0]
    for _ in range(16):
        v = rng.standard_normal(dim)
        v = v - basis @ (basis.T @ v)
        norm = float(np.linalg.norm(v))
        if norm > 1e-9:
            return v / norm
    raise InvalidParameterError("could not find a direction outside the class span")


def generate_synthetic_dataset(
    params: SynthParams,
) -> tuple[DatasetManifest, SceneStore]:
    """Build a deterministic scene dataset from generator settings.

    Each scene holds one object whose feature is exactly its class feature,
    on a background mixing the distractor class feature (weight set by the
    confusability cosine) with a direction orthogonal to every class.  The
    full-image embedding therefore scores the true class by object area and
    the distractor by background area times confusability, which makes the
    expected behavior of cropping checkable by hand.

    Returns:
        (manifest, scene store); sample ids and scene ids coincide.
    """
    params.validate()
    rng = np.random.default_rng(params.seed)
    dim = params.feature_dim
    names = [f"class_{i:02d}" for i in range(params.n_classes)]
    feats, basis = class_feature_table(rng, dim, params.n_classes, params.class_cos)

    size_lo, size_hi = _as_range(params.object_size_range, "object_size_range")
    conf_lo, conf_hi = _as_range(params.confusability, "confusability")
    side = float(params.image_side)
    dims = ImageDims(params.image_side, params.image_side)

    scenes: dict[str, SceneSpec] = {}
    samples: list[SampleRecord] = []
    for i in range(params.n_samples):
        label = int(rng.integers(params.n_classes))
        other = int(rng.integers(params.n_classes - 1))
        distractor = other + 1 if other >= label else other

        s = rng.uniform(size_lo, size_hi)
        aspect = 1.0
        if params.aspect_jitter > 0.0:
            aspect = 1.0 + rng.uniform(-params.aspect_jitter, params.aspect_jitter)
        bw = min(side, side * np.sqrt(s * aspect))
        bh = min(side, side * np.sqrt(s / aspect))
        x0 = rng.uniform(0.0, side - bw)
        y0 = rng.uniform(0.0, side - bh)
        box = Box(x0, y0, x0 + bw, y0 + bh)

        c = rng.uniform(conf_lo, conf_hi)
        perp = _perpendicular(rng, basis)
        background = c * feats[distractor] + np.sqrt(1.0 - c * c) * perp

        sid = f"s{i:05d}"
        scenes[sid] = SceneSpec(
            dims=dims,
            background_label="background",
            background_feature=background,
            objects=(SceneObject(label=names[label], box=box, feature=feats[label]),),
        )
        samples.append(
            SampleRecord(
                id=sid,
                image=sid,
                label=label,
                bbox=box,
                dims=(params.image_side, params.image_side),
                size=relative_object_size(box, dims),
            )
        )

    faults = DetectorFaults(
        jitter_fraction=params.jitter_fraction,
        fault_rate=params.fault_rate,
        absent_mode=params.absent_mode,
        prompt_match_threshold=params.prompt_match_threshold,
        score_noise=params.score_noise,
        seed=params.seed,
    )
    store = SceneStore(
        feature_dim=dim,
        class_features={name: feats[i] for i, name in enumerate(names)},
        scenes=scenes,
        faults=faults,
    )
    return DatasetManifest(class_names=names, samples=samples), store


def write_synthetic_dataset(out_dir, params: SynthParams) -> dict[str, str]:
    """Generate and write manifest.jsonl, classes.json, scenes.json.

    Returns the written paths keyed by role.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest, store = generate_synthetic_dataset(params)
    paths = {
        "manifest": str(out / "manifest.jsonl"),
        "classes": str(out / "classes.json"),
        "scenes": str(out / "scenes.json"),
    }
    save_manifest(manifest, paths["manifest"], paths["classes"])
    store.save(paths["scenes"])
    (out / "params.json").write_text(json.dumps(asdict(params), sort_keys=True, indent=2))
    paths["params"] = str(out / "params.json")
    return paths
