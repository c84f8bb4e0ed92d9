"""Audit an exported directory: file integrity and embedding round-trip.

Two checks, separable because they need different things installed:

  * ``verify_manifest_hashes`` re-hashes every file ``export_manifest.json``
    records and reports mismatches.  Pure file I/O.
  * ``verify_roundtrip`` replays the reference probes through the downstream
    runtime (the ``guidedcrop`` package) and compares its embeddings against
    the recorded vectors by cosine distance.  The reference vectors were
    computed straight from the serialized graphs at export time, so this
    compares two independent implementations of the directory contract.

Cosine distance is the criterion because the runtime unit-normalizes its
embeddings while references are stored raw; direction is what both sides
must agree on.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MissingDependencyError, ModelDirError, ProbeError
from .export import EXPORT_MANIFEST, ExportManifest, sha256_file
from .probes import load_probe_rows

DEFAULT_TOLERANCE = 1e-3


@dataclass(frozen=True)
class FileCheck:
    """One hash comparison from the export manifest."""

    name: str
    expected: str
    actual: str

    @property
    def passed(self) -> bool:
        return self.expected == self.actual


@dataclass(frozen=True)
class ProbeCheck:
    """One probe replayed through the downstream runtime."""

    kind: str
    index: int
    label: str
    cosine_distance: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.cosine_distance <= self.tolerance


@dataclass(frozen=True)
class RoundTripReport:
    checks: tuple[ProbeCheck, ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def worst(self) -> ProbeCheck:
        return max(self.checks, key=lambda check: check.cosine_distance)

    @property
    def failures(self) -> tuple[ProbeCheck, ...]:
        return tuple(check for check in self.checks if not check.passed)


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 minus the cosine similarity, guarded against zero vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    if denom == 0.0:
        return 1.0
    return float(1.0 - np.dot(a, b) / denom)


def verify_manifest_hashes(model_dir) -> list[FileCheck]:
    """Re-hash every file the export manifest records.

    Raises:
        ModelDirError: the directory has no export manifest.
    """
    root = Path(model_dir)
    manifest_path = root / EXPORT_MANIFEST
    if not manifest_path.is_file():
        raise ModelDirError(f"no {EXPORT_MANIFEST} under {root}")
    manifest = ExportManifest.load(manifest_path)
    checks = []
    for name in sorted(manifest.file_hashes):
        expected = manifest.file_hashes[name]
        path = root / name
        actual = sha256_file(path) if path.is_file() else "<missing>"
        checks.append(FileCheck(name=name, expected=expected, actual=actual))
    return checks


def _load_runtime_backend(model_dir):
    try:
        from guidedcrop.backends.runtime import GraphBackend
    except ImportError as exc:
        raise MissingDependencyError(
            "round-trip verification replays probes through the guidedcrop "
            "runtime; install the guidedcrop package with its runtime extra"
        ) from exc
    return GraphBackend(model_dir)


def verify_roundtrip(
    model_dir, probes_path, *, tolerance: float = DEFAULT_TOLERANCE
) -> RoundTripReport:
    """Replay every probe through the downstream runtime and compare.

    ``probes_path`` may be the probes file or the directory holding it;
    image probe files are resolved relative to the probes file.

    Raises:
        MissingDependencyError: the downstream runtime is not installed.
        ProbeError: a probe row is malformed or its image file is missing.
    """
    backend = _load_runtime_backend(model_dir)
    from guidedcrop.boxgeom import Box  # importable whenever the backend loaded
    path = Path(probes_path)
    if path.is_dir():
        rows = load_probe_rows(path)
        base = path
    else:
        rows = load_probe_rows(path)
        base = path.parent

    checks = []
    for row in rows:
        reference = np.asarray(row["vector"], dtype=np.float64)
        if row["kind"] == "image":
            image_path = base / row["file"]
            if not image_path.is_file():
                raise ProbeError(f"probe image missing: {image_path}")
            dims = backend.image_dims(image_path)
            full = Box(0.0, 0.0, float(dims.width), float(dims.height))
            measured = backend.encode_region(image_path, full)
            label = row["file"]
        else:
            measured = backend.encode_text(row["text"])
            label = row["text"] if row["text"] else "<empty string>"
        checks.append(
            ProbeCheck(
                kind=row["kind"],
                index=int(row["index"]),
                label=label,
                cosine_distance=cosine_distance(reference, measured),
                tolerance=tolerance,
            )
        )
    return RoundTripReport(checks=tuple(checks), tolerance=tolerance)
