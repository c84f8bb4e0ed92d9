"""Serialize a backbone into a self-contained model directory.

A model directory is the interchange unit between this tool and downstream
runtimes: TorchScript graphs for the encoders (and detector, when the
backbone has one), a fast-tokenizer file, and a ``manifest.json`` describing
shapes, normalization constants, context lengths, and pad ids.  Alongside it,
``export_manifest.json`` records provenance — source checkpoint ids and a
sha256 for every emitted file — so a directory can be audited later.

Exports are reproducible: the same backbone id written twice (in separate
runs) produces byte-identical files and therefore identical hashes.  Trace
order is part of the serialized type names, so it stays fixed: image encoder,
text encoder, detector.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .backbones import DetectorBundle, EncoderBundle, resolve_backbone
from .errors import IntegrityError

IMAGE_GRAPH = "image_encoder.pt"
TEXT_GRAPH = "text_encoder.pt"
DETECTOR_GRAPH = "detector.pt"
TOKENIZER_FILE = "tokenizer.json"
RUNTIME_MANIFEST = "manifest.json"
EXPORT_MANIFEST = "export_manifest.json"

# Text the example trace inputs are tokenized from; any phrase works, the
# traced graph is input-independent, but keeping it fixed aids reproducibility.
_TRACE_TEXT = "a photo of a cat"


@dataclass(frozen=True)
class ExportManifest:
    """Provenance record for one exported model directory."""

    backbone_id: str
    sources: dict[str, str]
    embedding_dim: int
    image_side: int
    norm_mean: tuple[float, float, float]
    norm_std: tuple[float, float, float]
    text_context_length: int
    pad_token_id: int
    detector: dict | None
    file_hashes: dict[str, str] = field(default_factory=dict)
    torch_version: str = ""
    transformers_version: str = ""

    def to_json(self) -> str:
        payload = asdict(self)
        payload["norm_mean"] = list(self.norm_mean)
        payload["norm_std"] = list(self.norm_std)
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def save(self, path: Path) -> None:
        path.write_text(self.to_json())

    @classmethod
    def from_dict(cls, payload: dict) -> "ExportManifest":
        data = dict(payload)
        data["norm_mean"] = tuple(data["norm_mean"])
        data["norm_std"] = tuple(data["norm_std"])
        return cls(**data)

    @classmethod
    def load(cls, path: Path) -> "ExportManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _token_ids(tokenizer_json: str, text: str, length: int, pad_id: int):
    import numpy as np
    from tokenizers import Tokenizer

    ids = list(Tokenizer.from_str(tokenizer_json).encode(text).ids)[:length]
    ids = ids + [pad_id] * (length - len(ids))
    return np.asarray(ids, dtype=np.int64)


def _trace_and_save(module, example, path: Path) -> None:
    import torch

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        graph = torch.jit.trace(module, example, strict=False)
        torch.jit.save(graph, str(path))


def export_models(backbone_id: str, output_dir) -> ExportManifest:
    """Export one backbone to ``output_dir`` and return its manifest.

    Creates the directory (parents included) if needed; existing files with
    the reserved names are overwritten.

    Raises:
        UnsupportedBackboneError: unknown backbone id.
        CheckpointUnavailableError: a hub recipe could not be fetched.
        IntegrityError: a written file does not hash to its recorded value.
    """
    import torch
    import transformers

    spec = resolve_backbone(backbone_id)
    encoders: EncoderBundle = spec.build_encoders()
    detector: DetectorBundle | None = (
        spec.build_detector() if spec.has_detector else None
    )

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)

    from .wrappers import DetectorWrapper, ImageEncoderWrapper, TextEncoderWrapper

    side = encoders.image_side
    _trace_and_save(
        ImageEncoderWrapper(encoders.model),
        torch.zeros(1, 3, side, side),
        out / IMAGE_GRAPH,
    )
    text_ids = _token_ids(
        encoders.tokenizer_json, _TRACE_TEXT,
        encoders.context_length, encoders.pad_token_id,
    )
    _trace_and_save(
        TextEncoderWrapper(encoders.model),
        torch.from_numpy(text_ids[None]),
        out / TEXT_GRAPH,
    )

    files = {
        "image_encoder": IMAGE_GRAPH,
        "text_encoder": TEXT_GRAPH,
        "tokenizer": TOKENIZER_FILE,
    }
    detector_section = None
    if detector is not None:
        det_ids = _token_ids(
            encoders.tokenizer_json, _TRACE_TEXT,
            detector.context_length, detector.pad_token_id,
        )
        _trace_and_save(
            DetectorWrapper(detector.model, detector.pad_token_id),
            (
                torch.zeros(1, 3, detector.image_side, detector.image_side),
                torch.from_numpy(det_ids[None]),
            ),
            out / DETECTOR_GRAPH,
        )
        files["detector"] = DETECTOR_GRAPH
        detector_section = {
            "image_side": detector.image_side,
            "context_length": detector.context_length,
            "pad_token_id": detector.pad_token_id,
            "norm_mean": list(detector.norm_mean),
            "norm_std": list(detector.norm_std),
        }

    (out / TOKENIZER_FILE).write_text(encoders.tokenizer_json)

    runtime_manifest = {
        "embedding_dim": encoders.embedding_dim,
        "image_side": encoders.image_side,
        "norm_mean": list(encoders.norm_mean),
        "norm_std": list(encoders.norm_std),
        "text_context_length": encoders.context_length,
        "pad_token_id": encoders.pad_token_id,
        "files": files,
    }
    if detector_section is not None:
        runtime_manifest["detector"] = detector_section
    (out / RUNTIME_MANIFEST).write_text(
        json.dumps(runtime_manifest, sort_keys=True, indent=2) + "\n"
    )

    emitted = sorted(set(files.values()) | {RUNTIME_MANIFEST})
    file_hashes = {name: sha256_file(out / name) for name in emitted}

    sources = {"encoders": encoders.source}
    if detector is not None:
        sources["detector"] = detector.source

    manifest = ExportManifest(
        backbone_id=backbone_id,
        sources=sources,
        embedding_dim=encoders.embedding_dim,
        image_side=encoders.image_side,
        norm_mean=tuple(encoders.norm_mean),
        norm_std=tuple(encoders.norm_std),
        text_context_length=encoders.context_length,
        pad_token_id=encoders.pad_token_id,
        detector=detector_section,
        file_hashes=file_hashes,
        torch_version=torch.__version__,
        transformers_version=transformers.__version__,
    )
    manifest.save(out / EXPORT_MANIFEST)

    for name, expected in manifest.file_hashes.items():
        actual = sha256_file(out / name)
        if actual != expected:
            raise IntegrityError(
                f"freshly written {name} hashes to {actual}, recorded {expected}"
            )
    return manifest
