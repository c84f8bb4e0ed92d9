"""Reference probes: fixed inputs with known-good embeddings.

``emit_reference_vectors`` writes a set of probe images (PNG) and probe
strings next to a ``probes.jsonl`` file that records the embedding each one
should produce.  The vectors are computed here, straight from the serialized
graphs and the documented preprocessing convention (scale pixels to [0, 1],
subtract the manifest mean, divide by the manifest std).  A downstream
runtime that loads the same directory can then be checked against the file —
two independent code paths meeting at the numbers.

Probe inputs are deterministic: a fixed text list and images drawn from a
seeded generator, with the all-zero image always included at index 0.
Repeated runs write byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import ModelDirError, ProbeError

PROBES_FILE = "probes.jsonl"
IMAGE_PROBE_COUNT = 16

TEXT_PROBES: tuple[str, ...] = (
    "",
    "a photo of a cat",
    "a photo of a dog",
    "a picture of a bird",
    "a small red toy",
    "a large green tree",
    "the fish in the bowl",
    "a blue car",
    "an animal in the dark",
    "a bright yellow flower",
    "a book on the table",
    "the lamp near the chair",
    "a truck outdoor",
    "a plant indoor",
    "zebra quantum xylophone",
    "a photo of a small dog close on a large ball",
)


@dataclass
class LoadedExport:
    """Direct reader for an exported directory (no downstream runtime)."""

    manifest: dict
    image_graph: object
    text_graph: object
    tokenizer: object

    @classmethod
    def load(cls, model_dir) -> "LoadedExport":
        import torch
        from tokenizers import Tokenizer

        root = Path(model_dir)
        manifest_path = root / "manifest.json"
        if not manifest_path.is_file():
            raise ModelDirError(f"no manifest.json under {root}")
        manifest = json.loads(manifest_path.read_text())
        files = manifest.get("files", {})
        try:
            image_graph = torch.jit.load(str(root / files["image_encoder"]))
            text_graph = torch.jit.load(str(root / files["text_encoder"]))
            tokenizer = Tokenizer.from_file(str(root / files["tokenizer"]))
        except KeyError as exc:
            raise ModelDirError(f"manifest lists no {exc.args[0]} file") from exc
        except Exception as exc:
            raise ModelDirError(f"cannot load model directory {root}: {exc}") from exc
        image_graph.eval()
        text_graph.eval()
        return cls(
            manifest=manifest,
            image_graph=image_graph,
            text_graph=text_graph,
            tokenizer=tokenizer,
        )

    def image_vector(self, rgb: np.ndarray) -> np.ndarray:
        """Embed an RGB uint8 array through the exported image graph."""
        import torch

        side = int(self.manifest["image_side"])
        arr = np.asarray(rgb).astype(np.float32)
        if arr.shape[0] != side or arr.shape[1] != side:
            arr = cv2.resize(arr, (side, side), interpolation=cv2.INTER_LINEAR)
        arr = arr / 255.0
        mean = np.asarray(self.manifest["norm_mean"], dtype=np.float32)
        std = np.asarray(self.manifest["norm_std"], dtype=np.float32)
        pixels = (arr - mean) / std
        tensor = torch.from_numpy(np.ascontiguousarray(pixels.transpose(2, 0, 1))[None])
        with torch.inference_mode():
            out = self.image_graph(tensor)
        return out[0].numpy().astype(np.float64)

    def text_vector(self, text: str) -> np.ndarray:
        """Embed a string through the exported text graph."""
        import torch

        length = int(self.manifest["text_context_length"])
        pad_id = int(self.manifest["pad_token_id"])
        ids = list(self.tokenizer.encode(text).ids)[:length]
        ids = ids + [pad_id] * (length - len(ids))
        tensor = torch.from_numpy(np.asarray(ids, dtype=np.int64)[None])
        with torch.inference_mode():
            out = self.text_graph(tensor)
        return out[0].numpy().astype(np.float64)


def _probe_images(seed: int, side: int) -> list[np.ndarray]:
    """The image probe set: the zero image, then seeded noise at mixed sizes.

    Off-native sizes are included so a consumer's resize path gets exercised,
    not just the pass-through case.
    """
    rng = np.random.default_rng(seed)
    sizes = [(side, side)] * 10
    sizes += [(2 * side, 2 * side)] * 3
    sizes += [(side + side // 2 + 1, side + side // 4)] * 3
    images = [np.zeros((side, side, 3), dtype=np.uint8)]
    for height, width in sizes[1:IMAGE_PROBE_COUNT]:
        images.append(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))
    return images


def emit_reference_vectors(model_dir, out_dir, *, seed: int = 7) -> Path:
    """Write probe inputs and their reference embeddings for a model directory.

    Returns the path of the written ``probes.jsonl``.  Image probes land next
    to it as ``probe_image_NN.png``; text probes are stored inline.
    """
    export = LoadedExport.load(model_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    side = int(export.manifest["image_side"])
    for index, rgb in enumerate(_probe_images(seed, side)):
        name = f"probe_image_{index:02d}.png"
        if not cv2.imwrite(str(out / name), np.ascontiguousarray(rgb[:, :, ::-1])):
            raise ProbeError(f"cannot write probe image {out / name}")
        rows.append({
            "kind": "image",
            "index": index,
            "file": name,
            "vector": export.image_vector(rgb).tolist(),
        })
    for index, text in enumerate(TEXT_PROBES):
        rows.append({
            "kind": "text",
            "index": index,
            "text": text,
            "vector": export.text_vector(text).tolist(),
        })

    path = out / PROBES_FILE
    with open(path, "w") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def load_probe_rows(probes_path) -> list[dict]:
    """Parse a probes file, validating the fields each row must carry."""
    path = Path(probes_path)
    if path.is_dir():
        path = path / PROBES_FILE
    if not path.is_file():
        raise ProbeError(f"no probes file at {path}")
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProbeError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
        kind = row.get("kind")
        if kind not in ("image", "text"):
            raise ProbeError(f"{path}:{lineno}: unknown probe kind {kind!r}")
        if "vector" not in row or not isinstance(row["vector"], list):
            raise ProbeError(f"{path}:{lineno}: probe row has no vector")
        if kind == "image" and "file" not in row:
            raise ProbeError(f"{path}:{lineno}: image probe has no file")
        if kind == "text" and "text" not in row:
            raise ProbeError(f"{path}:{lineno}: text probe has no text")
        rows.append(row)
    if not rows:
        raise ProbeError(f"{path}: probes file is empty")
    return rows
