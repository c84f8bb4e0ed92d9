"""Serialized-graph backend.

Loads a model directory produced by the export tooling: TorchScript graphs
for the image encoder, text encoder, and (optionally) the detector, plus a
fast-tokenizer file and a manifest describing shapes and normalization.

Graph contracts:
  image_encoder(pixels float32 [1, 3, S, S]) -> [1, D]
  text_encoder(input_ids int64 [1, L])       -> [1, D]
  detector(pixels float32 [1, 3, Sd, Sd], input_ids int64 [1, Ld])
      -> (query_logits [1, Q], boxes [1, Q, 4])  boxes are cxcywh in [0, 1]

The detector is queried one prompt at a time; per-query class logits are
independent across prompts for this detector family, so multi-prompt calls
are computed by stacking single-prompt passes and assigning each query to
its best prompt, which matches running the prompts jointly.

torch and tokenizers are imported lazily so the rest of the package works
without them.
"""

from __future__ import annotations

import hashlib
import json
from collections import OrderedDict
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from ..boxgeom import Box, ImageDims
from ..detection import Detection
from ..errors import (
    InvalidModelError,
    InvalidParameterError,
    ModelLoadError,
    UnknownImageError,
)
from ..fusion import unit_normalize
from .preprocess import PreprocessSpec, crop_resize, normalize_channels

REQUIRED_KEYS = ("embedding_dim", "image_side", "norm_mean", "norm_std",
                 "text_context_length", "pad_token_id", "files")


def _torch():
    try:
        import torch
    except ImportError as exc:
        raise ModelLoadError(
            "the graph runtime needs torch; install the 'runtime' extra"
        ) from exc
    return torch


def _tokenizer_lib():
    try:
        from tokenizers import Tokenizer
    except ImportError as exc:
        raise ModelLoadError(
            "the graph runtime needs tokenizers; install the 'runtime' extra"
        ) from exc
    return Tokenizer


class GraphBackend:
    """Backend over an exported model directory."""

    thread_safe = False

    def __init__(self, model_dir, name: str = "runtime", image_cache: int = 8):
        self.model_dir = Path(model_dir)
        self.name = name
        manifest_path = self.model_dir / "manifest.json"
        if not manifest_path.is_file():
            raise ModelLoadError(f"no manifest.json under {self.model_dir}")
        self.manifest = json.loads(manifest_path.read_text())
        for key in REQUIRED_KEYS:
            if key not in self.manifest:
                raise ModelLoadError(f"manifest missing required key '{key}'")
        self._manifest_bytes = manifest_path.read_bytes()

        torch = _torch()
        files = self.manifest["files"]
        self._image_graph = self._load_graph(torch, files, "image_encoder")
        self._text_graph = self._load_graph(torch, files, "text_encoder")
        self._det_graph = None
        if "detector" in files and self.manifest.get("detector"):
            self._det_graph = self._load_graph(torch, files, "detector")

        tok_name = files.get("tokenizer")
        if not tok_name:
            raise ModelLoadError("manifest lists no tokenizer file")
        tok_path = self.model_dir / tok_name
        if not tok_path.is_file():
            raise ModelLoadError(f"tokenizer file missing: {tok_path}")
        self._tokenizer = _tokenizer_lib().from_file(str(tok_path))

        self.spec = PreprocessSpec(
            target_side=int(self.manifest["image_side"]),
            norm_mean=tuple(self.manifest["norm_mean"]),
            norm_std=tuple(self.manifest["norm_std"]),
        )
        det = self.manifest.get("detector") or {}
        self._det_spec = None
        if self._det_graph is not None:
            self._det_spec = PreprocessSpec(
                target_side=int(det["image_side"]),
                norm_mean=tuple(det.get("norm_mean", self.manifest["norm_mean"])),
                norm_std=tuple(det.get("norm_std", self.manifest["norm_std"])),
            )
            self._det_context = int(det["context_length"])
            self._det_pad = int(det.get("pad_token_id", 0))
        self._cache: OrderedDict[str, np.ndarray] = OrderedDict()
        self._cache_size = image_cache
        self._check_shapes(torch)

    def _load_graph(self, torch, files: dict, key: str):
        rel = files.get(key)
        if not rel:
            raise ModelLoadError(f"manifest lists no {key} file")
        path = self.model_dir / rel
        if not path.is_file():
            raise ModelLoadError(f"{key} file missing: {path}")
        try:
            graph = torch.jit.load(str(path), map_location="cpu")
        except Exception as exc:
            raise ModelLoadError(f"cannot deserialize {key} from {path}: {exc}") from exc
        graph.eval()
        return graph

    def _check_shapes(self, torch):
        side = int(self.manifest["image_side"])
        dim = int(self.manifest["embedding_dim"])
        with torch.inference_mode():
            out = self._image_graph(torch.zeros(1, 3, side, side))
        if tuple(out.shape) != (1, dim):
            raise InvalidModelError(
                f"image encoder produced shape {tuple(out.shape)}, "
                f"manifest says dim {dim}"
            )

    # -- contract -----------------------------------------------------------

    def image_dims(self, image) -> ImageDims:
        arr = self._load_image(image)
        return ImageDims(width=arr.shape[1], height=arr.shape[0])

    def encode_region(self, image, box: Box) -> np.ndarray:
        torch = _torch()
        arr = self._load_image(image)
        pixels = normalize_channels(crop_resize(arr, box, self.spec), self.spec)
        tensor = torch.from_numpy(
            np.ascontiguousarray(pixels.transpose(2, 0, 1))[None]
        )
        with torch.inference_mode():
            out = self._image_graph(tensor)
        return unit_normalize(out[0].numpy().astype(np.float64))

    def encode_text(self, text: str) -> np.ndarray:
        torch = _torch()
        ids = self._token_ids(
            text, int(self.manifest["text_context_length"]),
            int(self.manifest["pad_token_id"]),
        )
        with torch.inference_mode():
            out = self._text_graph(torch.from_numpy(ids[None]))
        return unit_normalize(out[0].numpy().astype(np.float64))

    def detect(self, image, prompts: Sequence[str]) -> list[Detection]:
        """Best box per prompt; joint calls assign each query to one prompt."""
        if self._det_graph is None:
            raise ModelLoadError("this model directory has no detector graph")
        if not prompts:
            raise InvalidParameterError("detect called with no prompts")
        torch = _torch()
        arr = self._load_image(image)
        h, w = arr.shape[:2]
        resized = cv2.resize(
            arr.astype(np.float32),
            (self._det_spec.target_side, self._det_spec.target_side),
            interpolation=cv2.INTER_LINEAR,
        )
        pixels = normalize_channels(resized, self._det_spec)
        tensor = torch.from_numpy(np.ascontiguousarray(pixels.transpose(2, 0, 1))[None])

        score_rows, box_rows = [], []
        with torch.inference_mode():
            for prompt in prompts:
                ids = self._token_ids(prompt, self._det_context, self._det_pad)
                logits, boxes = self._det_graph(tensor, torch.from_numpy(ids[None]))
                score_rows.append(
                    1.0 / (1.0 + np.exp(-logits[0].numpy().astype(np.float64)))
                )
                box_rows.append(boxes[0].numpy().astype(np.float64))
        scores = np.stack(score_rows)  # [k, Q]

        out: list[Detection] = []
        if len(prompts) == 1:
            q = int(np.argmax(scores[0]))
            out.append(self._detection(box_rows[0][q], scores[0][q], 0, w, h))
            return out
        owner = np.argmax(scores, axis=0)  # ties: lowest prompt position
        for pos in range(len(prompts)):
            owned = np.flatnonzero(owner == pos)
            if owned.size == 0:
                continue
            q = int(owned[np.argmax(scores[pos][owned])])
            out.append(self._detection(box_rows[pos][q], scores[pos][q], pos, w, h))
        return out

    # -- internals ----------------------------------------------------------

    def _detection(self, cxcywh, score, pos, width, height) -> Detection:
        cx, cy, bw, bh = (float(v) for v in cxcywh)
        x0 = np.clip((cx - bw / 2.0) * width, 0.0, width)
        x1 = np.clip((cx + bw / 2.0) * width, 0.0, width)
        y0 = np.clip((cy - bh / 2.0) * height, 0.0, height)
        y1 = np.clip((cy + bh / 2.0) * height, 0.0, height)
        box = Box(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))
        return Detection(box=box, score=float(np.clip(score, 0.0, 1.0)), class_index=pos)

    def _token_ids(self, text: str, length: int, pad_id: int) -> np.ndarray:
        enc = self._tokenizer.encode(text)
        ids = list(enc.ids)[:length]
        ids = ids + [pad_id] * (length - len(ids))
        return np.asarray(ids, dtype=np.int64)

    def _load_image(self, image) -> np.ndarray:
        key = str(image)
        cached = self._cache.get(key)
        if cached is not None:
            self._cache.move_to_end(key)
            return cached
        arr = cv2.imread(key, cv2.IMREAD_COLOR)
        if arr is None:
            raise UnknownImageError(f"cannot read image file '{key}'")
        arr = cv2.cvtColor(arr, cv2.COLOR_BGR2RGB)
        self._cache[key] = arr
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return arr

    def fingerprint(self) -> str:
        return hashlib.sha256(self._manifest_bytes).hexdigest()
