"""Backbone registry and component builders.

A backbone id names a reproducible recipe for the contents of one model
directory: which image/text encoder pair to use, whether a detector rides
along, and every constant the runtime manifest needs (normalization, context
lengths, pad ids).

Two families exist:

  * ``tiny-*`` ids build small randomly-initialized models from fixed
    configurations and a seed derived from the backbone id.  They need no
    network access and exist so the full export/verify path can run anywhere,
    including CI.
  * hub ids (``clip-vit-b32`` and friends) download pretrained checkpoints.
    They are recipes for real deployments and fail with a clear error when
    the hub is unreachable.

Every builder returns plain bundles; serialization lives in ``export``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

from .errors import CheckpointUnavailableError, UnsupportedBackboneError

# Normalization constants used by the pretrained checkpoints below; the tiny
# models reuse them so exported directories look alike everywhere.
_CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
_CLIP_STD = (0.26862954, 0.26130258, 0.27577711)

_TINY_VOCAB_SIZE = 64
_TINY_PAD_ID = 0
_TINY_UNK_ID = 1
_TINY_BOS_ID = _TINY_VOCAB_SIZE - 2
_TINY_EOS_ID = _TINY_VOCAB_SIZE - 1

# Everyday words so text probes tokenize to distinct, stable id sequences.
_TINY_WORDS = (
    "a", "an", "the", "photo", "picture", "of", "on", "in",
    "cat", "dog", "bird", "fish", "car", "truck", "tree", "flower",
    "cup", "bowl", "chair", "table", "toy", "ball", "book", "lamp",
    "small", "large", "red", "blue", "green", "yellow", "dark", "bright",
    "object", "animal", "plant", "machine", "indoor", "outdoor", "close", "far",
)


@dataclass(frozen=True)
class EncoderBundle:
    """An image/text encoder pair plus the constants the runtime needs."""

    model: object  # exposes get_image_features / get_text_features
    tokenizer_json: str
    embedding_dim: int
    image_side: int
    norm_mean: tuple[float, float, float]
    norm_std: tuple[float, float, float]
    context_length: int
    pad_token_id: int
    source: str


@dataclass(frozen=True)
class DetectorBundle:
    """A prompt-conditioned detector; shares the encoder tokenizer."""

    model: object  # forward(input_ids, pixel_values, attention_mask)
    image_side: int
    norm_mean: tuple[float, float, float]
    norm_std: tuple[float, float, float]
    context_length: int
    pad_token_id: int
    source: str


@dataclass(frozen=True)
class BackboneSpec:
    """One registry entry: how to build the pieces of a model directory."""

    backbone_id: str
    description: str
    offline: bool
    build_encoders: Callable[[], EncoderBundle]
    build_detector: Callable[[], DetectorBundle] | None = None

    @property
    def has_detector(self) -> bool:
        return self.build_detector is not None


def _stable_seed(*parts: str) -> int:
    """Map strings to a fixed 32-bit seed, independent of process state."""
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def _tiny_tokenizer_json() -> str:
    """Serialize a dense word-level tokenizer over the tiny vocabulary.

    Ids are contiguous: pad, unk, the word list, numbered fillers, then the
    start/end specials at the top of the range.  The end-of-text id is the
    largest id on purpose — both encoder families pool the text sequence at
    that token, one of them by taking the position of the maximum id.
    """
    from tokenizers import Tokenizer
    from tokenizers.models import WordLevel
    from tokenizers.normalizers import Lowercase
    from tokenizers.pre_tokenizers import Whitespace
    from tokenizers.processors import TemplateProcessing

    vocab = {"[PAD]": _TINY_PAD_ID, "[UNK]": _TINY_UNK_ID}
    for word in _TINY_WORDS:
        vocab[word] = len(vocab)
    filler = 0
    while len(vocab) < _TINY_BOS_ID:
        vocab[f"[FILL{filler:02d}]"] = len(vocab)
        filler += 1
    vocab["<|startoftext|>"] = _TINY_BOS_ID
    vocab["<|endoftext|>"] = _TINY_EOS_ID

    tok = Tokenizer(WordLevel(vocab, unk_token="[UNK]"))
    tok.normalizer = Lowercase()
    tok.pre_tokenizer = Whitespace()
    tok.post_processor = TemplateProcessing(
        single="<|startoftext|> $A <|endoftext|>",
        special_tokens=[
            ("<|startoftext|>", _TINY_BOS_ID),
            ("<|endoftext|>", _TINY_EOS_ID),
        ],
    )
    return tok.to_str(pretty=True)


def _tiny_text_config() -> dict:
    return dict(
        vocab_size=_TINY_VOCAB_SIZE,
        hidden_size=32,
        intermediate_size=64,
        num_hidden_layers=2,
        num_attention_heads=2,
        max_position_embeddings=16,
        bos_token_id=_TINY_BOS_ID,
        eos_token_id=_TINY_EOS_ID,
        pad_token_id=_TINY_PAD_ID,
    )


def _tiny_vision_config() -> dict:
    return dict(
        hidden_size=32,
        intermediate_size=64,
        num_hidden_layers=2,
        num_attention_heads=2,
        image_size=32,
        patch_size=8,
    )


def _build_tiny_encoders(backbone_id: str) -> EncoderBundle:
    import torch
    from transformers import CLIPConfig, CLIPModel

    torch.manual_seed(_stable_seed(backbone_id, "encoders"))
    config = CLIPConfig(
        text_config=dict(_tiny_text_config(), projection_dim=24),
        vision_config=dict(_tiny_vision_config(), projection_dim=24),
        projection_dim=24,
    )
    model = CLIPModel(config).eval()
    return EncoderBundle(
        model=model,
        tokenizer_json=_tiny_tokenizer_json(),
        embedding_dim=config.projection_dim,
        image_side=config.vision_config.image_size,
        norm_mean=_CLIP_MEAN,
        norm_std=_CLIP_STD,
        context_length=12,
        pad_token_id=_TINY_PAD_ID,
        source=f"builtin:{backbone_id}",
    )


def _build_tiny_detector(backbone_id: str) -> DetectorBundle:
    import torch
    from transformers import OwlViTConfig, OwlViTForObjectDetection

    torch.manual_seed(_stable_seed(backbone_id, "detector"))
    # The detection head computes query/image similarities in the text
    # tower's hidden width, so projection_dim must match it.
    config = OwlViTConfig(
        text_config=_tiny_text_config(),
        vision_config=_tiny_vision_config(),
        projection_dim=32,
    )
    model = OwlViTForObjectDetection(config).eval()
    return DetectorBundle(
        model=model,
        image_side=config.vision_config.image_size,
        norm_mean=_CLIP_MEAN,
        norm_std=_CLIP_STD,
        context_length=10,
        pad_token_id=_TINY_PAD_ID,
        source=f"builtin:{backbone_id}",
    )


def _fetch(loader: Callable, repo: str):
    try:
        return loader(repo)
    except Exception as exc:  # hub errors span OSError and library types
        raise CheckpointUnavailableError(
            f"cannot fetch '{repo}' from the model hub: {exc}"
        ) from exc


def _load_hub_encoders(repo: str) -> EncoderBundle:
    from transformers import AutoTokenizer, CLIPImageProcessor, CLIPModel

    model = _fetch(lambda r: CLIPModel.from_pretrained(r), repo).eval()
    tokenizer = _fetch(lambda r: AutoTokenizer.from_pretrained(r, use_fast=True), repo)
    processor = _fetch(lambda r: CLIPImageProcessor.from_pretrained(r), repo)
    side = processor.crop_size["height"] if processor.crop_size else processor.size["shortest_edge"]
    return EncoderBundle(
        model=model,
        tokenizer_json=tokenizer.backend_tokenizer.to_str(pretty=True),
        embedding_dim=model.config.projection_dim,
        image_side=int(side),
        norm_mean=tuple(processor.image_mean),
        norm_std=tuple(processor.image_std),
        context_length=int(model.config.text_config.max_position_embeddings),
        pad_token_id=int(tokenizer.pad_token_id or 0),
        source=repo,
    )


def _load_hub_detector(repo: str) -> DetectorBundle:
    from transformers import AutoTokenizer, OwlViTForObjectDetection, OwlViTProcessor

    model = _fetch(lambda r: OwlViTForObjectDetection.from_pretrained(r), repo).eval()
    processor = _fetch(lambda r: OwlViTProcessor.from_pretrained(r), repo)
    tokenizer = _fetch(lambda r: AutoTokenizer.from_pretrained(r, use_fast=True), repo)
    image_processor = processor.image_processor
    side = image_processor.size["height"] if "height" in image_processor.size else image_processor.size["shortest_edge"]
    return DetectorBundle(
        model=model,
        image_side=int(side),
        norm_mean=tuple(image_processor.image_mean),
        norm_std=tuple(image_processor.image_std),
        context_length=int(model.config.text_config.max_position_embeddings),
        pad_token_id=int(tokenizer.pad_token_id or 0),
        source=repo,
    )


def _registry() -> dict[str, BackboneSpec]:
    specs = [
        BackboneSpec(
            backbone_id="tiny-embedding",
            description="small random-init encoder pair; offline, for tests and CI",
            offline=True,
            build_encoders=lambda: _build_tiny_encoders("tiny-embedding"),
        ),
        BackboneSpec(
            backbone_id="tiny-detection",
            description="small random-init encoders plus detector; offline, for tests and CI",
            offline=True,
            build_encoders=lambda: _build_tiny_encoders("tiny-detection"),
            build_detector=lambda: _build_tiny_detector("tiny-detection"),
        ),
        BackboneSpec(
            backbone_id="clip-vit-b32",
            description="openai/clip-vit-base-patch32 encoders (downloads from the hub)",
            offline=False,
            build_encoders=lambda: _load_hub_encoders("openai/clip-vit-base-patch32"),
        ),
        BackboneSpec(
            backbone_id="clip-vit-b16",
            description="openai/clip-vit-base-patch16 encoders (downloads from the hub)",
            offline=False,
            build_encoders=lambda: _load_hub_encoders("openai/clip-vit-base-patch16"),
        ),
        BackboneSpec(
            backbone_id="clip-vit-l14",
            description="openai/clip-vit-large-patch14 encoders (downloads from the hub)",
            offline=False,
            build_encoders=lambda: _load_hub_encoders("openai/clip-vit-large-patch14"),
        ),
        BackboneSpec(
            backbone_id="clip-vit-b32-owlvit-base",
            description=(
                "openai/clip-vit-base-patch32 encoders with the "
                "google/owlvit-base-patch32 detector (downloads from the hub)"
            ),
            offline=False,
            build_encoders=lambda: _load_hub_encoders("openai/clip-vit-base-patch32"),
            build_detector=lambda: _load_hub_detector("google/owlvit-base-patch32"),
        ),
    ]
    return {spec.backbone_id: spec for spec in specs}


REGISTRY = _registry()


def supported_backbones() -> tuple[str, ...]:
    """All registered backbone ids, sorted."""
    return tuple(sorted(REGISTRY))


def resolve_backbone(backbone_id: str) -> BackboneSpec:
    """Look up a backbone id.

    Raises:
        UnsupportedBackboneError: unknown id; the message lists every
            supported id so callers can self-correct.
    """
    spec = REGISTRY.get(backbone_id)
    if spec is None:
        raise UnsupportedBackboneError(
            f"unsupported backbone '{backbone_id}'; supported: "
            + ", ".join(supported_backbones())
        )
    return spec
