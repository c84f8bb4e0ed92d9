"""Text-class banks, similarity logits, and prediction rules.

Embeddings are plain float64 numpy vectors.  Encoders return unit-norm
vectors; logits are scaled inner products against a bank of per-class text
vectors.  Class banks built from multi-prompt descriptions keep the mean
embedding un-normalized by default, which makes scoring against the mean
identical to averaging per-prompt logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePromptError, InvalidParameterError

DEFAULT_TEMPLATE = "a photo of a {name}"

# Description-prompt aggregation modes.  "logit_mean" stores the raw mean of
# the prompt embeddings, so a dot product against it equals the mean of the
# per-prompt logits.  "embedding_mean" re-normalizes the mean first.
AGG_LOGIT_MEAN = "logit_mean"
AGG_EMBEDDING_MEAN = "embedding_mean"


def unit_normalize(v: np.ndarray) -> np.ndarray:
    """Scale a vector to unit L2 norm.

    Raises:
        DegeneratePromptError: the vector norm is numerically zero.
    """
    arr = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm < 1e-12:
        raise DegeneratePromptError("cannot normalize a zero vector")
    return arr / norm


def aggregate_prompt_embeddings(
    embeddings: np.ndarray, aggregation: str = AGG_LOGIT_MEAN
) -> np.ndarray:
    """Collapse per-prompt embeddings (rows) into one class vector."""
    arr = np.asarray(embeddings, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[0] == 0:
        raise InvalidParameterError("class has no prompts")
    mean = arr.mean(axis=0)
    if aggregation == AGG_LOGIT_MEAN:
        if float(np.linalg.norm(mean)) < 1e-12:
            raise DegeneratePromptError("prompt embeddings cancel out")
        return mean
    if aggregation == AGG_EMBEDDING_MEAN:
        return unit_normalize(mean)
    raise InvalidParameterError(f"unknown aggregation '{aggregation}'")


@dataclass
class TextClassBank:
    """Ordered class names with one text vector per class.

    `vectors` has shape (n_classes, dim).  Rows are unit-norm for category
    prompts and for embedding_mean aggregation; logit_mean rows may be
    shorter than unit length.
    """

    class_names: list[str]
    vectors: np.ndarray
    prompt_mode: str = "category"
    aggregation: str = AGG_LOGIT_MEAN
    prompts_used: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.class_names):
            raise InvalidParameterError(
                f"bank shape {self.vectors.shape} does not match "
                f"{len(self.class_names)} classes"
            )

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def build_class_bank(
    encode_text,
    class_names: list[str],
    prompt_mode: str = "category",
    template: str = DEFAULT_TEMPLATE,
    descriptions: dict[str, list[str]] | None = None,
    aggregation: str = AGG_LOGIT_MEAN,
) -> TextClassBank:
    """Encode one vector per class from category names or description sets.

    Args:
        encode_text: callable str -> unit-norm embedding.
        class_names: ordered class labels; order defines class indices.
        prompt_mode: "category" (one templated prompt per class) or
            "descriptions" (several prompts per class, aggregated).
        template: category template with a "{name}" placeholder.
        descriptions: class name -> prompt list, required for descriptions
            mode; classes missing from it fall back to the category template.
        aggregation: how description prompts collapse into one vector.

    Returns:
        TextClassBank with one row per class, rows ordered as class_names.
    """
    if not class_names:
        raise InvalidParameterError("class_names is empty")
    if len(set(class_names)) != len(class_names):
        raise InvalidParameterError("class names must be unique")
    if prompt_mode not in ("category", "descriptions"):
        raise InvalidParameterError(f"unknown prompt_mode '{prompt_mode}'")
    if prompt_mode == "descriptions" and descriptions is None:
        raise InvalidParameterError("descriptions mode needs a descriptions mapping")

    rows = []
    used: dict[str, list[str]] = {}
    for name in class_names:
        if prompt_mode == "category":
            prompts = [template.format(name=name)]
        else:
            prompts = list(descriptions.get(name) or [template.format(name=name)])
        embs = np.stack([unit_normalize(encode_text(p)) for p in prompts])
        if len(prompts) == 1:
            rows.append(embs[0])
        else:
            rows.append(aggregate_prompt_embeddings(embs, aggregation))
        used[name] = prompts
    return TextClassBank(
        class_names=list(class_names),
        vectors=np.stack(rows),
        prompt_mode=prompt_mode,
        aggregation=aggregation,
        prompts_used=used,
    )


def clip_logits(
    bank: TextClassBank, image_embedding: np.ndarray, scale: float = 100.0
) -> np.ndarray:
    """Scaled inner products of an image embedding against every class vector.

    Computed one row at a time; a logit depends only on its own class vector,
    so scoring a subset of classes reproduces the full run's values bit for
    bit (blocked matrix kernels do not guarantee that).
    """
    if scale <= 0.0:
        raise InvalidParameterError(f"logit scale must be positive, got {scale}")
    emb = np.asarray(image_embedding, dtype=np.float64)
    if emb.shape != (bank.vectors.shape[1],):
        raise InvalidParameterError(
            f"embedding dim {emb.shape} does not match bank dim {bank.vectors.shape[1]}"
        )
    return scale * np.array([np.dot(row, emb) for row in bank.vectors])


def top_k(logits: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest logits, best first; ties go to lower index."""
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidParameterError(f"logits must be 1D, got shape {arr.shape}")
    if not 1 <= k <= arr.size:
        raise InvalidParameterError(f"k={k} out of range for {arr.size} classes")
    order = np.argsort(-arr, kind="stable")
    return order[:k].astype(np.int64)


def restricted_logits(
    bank: TextClassBank,
    class_indices: np.ndarray,
    crop_embedding: np.ndarray,
    scale: float = 100.0,
) -> np.ndarray:
    """Logits of a crop embedding against a subset of classes.

    Returns one logit per entry of `class_indices`, in that order.
    """
    idx = np.asarray(class_indices, dtype=np.int64)
    sub = TextClassBank(
        class_names=[bank.class_names[i] for i in idx],
        vectors=bank.vectors[idx],
        prompt_mode=bank.prompt_mode,
        aggregation=bank.aggregation,
    )
    return clip_logits(sub, crop_embedding, scale)


def average_logits(logit_sets: list[np.ndarray]) -> np.ndarray:
    """Elementwise mean over equal-length logit vectors."""
    if not logit_sets:
        raise InvalidParameterError("cannot average zero logit sets")
    arr = np.stack([np.asarray(v, dtype=np.float64) for v in logit_sets])
    return arr.mean(axis=0)


def predict(logits: np.ndarray, index_map: np.ndarray | None = None) -> int:
    """Argmax with a deterministic tie rule.

    Without an index map, ties resolve to the lowest class index.  With one
    (restricted logits positioned by `index_map`), ties resolve to the lowest
    mapped class index, not the lowest position.
    """
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidParameterError(f"logits must be non-empty 1D, got {arr.shape}")
    best = np.flatnonzero(arr == arr.max())
    if index_map is None:
        return int(best[0])
    mapped = np.asarray(index_map, dtype=np.int64)
    if mapped.shape != arr.shape:
        raise InvalidParameterError(
            f"index map shape {mapped.shape} does not match logits {arr.shape}"
        )
    return int(mapped[best].min())


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over a 1D logit vector."""
    arr = np.asarray(logits, dtype=np.float64)
    shifted = arr - arr.max()
    e = np.exp(shifted)
    return e / e.sum()
