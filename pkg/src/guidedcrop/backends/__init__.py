"""Model backends.

A backend turns image references and text into embeddings and detections.
The pipeline only ever touches this interface, so an analytic fixture and a
real serialized-model runtime are interchangeable.

Contract:
  - image_dims(image) -> ImageDims
  - encode_region(image, box) -> unit-norm float64 vector
  - encode_text(text) -> unit-norm float64 vector
  - detect(image, prompts) -> list[Detection], class_index = prompt position
  - attributes: name (str), thread_safe (bool)

`image` is whatever the manifest's image field holds: a scene id for the
fixture backend, a file path for the graph runtime.
"""

from __future__ import annotations

from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ..boxgeom import Box, ImageDims
from ..detection import Detection


@runtime_checkable
class Backend(Protocol):
    name: str
    thread_safe: bool

    def image_dims(self, image) -> ImageDims: ...

    def encode_region(self, image, box: Box) -> np.ndarray: ...

    def encode_text(self, text: str) -> np.ndarray: ...

    def detect(self, image, prompts: Sequence[str]) -> list[Detection]: ...


def encode_image(backend: Backend, image) -> np.ndarray:
    """Full-image embedding: encode_region over the whole frame."""
    from ..boxgeom import full_box

    return backend.encode_region(image, full_box(backend.image_dims(image)))


from .fixture import FixtureBackend, SceneObject, SceneSpec, SceneStore  # noqa: E402
from .preprocess import PreprocessSpec, crop_resize  # noqa: E402

__all__ = [
    "Backend",
    "encode_image",
    "FixtureBackend",
    "SceneObject",
    "SceneSpec",
    "SceneStore",
    "PreprocessSpec",
    "crop_resize",
]
