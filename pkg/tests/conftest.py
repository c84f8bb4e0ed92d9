"""Shared hand-built scene fixtures.

The two-class world uses coordinate axes as features: "cat" is e0, "dog" is
e1, and backgrounds live in the span of e1 and e2 so their cosine against
the dog feature is set directly.  Everything downstream of encode_region is
then checkable with pencil and paper.
"""

import numpy as np
import pytest

from guidedcrop.backends.fixture import (
    DetectorFaults,
    FixtureBackend,
    SceneObject,
    SceneSpec,
    SceneStore,
)
from guidedcrop.boxgeom import Box, ImageDims

DIM = 8


def unit_axis(i: int, dim: int = DIM) -> np.ndarray:
    v = np.zeros(dim)
    v[i] = 1.0
    return v


def make_two_class_store(
    confusability: float = 0.5,
    obj_box: tuple = (62.0, 62.0, 162.0, 162.0),
    side: int = 224,
    faults: DetectorFaults | None = None,
    obj_label: str = "cat",
    scene_id: str = "scene0",
) -> SceneStore:
    """One scene: a cat object on a background leaning toward dog."""
    e_cat, e_dog, e_perp = unit_axis(0), unit_axis(1), unit_axis(2)
    c = confusability
    background = c * e_dog + np.sqrt(1.0 - c * c) * e_perp
    scene = SceneSpec(
        dims=ImageDims(side, side),
        background_label="background",
        background_feature=background,
        objects=(
            SceneObject(label=obj_label, box=Box(*obj_box), feature=unit_axis(0 if obj_label == "cat" else 1)),
        ),
    )
    return SceneStore(
        feature_dim=DIM,
        class_features={"cat": e_cat, "dog": e_dog},
        scenes={scene_id: scene},
        faults=faults or DetectorFaults(),
    )


@pytest.fixture
def two_class_store() -> SceneStore:
    return make_two_class_store()


@pytest.fixture
def two_class_backend(two_class_store) -> FixtureBackend:
    return FixtureBackend(two_class_store)
