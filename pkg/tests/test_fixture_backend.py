"""Analytic scene backend: encoding math, detector semantics, store IO."""

import numpy as np
import pytest

from conftest import make_two_class_store, unit_axis
from guidedcrop.backends.fixture import (
    DetectorFaults,
    FixtureBackend,
    SceneObject,
    SceneSpec,
    SceneStore,
)
from guidedcrop.boxgeom import Box, ImageDims
from guidedcrop.errors import InvalidCropError, UnknownImageError
from guidedcrop.seeding import stable_rng


def test_full_image_encoding_is_area_weighted_mix(two_class_backend):
    w = 10000.0 / (224.0 * 224.0)
    bg = 0.5 * unit_axis(1) + np.sqrt(0.75) * unit_axis(2)
    expected = w * unit_axis(0) + (1.0 - w) * bg
    expected /= np.linalg.norm(expected)
    got = two_class_backend.encode_region("scene0", Box(0, 0, 224, 224))
    assert np.allclose(got, expected, atol=1e-12)
    assert np.linalg.norm(got) == pytest.approx(1.0, abs=1e-12)


def test_crop_inside_object_is_pure_class_feature(two_class_backend):
    got = two_class_backend.encode_region("scene0", Box(70, 70, 150, 150))
    assert np.allclose(got, unit_axis(0), atol=1e-12)


def test_partial_overlap_weights(two_class_backend):
    # crop (12,62)-(112,162): half of it covers the cat box
    got = two_class_backend.encode_region("scene0", Box(12, 62, 112, 162))
    bg = 0.5 * unit_axis(1) + np.sqrt(0.75) * unit_axis(2)
    expected = 0.5 * unit_axis(0) + 0.5 * bg
    expected /= np.linalg.norm(expected)
    assert np.allclose(got, expected, atol=1e-12)


def test_zero_area_region_rejected(two_class_backend):
    with pytest.raises(InvalidCropError):
        two_class_backend.encode_region("scene0", Box(5, 5, 5, 5))


def test_unknown_scene_rejected(two_class_backend):
    with pytest.raises(UnknownImageError):
        two_class_backend.encode_region("nope", Box(0, 0, 10, 10))
    with pytest.raises(UnknownImageError):
        two_class_backend.image_dims("nope")


def test_encode_text_lookups(two_class_backend):
    assert np.array_equal(two_class_backend.encode_text("cat"), unit_axis(0))
    assert np.array_equal(two_class_backend.encode_text("CAT"), unit_axis(0))
    assert np.array_equal(
        two_class_backend.encode_text("a photo of a cat"), unit_axis(0)
    )
    assert np.array_equal(two_class_backend.encode_text("dog"), unit_axis(1))


def test_encode_text_fallback_is_deterministic_unit(two_class_backend):
    a = two_class_backend.encode_text("zebra crossing")
    b = two_class_backend.encode_text("zebra crossing")
    assert np.array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)
    assert not np.array_equal(a, two_class_backend.encode_text("other text"))


def test_detect_exact_box_and_perfect_score(two_class_backend):
    dets = two_class_backend.detect("scene0", ["cat"])
    assert len(dets) == 1
    assert dets[0].box.as_tuple() == (62.0, 62.0, 162.0, 162.0)
    assert dets[0].score == 1.0
    assert dets[0].class_index == 0


def test_detect_absent_class_fails_silently(two_class_backend):
    assert two_class_backend.detect("scene0", ["dog"]) == []


def test_detect_decoy_mode_returns_background_box():
    store = make_two_class_store(faults=DetectorFaults(absent_mode="decoy", seed=4))
    backend = FixtureBackend(store)
    dets = backend.detect("scene0", ["dog"])
    assert len(dets) == 1
    det = dets[0]
    assert det.class_index == 0
    assert det.box.within(ImageDims(224, 224), tol=1e-9)
    # background leans toward dog with cosine 0.5 -> score (0.5+1)/2
    assert det.score == pytest.approx(0.75, abs=1e-12)


def test_jitter_is_deterministic_and_size_preserving():
    store = make_two_class_store(faults=DetectorFaults(jitter_fraction=0.2, seed=9))
    backend = FixtureBackend(store)
    a = backend.detect("scene0", ["cat"])[0].box
    b = backend.detect("scene0", ["cat"])[0].box
    assert a.as_tuple() == b.as_tuple()
    assert a.width == pytest.approx(100.0, abs=1e-9)
    assert a.height == pytest.approx(100.0, abs=1e-9)
    assert a.within(ImageDims(224, 224), tol=0.0)
    assert a.as_tuple() != (62.0, 62.0, 162.0, 162.0)


def test_fault_rate_one_always_misses():
    store = make_two_class_store(faults=DetectorFaults(fault_rate=1.0, seed=1))
    backend = FixtureBackend(store)
    assert backend.detect("scene0", ["cat"]) == []


def _fault_flag(seed, image, key, rate):
    return bool(stable_rng(seed, "fault", image, key).uniform() < rate)


def test_joint_pass_poisoned_by_any_fault():
    # find a seed where the cat draw passes but the dog draw fails
    rate = 0.5
    seed = next(
        s for s in range(500)
        if not _fault_flag(s, "scene0", "cat", rate)
        and _fault_flag(s, "scene0", "dog", rate)
    )
    store = make_two_class_store(faults=DetectorFaults(fault_rate=rate, seed=seed))
    backend = FixtureBackend(store)
    # alone, the cat is found: its own draw passed
    assert len(backend.detect("scene0", ["cat"])) == 1
    # jointly with dog, the dog's fault poisons the whole pass
    assert backend.detect("scene0", ["cat", "dog"]) == []


def test_fault_draws_shared_between_strategies():
    rate = 0.5
    seed = next(s for s in range(500) if _fault_flag(s, "scene0", "cat", rate))
    store = make_two_class_store(faults=DetectorFaults(fault_rate=rate, seed=seed))
    backend = FixtureBackend(store)
    # the cat's own draw fails identically for a solo call and a joint call
    assert backend.detect("scene0", ["cat"]) == []
    assert backend.detect("scene0", ["cat", "dog"]) == []


def test_prompt_match_threshold_confuses_similar_classes():
    a = np.sqrt(0.9)
    b = np.sqrt(0.1)
    f_cat = a * unit_axis(0) + b * unit_axis(1)
    f_dog = a * unit_axis(0) + b * unit_axis(2)
    scene = SceneSpec(
        dims=ImageDims(224, 224),
        background_label="background",
        background_feature=unit_axis(3),
        objects=(SceneObject(label="cat", box=Box(60, 60, 160, 160), feature=f_cat),),
    )
    store = SceneStore(
        feature_dim=8,
        class_features={"cat": f_cat, "dog": f_dog},
        scenes={"scene0": scene},
        faults=DetectorFaults(prompt_match_threshold=0.85),
    )
    backend = FixtureBackend(store)
    dets = backend.detect("scene0", ["dog"])
    assert len(dets) == 1
    assert dets[0].box.as_tuple() == (60.0, 60.0, 160.0, 160.0)
    assert dets[0].score == pytest.approx(0.95, abs=1e-9)


def test_score_noise_deterministic_and_clipped():
    store = make_two_class_store(faults=DetectorFaults(score_noise=0.5, seed=3))
    backend = FixtureBackend(store)
    s1 = backend.detect("scene0", ["cat"])[0].score
    s2 = backend.detect("scene0", ["cat"])[0].score
    assert s1 == s2
    assert 0.0 <= s1 <= 1.0


def test_store_round_trip(tmp_path, two_class_store):
    path = tmp_path / "scenes.json"
    two_class_store.save(path)
    loaded = SceneStore.load(path)
    assert loaded.fingerprint() == two_class_store.fingerprint()
    a = FixtureBackend(two_class_store).encode_region("scene0", Box(0, 0, 224, 224))
    b = FixtureBackend(loaded).encode_region("scene0", Box(0, 0, 224, 224))
    assert np.array_equal(a, b)


def test_fingerprint_changes_with_content(two_class_store):
    other = make_two_class_store(confusability=0.9)
    assert other.fingerprint() != two_class_store.fingerprint()


def test_thread_safety_flag(two_class_backend):
    assert two_class_backend.thread_safe is True
