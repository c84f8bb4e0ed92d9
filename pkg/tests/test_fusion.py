"""Bank construction, logits, and prediction rules against brute oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guidedcrop.errors import DegeneratePromptError, InvalidParameterError
from guidedcrop.fusion import (
    AGG_EMBEDDING_MEAN,
    AGG_LOGIT_MEAN,
    TextClassBank,
    aggregate_prompt_embeddings,
    average_logits,
    build_class_bank,
    clip_logits,
    predict,
    restricted_logits,
    softmax,
    top_k,
    unit_normalize,
)


def _axis(i, dim=6):
    v = np.zeros(dim)
    v[i] = 1.0
    return v


def _fake_encoder(table):
    def encode(text):
        return table[text]
    return encode


# -- frozen hand cases --------------------------------------------------------


def test_top_k_hand_case():
    out = top_k(np.array([0.9, 0.1, 0.5, 0.7, 0.3]), 3)
    assert out.tolist() == [0, 3, 2]


def test_top_k_tie_prefers_lower_index():
    assert top_k(np.array([0.5, 0.5]), 1).tolist() == [0]


def test_predict_with_index_map():
    assert predict(np.array([0.1, 0.8]), index_map=np.array([7, 3])) == 3


def test_predict_tie_lowest_mapped_class():
    # positions tie; class 2 is the smaller mapped index even though it sits
    # behind class 9 in the restricted ordering
    assert predict(np.array([0.5, 0.5]), index_map=np.array([9, 2])) == 2


def test_predict_tie_without_map():
    assert predict(np.array([1.0, 1.0, 0.2])) == 0


def test_orthogonal_prompts_embedding_mean():
    e1, e2 = _axis(0), _axis(1)
    out = aggregate_prompt_embeddings(np.stack([e1, e2]), AGG_EMBEDDING_MEAN)
    assert np.allclose(out, (e1 + e2) / np.sqrt(2.0), atol=1e-12)
    assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-12)


def test_orthogonal_prompts_logit_mean_keeps_raw_mean():
    e1, e2 = _axis(0), _axis(1)
    out = aggregate_prompt_embeddings(np.stack([e1, e2]), AGG_LOGIT_MEAN)
    assert np.allclose(out, (e1 + e2) / 2.0, atol=1e-12)


def test_logit_mean_bank_equals_mean_of_per_prompt_logits():
    rng = np.random.default_rng(3)
    prompts = {f"p{i}": unit_normalize(rng.standard_normal(6)) for i in range(4)}
    enc = _fake_encoder(prompts)
    bank = build_class_bank(
        enc, ["c"], prompt_mode="descriptions",
        descriptions={"c": list(prompts)}, aggregation=AGG_LOGIT_MEAN,
    )
    emb = unit_normalize(rng.standard_normal(6))
    got = clip_logits(bank, emb, 100.0)[0]
    per_prompt = [100.0 * float(np.dot(v, emb)) for v in prompts.values()]
    assert got == pytest.approx(np.mean(per_prompt), abs=1e-9)


# -- oracles ------------------------------------------------------------------


def test_clip_logits_brute_force_oracle():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n, d = int(rng.integers(2, 12)), int(rng.integers(3, 40))
        vecs = rng.standard_normal((n, d))
        bank = TextClassBank([f"c{i}" for i in range(n)], vecs)
        emb = rng.standard_normal(d)
        scale = float(rng.uniform(1.0, 200.0))
        got = clip_logits(bank, emb, scale)
        want = [scale * sum(vecs[i][j] * emb[j] for j in range(d)) for i in range(n)]
        assert np.max(np.abs(got - np.array(want))) < 1e-6


def test_average_logits_oracle():
    rng = np.random.default_rng(12)
    sets = [rng.standard_normal(7) for _ in range(9)]
    got = average_logits(sets)
    want = [sum(s[j] for s in sets) / len(sets) for j in range(7)]
    assert np.max(np.abs(got - np.array(want))) < 1e-9


def test_restricted_logits_bitwise_subset_of_full():
    rng = np.random.default_rng(13)
    vecs = rng.standard_normal((9, 24))
    bank = TextClassBank([f"c{i}" for i in range(9)], vecs)
    emb = rng.standard_normal(24)
    full = clip_logits(bank, emb, 100.0)
    idx = np.array([7, 2, 5])
    sub = restricted_logits(bank, idx, emb, 100.0)
    assert np.array_equal(sub, full[idx])


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=40)
def test_clip_logits_matches_loop(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(2, 16)), int(rng.integers(2, 64))
    vecs = rng.standard_normal((n, d))
    emb = rng.standard_normal(d)
    bank = TextClassBank([f"c{i}" for i in range(n)], vecs)
    got = clip_logits(bank, emb, 50.0)
    want = np.array([50.0 * np.dot(vecs[i], emb) for i in range(n)])
    assert np.max(np.abs(got - want)) < 1e-6


# -- bank building and validation ----------------------------------------------


def test_category_bank_uses_template():
    seen = []

    def enc(text):
        seen.append(text)
        return _axis(len(seen) - 1)

    bank = build_class_bank(enc, ["cat", "dog"], template="a photo of a {name}")
    assert seen == ["a photo of a cat", "a photo of a dog"]
    assert bank.n_classes == 2
    assert np.allclose(np.linalg.norm(bank.vectors, axis=1), 1.0)


def test_descriptions_fall_back_to_template_when_missing():
    table = {
        "a photo of a cat": _axis(0),
        "a small dog": _axis(1),
        "a big dog": _axis(2),
    }
    bank = build_class_bank(
        _fake_encoder(table), ["cat", "dog"], prompt_mode="descriptions",
        descriptions={"dog": ["a small dog", "a big dog"]},
    )
    assert bank.prompts_used["cat"] == ["a photo of a cat"]
    assert bank.prompts_used["dog"] == ["a small dog", "a big dog"]


def test_descriptions_mode_requires_mapping():
    with pytest.raises(InvalidParameterError):
        build_class_bank(lambda t: _axis(0), ["a"], prompt_mode="descriptions")


def test_duplicate_class_names_rejected():
    with pytest.raises(InvalidParameterError):
        build_class_bank(lambda t: _axis(0), ["a", "a"])


def test_empty_class_list_rejected():
    with pytest.raises(InvalidParameterError):
        build_class_bank(lambda t: _axis(0), [])


def test_cancelling_prompts_degenerate():
    table = {"p": _axis(0), "q": -_axis(0)}
    with pytest.raises(DegeneratePromptError):
        build_class_bank(
            _fake_encoder(table), ["c"], prompt_mode="descriptions",
            descriptions={"c": ["p", "q"]},
        )


def test_unit_normalize_zero_vector():
    with pytest.raises(DegeneratePromptError):
        unit_normalize(np.zeros(4))


def test_top_k_range_checks():
    with pytest.raises(InvalidParameterError):
        top_k(np.array([1.0, 2.0]), 3)
    with pytest.raises(InvalidParameterError):
        top_k(np.array([1.0, 2.0]), 0)


def test_scale_must_be_positive():
    bank = TextClassBank(["a"], np.ones((1, 3)))
    with pytest.raises(InvalidParameterError):
        clip_logits(bank, np.ones(3), 0.0)


def test_dim_mismatch_rejected():
    bank = TextClassBank(["a"], np.ones((1, 3)))
    with pytest.raises(InvalidParameterError):
        clip_logits(bank, np.ones(4))


def test_average_logits_empty_rejected():
    with pytest.raises(InvalidParameterError):
        average_logits([])


def test_softmax_sums_to_one():
    p = softmax(np.array([100.0, 101.0, 99.0]))
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert p.argmax() == 1
