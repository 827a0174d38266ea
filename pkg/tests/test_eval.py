import logging

import numpy as np
import pytest

from pyramidclip.eval import (
    DEFAULT_TEMPLATES,
    PromptTemplateSet,
    build_class_embeddings,
    classify_scores,
    evaluate_retrieval,
    evaluate_zeroshot,
    format_table,
    retrieve,
    zero_shot_classify,
)
from pyramidclip.verify import tiny_config, tiny_model, tiny_samples, tiny_vocab


def unit(x):
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


class FakeEncoder:
    """Deterministic text encoder: a fixed random vector per distinct string."""

    def __init__(self, d=6, seed=0):
        self.d = d
        self.seed = seed
        self.calls = []

    def __call__(self, texts):
        self.calls.append(list(texts))
        out = []
        for t in texts:
            rng = np.random.default_rng([self.seed, *map(ord, t)])
            out.append(rng.normal(size=self.d) * 3.0)
        return np.array(out)


# -- templates and class embeddings ------------------------------------------

def test_template_set_invariants():
    assert PromptTemplateSet(["a {label}"]).fill("red square") == ["a red square"]
    for bad in ([], ["no slot"], ["{label} and {label}"]):
        with pytest.raises(ValueError):
            PromptTemplateSet(bad)
    assert all(t.count("{label}") == 1 for t in DEFAULT_TEMPLATES)


def test_one_template_equals_encoded_prompt():
    enc = FakeEncoder()
    m = build_class_embeddings(["red square", "blue circle"], ["a photo of a {label}"], enc)
    np.testing.assert_allclose(m[0], unit(enc(["a photo of a red square"])[0]), atol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(m, axis=1), 1.0, atol=1e-12)


def test_duplicated_template_equals_single():
    enc = FakeEncoder()
    single = build_class_embeddings(["red square"], ["a {label}"], enc)
    double = build_class_embeddings(["red square"], ["a {label}", "a {label}"], enc)
    np.testing.assert_allclose(double, single, atol=1e-15)


def test_two_templates_direct_formula():
    enc = FakeEncoder()
    m = build_class_embeddings(["green triangle"], ["a {label}", "a {label} shape"], enc)
    e1 = unit(enc(["a green triangle"])[0])
    e2 = unit(enc(["a green triangle shape"])[0])
    np.testing.assert_allclose(m[0], unit((e1 + e2) / 2), atol=1e-15)


def test_cancelling_templates_name_the_class():
    def enc(texts):
        return np.array([[1.0, 0.0] if "x" in t else [-1.0, 0.0] for t in texts])

    with pytest.raises(ValueError, match="blue"):
        build_class_embeddings(["blue"], ["x {label}", "y {label}"], enc)
    with pytest.raises(ValueError):
        build_class_embeddings([], ["a {label}"], enc)


# -- zero-shot ----------------------------------------------------------------

def test_image_equal_to_class_row_predicts_that_class():
    rng = np.random.default_rng(0)
    classes = unit(rng.normal(size=(6, 4)))
    res = zero_shot_classify(classes[[3, 0, 5]], classes, [3, 0, 5])
    assert res.top1 == 1.0 and res.top5 == 1.0
    np.testing.assert_array_equal(res.predictions, [3, 0, 5])


def test_strictly_increasing_transform_invariance():
    rng = np.random.default_rng(1)
    scores = rng.normal(size=(30, 8))
    targets = rng.integers(0, 8, 30)
    base = classify_scores(scores, targets)
    for f in (lambda s: 2.5 * s, lambda s: np.exp(s), lambda s: s**3 + 7, lambda s: np.tanh(s)):
        other = classify_scores(f(scores), targets)
        assert (other.top1, other.top5) == (base.top1, base.top5)
        np.testing.assert_array_equal(other.predictions, base.predictions)


def test_top5_hand_example_and_ties():
    scores = np.array([[0.1, 0.9, 0.5, 0.3, 0.2, 0.0, 0.4],
                       [0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]])
    res = classify_scores(scores, [5, 6])
    # row 0: class 5 is the lowest score; row 1: all tied, lower index wins, 6 is out of the top five
    assert res.top1 == 0.0 and res.top5 == 0.0
    assert res.predictions.tolist() == [1, 0]
    assert classify_scores(scores, [4, 4]).top5 == 1.0


def test_fewer_than_five_classes_warns(caplog):
    with caplog.at_level(logging.WARNING):
        res = classify_scores(np.array([[0.2, 0.1, 0.0]]), [2])
    assert res.top1 == 0.0 and res.top5 == 1.0
    assert "top-5" in caplog.text


def test_classify_errors():
    with pytest.raises(ValueError):
        classify_scores(np.zeros((2, 3)), [0])
    with pytest.raises(ValueError):
        classify_scores(np.zeros((1, 3)), [3])
    with pytest.raises(ValueError):
        zero_shot_classify(np.zeros((1, 3)), np.zeros((2, 4)), [0])


# -- retrieval ---------------------------------------------------------------

def test_identity_pairing_is_perfect():
    x = unit(np.random.default_rng(2).normal(size=(10, 5)))
    assert retrieve(x, x).as_dict() == {"i2t_r1": 1.0, "i2t_r5": 1.0, "t2i_r1": 1.0, "t2i_r5": 1.0}


def test_two_swapped_partners():
    a = np.eye(2)
    res = retrieve(a, a[::-1])
    assert res.as_dict() == {"i2t_r1": 0.0, "i2t_r5": 1.0, "t2i_r1": 0.0, "t2i_r5": 1.0}


def test_ties_go_to_lower_index():
    img = np.ones((3, 2))
    res = retrieve(img, np.ones((3, 2)))
    # every score ties: only pair 0 ranks its partner first
    assert res.i2t_r1 == pytest.approx(1 / 3) and res.t2i_r1 == pytest.approx(1 / 3)


def test_direction_swap_symmetry_and_bounds():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = unit(rng.normal(size=(12, 4))), unit(rng.normal(size=(12, 4)))
        ab, ba = retrieve(a, b), retrieve(b, a)
        assert ab.i2t_r1 == ba.t2i_r1 and ab.i2t_r5 == ba.t2i_r5
        assert ab.t2i_r1 == ba.i2t_r1 and ab.t2i_r5 == ba.i2t_r5
        for r1, r5 in ((ab.i2t_r1, ab.i2t_r5), (ab.t2i_r1, ab.t2i_r5)):
            assert 0.0 <= r1 <= r5 <= 1.0


def test_random_baseline_near_one_over_k():
    rng = np.random.default_rng(4)
    r1 = []
    for _ in range(50):
        q, _ = np.linalg.qr(rng.normal(size=(100, 100)))
        perm = rng.permutation(100)
        r1.append(retrieve(q, q[perm]).i2t_r1)
    # partners land at rank 0 only where perm is a fixed point: about 1 per permutation
    assert abs(np.mean(r1) - 0.01) < 0.01


def test_retrieve_errors():
    with pytest.raises(ValueError):
        retrieve(np.ones((1, 3)), np.ones((1, 3)))
    with pytest.raises(ValueError):
        retrieve(np.ones((3, 3)), np.ones((2, 3)))


def test_format_table_aligns_columns():
    text = format_table({"top1": 0.5, "i2t_r1": 1.0})
    assert text.splitlines() == ["top1    0.5000", "i2t_r1  1.0000"]


# -- inference contract ------------------------------------------------------

class Recorder:
    """Proxy that logs attribute access on the wrapped object."""

    def __init__(self, target, forbidden=()):
        object.__setattr__(self, "_target", target)
        object.__setattr__(self, "_forbidden", set(forbidden))
        object.__setattr__(self, "seen", [])

    def __getattr__(self, name):
        if name in self._forbidden:
            raise AssertionError(f"evaluation touched {name}")
        self.seen.append(name)
        return getattr(self._target, name)


def test_evaluation_uses_only_full_image_and_original_text():
    vocab = tiny_vocab()
    model = Recorder(tiny_model(tiny_config(), vocab), forbidden={"encode_rois", "encode_pyramid", "roi_path"})
    samples = [Recorder(s, forbidden={"summary", "roi"}) for s in tiny_samples(4)]
    res = evaluate_retrieval(model, vocab, samples)
    assert 0 <= res.i2t_r1 <= 1
    labels = ["red square", "blue circle", "red circle", "blue square"]
    zs = evaluate_zeroshot(model, vocab, samples, labels, ["a {label}"], label_fn=lambda s: s.text.split()[1] + " " + s.text.split()[2])
    assert 0 <= zs.top1 <= 1 and zs.top5 == 1.0
    assert set(model.seen) <= {"encode_images", "encode_texts", "image_cfg"}
    assert all(set(s.seen) <= {"image", "text", "id"} for s in samples)


def test_zeroshot_unknown_label_is_an_error():
    vocab = tiny_vocab()
    model = tiny_model(tiny_config(), vocab)
    with pytest.raises(ValueError, match="not among"):
        evaluate_zeroshot(model, vocab, tiny_samples(2), ["red square"], ["a {label}"], label_fn=lambda s: "green")
