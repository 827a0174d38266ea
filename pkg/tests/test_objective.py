import math

import numpy as np
import pytest

from pyramidclip.numerics import Tensor, backward, grad_check
from pyramidclip.objective import (
    INV_TAU_MAX,
    INV_TAU_MIN,
    TAU_INIT,
    LossWeights,
    clamp_log_inv_tau,
    contrastive_term,
    init_log_inv_tau,
    similarity_probs,
    soft_targets,
    total_loss,
)


def unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def infonce_reference(u, v, tau):
    """Bidirectional InfoNCE written with scipy's logsumexp, one-hot targets."""
    from scipy.special import logsumexp

    s = u @ v.T / tau
    n = len(s)
    i2t = -np.mean(np.diag(s) - logsumexp(s, axis=1))
    t2i = -np.mean(np.diag(s) - logsumexp(s, axis=0))
    return 0.5 * (i2t + t2i)


def loss_reference(u, v, tau, alpha):
    """Softened objective computed entry by entry from the printed formula."""
    n = len(u)
    s = u @ v.T / tau
    total = 0.0
    for i in range(n):
        for j in range(n):
            y = (1 - alpha) * (i == j) + alpha / (n - 1)
            log_pa = s[i, j] - math.log(sum(math.exp(s[i, k]) for k in range(n)))
            log_pb = s[j, i] - math.log(sum(math.exp(s[k, i]) for k in range(n)))
            total += y * (log_pa + log_pb)
    return -total / (2 * n)


# -- temperature -------------------------------------------------------------

def test_temperature_initialization_and_clamp():
    assert TAU_INIT == 0.07
    assert init_log_inv_tau() == pytest.approx(math.log(1 / 0.07), abs=1e-15)
    assert math.exp(clamp_log_inv_tau(10.0)) == pytest.approx(INV_TAU_MAX)
    assert math.exp(clamp_log_inv_tau(-3.0)) == pytest.approx(INV_TAU_MIN)
    assert clamp_log_inv_tau(2.0) == 2.0


# -- weights -----------------------------------------------------------------

def test_paper_weights_give_quarter_each():
    w = LossWeights()
    assert (w.lt, w.rs, w.rt, w.alpha) == (0.25, 0.25, 0.25, 0.2)
    assert w.gs == pytest.approx(0.25)


@pytest.mark.parametrize("kwargs", [
    dict(lt=-0.1), dict(lt=0.5, rs=0.4, rt=0.2), dict(alpha=1.0), dict(alpha=-0.1), dict(smoothing="other"),
])
def test_weight_invariants(kwargs):
    with pytest.raises(ValueError):
        LossWeights(**kwargs)


# -- similarity --------------------------------------------------------------

def test_similarity_identical_rows_uniform():
    u = np.tile([[0.6, 0.8]], (3, 1))
    p_a, p_b = similarity_probs(u, u, 0.07)
    np.testing.assert_allclose(p_a, 1 / 3, atol=1e-15)
    np.testing.assert_allclose(p_b, 1 / 3, atol=1e-15)


def test_similarity_hand_softmax():
    p_a, _ = similarity_probs(np.eye(2), np.eye(2), 1.0)
    np.testing.assert_allclose(p_a, [[0.731059, 0.268941], [0.268941, 0.731059]], atol=5e-7)
    p_a, _ = similarity_probs(np.eye(2), np.eye(2), 0.07)
    assert p_a[0, 0] == pytest.approx(1 - 6.2e-7, abs=1e-8)
    assert p_a[0, 0] == pytest.approx(1 / (1 + math.exp(-1 / 0.07)), abs=1e-15)


def test_similarity_rows_sum_to_one_and_directions():
    rng = np.random.default_rng(0)
    u, v = unit_rows(rng, 6, 5), unit_rows(rng, 6, 5)
    p_a, p_b = similarity_probs(u, v, 0.1)
    np.testing.assert_allclose(p_a.sum(1), 1, atol=1e-12)
    np.testing.assert_allclose(p_b.sum(1), 1, atol=1e-12)
    assert np.all(p_a > 0) and np.all(p_b > 0)
    q_a, q_b = similarity_probs(v, u, 0.1)
    np.testing.assert_allclose(q_a, p_b, atol=1e-15)


def test_similarity_rejects_non_positive_tau():
    with pytest.raises(ValueError):
        similarity_probs(np.eye(2), np.eye(2), 0.0)


# -- soft targets ------------------------------------------------------------

def test_soft_targets_acceptance_values():
    np.testing.assert_allclose(soft_targets(2, 0.2), [[1.0, 0.2], [0.2, 1.0]], atol=1e-12)
    y = soft_targets(4, 0.2)
    np.testing.assert_allclose(np.diag(y), 0.8 + 0.2 / 3, atol=1e-12)
    assert round(y[0, 0], 6) == 0.866667 and round(y[0, 1], 6) == 0.066667
    np.testing.assert_array_equal(soft_targets(5, 0.0), np.eye(5))


def test_soft_targets_structure_and_modes():
    y = soft_targets(7, 0.3)
    off = y[~np.eye(7, dtype=bool)]
    assert np.all(off == off[0]) and off[0] == pytest.approx(0.05)
    np.testing.assert_allclose(np.diag(y) - off[0], 0.7, atol=1e-15)
    np.testing.assert_allclose(y.sum(1), 1 + 0.3 / 6, atol=1e-15)
    ex = soft_targets(7, 0.3, "exclusive")
    np.testing.assert_allclose(np.diag(ex), 0.7)
    np.testing.assert_allclose(ex.sum(1), 1.0, atol=1e-15)


def test_soft_targets_n1_error():
    with pytest.raises(ValueError):
        soft_targets(1, 0.2)


# -- contrastive term -------------------------------------------------------

@pytest.mark.parametrize("n,expected", [(2, 0.831777), (4, 1.478714)])
def test_closed_form_identical_embeddings(n, expected):
    u = np.tile(unit_rows(np.random.default_rng(n), 1, 6), (n, 1))
    got = float(contrastive_term(u, u, init_log_inv_tau(), 0.2).data)
    assert got == pytest.approx((1 + 0.2 / (n - 1)) * math.log(n), abs=1e-12)
    assert abs(got - expected) < 5e-7  # quoted to 6 decimals


def test_sharp_identity_gives_near_zero_loss():
    got = float(contrastive_term(np.eye(4), np.eye(4), math.log(100.0), 0.0).data)
    assert 0 <= got < 1e-12
    assert got <= -math.log(1 - 3 * math.exp(-100)) + 1e-15


def test_matches_entrywise_reference():
    rng = np.random.default_rng(1)
    for alpha in (0.0, 0.2, 0.5):
        u, v = unit_rows(rng, 5, 4), unit_rows(rng, 5, 4)
        got = float(contrastive_term(u, v, math.log(1 / 0.2), alpha).data)
        assert got == pytest.approx(loss_reference(u, v, 0.2, alpha), abs=1e-12)


def test_infonce_oracle_100_batches():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        u, v = unit_rows(rng, 8, 16), unit_rows(rng, 8, 16)
        tau = rng.uniform(0.01, 1.0)
        worst = max(worst, abs(float(contrastive_term(u, v, math.log(1 / tau), 0.0).data) - infonce_reference(u, v, tau)))
    assert worst < 1e-10


def test_symmetric_in_arguments():
    rng = np.random.default_rng(3)
    u, v = unit_rows(rng, 6, 5), unit_rows(rng, 6, 5)
    a = float(contrastive_term(u, v, 2.0, 0.2).data)
    b = float(contrastive_term(v, u, 2.0, 0.2).data)
    assert abs(a - b) < 1e-12


def test_monotone_in_diagonal_one_hot():
    """Raising only the diagonal similarities never raises the alpha=0 loss."""
    rng = np.random.default_rng(4)
    for _ in range(200):
        n = int(rng.integers(2, 7))
        s = rng.uniform(-1, 1, size=(n, n))
        bump = np.diag(rng.uniform(0, 0.5, n))
        theta = rng.uniform(0, math.log(100))
        # u = I, v = S^T realizes any similarity matrix S = u v^T
        base = float(contrastive_term(np.eye(n), s.T, theta, 0.0).data)
        raised = float(contrastive_term(np.eye(n), (s + bump).T, theta, 0.0).data)
        assert raised <= base + 1e-12


def test_soft_targets_limit_diagonal_monotonicity():
    """With alpha > 0 the slope in s_ii is rowsum(y) * p_ii - y_ii, positive once p_ii is large."""
    n, alpha = 3, 0.2
    y = soft_targets(n, alpha)
    for gap, sign in ((0.0, -1), (20.0, 1)):
        s = np.eye(n) * gap
        p_a, p_b = similarity_probs(np.eye(n), s.T, 1.0)
        slope = 0.5 * (y.sum(1)[0] * p_a[0, 0] - y[0, 0] + y.sum(0)[0] * p_b[0, 0] - y[0, 0]) / n
        h = 1e-6
        bumped = s.copy()
        bumped[0, 0] += h
        fd = (float(contrastive_term(np.eye(n), bumped.T, 0.0, alpha).data)
              - float(contrastive_term(np.eye(n), s.T, 0.0, alpha).data)) / h
        assert np.sign(fd) == sign
        assert fd == pytest.approx(slope, abs=1e-5)


def test_gradients_wrt_embeddings_and_temperature():
    rng = np.random.default_rng(5)
    u = Tensor(unit_rows(rng, 4, 3), requires_grad=True)
    v = Tensor(unit_rows(rng, 4, 3), requires_grad=True)
    theta = Tensor(np.array(1.2), requires_grad=True)
    assert grad_check(lambda a, b, t: contrastive_term(a, b, t, 0.2), [u, v, theta]) < 1e-6


# -- total loss -------------------------------------------------------------

def _embeddings(rng, n=4, d=5):
    return {k: Tensor(unit_rows(rng, n, d), requires_grad=True) for k in ("v_g", "v_l", "v_r", "l_s", "l_t")}


def test_total_is_weighted_sum_of_terms():
    rng = np.random.default_rng(6)
    emb = _embeddings(rng)
    w = LossWeights(0.1, 0.2, 0.3, 0.2)
    out = total_loss(emb, w, 2.0)
    v = out.values()
    expected = 0.4 * v["l_gs"] + 0.1 * v["l_lt"] + 0.2 * v["l_rs"] + 0.3 * v["l_rt"]
    assert v["total"] == pytest.approx(expected, abs=1e-14)
    pairs = {"l_gs": ("v_g", "l_s"), "l_lt": ("v_l", "l_t"), "l_rs": ("v_r", "l_s"), "l_rt": ("v_r", "l_t")}
    for key, (a, b) in pairs.items():
        assert v[key] == pytest.approx(float(contrastive_term(emb[a], emb[b], 2.0, 0.2).data), abs=1e-15)


def test_equal_terms_give_that_value():
    u = unit_rows(np.random.default_rng(7), 4, 5)
    emb = {k: Tensor(u) for k in ("v_g", "v_l", "v_r", "l_s", "l_t")}
    out = total_loss(emb, LossWeights(), 2.0)
    assert float(out.total.data) == pytest.approx(float(out.l_gs.data), abs=1e-14)


def test_single_term_mode_is_infonce_and_skips_missing_embeddings():
    rng = np.random.default_rng(8)
    u, v = unit_rows(rng, 8, 16), unit_rows(rng, 8, 16)
    out = total_loss({"v_g": Tensor(u), "l_s": Tensor(v)}, LossWeights(0, 0, 0, 0.0), math.log(1 / 0.07))
    assert abs(float(out.total.data) - infonce_reference(u, v, 0.07)) < 1e-10
    assert out.l_lt is None and math.isnan(out.values()["l_rt"])


def test_missing_embedding_for_weighted_term_raises():
    with pytest.raises(KeyError):
        total_loss({"v_g": Tensor(np.eye(2)), "l_s": Tensor(np.eye(2))}, LossWeights(), 1.0)


def test_total_loss_gradient_through_every_input():
    rng = np.random.default_rng(9)
    emb = _embeddings(rng, n=3, d=3)
    theta = Tensor(np.array(0.8), requires_grad=True)
    keys = list(emb)

    def fn(*ts):
        return total_loss(dict(zip(keys, ts[:-1])), LossWeights(), ts[-1]).total

    assert grad_check(fn, [*emb.values(), theta], n_coords=46) < 1e-6


def test_shared_temperature_receives_gradient():
    rng = np.random.default_rng(10)
    emb = _embeddings(rng)
    theta = Tensor(np.array(init_log_inv_tau()), requires_grad=True)
    backward(total_loss(emb, LossWeights(), theta).total)
    assert theta.grad is not None and theta.grad.shape == ()
