"""Acceptance harness: one PASS/FAIL line per criterion.

Every criterion is checked against an oracle written in this file, at the
tolerance the contract states. Criteria 7 and 8 train real models and take
several minutes on one CPU core; they carry the ``slow`` marker so
``pytest -m "not slow"`` skips them.
"""

import math
import time

import numpy as np
import pytest
from scipy.special import logsumexp

from pyramidclip.data import class_labels, load_manifest, make_batch, synth_generate
from pyramidclip.data.batch import tokenize_batch
from pyramidclip.encoders import LeFF
from pyramidclip.eval import evaluate_retrieval, evaluate_zeroshot
from pyramidclip.numerics import Tensor, grad_check, no_grad
from pyramidclip.objective import contrastive_term, soft_targets
from pyramidclip.training import (
    TrainConfig,
    ablation_rows,
    adamw_update,
    apply_ablation,
    lr_at,
    pyramid_loss,
    train,
)
from pyramidclip.verify import generic_point, tiny_config, tiny_model, tiny_samples, tiny_vocab

OVERFIT_IMAGE = dict(side=32, patch=8, width=32, layers=4, front_layers=3, heads=2, embed_dim=32)
OVERFIT_LR = 2e-3
ABLATION_EPOCHS = 30
ABLATION_LR = 2e-3
ABLATION_SEEDS = (0, 1, 2, 3, 4)


@pytest.fixture
def report(capsys):
    def emit(number, passed, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return emit


def log_inv(tau):
    return math.log(1.0 / tau)


# -- 1. soft targets ---------------------------------------------------------

def test_c1_soft_target_fidelity(report):
    two = soft_targets(2, 0.2)
    four = soft_targets(4, 0.2)
    err = max(
        np.abs(two - np.array([[1.0, 0.2], [0.2, 1.0]])).max(),
        np.abs(np.diag(four) - 0.8 - 0.2 / 3).max(),
        np.abs(four[~np.eye(4, dtype=bool)] - 0.2 / 3).max(),
    )
    detail = f"N=4 diag={four[0, 0]:.6f} off={four[0, 1]:.6f} max_err={err:.1e} (tol 1e-12)"
    assert report(1, err <= 1e-12, detail)
    assert round(four[0, 0], 6) == 0.866667 and round(four[0, 1], 6) == 0.066667


# -- 2. closed-form loss -----------------------------------------------------

def test_c2_closed_form_loss(report):
    got = {}
    for n in (2, 4):
        u = np.zeros((n, 8))
        u[:, 0] = 1.0
        got[n] = float(contrastive_term(u, u, log_inv(0.07), 0.2).data)
    err = max(abs(got[2] - 0.831777), abs(got[4] - 1.478714))
    # the quoted values carry six decimals, so the exact identity is checked separately:
    # identical rows give uniform softmaxes, hence loss = sum(targets) * ln(N) / N
    # with sum(targets) = N(1 - a) + N^2 a / (N - 1)
    exact = max(abs(got[n] - ((1 - 0.2) + n * 0.2 / (n - 1)) * math.log(n)) for n in (2, 4))
    passed = exact <= 1e-9 and err <= 5e-7
    detail = f"N=2 {got[2]:.9f}  N=4 {got[4]:.9f}  |exact form|={exact:.1e} (tol 1e-9)"
    assert report(2, passed, detail)


# -- 3. InfoNCE oracle ---------------------------------------------------------

def infonce_reference(u, v, tau):
    s = u @ v.T / tau
    i2t = np.diag(s) - logsumexp(s, axis=1)
    t2i = np.diag(s) - logsumexp(s, axis=0)
    return -(i2t.mean() + t2i.mean()) / 2


def test_c3_infonce_oracle(report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        u = rng.normal(size=(8, 16))
        v = rng.normal(size=(8, 16))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        tau = rng.uniform(0.01, 1.0)
        got = float(contrastive_term(u, v, log_inv(tau), 0.0).data)
        worst = max(worst, abs(got - infonce_reference(u, v, tau)))
    assert report(3, worst <= 1e-10, f"100 batches N=8 d=16 max_err={worst:.1e} (tol 1e-10)")


# -- 4. gradients --------------------------------------------------------------

def test_c4_gradient_integrity(report):
    start = time.perf_counter()
    errors = {}
    for variant in ("vit", "cnn"):
        vocab = tiny_vocab()
        cfg = tiny_config(variant)
        model = tiny_model(cfg, vocab)
        generic_point(model, np.random.default_rng(5))
        batch = make_batch(tiny_samples(3), vocab, seed=1, side=8, feature_dim=6)
        errors[variant] = grad_check(lambda *_: pyramid_loss(model, batch, cfg).total, model.parameters(),
                                     n_coords=200, rng=np.random.default_rng(6), h=5e-4, stencil=4)
    elapsed = time.perf_counter() - start
    passed = max(errors.values()) < 1e-4 and elapsed < 120
    detail = f"vit={errors['vit']:.1e} cnn={errors['cnn']:.1e} (tol 1e-4) runtime={elapsed:.1f}s (limit 120s)"
    assert report(4, passed, detail)


# -- 5. structural invariants --------------------------------------------------

def test_c5_structural_invariants(report):
    rng = np.random.default_rng(7)
    vocab = tiny_vocab()
    cfg = tiny_config()
    model = tiny_model(cfg, vocab)

    feats = rng.normal(size=(2, 6, 6))
    x1 = rng.uniform(0, 0.5, (2, 6, 2))
    roi = np.concatenate([feats, x1, x1 + 0.4], axis=2)
    mask = np.array([[True] * 6, [True] * 4 + [False] * 2])
    perm = np.stack([rng.permutation(6), np.r_[rng.permutation(4), 4, 5]])
    with no_grad():
        a = model.encode_rois(roi, mask).data
        b = model.encode_rois(np.take_along_axis(roi, perm[:, :, None], 1), np.take_along_axis(mask, perm, 1)).data
    roi_err = np.abs(a - b).max()

    leff = LeFF(rng, 8, 2)
    x = rng.normal(size=(3, 5, 8))
    leff_err = np.abs(leff(Tensor(x)).data[:, 0] - x[:, 0]).max()

    ids, lengths = tokenize_batch(["a red square", "a blue circle in the lower right region ."], vocab)
    noisy = ids.copy()
    for i, n in enumerate(lengths):
        noisy[i, n:] = rng.integers(4, len(vocab), ids.shape[1] - n)
    with no_grad():
        pad_err = np.abs(model.text(ids, lengths, trim=False).data - model.text(noisy, lengths, trim=False).data).max()
        emb = model.encode_pyramid(make_batch(tiny_samples(4), vocab, seed=3, side=8, feature_dim=6))
    norm_err = max(np.abs(np.linalg.norm(e.data, axis=1) - 1).max() for e in emb.values())

    passed = roi_err <= 1e-9 and leff_err == 0.0 and pad_err <= 1e-9 and norm_err <= 1e-8
    detail = (f"roi_perm={roi_err:.1e} (1e-9) leff_cls={leff_err:.1e} (exact) "
              f"pad={pad_err:.1e} (1e-9) unit_norm={norm_err:.1e} (1e-8)")
    assert report(5, passed, detail)


# -- 6. schedule and optimizer -------------------------------------------------

def test_c6_schedule_and_adamw(report):
    total, w = 1000, 100
    jump = abs(lr_at(w + 1, total) - lr_at(w, total)) + abs(lr_at(w, total) - lr_at(w - 1, total))
    continuous = jump <= 2 * 5e-4 / w + 1e-15
    # hand example: w=1, g=0.5, lr=0.1, wd=0.2, first step
    # m_hat = g, v_hat = g^2, update = g/(|g|+eps) ~ 1, decoupled decay 0.1*0.2*1
    w1, _, _ = adamw_update(np.array([1.0]), np.array([0.5]), np.zeros(1), np.zeros(1), 1, 0.1,
                            betas=(0.9, 0.98), eps=1e-6, weight_decay=0.2)
    adam_err = abs(w1[0] - 0.88)
    passed = continuous and lr_at(w, total) == 5e-4 and lr_at(total, total) == 0.0 and adam_err <= 1e-5
    detail = (f"lr(W)={lr_at(w, total):.1e} lr(total)={lr_at(total, total):.1e} "
              f"boundary_jump={jump:.1e} adamw={w1[0]:.6f} (0.88 +-1e-5)")
    assert report(6, passed, detail)


# -- 7. end-to-end overfit -----------------------------------------------------

@pytest.mark.slow
def test_c7_overfit(tmp_path, report):
    manifest = synth_generate(tmp_path / "corpus", 64, 7)
    samples = load_manifest(manifest)
    cfg = TrainConfig(data=str(manifest), out_dir=str(tmp_path / "run"), batch_size=64, epochs=500,
                      peak_lr=OVERFIT_LR, seed=0, image=OVERFIT_IMAGE)
    start = time.perf_counter()
    result = train(cfg, samples=samples)
    elapsed = time.perf_counter() - start
    ret = evaluate_retrieval(result.model, result.vocab, samples)
    zs = evaluate_zeroshot(result.model, result.vocab, samples, class_labels())
    first, last = result.metrics[0]["total"], result.metrics[-1]["total"]
    passed = (result.step <= 500 and ret.i2t_r1 == 1.0 and ret.t2i_r1 == 1.0
              and zs.top1 >= 0.9 and elapsed < 600)
    detail = (f"steps={result.step} i2t_r1={ret.i2t_r1:.3f} t2i_r1={ret.t2i_r1:.3f} top1={zs.top1:.3f} "
              f"loss {first:.3f}->{last:.3f} ({1 - last / first:.0%} lower) wall={elapsed:.0f}s")
    assert report(7, passed, detail)


# -- 8. ablation trend ---------------------------------------------------------

@pytest.mark.slow
def test_c8_ablation_trend(tmp_path, report, capsys):
    train_manifest = synth_generate(tmp_path / "train", 256, 21, id_prefix="s")
    held_manifest = synth_generate(tmp_path / "held", 64, 22, id_prefix="h")
    train_set, held_out = load_manifest(train_manifest), load_manifest(held_manifest)
    rows = ablation_rows()
    base = dict(data=str(train_manifest), batch_size=64, epochs=ABLATION_EPOCHS, peak_lr=ABLATION_LR,
                image=OVERFIT_IMAGE)
    r1 = {"full": [], "clip": []}
    for seed in ABLATION_SEEDS:
        for arm in r1:
            doc = apply_ablation({**base, "seed": seed, "out_dir": str(tmp_path / f"{arm}{seed}")}, rows[f"vit/{arm}"])
            result = train(TrainConfig(**doc), samples=train_set)
            ret = evaluate_retrieval(result.model, result.vocab, held_out)
            r1[arm].append((ret.i2t_r1 + ret.t2i_r1) / 2)

    lines = ["arm    " + " ".join(f"seed{s:<3}" for s in ABLATION_SEEDS) + "  mean"]
    for arm, values in r1.items():
        lines.append(f"{arm:<6} " + " ".join(f"{v:7.3f}" for v in values) + f"  {np.mean(values):.3f}")
    with capsys.disabled():
        print("\nheld-out retrieval R@1 (mean of I2T and T2I)\n" + "\n".join(lines))
    direction = np.mean(r1["full"]) >= np.mean(r1["clip"])
    # soft gate: the table must exist; the direction is reported, not enforced
    report(8, direction, f"mean full={np.mean(r1['full']):.3f} vs clip={np.mean(r1['clip']):.3f} "
                         f"({'direction holds' if direction else 'direction reversed'}; soft gate)")
    assert len(lines) == 3 and all(len(v) == len(ABLATION_SEEDS) for v in r1.values())


# -- 9. determinism ------------------------------------------------------------

def small_run(tmp_path, out, **extra):
    return TrainConfig(data=str(tmp_path / "corpus" / "manifest.jsonl"), out_dir=str(tmp_path / out),
                       image=dict(side=16, patch=8, width=8, layers=2, front_layers=1, heads=2, embed_dim=8,
                                  roi_feature_dim=16),
                       text=dict(width=8, layers=1, heads=2), batch_size=4, epochs=3, peak_lr=1e-2,
                       reference_mode=True, **extra)


def test_c9_determinism(tmp_path, report):
    synth_generate(tmp_path / "corpus", 12, 5, image_side=16, feature_dim=16)
    a = train(small_run(tmp_path, "a"))
    b = train(small_run(tmp_path, "b"))
    same = a.metrics_path.read_bytes() == b.metrics_path.read_bytes()
    weights_same = all(np.array_equal(p.data, q.data) for p, q in zip(a.model.parameters(), b.model.parameters()))

    cut = train(small_run(tmp_path, "c"), stop_after=4)
    resumed = train(small_run(tmp_path, "c"), resume=cut.checkpoint)
    resume_same = resumed.metrics_path.read_bytes() == a.metrics_path.read_bytes()
    resume_weights = all(np.array_equal(p.data, q.data)
                         for p, q in zip(a.model.parameters(), resumed.model.parameters()))

    passed = same and weights_same and resume_same and resume_weights
    detail = (f"repeat logs identical={same} weights identical={weights_same}; "
              f"resume after step 4 of {a.total_steps}: logs identical={resume_same} weights identical={resume_weights}")
    assert report(9, passed, detail)
