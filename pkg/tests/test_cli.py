import json
import subprocess
import sys

import numpy as np
import pytest

from pyramidclip.cli import apply_overrides, main
from pyramidclip.data import class_labels, label_of, load_manifest
from pyramidclip.data.batch import tokenize_batch
from pyramidclip.eval import evaluate_zeroshot
from pyramidclip.eval.harness import full_views
from pyramidclip.training import TrainConfig, ablation_rows, apply_ablation, load_trained

TINY_RUN = {
    "data": "corpus/manifest.jsonl",
    "image": {"side": 16, "patch": 8, "width": 8, "layers": 2, "front_layers": 1, "heads": 2,
              "embed_dim": 8, "leff_ratio": 2, "mlp_ratio": 2, "roi_feature_dim": 16},
    "text": {"width": 8, "layers": 1, "heads": 2, "mlp_ratio": 2},
    "batch_size": 4,
    "epochs": 2,
    "peak_lr": 0.01,
    "reference_mode": True,
    "use_lt": True, "use_gs": True, "use_rt": True, "use_rs": True, "use_leff": True, "use_soften": True,
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "corpus"), "--n", "8", "--seed", "3", "--side", "16",
                 "--feature-dim", "16"]) == 0
    (root / "run.json").write_text(json.dumps({**TINY_RUN, "out_dir": str(root / "out")}))
    return root


@pytest.fixture(scope="module")
def trained(workspace):
    assert main(["train", "--config", str(workspace / "run.json")]) == 0
    return workspace / "out" / "last.pct"


def test_synth_prints_manifest_and_is_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / name), "--n", "4", "--seed", "7", "--feature-dim", "16"]) == 0
    out = capsys.readouterr().out.split()
    assert out == [str(tmp_path / "a" / "manifest.jsonl"), str(tmp_path / "b" / "manifest.jsonl")]
    for f in sorted((tmp_path / "a").rglob("*")):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_synth_rejects_one_sample(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["synth", "--out", str(tmp_path), "--n", "1"])
    assert info.value.code == 2


def test_train_resolves_data_against_config_dir(workspace, trained):
    assert trained.exists()
    metrics = (workspace / "out" / "metrics.jsonl").read_text().splitlines()
    assert len(metrics) == 4
    _, _, cfg = load_trained(trained)
    assert cfg.data == str((workspace / "corpus" / "manifest.jsonl").resolve())


def test_train_summary_is_json(workspace, tmp_path, capsys):
    assert main(["train", "--config", str(workspace / "run.json"), "--out-dir", str(tmp_path / "o"),
                 "--set", "epochs=1"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["step"] == summary["total_steps"] == 2
    assert summary["checkpoint"].endswith("last.pct")


def test_invalid_flag_combination_exits_2(workspace, tmp_path, capsys):
    code = main(["train", "--config", str(workspace / "run.json"), "--out-dir", str(tmp_path / "x"),
                 "--set", "clip_baseline=true"])
    assert code == 2
    assert "clip_baseline" in capsys.readouterr().err


def test_unknown_config_key_and_missing_file_exit_2(workspace, tmp_path):
    assert main(["train", "--config", str(workspace / "run.json"), "--set", "nonsense=1"]) == 2
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 2


def test_pyramid_seed_overrides_config(workspace, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PYRAMID_SEED", "11")
    assert main(["train", "--config", str(workspace / "run.json"), "--out-dir", str(tmp_path / "s"),
                 "--stop-after", "1"]) == 0
    _, _, cfg = load_trained(tmp_path / "s" / "last.pct")
    assert cfg.seed == 11
    monkeypatch.setenv("PYRAMID_SEED", "eleven")
    assert main(["train", "--config", str(workspace / "run.json"), "--out-dir", str(tmp_path / "t")]) == 2


def test_resume_continues_identically(workspace, trained, tmp_path):
    args = ["train", "--config", str(workspace / "run.json"), "--out-dir", str(tmp_path / "r")]
    assert main(args + ["--stop-after", "1"]) == 0
    assert main(args + ["--resume", str(tmp_path / "r" / "last.pct")]) == 0
    full = (workspace / "out" / "metrics.jsonl").read_bytes()
    assert (tmp_path / "r" / "metrics.jsonl").read_bytes() == full


def test_eval_retrieval_json(workspace, trained, tmp_path, capsys):
    out_file = tmp_path / "r.json"
    assert main(["eval", "--checkpoint", str(trained), "--task", "retrieval",
                 "--data", str(workspace / "corpus" / "manifest.jsonl"), "--json", str(out_file)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert list(doc) == ["top1", "top5", "i2t_r1", "i2t_r5", "t2i_r1", "t2i_r5"]
    assert doc["top1"] is None and 0 <= doc["i2t_r1"] <= doc["i2t_r5"] <= 1
    assert json.loads(out_file.read_text()) == doc


def test_eval_table_format(workspace, trained, capsys):
    assert main(["eval", "--checkpoint", str(trained), "--task", "zeroshot", "--format", "table",
                 "--data", str(workspace / "corpus" / "manifest.jsonl")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in lines] == ["top1", "top5"]


def test_eval_single_template_matches_direct_encoding(workspace, trained, capsys):
    manifest = workspace / "corpus" / "manifest.jsonl"
    assert main(["eval", "--checkpoint", str(trained), "--task", "zeroshot", "--template", "a {label}",
                 "--data", str(manifest)]) == 0
    doc = json.loads(capsys.readouterr().out)
    model, vocab, _ = load_trained(trained)
    samples = load_manifest(manifest)
    labels = class_labels()
    ids, lengths = tokenize_batch([f"a {label}" for label in labels], vocab)
    classes = model.encode_texts(ids, lengths).data
    images = model.encode_images(full_views(samples, 16)).data
    pred = np.argmax(images @ classes.T, axis=1)
    truth = [labels.index(label_of(s)) for s in samples]
    assert doc["top1"] == pytest.approx(np.mean(pred == truth))
    assert doc["top1"] == evaluate_zeroshot(model, vocab, samples, labels, ["a {label}"]).top1


def test_eval_usage_errors(workspace, trained, tmp_path):
    manifest = str(workspace / "corpus" / "manifest.jsonl")
    with pytest.raises(SystemExit) as info:
        main(["eval", "--checkpoint", str(trained), "--task", "detection", "--data", manifest])
    assert info.value.code == 2
    assert main(["eval", "--checkpoint", str(trained), "--task", "retrieval", "--data", str(tmp_path / "no")]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "no.pct"), "--task", "retrieval", "--data", manifest]) == 2
    assert main(["eval", "--checkpoint", str(trained), "--task", "zeroshot", "--template", "no slot",
                 "--data", manifest]) == 2


def test_verify_passes(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[-1] == "12/12 checks passed"
    assert all(line.startswith("PASS") and "measured=" in line and "bound=" in line for line in out[:-1])


def test_verify_injected_fault_fails(capsys):
    assert main(["verify", "--inject-fault", "--only", "grad_vit", "--only", "grad_cnn", "--only", "leff"]) == 1
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("FAIL") and out[1].startswith("FAIL") and out[2].startswith("PASS")
    assert main(["verify", "--only", "nope"]) == 2


def test_stdout_carries_only_the_result(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "pyramidclip.cli", "synth", "--out", str(tmp_path / "c"), "--n", "2",
         "--feature-dim", "16"],
        capture_output=True, text=True, check=True,
    )
    assert proc.stdout.strip() == str(tmp_path / "c" / "manifest.jsonl")


def test_every_ablation_row_is_accepted():
    for name, flags in ablation_rows().items():
        cfg = TrainConfig(**apply_ablation({"image": {"variant": name.split("/")[0]}}, flags))
        if name.endswith("/clip"):
            assert cfg.clip_baseline
        if name.endswith("/full"):
            assert cfg.loss_weights().as_dict() == pytest.approx(dict(gs=0.25, lt=0.25, rs=0.25, rt=0.25))
            assert cfg.alpha == 0.2


def test_apply_overrides_nested():
    doc = apply_overrides({"image": {"side": 8}}, ["image.side=16", "alpha=0.1", "smoothing=exclusive"])
    assert doc == {"image": {"side": 16}, "alpha": 0.1, "smoothing": "exclusive"}
