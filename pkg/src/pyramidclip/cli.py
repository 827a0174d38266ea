"""Command-line entry point: synth, train, eval and verify.

Exit codes: 0 success, 1 verification or runtime failure, 2 usage error.
Logging goes to standard error; results go to standard output or files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .data import ManifestError, class_labels, load_manifest, synth_generate
from .eval import DEFAULT_TEMPLATES, evaluate_retrieval, evaluate_zeroshot, format_table
from .training import (
    ABLATION_FLAGS,
    CheckpointError,
    ConfigError,
    NonFiniteLossError,
    TrainConfig,
    apply_ablation,
    load_trained,
    train,
)

logger = logging.getLogger("pyramidclip")

USAGE_ERROR = 2
FAILURE = 1
RESULT_KEYS = ("top1", "top5", "i2t_r1", "i2t_r5", "t2i_r1", "t2i_r5")
RUN_ONLY_KEYS = set(ABLATION_FLAGS) | {"smoothing_mode", "L_s", "eval"}


class UsageError(Exception):
    pass


def parse_value(text: str):
    """JSON literal when it parses (numbers, booleans, lists), else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, pairs: list[str]) -> dict:
    """Apply ``key=value`` overrides; dotted keys reach into nested sections."""
    doc = json.loads(json.dumps(doc))
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key=value, got {pair!r}")
        node = doc
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise UsageError(f"--set {key}: {part} is not a section")
        node[leaf] = parse_value(value)
    return doc


def run_config_to_train_config(doc: dict) -> TrainConfig:
    """Split a run document into ablation flags and TrainConfig fields."""
    flags = {k: doc[k] for k in doc if k in RUN_ONLY_KEYS - {"eval"}}
    fields = {k: v for k, v in doc.items() if k not in RUN_ONLY_KEYS}
    if flags:
        fields = apply_ablation(fields, flags)
    env_seed = os.environ.get("PYRAMID_SEED")
    if env_seed is not None:
        try:
            fields["seed"] = int(env_seed)
        except ValueError:
            raise UsageError(f"PYRAMID_SEED must be an integer, got {env_seed!r}") from None
    try:
        return TrainConfig.from_dict(fields)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc


def load_run_config(path, overrides: list[str]) -> TrainConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    doc = apply_overrides(doc, overrides)
    data = doc.get("data")
    if data is not None and not Path(data).is_absolute():
        doc["data"] = str((Path(path).parent / data).resolve())
    try:
        return run_config_to_train_config(doc)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


# -- commands --------------------------------------------------------------

def cmd_synth(args) -> int:
    manifest = synth_generate(args.out, args.n, seed=args.seed, image_side=args.side, feature_dim=args.feature_dim)
    print(manifest)
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, args.set or [])
    if args.out_dir:
        cfg.out_dir = args.out_dir
    if cfg.data is None or not Path(cfg.data).exists():
        raise UsageError(f"training data {cfg.data!r} not found")
    try:
        result = train(cfg, resume=args.resume, stop_after=args.stop_after, force=args.force)
    except (ConfigError, CheckpointError) as exc:
        raise UsageError(str(exc)) from exc
    except NonFiniteLossError as exc:
        logger.error("%s", exc)
        return FAILURE
    last = result.metrics[-1] if result.metrics else None
    summary = {
        "checkpoint": str(result.checkpoint),
        "metrics": str(result.metrics_path),
        "step": result.step,
        "total_steps": result.total_steps,
        "final_total": None if last is None else last["total"],
    }
    print(json.dumps(summary))
    return 0


def cmd_eval(args) -> int:
    if not Path(args.data).exists():
        raise UsageError(f"evaluation data {args.data} not found")
    try:
        model, vocab, _ = load_trained(args.checkpoint)
    except (CheckpointError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from exc
    try:
        samples = load_manifest(args.data)
    except ManifestError as exc:
        raise UsageError(str(exc)) from exc
    results = dict.fromkeys(RESULT_KEYS)
    if args.task == "retrieval":
        results.update(evaluate_retrieval(model, vocab, samples).as_dict())
    else:
        templates = args.template or list(DEFAULT_TEMPLATES)
        try:
            res = evaluate_zeroshot(model, vocab, samples, class_labels(), templates)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        results.update(res.as_dict())
    if args.json:
        Path(args.json).write_text(json.dumps(results, indent=1) + "\n")
    if args.format == "json":
        print(json.dumps(results))
    else:
        print(format_table({k: v for k, v in results.items() if v is not None}))
    return 0


def cmd_verify(args) -> int:
    from .verify import run_all

    try:
        results = run_all(inject_fault=args.inject_fault, only=args.only)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return FAILURE if failed else 0


# -- parser ----------------------------------------------------------------

def _at_least_two(text: str) -> int:
    n = int(text)
    if n < 2:
        raise argparse.ArgumentTypeError("need at least 2 samples (contrastive batches need N >= 2)")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pyramidclip", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic colored-shape corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=_at_least_two, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--side", type=int, default=32)
    p.add_argument("--feature-dim", type=int, default=2048)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--stop-after", type=int, help="stop after this global step")
    p.add_argument("--out-dir", help="override out_dir")
    p.add_argument("--force", action="store_true", help="resume despite a config-hash mismatch")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="zero-shot or retrieval evaluation of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", choices=("retrieval", "zeroshot"), required=True)
    p.add_argument("--data", required=True, help="manifest of evaluation pairs")
    p.add_argument("--template", action="append", help="prompt template with {label} (repeatable)")
    p.add_argument("--format", choices=("table", "json"), default="json")
    p.add_argument("--json", help="also write the JSON result to this file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the property suites")
    p.add_argument("--inject-fault", action="store_true", help="corrupt a gradient rule (negative control)")
    p.add_argument("--only", action="append", help="run only the named check (repeatable)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"pyramidclip {args.command}: error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
