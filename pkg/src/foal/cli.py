"""``foal`` command line: stats, synth, train, eval, analyze.

Exit codes: 0 success, 1 failed expectation, 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import RunConfig, apply_overrides, load_transfer_pair
from .data import (
    PUBLISHED_STATISTICS,
    ConfigError,
    ParseError,
    Stats,
    SyntheticSpec,
    dataset_statistics,
    load_split,
    synthetic_splits,
    write_split,
)

log = logging.getLogger("foal")

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2
SPLITS = ("source_train", "source_dev", "target_train", "target_dev", "target_test")


class UsageError(Exception):
    pass


def _parse_expect(text: str) -> Stats:
    """``1266,1692,166,480`` or a published key such as ``14res/train``."""
    if "/" in text:
        domain, split = text.split("/", 1)
        try:
            return PUBLISHED_STATISTICS[domain][split]
        except KeyError:
            raise UsageError(f"no published statistics for {text!r}") from None
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--expect wants four integers, got {text!r}") from None
    if len(values) != 4:
        raise UsageError(f"--expect wants four integers, got {len(values)}")
    return Stats(*values)


def cmd_stats(args) -> int:
    stats = dataset_statistics(load_split(args.path, args.domain))
    print(f"{args.path}: #S={stats.num_sentences} #+={stats.num_positive} #0={stats.num_neutral} #-={stats.num_negative}")
    if args.expect is None:
        return EXIT_OK
    expected = _parse_expect(args.expect)
    if stats == expected:
        print("matches expectation")
        return EXIT_OK
    for name, got, want in zip(("#S", "#+", "#0", "#-"), stats.as_tuple(), expected.as_tuple()):
        if got != want:
            print(f"  {name}: got {got}, expected {want}")
    return EXIT_MISMATCH


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        aspect_vocab=args.aspect_vocab, opinion_vocab=args.opinion_vocab, domain_shift=args.domain_shift
    )
    src, tgt = synthetic_splits(args.seed, spec, args.train, args.dev, args.test)
    out = Path(args.out_dir)
    for side, splits in (("source", src), ("target", tgt)):
        for name, sents in splits.items():
            (out / side).mkdir(parents=True, exist_ok=True)
            write_split(out / side / f"{name}.txt", sents)
    print(f"wrote synthetic corpus to {out}")
    return EXIT_OK


def _resolve_config(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    config = apply_overrides(config, args.set or [])
    if args.run_dir:
        config = replace(config, train=replace(config.train, run_dir=args.run_dir))
    return config


def cmd_train(args) -> int:
    from .evaluation import evaluate
    from .trainer import train

    config = _resolve_config(args)  # all validation happens before any compute
    pair = load_transfer_pair(config.data)
    run_dir = Path(config.train.run_dir)
    checkpoint = train(pair, config, run_dir=run_dir)
    if config.train.selection_split == "none":
        report = evaluate(checkpoint.restore_model(), pair.source_train)
        print(f"source_train F1 {report.f1:.4f} (no selection split)")
    else:
        print(f"best {config.train.selection_split} F1 {checkpoint.best_f1:.4f} at step {checkpoint.step}")
    print(f"run directory: {run_dir}")
    return EXIT_OK


def _load_checkpoint(path):
    from .trainer import Checkpoint

    if not Path(path).is_file():
        raise FileNotFoundError(f"checkpoint {path} not found")
    checkpoint = Checkpoint.load(path)
    try:
        model = checkpoint.restore_model()
    except RuntimeError as exc:  # state dict does not fit the stored config
        raise ConfigError(f"checkpoint {path} does not match its config: {exc}") from None
    return checkpoint, model


def _sentences(name: str, pair, config: RunConfig, domain: str):
    """A split of the checkpoint's transfer pair, or a dataset file path."""
    if name in SPLITS:
        sents = getattr(pair, name)
        if name == "target_train":
            raise UsageError("target_train is unlabeled; pass target_test or target_dev")
        return sents
    if Path(name).is_file():
        return load_split(name, domain)
    raise UsageError(f"{name!r} is neither a split name {SPLITS} nor a file")


def _out_dir(args, checkpoint_path) -> Path:
    out = Path(args.out_dir) if args.out_dir else Path(checkpoint_path).parent
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_eval(args) -> int:
    from .evaluation import evaluate

    checkpoint, model = _load_checkpoint(args.checkpoint)
    config = checkpoint.run_config()
    pair = load_transfer_pair(config.data)
    sents = _sentences(args.split, pair, config, config.data.target_domain)
    report = evaluate(model, sents)
    out = _out_dir(args, args.checkpoint)
    config.save(out / "config.json")
    tag = Path(args.split).stem
    path = out / f"eval_{tag}.json"
    path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(f"{args.split}: P {report.precision:.4f} R {report.recall:.4f} F1 {report.f1:.4f} -> {path}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    from .evaluation import discrepancy_report, extract_features

    checkpoint, model = _load_checkpoint(args.checkpoint)
    config = checkpoint.run_config()
    pair = load_transfer_pair(config.data)
    source = _sentences(args.source, pair, config, config.data.source_domain)
    target = _sentences(args.target, pair, config, config.data.target_domain)
    dump = extract_features(model, source, "source")
    extract_features(model, target, "target", dump)
    report = discrepancy_report(model, source, target, dump)
    out = _out_dir(args, args.checkpoint)
    config.save(out / "config.json")
    (out / "discrepancy.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    (out / "discrepancy.txt").write_text(report.table() + "\n")
    dump.write_jsonl(out / "features.jsonl")
    print(report.table())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="count sentences and triplets per polarity")
    p.add_argument("path")
    p.add_argument("--domain", default="")
    p.add_argument("--expect", help="a,b,c,d or a published key like 14res/train")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="write a synthetic two-domain corpus")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", type=int, default=20)
    p.add_argument("--dev", type=int, default=10)
    p.add_argument("--test", type=int, default=20)
    p.add_argument("--aspect-vocab", type=int, default=10)
    p.add_argument("--opinion-vocab", type=int, default=10)
    p.add_argument("--domain-shift", type=float, default=0.5)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config")
    p.add_argument("--set", nargs="*", metavar="KEY=VALUE")
    p.add_argument("--run-dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="exact-match F1 of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="target_test", help=f"one of {SPLITS[:2] + SPLITS[3:]} or a file")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="MMD discrepancy report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--source", default="source_train")
    p.add_argument("--target", default="target_test")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ParseError, OSError, ValueError) as exc:
        print(f"foal {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
