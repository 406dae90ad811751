#!/usr/bin/env python3
"""Overfit a 20-sentence synthetic source corpus with the backbone alone (lambda = 0)."""
import argparse
import time

from foal.config import RunConfig, apply_overrides, load_transfer_pair
from foal.evaluation import evaluate
from foal.trainer import train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--set", nargs="*", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()
    config = apply_overrides(
        RunConfig(), ["lambda=0", f"max_steps={args.steps}", "selection_split=none", "synthetic_train=20"] + args.set
    )
    pair = load_transfer_pair(config.data)
    start = time.perf_counter()
    model = train(pair, config).restore_model()
    report = evaluate(model, pair.source_train)
    print(f"train F1 {report.f1:.3f} (P {report.precision:.3f} R {report.recall:.3f}) after {args.steps} steps, {time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
