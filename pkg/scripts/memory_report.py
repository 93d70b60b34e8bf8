#!/usr/bin/env python3
"""Peak live activation scalars vs memory strategy.

Prints the instrumented activation-scalar profile of one gradient
computation on the mini model: monolithic vs gradient-cache chunkings, each
with and without activation checkpointing.
"""

import argparse
import sys
import tempfile

from florence_mini.curation import curate, generate_synthetic_dataset
from florence_mini.encoders import ModelConfig, TwoTowerModel, build_vocabulary
from florence_mini.trainer import activation_profile, prepare_batch


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch-size", type=int, default=16)
    ap.add_argument("--chunks", default="16,8,4,2")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as d:
        records, _ = generate_synthetic_dataset(
            d, num_classes=4, per_class=max(8, args.batch_size // 2), seed=args.seed
        )
        triplets = curate(records, seed=args.seed).triplets
        vocab = build_vocabulary([t.text for t in triplets])
        model = TwoTowerModel.create(ModelConfig(), vocab, seed=args.seed)
        images, ids, labels, _ = prepare_batch(triplets[: args.batch_size], vocab, "float64")

        print(f"batch {args.batch_size}, mini model, exact activation-scalar counts")
        print(f"{'chunk':>6} {'plain':>12} {'checkpointed':>12} {'reduction':>10}")
        for chunk in (int(c) for c in args.chunks.split(",")):
            report = activation_profile(model, [(images, ids, labels)], chunk_size=chunk)
            plain = report.peak_without_checkpointing[0]
            ckpt = report.peak_with_checkpointing[0]
            print(f"{chunk:>6} {plain:>12} {ckpt:>12} {1 - ckpt / plain:>9.1%}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
