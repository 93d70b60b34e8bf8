#!/usr/bin/env python3
"""End-to-end toy pipeline: synth -> curate -> two-stage train -> zero-shot.

Runs the same flow as acceptance criterion 8 with tweakable knobs, e.g.:

    python scripts/toy_pipeline.py --out runs/toy --classes 8 --per-class 128
"""

import argparse
import sys
from pathlib import Path

from florence_mini.cli import dispatch


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/toy")
    ap.add_argument("--classes", type=int, default=8)
    ap.add_argument("--per-class", type=int, default=128)
    ap.add_argument("--stage1-steps", type=int, default=300)
    ap.add_argument("--stage2-steps", type=int, default=60)
    ap.add_argument("--batch-size", type=int, default=64)
    ap.add_argument("--chunk-size", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    steps = [
        ("synth", ["--classes", str(args.classes), "--per-class", str(args.per_class),
                   "--seed", str(args.seed), "--out", str(out / "data")]),
        ("curate", ["--records", str(out / "data/records.jsonl"),
                    "--seed", str(args.seed), "--out", str(out / "cur")]),
        ("train", ["--triplets", str(out / "cur/triplets.jsonl"), "--out", str(out / "run"),
                   "--stage1-steps", str(args.stage1_steps), "--stage2-steps", str(args.stage2_steps),
                   "--batch-size", str(args.batch_size), "--chunk-size", str(args.chunk_size),
                   "--seed", str(args.seed)]),
        ("eval", ["zero-shot", "--checkpoint", str(out / "run/ckpt-final"),
                  "--data", str(out / "data"), "--seed", str(args.seed), "--out", str(out / "zero_shot")]),
        ("eval", ["retrieval", "--checkpoint", str(out / "run/ckpt-final"),
                  "--data", str(out / "data"), "--seed", str(args.seed), "--ks", "1,5",
                  "--out", str(out / "retrieval")]),
    ]
    for command, argv in steps:
        code = dispatch(command, argv)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
