"""Command-line surface: synth, curate, train, eval, inflate.

Every artifact-producing command writes its outputs under --out together
with a run manifest (resolved config, seed, input hashes, artifact list,
wall clock, version). Execution is always deterministic and sequential;
FLORENCE_MINI_REFERENCE_MODE=1 pins that explicitly for launch scripts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .curation import (
    class_of_record,
    curate,
    generate_synthetic_dataset,
    holdout_ids,
    load_image,
    read_records_jsonl,
    read_triplets_jsonl,
    write_records_jsonl,
    write_removal_report_jsonl,
    write_triplets_jsonl,
)
from .encoders import build_video_tower
from .evaluation import (
    EvalReport,
    FewShotConfig,
    ProbeConfig,
    append_report_jsonl,
    build_prompt_sets,
    classify_regions,
    evaluate_topk,
    few_shot_episode_eval,
    linear_probe,
    read_boxes_jsonl,
    retrieval_recall,
    zero_shot_classify_batch,
)
from .encoders.vocab import tokenize_batch
from .numerics.container import save_checkpoint
from .numerics.tensor import no_grad
from .trainer import TrainConfig, load_model_checkpoint, run_two_stage_training


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _json_safe(config: dict) -> dict:
    return {
        k: v
        for k, v in config.items()
        if k != "fn" and isinstance(v, (str, int, float, bool, list, dict, type(None)))
    }


def write_run_manifest(out_dir, command: str, config: dict, seed, inputs, artifacts, wall_clock_s) -> None:
    manifest = {
        "command": command,
        "config": _json_safe(config),
        "seed": seed,
        "input_hashes": {str(p): _sha256(p) for p in inputs},
        "artifacts": [str(a) for a in artifacts],
        "wall_clock_s": wall_clock_s,
        "version": __version__,
    }
    with open(Path(out_dir) / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def parse_config(path: str | None, overrides: dict) -> TrainConfig:
    """File config merged with flag overrides (flags win); unknown keys are
    rejected with the offending key names."""
    data: dict = {}
    if path:
        with open(path) as fh:
            data = json.load(fh)
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    return TrainConfig.from_dict(data)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    t0 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records, names = generate_synthetic_dataset(
        out,
        num_classes=args.classes,
        per_class=args.per_class,
        image_side=args.image_side,
        seed=args.seed,
        noise_sigma=args.noise_sigma,
        word_caption_fraction=args.word_fraction,
    )
    write_records_jsonl(out / "records.jsonl", records)
    (out / "classes.txt").write_text("\n".join(names) + "\n")
    write_run_manifest(
        out, "synth", vars(args) | {"out": str(out)}, args.seed, [],
        [out / "records.jsonl", out / "classes.txt", out / "images"],
        time.perf_counter() - t0,
    )
    print(f"synth: wrote {len(records)} records over {len(names)} classes to {out}")
    return 0


def cmd_curate(args) -> int:
    t0 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records_path = Path(args.records)
    records = read_records_jsonl(records_path)
    result = curate(
        records,
        dedup_threshold=args.dedup_threshold,
        min_side=args.min_side,
        seed=args.seed,
        case_fold=args.case_fold,
    )
    write_triplets_jsonl(out / "triplets.jsonl", result.triplets)
    write_removal_report_jsonl(out / "removals.jsonl", result.removal_reports)
    with open(out / "stats.json", "w") as fh:
        json.dump(result.stats(), fh, indent=1)
    write_run_manifest(
        out, "curate", vars(args) | {"out": str(out)}, args.seed, [records_path],
        [out / "triplets.jsonl", out / "removals.jsonl", out / "stats.json"],
        time.perf_counter() - t0,
    )
    print(f"curate: {result.stats()}")
    return 0


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    overrides = {
        "seed": args.seed,
        "batch_size": args.batch_size,
        "chunk_size": args.chunk_size,
        "zero_workers": args.zero_workers,
        "precision": args.precision,
        "stage1_steps": args.stage1_steps,
        "stage2_steps": args.stage2_steps,
        "high_res_steps": args.high_res_steps,
        "peak_lr": args.peak_lr,
        "warmup_steps": args.warmup_steps,
        "objective": args.objective,
        "holdout_fraction": args.holdout_fraction,
        "checkpoint_every": args.checkpoint_every,
    }
    config = parse_config(args.config, overrides)
    triplets_path = Path(args.triplets)
    triplets = read_triplets_jsonl(triplets_path)
    if config.holdout_fraction > 0:
        held = holdout_ids([t.id for t in triplets], config.holdout_fraction, config.seed)
        pool = [t for t in triplets if t.id not in held]
    else:
        pool = triplets
    result = run_two_stage_training(pool, config, out, resume_from=args.resume)
    artifacts = [result["metrics_path"], *result["checkpoints"].values()]
    write_run_manifest(
        out, "train", config.to_dict(), config.seed, [triplets_path], artifacts,
        time.perf_counter() - t0,
    )
    print(f"train: {result['steps_run']} steps, final checkpoint {result['checkpoints']['final']}")
    return 0


def _load_eval_data(args):
    data = Path(args.data)
    records = read_records_jsonl(data / "records.jsonl")
    class_names = (data / "classes.txt").read_text().splitlines()
    return records, [c for c in class_names if c]


def _holdout_records(records, fraction, seed):
    held = holdout_ids([r.id for r in records], fraction, seed)
    return [r for r in records if r.id in held]


def _stack_images(records, side=None):
    from .imaging import resize_bilinear

    images = []
    for r in records:
        img = load_image(r.image_path)
        if side is not None and img.shape[0] != side:
            img = resize_bilinear(img, side, side)
        images.append(img)
    return np.stack(images)


def cmd_eval_zero_shot(args) -> int:
    t0 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = load_model_checkpoint(args.checkpoint)
    records, class_names = _load_eval_data(args)
    eval_records = _holdout_records(records, args.holdout_fraction, args.seed)
    images = _stack_images(eval_records, side=model.config.image_size)
    labels = np.array([class_of_record(r) for r in eval_records])
    prompt_sets = build_prompt_sets(model, class_names)
    ranked = zero_shot_classify_batch(model, images, prompt_sets)
    metrics = {
        "top1_acc": evaluate_topk(ranked, labels, 1),
        "top5_acc": evaluate_topk(ranked, labels, min(5, len(class_names))),
    }
    report = EvalReport(task="zero_shot", metrics=metrics, n=len(eval_records), seed=args.seed)
    append_report_jsonl(out / "reports.jsonl", report)
    write_run_manifest(
        out, "eval zero-shot", vars(args) | {"out": str(out)}, args.seed,
        [Path(args.data) / "records.jsonl"], [out / "reports.jsonl"],
        time.perf_counter() - t0,
    )
    print(f"zero-shot: {metrics} over {len(eval_records)} held-out images")
    return 0


def cmd_eval_retrieval(args) -> int:
    t0 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = load_model_checkpoint(args.checkpoint)
    records, _ = _load_eval_data(args)
    eval_records = _holdout_records(records, args.holdout_fraction, args.seed)
    images = _stack_images(eval_records, side=model.config.image_size)
    ids = tokenize_batch([r.text for r in eval_records], model.vocab)
    with no_grad():
        u = model.encode_image(images).data
        v = model.encode_text(ids).data
    ks = [int(k) for k in args.ks.split(",")]
    rec = retrieval_recall(u, v, ks)
    metrics = {f"r_at_{k}_{d}": rec[d][k] for d in ("i2t", "t2i") for k in ks}
    report = EvalReport(task="retrieval", metrics=metrics, n=len(eval_records), seed=args.seed)
    append_report_jsonl(out / "reports.jsonl", report)
    write_run_manifest(
        out, "eval retrieval", vars(args) | {"out": str(out)}, args.seed,
        [Path(args.data) / "records.jsonl"], [out / "reports.jsonl"],
        time.perf_counter() - t0,
    )
    print(f"retrieval: {metrics}")
    return 0


def cmd_eval_linear_probe(args) -> int:
    t0 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = load_model_checkpoint(args.checkpoint)
    records, _ = _load_eval_data(args)
    images = _stack_images(records, side=model.config.image_size)
    labels = np.array([class_of_record(r) for r in records])
    with no_grad():
        features = model.encode_image(images).data
    result = linear_probe(
        features, labels,
        ProbeConfig(epochs=args.probe_epochs, holdout_fraction=args.holdout_fraction, seed=args.seed),
    )
    metrics = {"probe_acc": result.accuracy}
    report = EvalReport(task="linear_probe", metrics=metrics, n=len(records), seed=args.seed)
    append_report_jsonl(out / "reports.jsonl", report)
    write_run_manifest(
        out, "eval linear-probe", vars(args) | {"out": str(out)}, args.seed,
        [Path(args.data) / "records.jsonl"], [out / "reports.jsonl"],
        time.perf_counter() - t0,
    )
    print(f"linear probe: {metrics}" + (" (degenerate)" if result.degenerate else ""))
    return 0


def cmd_eval_few_shot(args) -> int:
    t0 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = load_model_checkpoint(args.checkpoint)
    records, _ = _load_eval_data(args)
    images = _stack_images(records, side=model.config.image_size)
    labels = np.array([class_of_record(r) for r in records])
    with no_grad():
        features = model.encode_image(images).data
    result = few_shot_episode_eval(
        features, labels, way=args.way, shot=args.shot, episodes=args.episodes,
        seed=args.seed, config=FewShotConfig(way=args.way, episodes=args.episodes),
    )
    metrics = {"episode_acc": result.mean_accuracy}
    report = EvalReport(
        task="few_shot", metrics=metrics, n=args.episodes, seed=args.seed, ci95=result.ci95
    )
    append_report_jsonl(out / "reports.jsonl", report)
    write_run_manifest(
        out, "eval few-shot", vars(args) | {"out": str(out)}, args.seed,
        [Path(args.data) / "records.jsonl"], [out / "reports.jsonl"],
        time.perf_counter() - t0,
    )
    print(f"few-shot {args.way}-way {args.shot}-shot: {result.mean_accuracy:.4f} +/- {result.ci95:.4f}")
    return 0


def cmd_eval_regions(args) -> int:
    t0 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = load_model_checkpoint(args.checkpoint)
    _, class_names = _load_eval_data(args)
    prompt_sets = build_prompt_sets(model, class_names)
    boxes = read_boxes_jsonl(args.boxes)
    image = load_image(args.image)
    rankings = classify_regions(model, image, boxes, prompt_sets)
    with open(out / "region_labels.jsonl", "w") as fh:
        for box, ranked in zip(boxes, rankings):
            fh.write(
                json.dumps(
                    {
                        "image_id": box.image_id,
                        "box": [box.x0, box.y0, box.x1, box.y1],
                        "ranked_classes": [class_names[c] for c, _ in ranked],
                        "scores": [s for _, s in ranked],
                    }
                )
                + "\n"
            )
    write_run_manifest(
        out, "eval regions", vars(args) | {"out": str(out)}, args.seed,
        [args.boxes, args.image], [out / "region_labels.jsonl"],
        time.perf_counter() - t0,
    )
    print(f"regions: labeled {len(boxes)} boxes")
    return 0


def cmd_inflate(args) -> int:
    t0 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = load_model_checkpoint(args.checkpoint)
    tower = build_video_tower(model.param_arrays(), model.config, args.temporal_kernel, args.frames)
    ckpt_dir = out / "video-tower"  # keeps the container manifest clear of the run manifest
    save_checkpoint(
        ckpt_dir,
        tower.params,
        metadata={
            "model_config": model.config.to_dict(),
            "vocab": model.vocab.to_list(),
            "video": {"temporal_kernel": args.temporal_kernel, "frames": args.frames},
        },
    )
    write_run_manifest(
        out, "inflate", vars(args) | {"out": str(out)}, args.seed,
        [Path(args.checkpoint) / "manifest.json"], [ckpt_dir],
        time.perf_counter() - t0,
    )
    print(f"inflate: wrote video tower (kt={args.temporal_kernel}, T={args.frames}) to {ckpt_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="florence-mini")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic image-text corpus")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--per-class", type=int, default=128)
    p.add_argument("--image-side", type=int, default=32)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--word-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("curate", help="dedup, filter, label, and augment records")
    p.add_argument("--records", required=True, help="records.jsonl path")
    p.add_argument("--dedup-threshold", type=int, default=5)
    p.add_argument("--min-side", type=int, default=16)
    p.add_argument("--case-fold", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_curate)

    p = sub.add_parser("train", help="two-stage contrastive training")
    p.add_argument("--triplets", required=True, help="curated triplets.jsonl")
    p.add_argument("--config", help="JSON config file (flags override)")
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--chunk-size", type=int)
    p.add_argument("--zero-workers", type=int)
    p.add_argument("--precision", choices=["full", "half-emulated"])
    p.add_argument("--stage1-steps", type=int)
    p.add_argument("--stage2-steps", type=int)
    p.add_argument("--high-res-steps", type=int)
    p.add_argument("--peak-lr", type=float)
    p.add_argument("--warmup-steps", type=int)
    p.add_argument("--objective", choices=["unicl", "infonce"])
    p.add_argument("--holdout-fraction", type=float)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--resume", help="checkpoint directory to resume from")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    pe = sub.add_parser("eval", help="transfer evaluation protocols")
    esub = pe.add_subparsers(dest="eval_command", required=True)

    def eval_common(q):
        q.add_argument("--checkpoint", required=True)
        q.add_argument("--data", required=True, help="synth dir with records.jsonl + classes.txt")
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--holdout-fraction", type=float, default=0.2)
        q.add_argument("--out", required=True)

    q = esub.add_parser("zero-shot")
    eval_common(q)
    q.set_defaults(fn=cmd_eval_zero_shot)

    q = esub.add_parser("retrieval")
    eval_common(q)
    q.add_argument("--ks", default="1,5")
    q.set_defaults(fn=cmd_eval_retrieval)

    q = esub.add_parser("linear-probe")
    eval_common(q)
    q.add_argument("--probe-epochs", type=int, default=100)
    q.set_defaults(fn=cmd_eval_linear_probe)

    q = esub.add_parser("few-shot")
    eval_common(q)
    q.add_argument("--way", type=int, default=5)
    q.add_argument("--shot", type=int, default=5)
    q.add_argument("--episodes", type=int, default=600)
    q.set_defaults(fn=cmd_eval_few_shot)

    q = esub.add_parser("regions")
    eval_common(q)
    q.add_argument("--image", required=True, help="image container file")
    q.add_argument("--boxes", required=True, help="boxes.jsonl")
    q.set_defaults(fn=cmd_eval_regions)

    p = sub.add_parser("inflate", help="2D -> 3D video tower inflation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--temporal-kernel", type=int, required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_inflate)

    return parser


def dispatch(command: str, args: list[str]) -> int:
    """Run one subcommand; returns the process exit status."""
    return main([command, *args])


def main(argv=None) -> int:
    # Reference mode (deterministic, sequential) is the only execution mode;
    # the environment variable exists so launchers can pin it explicitly.
    os.environ.setdefault("FLORENCE_MINI_REFERENCE_MODE", "1")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
