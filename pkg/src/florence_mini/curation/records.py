"""Dataset records, curated triplets, and their JSONL on-disk forms."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..numerics.container import read_tensor_file, read_tensor_header


@dataclass(frozen=True)
class RawRecord:
    """One ingested image-text pair; the image lives in a container file."""

    id: str
    image_path: str
    text: str
    source: str = ""

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"record {self.id!r} has empty text")


@dataclass(frozen=True)
class Triplet:
    """Curated training record: image, description, hash-derived label."""

    id: str
    image_path: str
    text: str
    label: int
    augmented: bool = False

    def __post_init__(self):
        if self.label < 0:
            raise ValueError("label ids are non-negative")


def load_image(path) -> np.ndarray:
    """Read an H x W x C float32 image in [0, 1] from a tensor container."""
    t = read_tensor_file(path)
    arr = t.data
    if arr.ndim != 3:
        raise ValueError(f"{path}: image tensor must be rank 3, got rank {arr.ndim}")
    if arr.shape[2] not in (1, 3):
        raise ValueError(f"{path}: channel count must be 1 or 3, got {arr.shape[2]}")
    return arr.astype(np.float32, copy=False)


def image_size(path) -> tuple[int, int]:
    """(H, W) from the container header without loading the payload."""
    shape, _ = read_tensor_header(path)
    if len(shape) != 3:
        raise ValueError(f"{path}: image tensor must be rank 3, got rank {len(shape)}")
    return shape[0], shape[1]


def _relative_image(image_path: str, jsonl_path) -> str:
    # store images relative to the JSONL so reruns in different roots hash
    # identically and datasets stay relocatable
    import os

    return os.path.relpath(image_path, start=Path(jsonl_path).parent)


def _resolve_image(image: str, jsonl_path) -> str:
    p = Path(image)
    return image if p.is_absolute() else str((Path(jsonl_path).parent / p).resolve())


def write_records_jsonl(path, records: list[RawRecord]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {"id": r.id, "image": _relative_image(r.image_path, path), "text": r.text, "source": r.source}
                )
                + "\n"
            )


def read_records_jsonl(path) -> list[RawRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            records.append(
                RawRecord(
                    id=d["id"], image_path=_resolve_image(d["image"], path), text=d["text"], source=d.get("source", "")
                )
            )
    return records


def write_triplets_jsonl(path, triplets: list[Triplet]) -> None:
    with open(path, "w") as fh:
        for t in triplets:
            fh.write(
                json.dumps(
                    {
                        "id": t.id,
                        "image": _relative_image(t.image_path, path),
                        "text": t.text,
                        "label": t.label,
                        "augmented": t.augmented,
                    }
                )
                + "\n"
            )


def read_triplets_jsonl(path) -> list[Triplet]:
    triplets = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            triplets.append(
                Triplet(
                    id=d["id"],
                    image_path=_resolve_image(d["image"], path),
                    text=d["text"],
                    label=d["label"],
                    augmented=d["augmented"],
                )
            )
    return triplets


def class_of_record(record: RawRecord) -> int | None:
    """Ground-truth class index for synthetic records (source "class:i:word")."""
    if record.source.startswith("class:"):
        return int(record.source.split(":")[1])
    return None


def holdout_ids(ids: list[str], fraction: float, seed: int) -> set[str]:
    """Deterministic held-out subset: a pure function of (ids order, seed)."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("holdout fraction must be in [0, 1)")
    n = len(ids)
    k = int(round(n * fraction))
    perm = np.random.default_rng([seed, 0x484F]).permutation(n)  # salt keeps split independent of shuffles
    return {ids[i] for i in perm[:k]}
