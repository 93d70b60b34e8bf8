"""Decoupled region classification: externally supplied boxes, zero-shot
classification per crop (proposal generation stays out of scope)."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..imaging import crop_box, resize_bilinear
from .zero_shot import zero_shot_classify


@dataclass(frozen=True)
class Box:
    image_id: str
    x0: int
    y0: int
    x1: int
    y1: int


def read_boxes_jsonl(path) -> list[Box]:
    boxes = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                boxes.append(Box(d["image_id"], d["x0"], d["y0"], d["x1"], d["y1"]))
    return boxes


def write_boxes_jsonl(path, boxes: list[Box]) -> None:
    with open(path, "w") as fh:
        for b in boxes:
            fh.write(
                json.dumps({"image_id": b.image_id, "x0": b.x0, "y0": b.y0, "x1": b.x1, "y1": b.y1}) + "\n"
            )


def classify_regions(model, image: np.ndarray, boxes, prompt_sets) -> list[list[tuple[int, float]]]:
    """Crop each box, bilinear-resize to the encoder input size, classify
    each crop independently. Empty box list yields an empty result."""
    side = model.config.image_size
    results = []
    for box in boxes:
        coords = (box.x0, box.y0, box.x1, box.y1) if isinstance(box, Box) else tuple(box)
        crop = crop_box(image, *coords)
        if crop.shape[0] != side or crop.shape[1] != side:
            crop = resize_bilinear(crop, side, side)
        results.append(zero_shot_classify(model, crop, prompt_sets))
    return results
