"""Zero-shot classification with prompt-template ensembling.

Class scores are cosine similarities between the image embedding and each
class's ensembled text embedding (mean of per-template unit embeddings,
re-normalized). Ranking is descending score with ties broken by ascending
class index; any positive rescaling of the scores leaves it unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..encoders.vocab import tokenize_batch
from ..numerics.tensor import no_grad

# Default ensembling templates; a deliberately small, documented stand-in
# for the full CLIP prompt list, overridable wherever prompt sets are built.
DEFAULT_EVAL_TEMPLATES = (
    "a photo of a {}.",
    "a photo of the {}.",
    "a cropped photo of a {}.",
    "a close-up photo of a {}.",
    "a bright photo of a {}.",
    "a photo of one {}.",
    "a low resolution photo of a {}.",
)


@dataclass
class ClassPromptSet:
    class_name: str
    templates: tuple[str, ...]
    embedding: np.ndarray  # unit-norm ensembled text embedding

    def __post_init__(self):
        norm = float(np.linalg.norm(self.embedding))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"ensembled embedding must be unit norm, got {norm}")


def build_prompt_sets(model, class_names, templates=DEFAULT_EVAL_TEMPLATES) -> list[ClassPromptSet]:
    if not class_names:
        raise ValueError("class list is empty")
    templates = tuple(templates)
    if not templates:
        raise ValueError("template list is empty")
    sets = []
    for name in class_names:
        ids = tokenize_batch([t.format(name) for t in templates], model.vocab)
        with no_grad():
            v = model.encode_text(ids).data
        mean = v.mean(axis=0)
        mean = mean / np.linalg.norm(mean)
        sets.append(ClassPromptSet(class_name=name, templates=templates, embedding=mean))
    return sets


def _class_matrix(prompt_sets: list[ClassPromptSet]) -> np.ndarray:
    return np.stack([p.embedding for p in prompt_sets])


def rank_scores(scores: np.ndarray) -> np.ndarray:
    """Descending-score order; stable sort breaks ties by class index."""
    return np.argsort(-scores, axis=-1, kind="stable")


def zero_shot_classify(model, image: np.ndarray, prompt_sets) -> list[tuple[int, float]]:
    """Ranked (class index, cosine score) for one image."""
    if not prompt_sets:
        raise ValueError("class list is empty")
    with no_grad():
        u = model.encode_image(image).data[0]
    scores = _class_matrix(prompt_sets) @ u
    order = rank_scores(scores)
    return [(int(c), float(scores[c])) for c in order]


def zero_shot_classify_batch(model, images: np.ndarray, prompt_sets, batch_size: int = 32) -> np.ndarray:
    """Ranked class indices (N, num_classes) for an image stack."""
    if not prompt_sets:
        raise ValueError("class list is empty")
    mat = _class_matrix(prompt_sets)
    ranked = []
    for start in range(0, images.shape[0], batch_size):
        with no_grad():
            u = model.encode_image(images[start : start + batch_size]).data
        ranked.append(rank_scores(u @ mat.T))
    return np.concatenate(ranked, axis=0)


def evaluate_topk(ranked: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Fraction of rows whose true label appears among the first k entries."""
    ranked = np.asarray(ranked)
    labels = np.asarray(labels)
    if k < 1:
        raise ValueError("k must be >= 1")
    if ranked.shape[0] != labels.shape[0]:
        raise ValueError("ranked predictions and labels must align")
    if ranked.shape[1] < k:
        raise ValueError(f"prediction lists shorter than k={k}")
    return float((ranked[:, :k] == labels[:, None]).any(axis=1).mean())
