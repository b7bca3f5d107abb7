"""Detection phase: all saved prototypes as prompts in one detector call,
plus the per-query classification verdict."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .augment import check_image
from .backend import Backend
from .errors import DimensionMismatch, EmptyStore
from .enrollment import PrototypeStore
from .geometry import Detection, nms


@dataclass
class InferenceConfig:
    min_confidence: float = 0.05
    nms_iou_threshold: float = 0.5


@dataclass
class ClassificationResult:
    predicted_id: Optional[str]
    confidence: float
    all_scores: List[Tuple[str, float]] = field(default_factory=list)
    detections: List[Detection] = field(default_factory=list)


def detect_objects(
    img: np.ndarray,
    store: PrototypeStore,
    backend: Backend,
    min_confidence: float = 0.05,
    nms_iou: float = 0.5,
) -> List[Detection]:
    """One detector call with every aggregated prototype as a prompt.

    Detections are filtered by the confidence floor and per-class NMS is
    applied; class_index maps to store ordering.
    """
    check_image(img)
    if not store.prototypes:
        raise EmptyStore("cannot detect with an empty prototype store")
    if backend.descriptor.dim != store.dim:
        raise DimensionMismatch(
            f"backend dim {backend.descriptor.dim} != store dim {store.dim}"
        )
    prompts = [p.aggregated.astype(np.float64) for p in store.prototypes]
    dets = backend.detect(img, prompts)
    dets = [d for d in dets if d.score >= min_confidence]
    kept: List[Detection] = []
    for cls in sorted({d.class_index for d in dets}):
        kept.extend(nms([d for d in dets if d.class_index == cls], nms_iou))
    kept.sort(key=lambda d: (-d.score, d.class_index))
    return kept


def classify_query(
    img: np.ndarray,
    store: PrototypeStore,
    backend: Backend,
    cfg: Optional[InferenceConfig] = None,
) -> ClassificationResult:
    """Max-confidence detection wins; no detection means no prediction.

    Ties on exact score equality go to the earlier object in store order.
    all_scores records the best score per object so alternative rules can
    be recomputed offline.
    """
    cfg = cfg or InferenceConfig()
    dets = detect_objects(img, store, backend, cfg.min_confidence, cfg.nms_iou_threshold)
    ids = store.ids()
    best_per_class: dict = {}
    for d in dets:
        prev = best_per_class.get(d.class_index)
        if prev is None or d.score > prev:
            best_per_class[d.class_index] = d.score
    all_scores = [(ids[ci], best_per_class[ci]) for ci in sorted(best_per_class)]
    if not dets:
        return ClassificationResult(predicted_id=None, confidence=0.0,
                                    all_scores=all_scores, detections=dets)
    best_idx = None
    best_score = -1.0
    for ci in range(len(ids)):
        score = best_per_class.get(ci)
        if score is not None and score > best_score:
            best_idx = ci
            best_score = score
    return ClassificationResult(
        predicted_id=ids[best_idx],
        confidence=best_score,
        all_scores=all_scores,
        detections=dets,
    )


def result_record(image_name: str, result: ClassificationResult) -> dict:
    """Per-query JSON record consumed by the harness and the CLI."""
    return {
        "image": image_name,
        "predicted": result.predicted_id,
        "confidence": result.confidence,
        "scores": {oid: score for oid, score in result.all_scores},
        "detections": [
            {"bbox": d.bbox.as_list(), "class_index": d.class_index, "score": d.score}
            for d in result.detections
        ],
    }
