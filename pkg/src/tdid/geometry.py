"""Bounding-box arithmetic: IoU, greedy NMS, margin cropping."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

from .errors import EmptyCrop, NoDetection


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in image-frame pixel coordinates (origin top-left)."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        coords = (self.x0, self.y0, self.x1, self.y1)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite bbox coordinates {coords}")
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate bbox {coords}")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def as_list(self) -> List[float]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    class_index: int
    score: float

    def __post_init__(self):
        if self.class_index < 0:
            raise ValueError(f"negative class_index {self.class_index}")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class ImageDims:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"invalid image dims {self.width}x{self.height}")


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint."""
    ix0 = max(a.x0, b.x0)
    iy0 = max(a.y0, b.y0)
    ix1 = min(a.x1, b.x1)
    iy1 = min(a.y1, b.y1)
    iw = ix1 - ix0
    ih = iy1 - iy0
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def nms(dets: Sequence[Detection], iou_threshold: float) -> List[Detection]:
    """Greedy class-agnostic non-maximum suppression.

    Repeatedly keeps the highest-score remaining detection and drops every
    remaining detection with IoU strictly above the threshold against it.
    Output is sorted by descending score, ties broken by lower input index.
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise ValueError(f"iou_threshold {iou_threshold} outside (0, 1]")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    suppressed = [False] * len(dets)
    kept: List[Detection] = []
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        kept.append(dets[i])
        for j in order[pos + 1:]:
            if not suppressed[j] and iou(dets[i].bbox, dets[j].bbox) > iou_threshold:
                suppressed[j] = True
    return kept


def top1(dets: Sequence[Detection]) -> Detection:
    """The maximum-score detection; ties broken by lower input index."""
    if not dets:
        raise NoDetection("top1 on an empty detection list")
    best = 0
    for i in range(1, len(dets)):
        if dets[i].score > dets[best].score:
            best = i
    return dets[best]


def crop_with_margin(b: BBox, margin: float, dims: ImageDims) -> BBox:
    """Expand a box by `margin` pixels on every side and clamp to the image.

    The result is rounded to integer pixels (floor for mins, ceil for maxes)
    since it is the final crop boundary.
    """
    if margin < 0:
        raise ValueError(f"negative margin {margin}")
    x0 = max(0.0, math.floor(b.x0 - margin))
    y0 = max(0.0, math.floor(b.y0 - margin))
    x1 = min(float(dims.width), math.ceil(b.x1 + margin))
    y1 = min(float(dims.height), math.ceil(b.y1 + margin))
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise EmptyCrop(f"crop of {b} with margin {margin} is empty in {dims}")
    return BBox(x0, y0, x1, y1)
