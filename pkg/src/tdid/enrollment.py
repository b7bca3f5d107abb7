"""Enrollment pipeline: localize the main object, crop with margin, augment,
encode, aggregate, and persist prototypes.

Raw vectors are stored in float32 (post-adapter when an adapter is active);
the aggregated unit vector is recomputed after every mutation.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, List, Optional

import numpy as np

from . import adapter as adapter_mod
from .augment import (
    AugmentationKind,
    apply_augmentation,
    check_image,
    crop_image,
    default_augmentation_set,
)
from .backend import Backend, image_digest
from .embedding import aggregate_prototype, to_float32
from .errors import (
    DimensionMismatch,
    EmptyPrototype,
    FormatError,
    IoError,
    NoDetection,
    UnknownObject,
    VersionError,
)
from .geometry import BBox, ImageDims, crop_with_margin, nms, top1

STORE_VERSION = 1
AGGREGATE_CHECK_TOL = 1e-5


@dataclass
class EnrollmentConfig:
    margin_px: float = 15.0
    use_augmentations: bool = True
    main_object_prompt: str = "main object"
    nms_iou_threshold: float = 0.5
    min_confidence: float = 0.05
    adapter_enabled: bool = False
    # recovery path when localization fails; strict mode (off) matches the
    # enrollment procedure exactly
    full_image_fallback: bool = False

    def __post_init__(self):
        if self.margin_px < 0:
            raise ValueError("margin_px must be >= 0")
        if not (0.0 < self.nms_iou_threshold <= 1.0):
            raise ValueError("nms_iou_threshold must be in (0, 1]")
        if not (0.0 <= self.min_confidence <= 1.0):
            raise ValueError("min_confidence must be in [0, 1]")


@dataclass
class ProvenanceRecord:
    image_sha256: str
    bbox: List[float]
    augmentation: str
    adapted: bool
    timestamp: str


@dataclass
class ObjectPrototype:
    id: str
    label: str
    raw: List[np.ndarray] = field(default_factory=list)  # float32 rows
    aggregated: Optional[np.ndarray] = None
    provenance: List[ProvenanceRecord] = field(default_factory=list)

    def recompute(self) -> None:
        if not self.raw:
            raise EmptyPrototype(f"prototype {self.id!r} has no raw embeddings")
        self.aggregated = to_float32(aggregate_prototype(self.raw))


@dataclass
class PrototypeStore:
    dim: int
    version: int = STORE_VERSION
    prototypes: List[ObjectPrototype] = field(default_factory=list)
    adapter_digest: Optional[str] = None

    def get(self, object_id: str) -> ObjectPrototype:
        for proto in self.prototypes:
            if proto.id == object_id:
                return proto
        raise UnknownObject(f"no object with id {object_id!r}")

    def get_or_create(self, object_id: str, label: Optional[str] = None) -> ObjectPrototype:
        for proto in self.prototypes:
            if proto.id == object_id:
                return proto
        proto = ObjectPrototype(id=object_id, label=label if label is not None else object_id)
        self.prototypes.append(proto)
        return proto

    def ids(self) -> List[str]:
        return [p.id for p in self.prototypes]


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def fixed_clock(stamp: str = "1970-01-01T00:00:00+00:00") -> Callable[[], str]:
    """Clock returning a constant timestamp, for byte-identical stores."""
    return lambda: stamp


def locate_main_object(img: np.ndarray, backend: Backend, cfg: EnrollmentConfig) -> BBox:
    """Find the most prominent object via the main-object prompt.

    Encodes the prompt, runs the detector with it as the single class,
    filters by the confidence floor, applies NMS and returns the top-1 box.
    """
    check_image(img)
    prompt = backend.encode_text(cfg.main_object_prompt)
    dets = backend.detect(img, [prompt])
    dets = [d for d in dets if d.score >= cfg.min_confidence]
    if not dets:
        raise NoDetection("no detection above the confidence floor")
    kept = nms(dets, cfg.nms_iou_threshold)
    return top1(kept).bbox


def enroll_image(
    store: PrototypeStore,
    object_id: str,
    img: np.ndarray,
    backend: Backend,
    cfg: EnrollmentConfig,
    adapter: Optional[adapter_mod.WhitenColorTransform] = None,
    label: Optional[str] = None,
    clock: Optional[Callable[[], str]] = None,
) -> ObjectPrototype:
    """Run the full enrollment pipeline for one example image.

    Adds 4 raw vectors with augmentations enabled, 1 without. When an
    adapter is given, each embedding is transformed before aggregation and
    the transform digest is pinned on the store.
    """
    check_image(img)
    if backend.descriptor.dim != store.dim:
        raise DimensionMismatch(
            f"backend dim {backend.descriptor.dim} != store dim {store.dim}"
        )
    if adapter is not None:
        digest = adapter_mod.transform_digest(adapter)
        if store.adapter_digest is None:
            store.adapter_digest = digest
        elif store.adapter_digest != digest:
            raise FormatError("store was built with a different adapter transform")
    clock = clock or utc_now_iso

    try:
        box = locate_main_object(img, backend, cfg)
    except NoDetection:
        if not cfg.full_image_fallback:
            raise
        box = BBox(0.0, 0.0, float(img.shape[1]), float(img.shape[0]))
    dims = ImageDims(width=img.shape[1], height=img.shape[0])
    crop_box = crop_with_margin(box, cfg.margin_px, dims)
    cropped = crop_image(img, crop_box)
    digest = image_digest(img)

    proto = store.get_or_create(object_id, label=label)
    kinds = default_augmentation_set(cfg.use_augmentations)
    for kind in kinds:
        augmented = apply_augmentation(cropped, kind)
        vec = np.asarray(backend.encode_image(augmented), dtype=np.float64)
        if adapter is not None:
            vec = adapter_mod.apply_transform_vector(adapter, vec)
        proto.raw.append(to_float32(vec))
        proto.provenance.append(
            ProvenanceRecord(
                image_sha256=digest,
                bbox=crop_box.as_list(),
                augmentation=kind.value,
                adapted=adapter is not None,
                timestamp=clock(),
            )
        )
    proto.recompute()
    return proto


def remove_example(store: PrototypeStore, object_id: str, provenance_index: int) -> ObjectPrototype:
    """Drop one raw vector (and its provenance) and re-aggregate."""
    proto = store.get(object_id)
    if not (0 <= provenance_index < len(proto.raw)):
        raise IndexError(f"provenance index {provenance_index} out of range")
    if len(proto.raw) == 1:
        raise EmptyPrototype(f"removing the last example of {object_id!r}")
    del proto.raw[provenance_index]
    del proto.provenance[provenance_index]
    proto.recompute()
    return proto


# ---------------------------------------------------------------------------
# Store persistence
# ---------------------------------------------------------------------------

def _vec32_to_json(vec: np.ndarray) -> List[float]:
    # float(np.float32) round-trips exactly through repr/json
    return [float(x) for x in np.asarray(vec, dtype=np.float32)]


def store_to_json(store: PrototypeStore) -> dict:
    return {
        "version": store.version,
        "dim": store.dim,
        "adapter_digest": store.adapter_digest,
        "objects": [
            {
                "id": p.id,
                "label": p.label,
                "raw": [_vec32_to_json(v) for v in p.raw],
                "aggregated": _vec32_to_json(p.aggregated),
                "provenance": [
                    {
                        "image_sha256": rec.image_sha256,
                        "bbox": [float(x) for x in rec.bbox],
                        "augmentation": rec.augmentation,
                        "adapted": rec.adapted,
                        "timestamp": rec.timestamp,
                    }
                    for rec in p.provenance
                ],
            }
            for p in store.prototypes
        ],
    }


def save_store(store: PrototypeStore, path) -> None:
    """Atomic write (temp file + rename) of the store JSON."""
    for proto in store.prototypes:
        if proto.aggregated is None:
            proto.recompute()
    text = json.dumps(store_to_json(store), indent=1)
    tmp = str(path) + ".tmp"
    try:
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write store {path}: {exc}") from exc


def load_store(path) -> PrototypeStore:
    try:
        doc = json.loads(open(path).read())
    except OSError as exc:
        raise IoError(f"cannot read store {path}: {exc}") from exc
    except ValueError as exc:
        raise FormatError(f"store {path} is not valid JSON: {exc}") from exc
    if doc.get("version") != STORE_VERSION:
        raise VersionError(f"store {path} has version {doc.get('version')!r}")
    try:
        dim = int(doc["dim"])
        store = PrototypeStore(dim=dim, adapter_digest=doc.get("adapter_digest"))
        seen = set()
        for obj in doc["objects"]:
            if obj["id"] in seen:
                raise FormatError(f"duplicate object id {obj['id']!r}")
            seen.add(obj["id"])
            raw = [to_float32(v) for v in obj["raw"]]
            if not raw:
                raise FormatError(f"object {obj['id']!r} has no raw embeddings")
            for v in raw:
                if v.shape != (dim,):
                    raise FormatError(
                        f"object {obj['id']!r} has a raw vector of dim {v.shape}, store dim {dim}"
                    )
            aggregated = to_float32(obj["aggregated"])
            if aggregated.shape != (dim,):
                raise FormatError(f"object {obj['id']!r} aggregated dim mismatch")
            expected = to_float32(aggregate_prototype(raw))
            if np.abs(aggregated.astype(np.float64) - expected.astype(np.float64)).max() > AGGREGATE_CHECK_TOL:
                raise FormatError(
                    f"object {obj['id']!r}: aggregated vector does not match "
                    f"normalize(sum(raw)) within {AGGREGATE_CHECK_TOL}"
                )
            provenance = [
                ProvenanceRecord(
                    image_sha256=rec["image_sha256"],
                    bbox=[float(x) for x in rec["bbox"]],
                    augmentation=rec["augmentation"],
                    adapted=bool(rec["adapted"]),
                    timestamp=rec["timestamp"],
                )
                for rec in obj["provenance"]
            ]
            store.prototypes.append(
                ObjectPrototype(
                    id=obj["id"],
                    label=obj["label"],
                    raw=raw,
                    aggregated=aggregated,
                    provenance=provenance,
                )
            )
        return store
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"store {path} malformed: {exc}") from exc
