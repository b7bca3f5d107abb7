"""Deterministic augmentations of cropped object images.

Images are numpy uint8 arrays of shape (H, W, 3), channel order RGB.
Rotations are exact 90-degree index permutations, never resampling.
"""
from __future__ import annotations

import enum
from typing import List

import numpy as np

from .geometry import BBox


class AugmentationKind(enum.Enum):
    IDENTITY = "identity"
    ROT90_CW = "rot90_cw"
    ROT90_CCW = "rot90_ccw"
    HFLIP = "hflip"


def check_image(img: np.ndarray) -> np.ndarray:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {img.dtype}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"empty image shape {img.shape}")
    return img


def apply_augmentation(img: np.ndarray, kind: AugmentationKind) -> np.ndarray:
    check_image(img)
    if kind is AugmentationKind.IDENTITY:
        return img.copy()
    if kind is AugmentationKind.ROT90_CW:
        return np.ascontiguousarray(np.rot90(img, k=-1))
    if kind is AugmentationKind.ROT90_CCW:
        return np.ascontiguousarray(np.rot90(img, k=1))
    if kind is AugmentationKind.HFLIP:
        return np.ascontiguousarray(img[:, ::-1, :])
    raise ValueError(f"unknown augmentation kind {kind!r}")


def default_augmentation_set(enabled: bool = True) -> List[AugmentationKind]:
    """The original plus both 90-degree rotations and the horizontal flip."""
    if not enabled:
        return [AugmentationKind.IDENTITY]
    return [
        AugmentationKind.IDENTITY,
        AugmentationKind.ROT90_CW,
        AugmentationKind.ROT90_CCW,
        AugmentationKind.HFLIP,
    ]


def crop_image(img: np.ndarray, box: BBox) -> np.ndarray:
    """Slice out an integer-aligned crop box (see geometry.crop_with_margin)."""
    check_image(img)
    y0, y1 = int(box.y0), int(box.y1)
    x0, x1 = int(box.x0), int(box.x1)
    return np.ascontiguousarray(img[y0:y1, x0:x1, :])


def load_image(path) -> np.ndarray:
    """Decode a raster file (PNG, JPEG, ...) to an RGB uint8 array."""
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_image(img: np.ndarray, path) -> None:
    from PIL import Image as PILImage

    PILImage.fromarray(check_image(img), mode="RGB").save(path)
