import numpy as np
import pytest

from tdid.augment import (
    AugmentationKind,
    apply_augmentation,
    crop_image,
    default_augmentation_set,
    load_image,
    save_image,
)
from tdid.geometry import BBox


def random_image(rng, h=None, w=None):
    h = h or int(rng.integers(1, 12))
    w = w or int(rng.integers(1, 12))
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def test_identity_is_a_copy(rng):
    img = random_image(rng)
    out = apply_augmentation(img, AugmentationKind.IDENTITY)
    assert np.array_equal(out, img)
    assert out is not img


def test_hflip_is_involution(rng):
    img = random_image(rng)
    once = apply_augmentation(img, AugmentationKind.HFLIP)
    twice = apply_augmentation(once, AugmentationKind.HFLIP)
    assert np.array_equal(twice, img)


def test_rot90_cw_index_mapping():
    # 2x1 image with rows A, B rotates clockwise to the 1x2 image [B, A]
    a = np.array([[[1, 2, 3]]], dtype=np.uint8)
    b = np.array([[[4, 5, 6]]], dtype=np.uint8)
    img = np.vstack([a, b])
    out = apply_augmentation(img, AugmentationKind.ROT90_CW)
    assert out.shape == (1, 2, 3)
    assert np.array_equal(out[0, 0], [4, 5, 6])
    assert np.array_equal(out[0, 1], [1, 2, 3])


def test_rotation_pair_cancels(rng):
    img = random_image(rng)
    cw = apply_augmentation(img, AugmentationKind.ROT90_CW)
    back = apply_augmentation(cw, AugmentationKind.ROT90_CCW)
    assert np.array_equal(back, img)


def test_four_cw_rotations_identity(rng):
    img = random_image(rng)
    out = img
    for _ in range(4):
        out = apply_augmentation(out, AugmentationKind.ROT90_CW)
    assert np.array_equal(out, img)


def test_pixel_multiset_preserved(rng):
    img = random_image(rng, h=5, w=7)
    for kind in AugmentationKind:
        out = apply_augmentation(img, kind)
        assert sorted(map(tuple, img.reshape(-1, 3))) == sorted(map(tuple, out.reshape(-1, 3)))


def test_default_set_order_and_length():
    kinds = default_augmentation_set()
    assert kinds == [
        AugmentationKind.IDENTITY,
        AugmentationKind.ROT90_CW,
        AugmentationKind.ROT90_CCW,
        AugmentationKind.HFLIP,
    ]
    assert default_augmentation_set(enabled=False) == [AugmentationKind.IDENTITY]


def test_default_set_dims_on_non_square(rng):
    img = random_image(rng, h=3, w=5)
    dims = [apply_augmentation(img, k).shape[:2] for k in default_augmentation_set()]
    assert dims == [(3, 5), (5, 3), (5, 3), (3, 5)]


def test_crop_image():
    img = np.arange(4 * 6 * 3, dtype=np.uint8).reshape(4, 6, 3)
    out = crop_image(img, BBox(1.0, 1.0, 4.0, 3.0))
    assert out.shape == (2, 3, 3)
    assert np.array_equal(out, img[1:3, 1:4])


def test_png_round_trip(rng, tmp_path):
    img = random_image(rng, h=9, w=13)
    path = tmp_path / "img.png"
    save_image(img, path)
    assert np.array_equal(load_image(path), img)


def test_rejects_non_uint8():
    with pytest.raises(ValueError):
        apply_augmentation(np.zeros((2, 2, 3), dtype=np.float32), AugmentationKind.HFLIP)
