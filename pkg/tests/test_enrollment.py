import json

import numpy as np
import pytest

from tdid.adapter import build_transform, estimate_stats, transform_digest
from tdid.backend import MockBackend, MockWorldConfig, mock_object_bbox
from tdid.embedding import aggregate_prototype
from tdid.enrollment import (
    EnrollmentConfig,
    PrototypeStore,
    enroll_image,
    fixed_clock,
    load_store,
    locate_main_object,
    remove_example,
    save_store,
)
from tdid.errors import (
    DimensionMismatch,
    EmptyPrototype,
    FormatError,
    NoDetection,
    UnknownObject,
    VersionError,
)


def blank_image(size=48):
    return np.full((size, size, 3), 128, dtype=np.uint8)


def make_adapter(backend):
    rows = np.stack([backend.encode_text(f"w{i}") for i in range(24)])
    return build_transform(estimate_stats(rows), estimate_stats(rows[::-1]), 1e-5)


class TestLocateMainObject:
    def test_finds_rendered_rectangle(self, clean_backend, enroll_cfg):
        img = clean_backend.render(0, 3)
        box = locate_main_object(img, clean_backend, enroll_cfg)
        expected = mock_object_bbox(clean_backend.cfg)
        assert abs(box.x0 - expected.x0) <= 1
        assert abs(box.y0 - expected.y0) <= 1
        assert abs(box.x1 - expected.x1) <= 1
        assert abs(box.y1 - expected.y1) <= 1

    def test_blank_image_no_detection(self, clean_backend, enroll_cfg):
        with pytest.raises(NoDetection):
            locate_main_object(blank_image(), clean_backend, enroll_cfg)


class TestEnrollImage:
    def test_augmented_adds_four_vectors(self, clean_backend, enroll_cfg):
        store = PrototypeStore(dim=clean_backend.cfg.dim)
        proto = enroll_image(store, "mug", clean_backend.render(1, 0),
                             clean_backend, enroll_cfg)
        assert len(proto.raw) == 4
        assert len(proto.provenance) == 4

    def test_without_augmentations_adds_one(self, clean_backend):
        cfg = EnrollmentConfig(use_augmentations=False)
        store = PrototypeStore(dim=clean_backend.cfg.dim)
        proto = enroll_image(store, "mug", clean_backend.render(1, 0),
                             clean_backend, cfg)
        assert len(proto.raw) == 1

    def test_aggregated_invariant_maintained(self, noisy_backend, enroll_cfg):
        store = PrototypeStore(dim=noisy_backend.cfg.dim)
        for i in range(3):
            proto = enroll_image(store, "obj", noisy_backend.render(2, i),
                                 noisy_backend, enroll_cfg)
        expected = aggregate_prototype(proto.raw)
        assert np.abs(proto.aggregated.astype(np.float64) - expected).max() <= 1e-6

    def test_dim_mismatch_rejected(self, clean_backend, enroll_cfg):
        store = PrototypeStore(dim=999)
        with pytest.raises(DimensionMismatch):
            enroll_image(store, "x", clean_backend.render(0, 0),
                         clean_backend, enroll_cfg)

    def test_no_detection_propagates_in_strict_mode(self, clean_backend, enroll_cfg):
        store = PrototypeStore(dim=clean_backend.cfg.dim)
        with pytest.raises(NoDetection):
            enroll_image(store, "x", blank_image(), clean_backend, enroll_cfg)

    def test_full_image_fallback(self, clean_backend):
        cfg = EnrollmentConfig(full_image_fallback=True)
        store = PrototypeStore(dim=clean_backend.cfg.dim)
        proto = enroll_image(store, "x", blank_image(), clean_backend, cfg)
        assert len(proto.raw) == 4

    def test_adapter_digest_pinned(self, clean_backend, enroll_cfg):
        adapter = make_adapter(clean_backend)
        store = PrototypeStore(dim=clean_backend.cfg.dim)
        enroll_image(store, "a", clean_backend.render(0, 0), clean_backend,
                     enroll_cfg, adapter=adapter)
        assert store.adapter_digest == transform_digest(adapter)
        other = make_adapter(MockBackend(MockWorldConfig(num_classes=4, dim=16, seed=99)))
        with pytest.raises(FormatError):
            enroll_image(store, "b", clean_backend.render(1, 0), clean_backend,
                         enroll_cfg, adapter=other)

    def test_end_to_end_classify_after_enrollment(self, clean_backend, enroll_cfg):
        from tdid.inference import classify_query

        store = PrototypeStore(dim=clean_backend.cfg.dim)
        for cls, label in ((0, "a"), (1, "b")):
            for i in range(3):
                enroll_image(store, label, clean_backend.render(cls, i),
                             clean_backend, enroll_cfg, label=label)
        result = classify_query(clean_backend.render(1, 100), store, clean_backend)
        assert result.predicted_id == "b"


class TestRemoveExample:
    def _store_with(self, backend, n_images, enroll_cfg):
        store = PrototypeStore(dim=backend.cfg.dim)
        for i in range(n_images):
            enroll_image(store, "obj", backend.render(0, i), backend, enroll_cfg)
        return store

    def test_remove_then_readd_identical(self, noisy_backend):
        cfg = EnrollmentConfig(use_augmentations=False)
        store = self._store_with(noisy_backend, 2, cfg)
        proto = store.get("obj")
        before = proto.aggregated.copy()
        remove_example(store, "obj", 1)
        enroll_image(store, "obj", noisy_backend.render(0, 1), noisy_backend, cfg)
        assert np.abs(proto.aggregated - before).max() <= 1e-6

    def test_remove_last_raises(self, clean_backend):
        cfg = EnrollmentConfig(use_augmentations=False)
        store = self._store_with(clean_backend, 1, cfg)
        with pytest.raises(EmptyPrototype):
            remove_example(store, "obj", 0)

    def test_remove_orthogonal_leaves_other(self):
        store = PrototypeStore(dim=2)
        proto = store.get_or_create("o")
        proto.raw = [np.array([1.0, 0.0], dtype=np.float32),
                     np.array([0.0, 1.0], dtype=np.float32)]
        proto.provenance = [None, None]
        proto.recompute()
        remove_example(store, "o", 0)
        assert proto.aggregated == pytest.approx(np.array([0.0, 1.0]))

    def test_unknown_object(self, clean_backend):
        store = PrototypeStore(dim=16)
        with pytest.raises(UnknownObject):
            remove_example(store, "ghost", 0)


class TestStorePersistence:
    def _populated(self, backend, enroll_cfg):
        store = PrototypeStore(dim=backend.cfg.dim)
        clock = fixed_clock()
        for cls, label in ((0, "cup"), (1, "can")):
            enroll_image(store, label, backend.render(cls, 0), backend,
                         enroll_cfg, label=label, clock=clock)
        return store

    def test_round_trip(self, tmp_path, noisy_backend, enroll_cfg):
        store = self._populated(noisy_backend, enroll_cfg)
        path = tmp_path / "store.json"
        save_store(store, path)
        loaded = load_store(path)
        assert loaded.dim == store.dim
        assert loaded.ids() == store.ids()
        for a, b in zip(loaded.prototypes, store.prototypes):
            assert np.array_equal(np.stack(a.raw).view(np.uint32),
                                  np.stack(b.raw).view(np.uint32))
            assert np.array_equal(a.aggregated.view(np.uint32),
                                  b.aggregated.view(np.uint32))
            assert [r.timestamp for r in a.provenance] == [
                r.timestamp for r in b.provenance
            ]

    def test_deterministic_bytes_with_fixed_clock(self, tmp_path, noisy_backend, enroll_cfg):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_store(self._populated(noisy_backend, enroll_cfg), p1)
        save_store(self._populated(noisy_backend, enroll_cfg), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_broken_aggregate_invariant_rejected(self, tmp_path, clean_backend, enroll_cfg):
        store = self._populated(clean_backend, enroll_cfg)
        path = tmp_path / "store.json"
        save_store(store, path)
        doc = json.loads(path.read_text())
        doc["objects"][0]["aggregated"][0] += 0.01
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError) as excinfo:
            load_store(path)
        assert "cup" in str(excinfo.value)

    def test_mixed_dims_rejected(self, tmp_path, clean_backend, enroll_cfg):
        store = self._populated(clean_backend, enroll_cfg)
        path = tmp_path / "store.json"
        save_store(store, path)
        doc = json.loads(path.read_text())
        doc["objects"][1]["raw"] = [v[:-1] for v in doc["objects"][1]["raw"]]
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError):
            load_store(path)

    def test_bad_version_rejected(self, tmp_path, clean_backend, enroll_cfg):
        store = self._populated(clean_backend, enroll_cfg)
        path = tmp_path / "store.json"
        save_store(store, path)
        doc = json.loads(path.read_text())
        doc["version"] = 42
        path.write_text(json.dumps(doc))
        with pytest.raises(VersionError):
            load_store(path)
