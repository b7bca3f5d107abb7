"""Backend contracts, the deterministic mock world, and file exchange.

Three neural capabilities are reached only through the Backend protocol:
text encoding, image encoding, and prompt-conditioned detection. The mock
backend substitutes for real CLIP/YOLO-World at desk scale; the
external-files backend consumes embeddings and detections exported by an
out-of-process model runner (EMB1 binary files + detection JSON).
"""
from __future__ import annotations

import colorsys
import hashlib
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np

from .augment import check_image
from .embedding import l2_normalize
from .errors import BackendFailure, FormatError, IoError, TooManyClasses
from .geometry import BBox, Detection

EMB1_MAGIC = b"EMB1"
EMB1_HEADER_SIZE = 16

# Mock world constants
PALETTE_CAPACITY = 64
BACKGROUND_GRAY = 128
FOREGROUND_COLOR_DELTA = 40   # max-channel deviation from gray marking foreground
PALETTE_MATCH_RADIUS = 60.0   # euclidean RGB radius for palette matching
SALIENCY_SCORE = 0.99
SALIENCY_PROMPT = "main object"
# Pixel noise amplitude per unit noise_sigma, capped below the foreground
# threshold so detection stays exact.
PIXEL_NOISE_GAIN = 60.0
PIXEL_NOISE_CAP = FOREGROUND_COLOR_DELTA - 2


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    dim: int
    model_size: str  # "s", "m" or "l"


@runtime_checkable
class Backend(Protocol):
    """Contract every detector backend implements."""

    descriptor: BackendDescriptor

    def encode_text(self, text: str) -> np.ndarray: ...

    def encode_image(self, img: np.ndarray) -> np.ndarray: ...

    def detect(self, img: np.ndarray, prompts: Sequence[np.ndarray]) -> List[Detection]: ...


# ---------------------------------------------------------------------------
# EMB1 binary format
# ---------------------------------------------------------------------------

def write_embedding_file(path, batch: np.ndarray) -> None:
    """Write an (n, dim) batch as an EMB1 file (little-endian float32)."""
    arr = np.ascontiguousarray(batch, dtype="<f4")
    if arr.ndim != 2:
        raise FormatError(f"EMB1 batch must be 2-D, got shape {arr.shape}")
    n, dim = arr.shape
    header = EMB1_MAGIC + struct.pack("<III", dim, n, 0)
    try:
        tmp = str(path) + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(header)
            fh.write(arr.tobytes())
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write EMB1 file {path}: {exc}") from exc


def read_embedding_file(path) -> Tuple[int, np.ndarray]:
    """Read an EMB1 file; returns (dim, float32 batch). Bit-exact round trip."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read EMB1 file {path}: {exc}") from exc
    if len(data) < EMB1_HEADER_SIZE:
        raise FormatError(f"EMB1 file {path} truncated header ({len(data)} bytes)")
    if data[:4] != EMB1_MAGIC:
        raise FormatError(f"EMB1 file {path} has bad magic {data[:4]!r}")
    dim, n, reserved = struct.unpack("<III", data[4:16])
    if reserved != 0:
        raise FormatError(f"EMB1 file {path} has nonzero reserved field {reserved}")
    if dim == 0:
        raise FormatError(f"EMB1 file {path} declares dim 0")
    expected = EMB1_HEADER_SIZE + 4 * n * dim
    if len(data) != expected:
        raise FormatError(
            f"EMB1 file {path} has {len(data)} bytes, expected {expected} for n={n} dim={dim}"
        )
    arr = np.frombuffer(data[16:], dtype="<f4").reshape(n, dim).copy()
    return dim, arr


# ---------------------------------------------------------------------------
# Detection JSON exchange
# ---------------------------------------------------------------------------

def detections_to_json(dets: Sequence[Detection]) -> list:
    return [
        {"bbox": d.bbox.as_list(), "class_index": d.class_index, "score": d.score}
        for d in dets
    ]


def detections_from_json(records) -> List[Detection]:
    if not isinstance(records, list):
        raise FormatError("detection exchange must be a JSON array")
    out = []
    for rec in records:
        try:
            box = BBox(*[float(v) for v in rec["bbox"]])
            out.append(Detection(box, int(rec["class_index"]), float(rec["score"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad detection record {rec!r}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# Mock world
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MockWorldConfig:
    num_classes: int = 8
    dim: int = 32
    noise_sigma: float = 0.0
    seed: int = 0
    image_size: int = 64
    object_fraction: float = 0.5

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("mock world needs at least 2 classes")
        if self.num_classes > PALETTE_CAPACITY:
            raise ValueError(f"palette capacity is {PALETTE_CAPACITY} classes")
        if self.num_classes > self.dim:
            raise TooManyClasses(
                f"{self.num_classes} orthonormal classes do not fit in dim {self.dim}"
            )
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not (0.0 < self.object_fraction < 1.0):
            raise ValueError("object_fraction must be in (0, 1)")
        if self.image_size < 8:
            raise ValueError("image_size must be at least 8 pixels")


def _digest_seed(*parts: bytes) -> int:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return int.from_bytes(h.digest()[:8], "little")


def mock_class_latents(cfg: MockWorldConfig) -> np.ndarray:
    """num_classes mutually orthonormal unit vectors, deterministic in seed.

    Two extra reserved rows follow the class rows internally: a background
    latent and the saliency latent (see MockBackend).
    """
    rng = np.random.default_rng(cfg.seed)
    want = cfg.num_classes + 2
    cols = min(want, cfg.dim)
    raw = rng.standard_normal((cfg.dim, cols))
    q, r = np.linalg.qr(raw)
    # fix signs so the decomposition is deterministic across BLAS builds
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    vectors = (q * signs).T
    if cols < want:
        extra = rng.standard_normal((want - cols, cfg.dim))
        extra /= np.linalg.norm(extra, axis=1, keepdims=True)
        vectors = np.vstack([vectors, extra])
    return vectors


def mock_palette(cfg: MockWorldConfig) -> np.ndarray:
    """Saturated, evenly-spaced hue colors; one per class."""
    colors = []
    for i in range(cfg.num_classes):
        r, g, b = colorsys.hsv_to_rgb(i / cfg.num_classes, 1.0, 1.0)
        colors.append([round(255 * r), round(255 * g), round(255 * b)])
    return np.asarray(colors, dtype=np.float64)


def mock_object_bbox(cfg: MockWorldConfig) -> BBox:
    """Analytic bbox of the centered rectangle in every rendered image."""
    side = int(round(cfg.object_fraction * cfg.image_size))
    side = max(1, side)
    off = (cfg.image_size - side) // 2
    return BBox(float(off), float(off), float(off + side), float(off + side))


class MockBackend:
    """Deterministic synthetic world standing in for CLIP + YOLO-World.

    Class identity is carried by rectangle color, so flips and rotations are
    semantics-preserving, while pixel-digest-seeded embedding noise makes
    augmented embeddings differ. Stateless after construction; thread-safe.
    """

    def __init__(self, cfg: MockWorldConfig, model_size: str = "m"):
        self.cfg = cfg
        latents = mock_class_latents(cfg)
        self._class_latents = latents[: cfg.num_classes]
        self._background_latent = latents[cfg.num_classes]
        self._saliency_latent = latents[cfg.num_classes + 1]
        self._palette = mock_palette(cfg)
        self.descriptor = BackendDescriptor(
            name=f"mock(classes={cfg.num_classes},sigma={cfg.noise_sigma})",
            dim=cfg.dim,
            model_size=model_size,
        )

    # -- rendering ---------------------------------------------------------

    def class_latent(self, class_index: int) -> np.ndarray:
        return self._class_latents[class_index].copy()

    def render(self, class_index: int, instance_seed: int) -> np.ndarray:
        cfg = self.cfg
        if not (0 <= class_index < cfg.num_classes):
            raise ValueError(f"class_index {class_index} out of range")
        img = np.full((cfg.image_size, cfg.image_size, 3), BACKGROUND_GRAY, dtype=np.float64)
        box = mock_object_bbox(cfg)
        y0, y1, x0, x1 = int(box.y0), int(box.y1), int(box.x0), int(box.x1)
        img[y0:y1, x0:x1] = self._palette[class_index]
        amp = min(PIXEL_NOISE_CAP, int(round(PIXEL_NOISE_GAIN * cfg.noise_sigma)))
        if amp > 0:
            rng = np.random.default_rng(
                _digest_seed(
                    cfg.seed.to_bytes(8, "little", signed=True),
                    class_index.to_bytes(4, "little"),
                    int(instance_seed).to_bytes(8, "little", signed=True),
                )
            )
            noise = rng.integers(-amp, amp + 1, size=img[y0:y1, x0:x1].shape)
            img[y0:y1, x0:x1] += noise
        return np.clip(img, 0, 255).astype(np.uint8)

    # -- encoders ----------------------------------------------------------

    def encode_text(self, text: str) -> np.ndarray:
        if text == SALIENCY_PROMPT:
            return self._saliency_latent.copy()
        seed = _digest_seed(
            self.cfg.seed.to_bytes(8, "little", signed=True), b"text:", text.encode("utf-8")
        )
        rng = np.random.default_rng(seed)
        return l2_normalize(rng.standard_normal(self.cfg.dim))

    def _match_palette(self, img: np.ndarray) -> int:
        """Nearest palette entry to the central-region mean color; -1 = background."""
        h, w = img.shape[:2]
        cy0, cy1 = h // 4, h - h // 4
        cx0, cx1 = w // 4, w - w // 4
        mean = img[cy0:max(cy1, cy0 + 1), cx0:max(cx1, cx0 + 1)].astype(np.float64).mean(axis=(0, 1))
        dists = np.linalg.norm(self._palette - mean, axis=1)
        best = int(np.argmin(dists))
        if dists[best] > PALETTE_MATCH_RADIUS:
            return -1
        return best

    def encode_image(self, img: np.ndarray) -> np.ndarray:
        check_image(img)
        cls = self._match_palette(img)
        latent = self._background_latent if cls < 0 else self._class_latents[cls]
        vec = latent.astype(np.float64)
        if self.cfg.noise_sigma > 0:
            seed = _digest_seed(
                self.cfg.seed.to_bytes(8, "little", signed=True),
                b"img:",
                np.asarray(img.shape, dtype=np.int64).tobytes(),
                img.tobytes(),
            )
            rng = np.random.default_rng(seed)
            vec = vec + rng.standard_normal(self.cfg.dim) * self.cfg.noise_sigma
        return l2_normalize(vec)

    # -- detector ----------------------------------------------------------

    def detect(self, img: np.ndarray, prompts: Sequence[np.ndarray]) -> List[Detection]:
        check_image(img)
        if len(prompts) == 0:
            raise BackendFailure("mock detector needs at least one prompt")
        deviation = np.abs(img.astype(np.int64) - BACKGROUND_GRAY).max(axis=2)
        ys, xs = np.nonzero(deviation > FOREGROUND_COLOR_DELTA)
        if ys.size == 0:
            return []
        box = BBox(float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))
        region = np.ascontiguousarray(img[int(box.y0):int(box.y1), int(box.x0):int(box.x1)])
        region_emb = self.encode_image(region)
        dets = []
        for idx, prompt in enumerate(prompts):
            p = np.asarray(prompt, dtype=np.float64)
            pn = float(np.linalg.norm(p))
            if pn <= 0:
                raise BackendFailure(f"prompt {idx} has zero norm")
            cos_sal = float(np.dot(p / pn, self._saliency_latent))
            if cos_sal > 0.999:
                score = SALIENCY_SCORE
            else:
                cos = float(np.dot(region_emb, p / pn))
                score = min(1.0, max(0.0, (1.0 + cos) / 2.0))
            dets.append(Detection(box, idx, score))
        return dets


# ---------------------------------------------------------------------------
# External-files backend
# ---------------------------------------------------------------------------

def image_digest(img: np.ndarray) -> str:
    """Stable content hash of an image (dims prefix disambiguates shapes)."""
    h = hashlib.sha256()
    h.update(f"{img.shape[0]}x{img.shape[1]}:".encode("ascii"))
    h.update(np.ascontiguousarray(img).tobytes())
    return h.hexdigest()


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class ExternalFilesBackend:
    """Backend backed by pre-computed exports from an external model runner.

    Directory layout under `root`:
      text/<sha256(utf8 text)>.emb         EMB1 file, n=1
      images/<image digest>.emb            EMB1 file, n=1
      detections/<image digest>.json       detection exchange JSON array

    The external runner is responsible for producing detections with
    class_index referring to the same prompt ordering the caller uses.
    """

    def __init__(self, root, dim: int, model_size: str = "l", name: str = "external"):
        self.root = Path(root)
        self.descriptor = BackendDescriptor(name=name, dim=dim, model_size=model_size)

    def _read_single(self, path) -> np.ndarray:
        if not Path(path).exists():
            raise BackendFailure(f"missing export file {path}")
        dim, batch = read_embedding_file(path)
        if dim != self.descriptor.dim:
            raise BackendFailure(
                f"export {path} has dim {dim}, backend expects {self.descriptor.dim}"
            )
        if batch.shape[0] != 1:
            raise BackendFailure(f"export {path} must hold exactly one row")
        return batch[0].astype(np.float64)

    def encode_text(self, text: str) -> np.ndarray:
        return self._read_single(self.root / "text" / f"{text_digest(text)}.emb")

    def encode_image(self, img: np.ndarray) -> np.ndarray:
        return self._read_single(self.root / "images" / f"{image_digest(img)}.emb")

    def detect(self, img: np.ndarray, prompts: Sequence[np.ndarray]) -> List[Detection]:
        path = self.root / "detections" / f"{image_digest(img)}.json"
        if not path.exists():
            raise BackendFailure(f"missing detection export {path}")
        try:
            records = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise BackendFailure(f"cannot read detection export {path}: {exc}") from exc
        dets = detections_from_json(records)
        for d in dets:
            if d.class_index >= len(prompts):
                raise BackendFailure(
                    f"detection export {path} references prompt {d.class_index} "
                    f"but only {len(prompts)} prompts were given"
                )
        return dets
