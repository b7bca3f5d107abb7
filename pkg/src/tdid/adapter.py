"""Whitening-coloring distribution adapter.

Aligns image-embedding statistics to text-embedding statistics: center by
the image-domain mean, whiten with the image-domain covariance (ZCA form,
E D^{-1/2} E^T), color with the text-domain covariance (E D^{1/2} E^T),
then shift by the text-domain mean. All matrix work is float64; dim 512
eigendecompositions need it.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .embedding import NORM_FLOOR, as_batch, as_vector
from .errors import (
    DegenerateVector,
    DimensionMismatch,
    EigenFailure,
    FormatError,
    InsufficientSamples,
    IoError,
    VersionError,
)

DEFAULT_EPSILON = 1e-5
SYMMETRY_TOL_COV = 1e-8
SYMMETRY_TOL_TRANSFORM = 1e-6


@dataclass(frozen=True)
class DomainStats:
    dim: int
    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self):
        mean = as_vector(self.mean, self.dim)
        cov = np.asarray(self.cov, dtype=np.float64)
        if cov.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"cov shape {cov.shape} != ({self.dim}, {self.dim})")
        if self.n < 2:
            raise InsufficientSamples(f"n={self.n} < 2")
        if np.abs(cov - cov.T).max() > SYMMETRY_TOL_COV:
            raise FormatError("covariance is not symmetric within 1e-8")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class WhitenColorTransform:
    dim: int
    mu_img: np.ndarray
    w_zca: np.ndarray
    w_color: np.ndarray
    mu_txt: np.ndarray
    epsilon: float

    def __post_init__(self):
        mu_img = as_vector(self.mu_img, self.dim)
        mu_txt = as_vector(self.mu_txt, self.dim)
        w_zca = np.asarray(self.w_zca, dtype=np.float64)
        w_color = np.asarray(self.w_color, dtype=np.float64)
        for name, m in (("w_zca", w_zca), ("w_color", w_color)):
            if m.shape != (self.dim, self.dim):
                raise DimensionMismatch(f"{name} shape {m.shape} != ({self.dim}, {self.dim})")
            scale = max(1.0, np.abs(m).max())
            if np.abs(m - m.T).max() > SYMMETRY_TOL_TRANSFORM * scale:
                raise FormatError(f"{name} is not symmetric")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        object.__setattr__(self, "mu_img", mu_img)
        object.__setattr__(self, "mu_txt", mu_txt)
        object.__setattr__(self, "w_zca", w_zca)
        object.__setattr__(self, "w_color", w_color)


def _normalize_rows(batch: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(batch, axis=1)
    if batch.shape[0] and norms.min() <= NORM_FLOOR:
        raise DegenerateVector("batch contains a zero-norm row")
    return batch / norms[:, None]


def estimate_stats(batch) -> DomainStats:
    """Sample mean and unbiased covariance of the L2-normalized rows."""
    rows = as_batch(batch)
    n, dim = rows.shape
    if n < 2:
        raise InsufficientSamples(f"need at least 2 rows, got {n}")
    rows = _normalize_rows(rows)
    mean = rows.mean(axis=0)
    centered = rows - mean
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) / 2.0
    return DomainStats(dim=dim, mean=mean, cov=cov, n=n)


def _signed_eigh(cov: np.ndarray):
    """Eigendecomposition with a fixed sign convention.

    The first nonzero component of each eigenvector is made positive so the
    assembled matrices are deterministic across LAPACK builds.
    """
    try:
        eigvals, eigvecs = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"eigendecomposition failed: {exc}") from exc
    for j in range(eigvecs.shape[1]):
        col = eigvecs[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0:
            eigvecs[:, j] = -col
    return eigvals, eigvecs


def build_transform(img_stats: DomainStats, txt_stats: DomainStats,
                    epsilon: float = DEFAULT_EPSILON) -> WhitenColorTransform:
    """Assemble the ZCA whitening and coloring matrices from domain stats.

    Eigenvalues are floored at epsilon before the -1/2 power (whitening)
    and clamped at zero before the +1/2 power (coloring).
    """
    if img_stats.dim != txt_stats.dim:
        raise DimensionMismatch(
            f"image stats dim {img_stats.dim} != text stats dim {txt_stats.dim}"
        )
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    d_img, e_img = _signed_eigh(img_stats.cov)
    d_txt, e_txt = _signed_eigh(txt_stats.cov)
    w_zca = e_img @ np.diag(np.maximum(d_img, epsilon) ** -0.5) @ e_img.T
    w_color = e_txt @ np.diag(np.maximum(d_txt, 0.0) ** 0.5) @ e_txt.T
    w_zca = (w_zca + w_zca.T) / 2.0
    w_color = (w_color + w_color.T) / 2.0
    return WhitenColorTransform(
        dim=img_stats.dim,
        mu_img=img_stats.mean,
        w_zca=w_zca,
        w_color=w_color,
        mu_txt=txt_stats.mean,
        epsilon=epsilon,
    )


def apply_transform(t: WhitenColorTransform, batch) -> np.ndarray:
    """L2-normalize rows, center, whiten, color, shift to the text mean."""
    rows = as_batch(batch, t.dim)
    if rows.shape[0] == 0:
        return rows
    rows = _normalize_rows(rows)
    centered = rows - t.mu_img
    whitened = centered @ t.w_zca
    return whitened @ t.w_color + t.mu_txt


def apply_transform_vector(t: WhitenColorTransform, v) -> np.ndarray:
    return apply_transform(t, np.asarray(v, dtype=np.float64)[None, :])[0]


def transform_digest(t: WhitenColorTransform) -> str:
    """Content hash identifying a transform (prevents mixing adapters)."""
    h = hashlib.sha256()
    h.update(np.int64(t.dim).tobytes())
    h.update(np.float64(t.epsilon).tobytes())
    for arr in (t.mu_img, t.w_zca, t.w_color, t.mu_txt):
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# JSON persistence (64-bit faithful; python float repr round-trips exactly)
# ---------------------------------------------------------------------------

def _atomic_write_text(path, text: str) -> None:
    tmp = str(path) + ".tmp"
    try:
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def save_stats(stats: DomainStats, path) -> None:
    doc = {
        "version": 1,
        "dim": stats.dim,
        "n": stats.n,
        "mean": [float(x) for x in stats.mean],
        "cov": [[float(x) for x in row] for row in stats.cov],
    }
    _atomic_write_text(path, json.dumps(doc))


def load_stats(path) -> DomainStats:
    try:
        doc = json.loads(open(path).read())
    except OSError as exc:
        raise IoError(f"cannot read stats file {path}: {exc}") from exc
    except ValueError as exc:
        raise FormatError(f"stats file {path} is not valid JSON: {exc}") from exc
    if doc.get("version") != 1:
        raise VersionError(f"stats file {path} has version {doc.get('version')!r}")
    try:
        dim = int(doc["dim"])
        mean = np.asarray(doc["mean"], dtype=np.float64)
        cov = np.asarray(doc["cov"], dtype=np.float64)
        n = int(doc["n"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"stats file {path} malformed: {exc}") from exc
    if mean.shape != (dim,) or cov.shape != (dim, dim):
        raise FormatError(f"stats file {path}: mean/cov shapes inconsistent with dim {dim}")
    try:
        return DomainStats(dim=dim, mean=mean, cov=cov, n=n)
    except (DimensionMismatch, InsufficientSamples) as exc:
        raise FormatError(f"stats file {path}: {exc}") from exc


def save_transform(t: WhitenColorTransform, path) -> None:
    doc = {
        "version": 1,
        "dim": t.dim,
        "epsilon": float(t.epsilon),
        "mu_img": [float(x) for x in t.mu_img],
        "mu_txt": [float(x) for x in t.mu_txt],
        "w_zca": [[float(x) for x in row] for row in t.w_zca],
        "w_color": [[float(x) for x in row] for row in t.w_color],
    }
    _atomic_write_text(path, json.dumps(doc))


def load_transform(path) -> WhitenColorTransform:
    try:
        doc = json.loads(open(path).read())
    except OSError as exc:
        raise IoError(f"cannot read transform file {path}: {exc}") from exc
    except ValueError as exc:
        raise FormatError(f"transform file {path} is not valid JSON: {exc}") from exc
    if doc.get("version") != 1:
        raise VersionError(f"transform file {path} has version {doc.get('version')!r}")
    try:
        return WhitenColorTransform(
            dim=int(doc["dim"]),
            mu_img=np.asarray(doc["mu_img"], dtype=np.float64),
            w_zca=np.asarray(doc["w_zca"], dtype=np.float64),
            w_color=np.asarray(doc["w_color"], dtype=np.float64),
            mu_txt=np.asarray(doc["mu_txt"], dtype=np.float64),
            epsilon=float(doc["epsilon"]),
        )
    except (KeyError, TypeError, ValueError, DimensionMismatch) as exc:
        raise FormatError(f"transform file {path} malformed: {exc}") from exc
