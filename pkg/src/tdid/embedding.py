"""Vector primitives for the shared text-image latent space.

All operations accumulate in float64; float32 is only used at storage
boundaries (see enrollment / backend serialization).
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateVector, DimensionMismatch, EmptyPrototype

DEFAULT_DIM = 512

# Norms at or below this are treated as true cancellation, far below any
# real encoder output.
NORM_FLOOR = 1e-12


def as_vector(v, dim: int | None = None) -> np.ndarray:
    """Validate and convert to a 1-D float64 array of finite components."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatch(f"expected dim {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateVector("vector contains NaN or Inf")
    return arr


def as_batch(rows, dim: int | None = None) -> np.ndarray:
    """Validate and convert to an (n, dim) float64 matrix."""
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, dim if dim is not None else 0)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected an (n, dim) batch, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionMismatch(f"expected dim {dim}, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateVector("batch contains NaN or Inf")
    return arr


def l2_normalize(v) -> np.ndarray:
    """Scale v to unit L2 norm.

    Raises DegenerateVector if the norm is at or below the cancellation
    floor (an unusable all-zero or fully cancelled embedding).
    """
    arr = as_vector(v)
    norm = float(np.linalg.norm(arr))
    if norm <= NORM_FLOOR:
        raise DegenerateVector(f"cannot normalize vector with norm {norm!r}")
    return arr / norm


def aggregate_prototype(raw: Iterable) -> np.ndarray:
    """Aggregate raw embeddings into a single unit vector.

    Componentwise sum (all vectors weighted equally) followed by L2
    normalization. Order-independent up to floating rounding.
    """
    vectors = [as_vector(v) for v in raw]
    if not vectors:
        raise EmptyPrototype("cannot aggregate an empty list of embeddings")
    dim = vectors[0].shape[0]
    for v in vectors[1:]:
        if v.shape[0] != dim:
            raise DimensionMismatch("raw embeddings have inconsistent dims")
    total = np.sum(np.stack(vectors), axis=0, dtype=np.float64)
    return l2_normalize(total)


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between a and b, clamped to [-1, 1].

    Evaluation order is fixed so that cosine_similarity(a, b) equals
    cosine_similarity(b, a) exactly.
    """
    va = as_vector(a)
    vb = as_vector(b)
    if va.shape[0] != vb.shape[0]:
        raise DimensionMismatch("cosine_similarity dims differ")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na <= NORM_FLOOR or nb <= NORM_FLOOR:
        raise DegenerateVector("cosine_similarity on zero-norm input")
    # dot computed on pre-normalized operands keeps the evaluation symmetric
    dot = float(np.dot(va / na, vb / nb))
    return max(-1.0, min(1.0, dot))


def to_float32(rows: Sequence | np.ndarray) -> np.ndarray:
    """Cast to the 32-bit storage representation."""
    return np.asarray(rows, dtype=np.float32)
