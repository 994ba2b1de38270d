"""Input coercion and normalization helpers.

Ingest and query vectors go through the exact same code path
(:func:`normalize_rows`), so a vector stored and a vector queried always
round to bit-identical float32 unit vectors.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import InvalidArgumentError


def as_float_matrix(data, dimension: int | None = None) -> np.ndarray:
    """Coerce ``data`` to a C-contiguous float64 2-D array and sanity-check it."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise InvalidArgumentError(f"expected a 2-D array of vectors, got ndim={arr.ndim}")
    if arr.shape[1] == 0:
        raise InvalidArgumentError("vectors must have at least one component")
    if dimension is not None and arr.shape[1] != dimension:
        raise InvalidArgumentError(
            f"dimension mismatch: expected {dimension}, got {arr.shape[1]}"
        )
    if not np.isfinite(arr).all():
        raise InvalidArgumentError("vectors must contain only finite values")
    return arr


def as_float_vector(data, dimension: int | None = None) -> np.ndarray:
    """Coerce ``data`` to a single float64 vector."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"expected a 1-D vector, got ndim={arr.ndim}")
    return as_float_matrix(arr, dimension)[0]


def normalize_rows(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """L2-normalize each row of a float64 matrix.

    Returns ``(unit, norms)`` where ``unit`` is float32 and ``norms`` holds the
    original Euclidean norms (float64). Zero-norm rows are rejected: cosine
    distance is undefined for them. The squared norms are accumulated with a
    fixed einsum reduction so single-row and batched ingestion agree bitwise.
    """
    sq = np.einsum("ij,ij->i", matrix, matrix)
    norms = np.sqrt(sq)
    if not (norms > 0.0).all():
        bad = int(np.flatnonzero(~(norms > 0.0))[0])
        raise InvalidArgumentError(f"zero vector at row {bad}: cosine distance undefined")
    unit = (matrix / norms[:, None]).astype(np.float32)
    return unit, norms


def check_label_names(names: Iterable[str]) -> tuple[str, ...]:
    """Validate a label-name set: nonempty, all nonempty strings.

    Returns the names deduplicated in first-seen order (insertion order drives
    vocabulary id assignment, so order must be deterministic).
    """
    seen: dict[str, None] = {}
    for name in names:
        if not isinstance(name, str):
            raise InvalidArgumentError(f"label names must be strings, got {type(name).__name__}")
        if not name:
            raise InvalidArgumentError("label names must be nonempty")
        seen.setdefault(name)
    if not seen:
        raise InvalidArgumentError("label set must be nonempty")
    return tuple(seen)
