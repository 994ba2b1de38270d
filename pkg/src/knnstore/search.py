"""Exact cosine-distance top-k retrieval over the knowledge store.

The scan is a deterministic linear sweep: distances are 1 - dot(q, s) over
unit vectors, accumulated in float64 over fixed-size row chunks in insertion
order, so repeated calls return bit-identical results. Ties on distance break
toward the smaller record id. No index, no approximation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .store import KnowledgeStore
from .validation import as_float_vector, normalize_rows

# Rows per float64 accumulation chunk; fixed so summation order never varies.
_CHUNK_BYTES = 1 << 23


@dataclass(frozen=True)
class QueryVector:
    """A unit-normalized query, produced by the same step as ingest."""

    vector: np.ndarray  # float32, unit norm
    original_norm: float

    @classmethod
    def from_raw(cls, raw) -> "QueryVector":
        matrix = as_float_vector(raw).reshape(1, -1)
        unit, norms = normalize_rows(matrix)
        vec = unit[0]
        vec.flags.writeable = False
        return cls(vector=vec, original_norm=float(norms[0]))

    @property
    def dimension(self) -> int:
        return int(self.vector.shape[0])


@dataclass(frozen=True)
class SearchFilter:
    """Conjunctive search constraints; an absent field imposes none.

    ``label_ids`` matches records whose label set intersects it. Note an
    explicitly empty set matches nothing, while ``None`` matches everything.
    """

    label_ids: frozenset[int] | None = None
    task_ids: frozenset[int] | None = None
    exclude_ids: frozenset[int] | None = None

    @classmethod
    def for_label_names(cls, store: KnowledgeStore, names: Iterable[str]) -> "SearchFilter":
        """Build a label filter from names; unknown names match nothing."""
        ids = {store.vocab.id_of(n) for n in names if n in store.vocab}
        return cls(label_ids=frozenset(ids))

    def is_empty(self) -> bool:
        return self.label_ids is None and self.task_ids is None and self.exclude_ids is None

    def matches(self, labels: frozenset[int], task_id: int | None, record_id: int) -> bool:
        if self.label_ids is not None and not (labels & self.label_ids):
            return False
        if self.task_ids is not None and (task_id is None or task_id not in self.task_ids):
            return False
        if self.exclude_ids is not None and record_id in self.exclude_ids:
            return False
        return True


@dataclass(frozen=True)
class Neighbor:
    """One retrieval hit. ``rank`` is 1-based; distance is clamped to [0, 2].

    Ordering is decided on the unclamped float64 distances, then the reported
    value is clamped, so float slack near 0 or 2 never reorders results.
    """

    record_id: int
    distance: float
    rank: int


def cosine_distance(a, b) -> float:
    """1 - dot(a, b) for unit vectors a, b (Eq. form with norms pre-divided)."""
    av = np.asarray(a, dtype=np.float64).ravel()
    bv = np.asarray(b, dtype=np.float64).ravel()
    if av.shape != bv.shape:
        raise InvalidArgumentError(f"dimension mismatch: {av.shape[0]} vs {bv.shape[0]}")
    return 1.0 - float(np.dot(av, bv))


def _scan_distances(store: KnowledgeStore, query: QueryVector) -> np.ndarray:
    """Float64 cosine distances from the query to every stored row."""
    n = store.total_count
    d = store.dimension
    q64 = query.vector.astype(np.float64)
    out = np.empty(n, dtype=np.float64)
    chunk = max(1, _CHUNK_BYTES // (8 * d))
    matrix = store._matrix
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        out[start:stop] = matrix[start:stop].astype(np.float64) @ q64
    np.subtract(1.0, out, out=out)
    return out


def _candidate_mask(store: KnowledgeStore, filt: SearchFilter | None) -> np.ndarray:
    """Boolean mask of live rows passing the filter."""
    n = store.total_count
    mask = ~store._deleted[:n]
    if filt is None or filt.is_empty():
        return mask
    if filt.task_ids is not None:
        wanted = np.fromiter(filt.task_ids, dtype=np.int64) if filt.task_ids else np.empty(0, np.int64)
        mask &= np.isin(store._task_ids[:n], wanted)
    if filt.exclude_ids is not None and filt.exclude_ids:
        excluded = np.fromiter(filt.exclude_ids, dtype=np.int64)
        mask &= ~np.isin(store._ids[:n], excluded)
    if filt.label_ids is not None:
        wanted_labels = filt.label_ids
        labels = store._labels
        for row in np.flatnonzero(mask):
            if not (labels[row] & wanted_labels):
                mask[row] = False
    return mask


def _select_topk(distances: np.ndarray, mask: np.ndarray, k: int) -> np.ndarray:
    """Rows of the k smallest distances among masked rows, ties by row order."""
    masked = np.where(mask, distances, np.inf)
    m = int(mask.sum())
    if m == 0:
        return np.empty(0, dtype=np.int64)
    kk = min(k, m)
    if kk == m:
        candidates = np.flatnonzero(mask)
    else:
        part = np.argpartition(masked, kk - 1)[:kk]
        threshold = masked[part].max()
        candidates = np.flatnonzero(masked <= threshold)
    order = np.argsort(masked[candidates], kind="stable")
    return candidates[order[:kk]]


def _search_rows(
    store: KnowledgeStore, query: QueryVector, k: int, filt: SearchFilter | None
) -> tuple[np.ndarray, np.ndarray]:
    """Unlocked kernel shared by search_topk and classify. Returns (rows, dists)."""
    if query.dimension != store.dimension:
        raise InvalidArgumentError(
            f"dimension mismatch: query has {query.dimension}, store has {store.dimension}"
        )
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    if store.total_count == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    distances = _scan_distances(store, query)
    mask = _candidate_mask(store, filt)
    rows = _select_topk(distances, mask, k)
    return rows, distances[rows]


def _neighbors_from_rows(store: KnowledgeStore, rows: np.ndarray, dists: np.ndarray) -> list[Neighbor]:
    return [
        Neighbor(
            record_id=int(store._ids[row]),
            distance=min(2.0, max(0.0, float(dist))),
            rank=rank,
        )
        for rank, (row, dist) in enumerate(zip(rows, dists), start=1)
    ]


def search_topk(
    store: KnowledgeStore,
    query: QueryVector,
    k: int,
    filt: SearchFilter | None = None,
) -> list[Neighbor]:
    """The min(k, matching) nearest live records by cosine distance.

    Ordering: ascending distance, ties by ascending record id. An empty store
    or a filter matching nothing yields an empty list, not an error.
    """
    with store.read_lock():
        rows, dists = _search_rows(store, query, k, filt)
        return _neighbors_from_rows(store, rows, dists)


def batch_search(
    store: KnowledgeStore,
    queries: Sequence[QueryVector],
    k: int,
    filt: SearchFilter | None = None,
) -> list[list[Neighbor]]:
    """Elementwise equal to mapping :func:`search_topk` over ``queries``."""
    return [search_topk(store, q, k, filt) for q in queries]
