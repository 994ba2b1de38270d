"""The knowledge store: feature records, label vocabulary, mutation ops.

Knowledge lives here instead of in model parameters: each record pairs a
unit-normalized feature vector with a set of labels plus provenance. Updating
knowledge means mutating the store (ingest / delete / relabel), never
retraining. Deletion is tombstoning, so audit logs that reference old record
ids stay resolvable forever; ids are never reused, even across compaction.

Internally the store is columnar (one contiguous float32 matrix plus parallel
metadata arrays) so an exact linear scan stays a single BLAS call.
``FeatureRecord`` is a read-only row view materialized on demand.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import InvalidArgumentError, NotFoundError
from .validation import as_float_matrix, check_label_names, normalize_rows

NO_TASK = -1  # sentinel in the task-id column for records without a task


@dataclass(frozen=True)
class FeatureRecord:
    """One stored support sample (immutable snapshot of a store row)."""

    id: int
    vector: np.ndarray  # float32, unit norm, read-only
    original_norm: float
    labels: frozenset[int]
    source: str
    task_id: int | None
    ref_count: int
    deleted: bool


class LabelVocabulary:
    """Append-only bijection between dense label ids and label names."""

    def __init__(self) -> None:
        self._names: list[str] = []
        self._ids: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._names)

    def intern(self, name: str) -> int:
        """Return the id for ``name``, appending it if unseen."""
        label_id = self._ids.get(name)
        if label_id is None:
            label_id = len(self._names)
            self._names.append(name)
            self._ids[name] = label_id
        return label_id

    def id_of(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise NotFoundError(f"unknown label name: {name!r}") from None

    def name_of(self, label_id: int) -> str:
        if 0 <= label_id < len(self._names):
            return self._names[label_id]
        raise NotFoundError(f"unknown label id: {label_id}")


class _RWLock:
    """Readers-writer lock: many concurrent readers or one exclusive writer."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def acquire_read(self) -> None:
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_read(self) -> None:
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self) -> None:
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True

    def release_write(self) -> None:
        with self._cond:
            self._writer = False
            self._cond.notify_all()


class _ReadGuard:
    __slots__ = ("_lock",)

    def __init__(self, lock: _RWLock):
        self._lock = lock

    def __enter__(self):
        self._lock.acquire_read()

    def __exit__(self, *exc):
        self._lock.release_read()


class _WriteGuard:
    __slots__ = ("_lock",)

    def __init__(self, lock: _RWLock):
        self._lock = lock

    def __enter__(self):
        self._lock.acquire_write()

    def __exit__(self, *exc):
        self._lock.release_write()


class KnowledgeStore:
    """Dimension-fixed collection of feature records with tombstoned deletion.

    Concurrency contract: mutations (ingest / delete / relabel / prune /
    compact) take the exclusive side of an internal readers-writer lock;
    searches and classifications take the shared side. Reference-count bumps
    are atomic with respect to concurrent readers.
    """

    def __init__(self, dimension: int):
        if not isinstance(dimension, (int, np.integer)) or dimension < 1:
            raise InvalidArgumentError(f"dimension must be a positive integer, got {dimension!r}")
        self._dimension = int(dimension)
        self.vocab = LabelVocabulary()
        self._matrix = np.empty((0, self._dimension), dtype=np.float32)
        self._ids = np.empty(0, dtype=np.int64)
        self._norms = np.empty(0, dtype=np.float32)
        self._task_ids = np.empty(0, dtype=np.int64)
        self._ref_counts = np.empty(0, dtype=np.int64)
        self._deleted = np.empty(0, dtype=bool)
        self._labels: list[frozenset[int]] = []
        self._sources: list[str] = []
        self._size = 0  # rows in use; arrays may have extra capacity
        self._live = 0
        self._next_id = 0
        self._rw = _RWLock()
        self._count_lock = threading.Lock()

    # -- basic accessors ----------------------------------------------------

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def live_count(self) -> int:
        return self._live

    @property
    def total_count(self) -> int:
        """Number of records including tombstones."""
        return self._size

    @property
    def next_id(self) -> int:
        return self._next_id

    def read_lock(self) -> _ReadGuard:
        return _ReadGuard(self._rw)

    def write_lock(self) -> _WriteGuard:
        return _WriteGuard(self._rw)

    def __len__(self) -> int:
        return self._live

    def _row_of(self, record_id: int) -> int:
        idx = int(np.searchsorted(self._ids[: self._size], record_id))
        if idx < self._size and self._ids[idx] == record_id:
            return idx
        raise NotFoundError(f"unknown record id: {record_id}")

    def _record_at(self, row: int) -> FeatureRecord:
        vector = self._matrix[row].copy()
        vector.flags.writeable = False
        task = int(self._task_ids[row])
        return FeatureRecord(
            id=int(self._ids[row]),
            vector=vector,
            original_norm=float(self._norms[row]),
            labels=self._labels[row],
            source=self._sources[row],
            task_id=None if task == NO_TASK else task,
            ref_count=int(self._ref_counts[row]),
            deleted=bool(self._deleted[row]),
        )

    def get(self, record_id: int) -> FeatureRecord:
        """Look up one record by id; tombstoned records resolve too."""
        return self._record_at(self._row_of(record_id))

    def records(self, include_deleted: bool = False) -> Iterator[FeatureRecord]:
        """Iterate records in insertion (= id) order."""
        for row in range(self._size):
            if include_deleted or not self._deleted[row]:
                yield self._record_at(row)

    def label_names(self, label_ids: Iterable[int]) -> set[str]:
        return {self.vocab.name_of(i) for i in label_ids}

    # -- mutation -----------------------------------------------------------

    def _grow(self, extra: int) -> None:
        need = self._size + extra
        cap = len(self._ids)
        if need <= cap:
            return
        new_cap = max(need, cap * 2, 16)
        matrix = np.empty((new_cap, self._dimension), dtype=np.float32)
        matrix[: self._size] = self._matrix[: self._size]
        self._matrix = matrix
        for name in ("_ids", "_norms", "_task_ids", "_ref_counts", "_deleted"):
            old = getattr(self, name)
            arr = np.empty(new_cap, dtype=old.dtype)
            arr[: self._size] = old[: self._size]
            setattr(self, name, arr)

    def ingest(
        self,
        raw_vector,
        label_names: Iterable[str],
        source: str = "",
        task_id: int | None = None,
    ) -> int:
        """Normalize and store one raw vector; returns the new record id.

        Unseen label names are appended to the vocabulary. The record id is
        strictly greater than every previously issued id.
        """
        ids = self.ingest_many([raw_vector], [label_names], [source], [task_id])
        return ids[0]

    def ingest_many(
        self,
        raw_vectors,
        label_names,
        sources: Sequence[str] | str = "",
        task_ids: Sequence[int | None] | int | None = None,
    ) -> list[int]:
        """Batch ingest. ``label_names`` may be one label set applied to every
        row or a per-row sequence; likewise ``sources`` and ``task_ids``."""
        matrix = as_float_matrix(raw_vectors, self._dimension)
        n = matrix.shape[0]
        if n == 0:
            return []
        unit, norms = normalize_rows(matrix)

        shared_names: tuple[str, ...] | None = None
        per_row_names: list | None = None
        if isinstance(label_names, str):
            shared_names = check_label_names([label_names])
        else:
            elems = list(label_names)
            if elems and all(isinstance(e, str) for e in elems):
                shared_names = check_label_names(elems)
            else:
                per_row_names = elems
                if len(per_row_names) != n:
                    raise InvalidArgumentError(
                        f"got {len(per_row_names)} label sets for {n} vectors"
                    )
        if isinstance(sources, str):
            sources = [sources] * n
        elif len(sources) != n:
            raise InvalidArgumentError(f"got {len(sources)} sources for {n} vectors")
        if task_ids is None or isinstance(task_ids, int):
            task_ids = [task_ids] * n
        elif len(task_ids) != n:
            raise InvalidArgumentError(f"got {len(task_ids)} task ids for {n} vectors")

        with self.write_lock():
            if shared_names is not None:
                shared = frozenset(self.vocab.intern(name) for name in shared_names)
                row_labels = [shared] * n
            else:
                row_labels = [
                    frozenset(
                        self.vocab.intern(nm)
                        for nm in check_label_names([names] if isinstance(names, str) else names)
                    )
                    for names in per_row_names
                ]
            self._grow(n)
            lo, hi = self._size, self._size + n
            self._matrix[lo:hi] = unit
            self._norms[lo:hi] = norms.astype(np.float32)
            new_ids = np.arange(self._next_id, self._next_id + n, dtype=np.int64)
            self._ids[lo:hi] = new_ids
            self._task_ids[lo:hi] = [NO_TASK if t is None else int(t) for t in task_ids]
            self._ref_counts[lo:hi] = 0
            self._deleted[lo:hi] = False
            self._labels.extend(row_labels)
            self._sources.extend(str(s) for s in sources)
            self._size = hi
            self._live += n
            self._next_id += n
            return [int(i) for i in new_ids]

    def delete(self, record_ids: Iterable[int]) -> int:
        """Tombstone records; unknown or already-deleted ids are tolerated.

        Returns the number of records newly tombstoned. Idempotent.
        """
        with self.write_lock():
            count = 0
            for record_id in record_ids:
                idx = int(np.searchsorted(self._ids[: self._size], record_id))
                if idx >= self._size or self._ids[idx] != record_id:
                    continue
                if not self._deleted[idx]:
                    self._deleted[idx] = True
                    self._live -= 1
                    count += 1
            return count

    def delete_by_label(self, label_name: str) -> int:
        """Tombstone every live record carrying ``label_name``."""
        if label_name not in self.vocab:
            return 0
        label_id = self.vocab.id_of(label_name)
        with self.write_lock():
            count = 0
            for row in range(self._size):
                if not self._deleted[row] and label_id in self._labels[row]:
                    self._deleted[row] = True
                    self._live -= 1
                    count += 1
            return count

    def relabel(self, record_id: int, new_label_names: Iterable[str]) -> set[str]:
        """Replace a live record's label set; returns the previous names."""
        names = check_label_names(new_label_names)
        with self.write_lock():
            row = self._row_of(record_id)
            if self._deleted[row]:
                raise NotFoundError(f"record {record_id} is deleted")
            previous = {self.vocab.name_of(i) for i in self._labels[row]}
            self._labels[row] = frozenset(self.vocab.intern(n) for n in names)
            return previous

    def prune_rarely_referenced(self, threshold: int) -> int:
        """Tombstone every live record with ref_count <= threshold."""
        if threshold < 0:
            raise InvalidArgumentError(f"threshold must be nonnegative, got {threshold}")
        with self.write_lock():
            rows = np.flatnonzero(
                (~self._deleted[: self._size]) & (self._ref_counts[: self._size] <= threshold)
            )
            self._deleted[rows] = True
            self._live -= len(rows)
            return int(len(rows))

    def compact(self) -> int:
        """Drop tombstoned rows, preserving ids and the id counter.

        Returns the number of rows removed. Ids are never reissued: the next
        ingest still gets an id greater than anything ever issued.
        """
        with self.write_lock():
            keep = np.flatnonzero(~self._deleted[: self._size])
            removed = self._size - len(keep)
            if removed == 0:
                return 0
            self._matrix = np.ascontiguousarray(self._matrix[keep])
            self._ids = self._ids[keep].copy()
            self._norms = self._norms[keep].copy()
            self._task_ids = self._task_ids[keep].copy()
            self._ref_counts = self._ref_counts[keep].copy()
            self._deleted = np.zeros(len(keep), dtype=bool)
            self._labels = [self._labels[r] for r in keep]
            self._sources = [self._sources[r] for r in keep]
            self._size = len(keep)
            return int(removed)

    # -- reference counters ---------------------------------------------------

    def bump_ref_counts(self, record_ids: Iterable[int]) -> None:
        """Atomically increment ref_count for each id (one query = one bump)."""
        with self._count_lock:
            for record_id in record_ids:
                self._ref_counts[self._row_of(record_id)] += 1

    def reset_ref_counts(self) -> None:
        """Explicit counter reset (the one sanctioned way counts decrease)."""
        with self._count_lock:
            self._ref_counts[: self._size] = 0

    def reference_stats(self, top_m: int, order: str = "most") -> list[tuple[int, int]]:
        """Up to ``top_m`` live ``(id, ref_count)`` pairs.

        ``most`` sorts descending, ``least`` ascending; ties break toward the
        smaller id.
        """
        if top_m < 1:
            raise InvalidArgumentError(f"top_m must be positive, got {top_m}")
        if order not in ("most", "least"):
            raise InvalidArgumentError(f"order must be 'most' or 'least', got {order!r}")
        live = np.flatnonzero(~self._deleted[: self._size])
        counts = self._ref_counts[live]
        ids = self._ids[live]
        sign = -1 if order == "most" else 1
        ranked = sorted(zip(ids, counts), key=lambda p: (sign * p[1], p[0]))
        return [(int(i), int(c)) for i, c in ranked[:top_m]]
