"""Majority-vote classification with reference counting and audit logging.

Every classification retrieves the top-k nearest records, lets each neighbor
vote once per label it carries, bumps the retrieved records' reference
counters, and appends an immutable audit entry recording exactly what was
retrieved and how the vote went. The entry keeps the neighbors' labels as
they were at classification time, so later relabels never falsify history.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from typing import IO, Sequence

from .errors import NotFoundError
from .search import Neighbor, QueryVector, SearchFilter, _neighbors_from_rows, _search_rows
from .store import KnowledgeStore


@dataclass(frozen=True)
class VoteTally:
    """Per-label vote counts over the top-k neighbors' labels.

    ``counts`` maps label id to votes (floats in distance-weighted mode).
    ``tie_broken`` is true when more than one label held the maximal count.
    """

    counts: dict[int, float]
    winning_label_id: int | None
    tie_broken: bool


@dataclass(frozen=True)
class ClassificationResult:
    predicted_label_id: int | None
    neighbors: tuple[Neighbor, ...]
    tally: VoteTally
    abstained: bool
    entry_id: int | None = None  # audit entry, when a log was attached


@dataclass(frozen=True)
class AuditNeighbor:
    """A neighbor as seen at classification time."""

    record_id: int
    source: str
    labels: frozenset[int]
    distance: float
    rank: int


@dataclass(frozen=True)
class AuditLogEntry:
    entry_id: int
    timestamp: float
    query_source: str
    k: int
    filter: SearchFilter | None
    neighbors: tuple[AuditNeighbor, ...]
    tally: VoteTally
    predicted_label_id: int | None
    abstained: bool
    ground_truth_label_id: int | None = None
    # Retained so a reviewer can re-run the exact query after curation.
    query: QueryVector | None = field(default=None, repr=False)


@dataclass(frozen=True)
class ExplainedNeighbor:
    """Audit neighbor joined with the record's current state."""

    record_id: int
    source: str
    labels_at_classification: frozenset[int]
    current_labels: frozenset[int]
    distance: float
    rank: int
    deleted: bool


@dataclass(frozen=True)
class ExplainedEntry:
    entry: AuditLogEntry
    neighbors: tuple[ExplainedNeighbor, ...]


class AuditLog:
    """Append-only inference log; entry ids are dense and monotone."""

    def __init__(self) -> None:
        self._entries: list[AuditLogEntry] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def append(self, **fields) -> AuditLogEntry:
        with self._lock:
            entry = AuditLogEntry(entry_id=len(self._entries), **fields)
            self._entries.append(entry)
            return entry

    def get(self, entry_id: int) -> AuditLogEntry:
        if 0 <= entry_id < len(self._entries):
            return self._entries[entry_id]
        raise NotFoundError(f"unknown audit entry: {entry_id}")

    def entries(self, from_id: int = 0, limit: int | None = None) -> list[AuditLogEntry]:
        """Cursor pagination: entries with id >= from_id, up to limit."""
        start = max(0, from_id)
        stop = len(self._entries) if limit is None else min(len(self._entries), start + limit)
        return self._entries[start:stop]

    def entry_to_dict(self, entry: AuditLogEntry, vocab=None) -> dict:
        """Stable exported form (documented in docs/audit-log.md)."""

        def name(label_id):
            return vocab.name_of(label_id) if vocab is not None else None

        filt = entry.filter
        return {
            "entry_id": entry.entry_id,
            "timestamp": entry.timestamp,
            "query_source": entry.query_source,
            "k": entry.k,
            "filter": None
            if filt is None or filt.is_empty()
            else {
                "label_ids": sorted(filt.label_ids) if filt.label_ids is not None else None,
                "task_ids": sorted(filt.task_ids) if filt.task_ids is not None else None,
                "exclude_ids": sorted(filt.exclude_ids) if filt.exclude_ids is not None else None,
            },
            "neighbors": [
                {
                    "record_id": nb.record_id,
                    "source": nb.source,
                    "label_ids": sorted(nb.labels),
                    "labels": sorted(name(i) for i in nb.labels) if vocab else None,
                    "distance": nb.distance,
                    "rank": nb.rank,
                }
                for nb in entry.neighbors
            ],
            "tally": {str(k): v for k, v in sorted(entry.tally.counts.items())},
            "tally_labels": {name(k): v for k, v in sorted(entry.tally.counts.items())}
            if vocab
            else None,
            "predicted_label_id": entry.predicted_label_id,
            "predicted_label": name(entry.predicted_label_id)
            if vocab and entry.predicted_label_id is not None
            else None,
            "abstained": entry.abstained,
            "ground_truth_label_id": entry.ground_truth_label_id,
        }

    def export_jsonl(self, fp: IO[str], vocab=None) -> int:
        """Write one JSON object per line; returns the number of lines."""
        count = 0
        for entry in self._entries:
            fp.write(json.dumps(self.entry_to_dict(entry, vocab), sort_keys=True))
            fp.write("\n")
            count += 1
        return count


def _tally_votes(
    neighbors: Sequence[AuditNeighbor], weighted: bool
) -> VoteTally:
    """Count votes and resolve ties.

    Each neighbor contributes one vote per label it carries (weight
    1/max(distance, eps) in weighted mode). Ties on the maximal count break
    by, in order: smaller sum of contributing neighbors' distances, smaller
    rank of the nearest contributing neighbor, smaller label id.
    """
    counts: dict[int, float] = {}
    dist_sum: dict[int, float] = {}
    best_rank: dict[int, int] = {}
    for nb in neighbors:
        weight = 1.0 / max(nb.distance, 1e-12) if weighted else 1.0
        for label_id in nb.labels:
            counts[label_id] = counts.get(label_id, 0.0) + weight
            dist_sum[label_id] = dist_sum.get(label_id, 0.0) + nb.distance
            if label_id not in best_rank or nb.rank < best_rank[label_id]:
                best_rank[label_id] = nb.rank
    if not counts:
        return VoteTally(counts={}, winning_label_id=None, tie_broken=False)
    top = max(counts.values())
    tied = [label_id for label_id, c in counts.items() if c == top]
    winner = min(tied, key=lambda lbl: (dist_sum[lbl], best_rank[lbl], lbl))
    if not weighted:
        counts = {lbl: int(c) for lbl, c in counts.items()}
    return VoteTally(counts=counts, winning_label_id=winner, tie_broken=len(tied) > 1)


def classify(
    store: KnowledgeStore,
    query: QueryVector,
    k: int,
    filt: SearchFilter | None = None,
    *,
    log: AuditLog | None = None,
    query_source: str = "",
    ground_truth_label_id: int | None = None,
    weighted: bool = False,
) -> ClassificationResult:
    """Retrieve top-k, majority-vote the labels, bump ref counts, log.

    With zero matching records the result abstains (distinct outcome, not an
    error); abstentions are still logged.
    """
    with store.read_lock():
        rows, dists = _search_rows(store, query, k, filt)
        neighbors = _neighbors_from_rows(store, rows, dists)
        audit_neighbors = tuple(
            AuditNeighbor(
                record_id=nb.record_id,
                source=store._sources[row],
                labels=store._labels[row],
                distance=nb.distance,
                rank=nb.rank,
            )
            for nb, row in zip(neighbors, rows)
        )
        tally = _tally_votes(audit_neighbors, weighted)
        abstained = len(neighbors) == 0
        if neighbors:
            store.bump_ref_counts(nb.record_id for nb in neighbors)
        entry_id = None
        if log is not None:
            entry = log.append(
                timestamp=time.time(),
                query_source=query_source,
                k=k,
                filter=filt,
                neighbors=audit_neighbors,
                tally=tally,
                predicted_label_id=tally.winning_label_id,
                abstained=abstained,
                ground_truth_label_id=ground_truth_label_id,
                query=query,
            )
            entry_id = entry.entry_id
    return ClassificationResult(
        predicted_label_id=tally.winning_label_id,
        neighbors=tuple(neighbors),
        tally=tally,
        abstained=abstained,
        entry_id=entry_id,
    )


def classify_batch(
    store: KnowledgeStore,
    queries: Sequence[QueryVector],
    k: int,
    filt: SearchFilter | None = None,
    *,
    log: AuditLog | None = None,
    query_sources: Sequence[str] | None = None,
    ground_truth_label_ids: Sequence[int | None] | None = None,
    weighted: bool = False,
) -> list[ClassificationResult]:
    """Elementwise classify; audit entries append in query order."""
    results = []
    for i, query in enumerate(queries):
        results.append(
            classify(
                store,
                query,
                k,
                filt,
                log=log,
                query_source=query_sources[i] if query_sources else "",
                ground_truth_label_id=ground_truth_label_ids[i] if ground_truth_label_ids else None,
                weighted=weighted,
            )
        )
    return results


def explain(log: AuditLog, store: KnowledgeStore, entry_id: int) -> ExplainedEntry:
    """Resolve an audit entry against current store state for review panels.

    Neighbor record ids stay resolvable even after deletion (tombstones), so
    the panel can show what the vote saw then and what the record is now.
    """
    entry = log.get(entry_id)
    resolved = []
    for nb in entry.neighbors:
        record = store.get(nb.record_id)
        resolved.append(
            ExplainedNeighbor(
                record_id=nb.record_id,
                source=nb.source,
                labels_at_classification=nb.labels,
                current_labels=record.labels,
                distance=nb.distance,
                rank=nb.rank,
                deleted=record.deleted,
            )
        )
    return ExplainedEntry(entry=entry, neighbors=tuple(resolved))
