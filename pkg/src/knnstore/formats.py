"""Bit-exact binary formats: feature files (ingest input) and store snapshots.

Both formats are little-endian with explicit magic and version gates; byte
layouts are frozen per version (see docs/formats.md). Feature files carry raw
(unnormalized) float32 vectors so they stay faithful to the encoder output;
normalization happens at ingest. Snapshots carry the normalized vectors plus
every piece of record state, ending in a 64-bit checksum (first 8 bytes of
SHA-256 over all preceding bytes) because the store is the system's entire
knowledge and silent corruption is the worst failure mode.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorruptionError, FormatError, InvalidArgumentError, UnknownVersionError
from .store import NO_TASK, KnowledgeStore

FEATURE_MAGIC = b"KNNF"
SNAPSHOT_MAGIC = b"KNNS"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 0


@dataclass(frozen=True)
class RawRecord:
    """One feature-file record: raw vector plus labels and provenance."""

    vector: np.ndarray  # float32, raw
    label_names: tuple[str, ...]
    source: str
    task_id: int | None = None


class _Writer:
    def __init__(self):
        self.chunks: list[bytes] = []

    def raw(self, data: bytes):
        self.chunks.append(data)

    def u8(self, v: int):
        self.raw(struct.pack("<B", v))

    def u16(self, v: int):
        self.raw(struct.pack("<H", v))

    def u32(self, v: int):
        self.raw(struct.pack("<I", v))

    def u64(self, v: int):
        self.raw(struct.pack("<Q", v))

    def f32(self, v: float):
        self.raw(struct.pack("<f", v))

    def string(self, s: str):
        data = s.encode("utf-8")
        if len(data) > 0xFFFF:
            raise InvalidArgumentError(f"string too long for format ({len(data)} bytes)")
        self.u16(len(data))
        self.raw(data)

    def getvalue(self) -> bytes:
        return b"".join(self.chunks)


class _Reader:
    """Cursor over bytes; every failure names the offending byte offset."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file while reading {what}", offset=self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return struct.unpack("<B", self.take(1, what))[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def f32(self, what: str) -> float:
        return struct.unpack("<f", self.take(4, what))[0]

    def string(self, what: str) -> str:
        n = self.u16(what + " length")
        start = self.pos
        try:
            return self.take(n, what).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"invalid UTF-8 in {what}: {exc}", offset=start) from None

    def expect_end(self):
        if self.pos != len(self.data):
            raise FormatError(
                f"{len(self.data) - self.pos} trailing bytes after payload", offset=self.pos
            )


# -- feature files -------------------------------------------------------------


def write_feature_file(records: Sequence[RawRecord | tuple], path: str | Path) -> int:
    """Serialize records to a feature file; returns the byte count written.

    Accepts RawRecord instances or (vector, label_names, source, task_id)
    tuples. All vectors must share one dimension; labels must be nonempty.
    """
    recs = [r if isinstance(r, RawRecord) else RawRecord(np.asarray(r[0], dtype=np.float32), tuple(r[1]), r[2], r[3]) for r in records]
    if not recs:
        raise InvalidArgumentError("cannot write an empty feature file")
    dimension = int(recs[0].vector.shape[0])
    vocab: dict[str, int] = {}
    for rec in recs:
        if rec.vector.shape != (dimension,):
            raise InvalidArgumentError(
                f"mixed dimensions: {rec.vector.shape[0]} vs {dimension} in {rec.source!r}"
            )
        if not rec.label_names:
            raise InvalidArgumentError(f"record {rec.source!r} has an empty label set")
        for name in rec.label_names:
            vocab.setdefault(name, len(vocab))

    w = _Writer()
    w.raw(FEATURE_MAGIC)
    w.u32(FORMAT_VERSION)
    w.u8(DTYPE_FLOAT32)
    w.u32(dimension)
    w.u64(len(recs))
    w.u32(len(vocab))
    for name in vocab:
        w.string(name)
    for rec in recs:
        w.u16(len(rec.label_names))
        for name in rec.label_names:
            w.u32(vocab[name])
        w.string(rec.source)
        if rec.task_id is None:
            w.u8(0)
        else:
            w.u8(1)
            w.u32(rec.task_id)
        w.raw(np.ascontiguousarray(rec.vector, dtype="<f4").tobytes())
    data = w.getvalue()
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc
    return len(data)


def read_feature_file(path: str | Path) -> list[RawRecord]:
    """Parse a feature file; the exact inverse of :func:`write_feature_file`."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != FEATURE_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {FEATURE_MAGIC!r}", offset=0)
    version = r.u32("version")
    if version != FORMAT_VERSION:
        raise UnknownVersionError(f"unsupported feature-file version {version}", offset=4)
    dtype = r.u8("dtype code")
    if dtype != DTYPE_FLOAT32:
        raise UnknownVersionError(f"unsupported dtype code {dtype} (v1 is float32-only)", offset=8)
    dimension = r.u32("dimension")
    if dimension < 1:
        raise FormatError("dimension must be >= 1", offset=9)
    record_count = r.u64("record count")
    vocab_count = r.u32("vocabulary count")
    names = [r.string(f"vocab name {i}") for i in range(vocab_count)]
    records: list[RawRecord] = []
    for i in range(record_count):
        label_count = r.u16(f"record {i} label count")
        if label_count == 0:
            raise FormatError(f"record {i} has an empty label set", offset=r.pos - 2)
        label_ids = []
        for _ in range(label_count):
            at = r.pos
            label_id = r.u32(f"record {i} label id")
            if label_id >= len(names):
                raise FormatError(f"record {i} references unknown label id {label_id}", offset=at)
            label_ids.append(label_id)
        source = r.string(f"record {i} source")
        flag = r.u8(f"record {i} task flag")
        if flag not in (0, 1):
            raise FormatError(f"record {i} has invalid task flag {flag}", offset=r.pos - 1)
        task_id = r.u32(f"record {i} task id") if flag else None
        vec_at = r.pos
        vector = np.frombuffer(r.take(4 * dimension, f"record {i} vector"), dtype="<f4").copy()
        if not np.isfinite(vector).all():
            raise FormatError(f"record {i} vector has non-finite values", offset=vec_at)
        records.append(
            RawRecord(
                vector=vector,
                label_names=tuple(names[j] for j in label_ids),
                source=source,
                task_id=task_id,
            )
        )
    r.expect_end()
    return records


def ingest_feature_file(
    store: KnowledgeStore, path: str | Path, default_task: int | None = None
) -> list[int]:
    """Ingest every record of a feature file; returns the new record ids.

    Equivalent to ingesting the same records programmatically: same ids,
    same vocabulary growth, same search results.
    """
    records = read_feature_file(path)
    return store.ingest_many(
        np.stack([rec.vector for rec in records]),
        [rec.label_names for rec in records],
        [rec.source for rec in records],
        [rec.task_id if rec.task_id is not None else default_task for rec in records],
    )


# -- plain-text import ---------------------------------------------------------


def read_text_records(path: str | Path) -> list[RawRecord]:
    """Hand-authored fixture import: `label1,label2 source v1 v2 ...` per line.

    Blank lines and lines starting with '#' are skipped. Sources must not
    contain whitespace in this format; use feature files otherwise.
    """
    records = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 3:
            raise FormatError(f"line {lineno}: expected `labels source floats...`")
        labels = tuple(p for p in parts[0].split(",") if p)
        if not labels:
            raise FormatError(f"line {lineno}: empty label list")
        try:
            vector = np.array([float(p) for p in parts[2:]], dtype=np.float32)
        except ValueError as exc:
            raise FormatError(f"line {lineno}: bad float: {exc}") from None
        records.append(RawRecord(vector=vector, label_names=labels, source=parts[1]))
    if not records:
        raise FormatError(f"{path}: no records found")
    dim = records[0].vector.shape[0]
    for i, rec in enumerate(records):
        if rec.vector.shape[0] != dim:
            raise FormatError(f"record {i} has dimension {rec.vector.shape[0]}, expected {dim}")
    return records


# -- store snapshots -------------------------------------------------------------


def _snapshot_payload(store: KnowledgeStore) -> bytes:
    w = _Writer()
    w.raw(SNAPSHOT_MAGIC)
    w.u32(FORMAT_VERSION)
    w.u32(store.dimension)
    w.u64(store.next_id)
    w.u64(store.total_count)
    w.u64(store.live_count)
    names = store.vocab.names
    w.u32(len(names))
    for name in names:
        w.string(name)
    for rec in store.records(include_deleted=True):
        w.u64(rec.id)
        w.u8(1 if rec.deleted else 0)
        if rec.task_id is None:
            w.u8(0)
        else:
            w.u8(1)
            w.u32(rec.task_id)
        w.u64(rec.ref_count)
        w.f32(rec.original_norm)
        w.string(rec.source)
        labels = sorted(rec.labels)
        w.u16(len(labels))
        for label_id in labels:
            w.u32(label_id)
        w.raw(np.ascontiguousarray(rec.vector, dtype="<f4").tobytes())
    return w.getvalue()


def _checksum(payload: bytes) -> bytes:
    return hashlib.sha256(payload).digest()[:8]


def save_store(store: KnowledgeStore, path: str | Path) -> int:
    """Write a checksummed snapshot; returns bytes written."""
    with store.write_lock():
        payload = _snapshot_payload(store)
    data = payload + _checksum(payload)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc
    return len(data)


def snapshot_nbytes(store: KnowledgeStore) -> int:
    """Exact size a snapshot of this store would occupy on disk."""
    total = 4 + 4 + 4 + 8 + 8 + 8  # header
    total += 4 + sum(2 + len(n.encode("utf-8")) for n in store.vocab.names)
    n = store.total_count
    # id + tombstone + task flag + ref count + norm + source/label prefixes + vector
    total += n * (8 + 1 + 1 + 8 + 4 + 2 + 2 + 4 * store.dimension)
    total += 4 * int(np.count_nonzero(store._task_ids[:n] != NO_TASK))
    total += sum(len(s.encode("utf-8")) for s in store._sources)
    total += 4 * sum(len(labels) for labels in store._labels)
    return total + 8  # checksum


def load_store(path: str | Path) -> KnowledgeStore:
    """Load a snapshot, verifying magic, version, and checksum (in that order,
    so version skew reports as unknown-version, not corruption)."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if len(data) < 16:
        raise FormatError("file too short to be a snapshot", offset=0)
    if data[:4] != SNAPSHOT_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {SNAPSHOT_MAGIC!r}", offset=0)
    version = struct.unpack_from("<I", data, 4)[0]
    if version != FORMAT_VERSION:
        raise UnknownVersionError(f"unsupported snapshot version {version}", offset=4)
    payload, stored = data[:-8], data[-8:]
    if _checksum(payload) != stored:
        raise CorruptionError("snapshot checksum mismatch", offset=len(payload))

    r = _Reader(payload)
    r.take(8, "header")  # magic + version, already validated
    dimension = r.u32("dimension")
    next_id = r.u64("next id")
    total_count = r.u64("total count")
    live_count = r.u64("live count")
    vocab_count = r.u32("vocabulary count")
    names = [r.string(f"vocab name {i}") for i in range(vocab_count)]

    store = KnowledgeStore(dimension)
    for name in names:
        store.vocab.intern(name)
    prev_id = -1
    ids, deleted_rows, vectors = [], [], []
    norms, task_ids, ref_counts, sources, labels = [], [], [], [], []
    for i in range(total_count):
        at = r.pos
        rec_id = r.u64(f"record {i} id")
        if rec_id <= prev_id:
            raise FormatError(f"record ids not strictly increasing at record {i}", offset=at)
        prev_id = rec_id
        ids.append(rec_id)
        deleted_rows.append(bool(r.u8(f"record {i} tombstone")))
        flag = r.u8(f"record {i} task flag")
        task_ids.append(r.u32(f"record {i} task id") if flag else NO_TASK)
        ref_counts.append(r.u64(f"record {i} ref count"))
        norms.append(r.f32(f"record {i} norm"))
        sources.append(r.string(f"record {i} source"))
        label_count = r.u16(f"record {i} label count")
        row_labels = frozenset(r.u32(f"record {i} label id") for _ in range(label_count))
        if not row_labels:
            raise FormatError(f"record {i} has an empty label set", offset=at)
        if any(l >= len(names) for l in row_labels):
            raise FormatError(f"record {i} references an unknown label id", offset=at)
        labels.append(row_labels)
        vectors.append(np.frombuffer(r.take(4 * dimension, f"record {i} vector"), dtype="<f4"))
    r.expect_end()
    if ids and next_id <= ids[-1]:
        raise FormatError(f"id counter {next_id} not past the largest record id {ids[-1]}")

    n = total_count
    store._grow(n)
    if n:
        store._matrix[:n] = np.stack(vectors)
        store._ids[:n] = ids
        store._norms[:n] = norms
        store._task_ids[:n] = task_ids
        store._ref_counts[:n] = ref_counts
        store._deleted[:n] = deleted_rows
    store._labels = labels
    store._sources = sources
    store._size = n
    store._live = n - sum(deleted_rows)
    store._next_id = next_id
    if store._live != live_count:
        raise FormatError(
            f"live count mismatch: header says {live_count}, records say {store._live}"
        )
    return store
