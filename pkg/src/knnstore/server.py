"""HTTP/JSON service over one knowledge store (see docs/http-api.md).

Mutations are serialized by the store's writer lock; classifications run
concurrently and the audit log's entry order defines the global serialization
order. Long evaluations run as background jobs polled via /v1/jobs/{id}.
"""

from __future__ import annotations

import threading
import uuid
from typing import Any

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import formats, harness
from .classify import AuditLog, ClassificationResult, classify, explain
from .config import ServiceConfig
from .errors import (
    EncoderUnavailableError,
    InvalidArgumentError,
    KnnStoreError,
    ReadOnlyError,
)
from .search import QueryVector, SearchFilter
from .store import KnowledgeStore

_STATUS = {
    "invalid-argument": 400,
    "parse-error": 400,
    "not-found": 404,
    "read-only": 409,
    "encoder-unconfigured": 503,
    "unknown-version": 400,
    "corruption": 500,
    "internal": 500,
}


class FilterSpec(BaseModel):
    labels: list[str] | None = None
    label_ids: list[int] | None = None
    task_ids: list[int] | None = None
    exclude_ids: list[int] | None = None

    def build(self, store: KnowledgeStore) -> SearchFilter | None:
        label_ids = None
        if self.labels is not None or self.label_ids is not None:
            ids = set(self.label_ids or [])
            for name in self.labels or []:
                if name in store.vocab:
                    ids.add(store.vocab.id_of(name))
            label_ids = frozenset(ids)
        filt = SearchFilter(
            label_ids=label_ids,
            task_ids=frozenset(self.task_ids) if self.task_ids is not None else None,
            exclude_ids=frozenset(self.exclude_ids) if self.exclude_ids is not None else None,
        )
        return None if filt.is_empty() else filt


class ClassifyRequest(BaseModel):
    vector: list[float] | None = None
    batch: list[list[float]] | None = None
    k: int | None = None
    filter: FilterSpec | None = None
    query_source: str = ""
    ground_truth_label: str | None = None


class LabelsPatch(BaseModel):
    labels: list[str]


class DeleteRequest(BaseModel):
    ids: list[int] | None = None
    label: str | None = None


class IngestRecord(BaseModel):
    vector: list[float]
    labels: list[str]
    source: str = ""
    task_id: int | None = None


class IngestRequest(BaseModel):
    records: list[IngestRecord]


class SaveRequest(BaseModel):
    path: str | None = None


class EvalQuery(BaseModel):
    vector: list[float]
    label: str
    source: str = ""


class EvalAccuracyRequest(BaseModel):
    queries: list[EvalQuery]
    k: int | None = None
    filter: FilterSpec | None = None


class EvalEliminateRequest(BaseModel):
    queries: list[EvalQuery]
    noisy_ids: list[int]
    k: int | None = None


def _record_json(store: KnowledgeStore, record) -> dict:
    return {
        "id": record.id,
        "label_ids": sorted(record.labels),
        "labels": sorted(store.vocab.name_of(i) for i in record.labels),
        "source": record.source,
        "task_id": record.task_id,
        "ref_count": record.ref_count,
        "deleted": record.deleted,
        "original_norm": record.original_norm,
    }


def _result_json(store: KnowledgeStore, result: ClassificationResult) -> dict:
    predicted = result.predicted_label_id
    return {
        "predicted_label_id": predicted,
        "predicted_label": store.vocab.name_of(predicted) if predicted is not None else None,
        "abstained": result.abstained,
        "tie_broken": result.tally.tie_broken,
        "tally": {str(label): votes for label, votes in sorted(result.tally.counts.items())},
        "entry_id": result.entry_id,
        "neighbors": [
            {
                "record_id": nb.record_id,
                "distance": nb.distance,
                "rank": nb.rank,
                **{
                    key: value
                    for key, value in _record_json(store, store.get(nb.record_id)).items()
                    if key in ("labels", "label_ids", "source", "deleted")
                },
            }
            for nb in result.neighbors
        ],
    }


def _queryset(queries: list[EvalQuery]) -> harness.LabeledQuerySet:
    if not queries:
        raise InvalidArgumentError("queries must be nonempty")
    dim = len(queries[0].vector)
    return harness.LabeledQuerySet(
        examples=tuple(
            harness.LabeledExample(
                vector=np.asarray(q.vector, dtype=np.float32), label=q.label, source=q.source
            )
            for q in queries
        ),
        dimension=dim,
    )


def _report_json(report: harness.EvalReport) -> dict:
    return {
        "kind": report.kind,
        "accuracy": report.accuracy,
        "per_class_accuracy": report.per_class_accuracy,
        "steps": [
            {"step": s.step, "accuracy": s.accuracy, "task_accuracies": s.task_accuracies}
            for s in report.steps
        ],
        "aggregates": report.aggregates,
        "store_stats": report.store_stats,
        "csv_rows": [list(row) for row in report.to_csv_rows()],
    }


class _Jobs:
    def __init__(self):
        self._jobs: dict[str, dict[str, Any]] = {}
        self._lock = threading.Lock()

    def submit(self, fn) -> str:
        job_id = uuid.uuid4().hex[:12]
        with self._lock:
            self._jobs[job_id] = {"status": "pending", "result": None, "error": None}

        def run():
            with self._lock:
                self._jobs[job_id]["status"] = "running"
            try:
                result = fn()
                with self._lock:
                    self._jobs[job_id].update(status="done", result=result)
            except Exception as exc:  # surfaced via the job record
                with self._lock:
                    self._jobs[job_id].update(status="error", error=str(exc))

        threading.Thread(target=run, daemon=True).start()
        return job_id

    def get(self, job_id: str) -> dict:
        with self._lock:
            if job_id not in self._jobs:
                from .errors import NotFoundError

                raise NotFoundError(f"unknown job: {job_id}")
            return dict(self._jobs[job_id])


def create_app(
    store: KnowledgeStore, config: ServiceConfig, log: AuditLog | None = None
) -> FastAPI:
    app = FastAPI(title="knnstore", version="0.1.0")
    log = log if log is not None else AuditLog()
    jobs = _Jobs()
    app.state.store = store
    app.state.config = config
    app.state.log = log

    def guard_mutation():
        if config.read_only:
            raise ReadOnlyError("service is read-only")

    @app.exception_handler(KnnStoreError)
    async def domain_error(_request: Request, exc: KnnStoreError):
        return JSONResponse(
            status_code=_STATUS.get(exc.code, 500),
            content={"error": exc.code, "message": str(exc)},
        )

    @app.exception_handler(RequestValidationError)
    async def validation_error(_request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400, content={"error": "invalid-argument", "message": str(exc.errors())}
        )

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    @app.get("/v1/config")
    def get_config():
        return {
            "default_k": config.default_k,
            "max_batch": config.max_batch,
            "read_only": config.read_only,
            "image_base_url": config.image_base_url,
            "encoder_configured": config.encoder_url is not None,
        }

    @app.get("/v1/stats")
    def stats():
        return {
            "dimension": store.dimension,
            "live_count": store.live_count,
            "total_count": store.total_count,
            "tombstones": store.total_count - store.live_count,
            "vocab_size": len(store.vocab),
            "snapshot_bytes": formats.snapshot_nbytes(store),
            "audit_entries": len(log),
            "next_id": store.next_id,
        }

    @app.get("/v1/refs")
    def refs(order: str = "most", top: int = 10):
        return {"refs": [{"id": i, "ref_count": c} for i, c in store.reference_stats(top, order)]}

    def _classify_one(vector, k, filt, source, truth_label):
        truth_id = (
            store.vocab.id_of(truth_label)
            if truth_label is not None and truth_label in store.vocab
            else None
        )
        result = classify(
            store,
            QueryVector.from_raw(vector),
            k,
            filt,
            log=log,
            query_source=source,
            ground_truth_label_id=truth_id,
        )
        return _result_json(store, result)

    @app.post("/v1/classify")
    def classify_endpoint(body: ClassifyRequest):
        if (body.vector is None) == (body.batch is None):
            raise InvalidArgumentError("provide exactly one of `vector` or `batch`")
        k = body.k if body.k is not None else config.default_k
        filt = body.filter.build(store) if body.filter else None
        if body.vector is not None:
            return _classify_one(body.vector, k, filt, body.query_source, body.ground_truth_label)
        if len(body.batch) > config.max_batch:
            raise InvalidArgumentError(
                f"batch of {len(body.batch)} exceeds max_batch={config.max_batch}"
            )
        results = [
            _classify_one(vec, k, filt, f"{body.query_source}[{i}]", body.ground_truth_label)
            for i, vec in enumerate(body.batch)
        ]
        return {"results": results}

    @app.post("/v1/classify-image")
    async def classify_image(request: Request, k: int | None = None):
        if config.encoder_url is None:
            raise EncoderUnavailableError("no encoder endpoint configured")
        payload = await request.body()
        if not payload:
            raise InvalidArgumentError("empty image payload")
        import httpx

        try:
            response = httpx.post(config.encoder_url, content=payload, timeout=30.0)
            response.raise_for_status()
            vector = response.json()["vector"]
        except Exception as exc:
            return JSONResponse(
                status_code=502, content={"error": "encoder-error", "message": str(exc)}
            )
        return _classify_one(vector, k or config.default_k, None, "image-upload", None)

    @app.get("/v1/records/{record_id}")
    def get_record(record_id: int):
        return _record_json(store, store.get(record_id))

    @app.patch("/v1/records/{record_id}/labels")
    def patch_labels(record_id: int, body: LabelsPatch):
        guard_mutation()
        previous = store.relabel(record_id, body.labels)
        return {"previous_labels": sorted(previous), **_record_json(store, store.get(record_id))}

    @app.delete("/v1/records")
    def delete_records(body: DeleteRequest):
        guard_mutation()
        if (body.ids is None) == (body.label is None):
            raise InvalidArgumentError("provide exactly one of `ids` or `label`")
        if body.ids is not None:
            return {"deleted": store.delete(body.ids)}
        return {"deleted": store.delete_by_label(body.label)}

    @app.post("/v1/records")
    def ingest_records(body: IngestRequest):
        guard_mutation()
        if not body.records:
            raise InvalidArgumentError("records must be nonempty")
        ids = store.ingest_many(
            np.asarray([r.vector for r in body.records], dtype=np.float64),
            [r.labels for r in body.records],
            [r.source for r in body.records],
            [r.task_id for r in body.records],
        )
        return {"ids": ids, "live_count": store.live_count}

    @app.get("/v1/audit")
    def audit_list(from_: int = Query(0, alias="from"), limit: int = 50):
        entries = log.entries(from_id=from_, limit=limit)
        next_from = entries[-1].entry_id + 1 if entries else from_
        return {
            "entries": [log.entry_to_dict(e, store.vocab) for e in entries],
            "next_from": next_from,
            "total": len(log),
        }

    @app.get("/v1/audit/{entry_id}")
    def audit_explain(entry_id: int):
        resolved = explain(log, store, entry_id)
        base = log.entry_to_dict(resolved.entry, store.vocab)
        base["neighbors"] = [
            {
                "record_id": nb.record_id,
                "source": nb.source,
                "distance": nb.distance,
                "rank": nb.rank,
                "labels_at_classification": sorted(
                    store.vocab.name_of(i) for i in nb.labels_at_classification
                ),
                "current_labels": sorted(store.vocab.name_of(i) for i in nb.current_labels),
                "deleted": nb.deleted,
            }
            for nb in resolved.neighbors
        ]
        return base

    @app.post("/v1/audit/{entry_id}/rerun")
    def audit_rerun(entry_id: int):
        entry = log.get(entry_id)
        if entry.query is None:
            raise InvalidArgumentError(f"entry {entry_id} has no stored query vector")
        result = classify(
            store,
            entry.query,
            entry.k,
            entry.filter,
            log=log,
            query_source=f"rerun:{entry_id}",
            ground_truth_label_id=entry.ground_truth_label_id,
        )
        return _result_json(store, result)

    @app.post("/v1/eval/accuracy")
    def eval_accuracy(body: EvalAccuracyRequest):
        queryset = _queryset(body.queries)
        k = body.k if body.k is not None else config.default_k
        filt = body.filter.build(store) if body.filter else None
        job_id = jobs.submit(lambda: _report_json(harness.evaluate(store, queryset, k, filt, log)))
        return {"job_id": job_id}

    @app.post("/v1/eval/eliminate")
    def eval_eliminate(body: EvalEliminateRequest):
        guard_mutation()
        queryset = _queryset(body.queries)
        k = body.k if body.k is not None else config.default_k
        noisy = list(body.noisy_ids)

        def run():
            before = harness.evaluate(store, queryset, k, None, log)
            store.delete(noisy)
            after = harness.evaluate(store, queryset, k, None, log)
            return {
                "before": _report_json(before),
                "after": _report_json(after),
                "delta": after.accuracy - before.accuracy,
            }

        return {"job_id": jobs.submit(run)}

    @app.get("/v1/jobs/{job_id}")
    def job_status(job_id: str):
        return {"job_id": job_id, **jobs.get(job_id)}

    @app.post("/v1/admin/save")
    def admin_save(body: SaveRequest | None = None):
        guard_mutation()
        path = body.path if body and body.path else config.store_path
        nbytes = formats.save_store(store, path)
        return {"path": str(path), "bytes": nbytes}

    return app


def serve(config: ServiceConfig) -> None:
    """Load the configured snapshot and serve until interrupted."""
    import uvicorn

    store = formats.load_store(config.store_path)
    app = create_app(store, config)
    host, port = config.host_port()
    uvicorn.run(app, host=host, port=port, log_level="warning")
