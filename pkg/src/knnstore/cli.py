"""Command-line interface: store management, classification, and experiments.

Every command exits nonzero with a one-line machine-parsable error
(`error: <code>: <message>`) on failure. Mutating commands (including
`classify`, which updates reference counters) rewrite the store snapshot.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np

from . import formats, harness
from .classify import AuditLog, classify
from .config import parse_config
from .errors import KnnStoreError
from .search import QueryVector, SearchFilter
from .store import KnowledgeStore


class CliError(click.ClickException):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code

    def show(self, file=None) -> None:
        click.echo(f"error: {self.code}: {self.format_message()}", err=file or sys.stderr)


def cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except KnnStoreError as exc:
            raise CliError(exc.code, str(exc)) from exc
        except OSError as exc:
            raise CliError("io-error", str(exc)) from exc

    return wrapper


def _load(path: str) -> KnowledgeStore:
    return formats.load_store(path)


def _read_records(path: str) -> list[formats.RawRecord]:
    """Feature files are detected by magic; anything else parses as text."""
    with open(path, "rb") as fp:
        magic = fp.read(4)
    if magic == formats.FEATURE_MAGIC:
        return formats.read_feature_file(path)
    return formats.read_text_records(path)


def _parse_labels(text: str) -> set[str]:
    return {part for part in (p.strip() for p in text.split(",")) if part}


def prediction_csv_rows(results, sources) -> list[str]:
    """The stable prediction CSV schema shared with the HTTP path."""
    lines = ["index,source,predicted_label,abstained"]
    for i, (result, source) in enumerate(zip(results, sources)):
        label = result["predicted_label"] if isinstance(result, dict) else result
        abstained = result["abstained"] if isinstance(result, dict) else label is None
        lines.append(f"{i},{source},{'' if label is None else label},{str(abstained).lower()}")
    return lines


@click.group()
def main():
    """Exact k-NN classification over an external knowledge store."""


@main.group()
def store():
    """Create, inspect, and curate store snapshots."""


@store.command("init")
@click.option("--dim", type=int, required=True, help="Feature vector dimension.")
@click.option("--out", "path", required=True, type=click.Path(), help="Snapshot path.")
@cli_errors
def store_init(dim: int, path: str):
    new = KnowledgeStore(dim)
    nbytes = formats.save_store(new, path)
    click.echo(f"initialized empty store dim={dim} at {path} ({nbytes} bytes)")


@store.command("ingest")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--features", "features_path", required=True, type=click.Path(exists=True))
@click.option("--task", type=int, default=None, help="Task id for records lacking one.")
@cli_errors
def store_ingest(store_path: str, features_path: str, task: int | None):
    knowledge = _load(store_path)
    records = _read_records(features_path)
    ids = knowledge.ingest_many(
        np.stack([r.vector for r in records]),
        [r.label_names for r in records],
        [r.source for r in records],
        [r.task_id if r.task_id is not None else task for r in records],
    )
    formats.save_store(knowledge, store_path)
    click.echo(f"ingested {len(ids)} records (live_count={knowledge.live_count})")


@store.command("delete")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--ids", "ids_path", type=click.Path(exists=True), help="File with one id per line.")
@click.option("--label", type=str, default=None, help="Delete all records carrying this label.")
@cli_errors
def store_delete(store_path: str, ids_path: str | None, label: str | None):
    if (ids_path is None) == (label is None):
        raise CliError("invalid-argument", "provide exactly one of --ids or --label")
    knowledge = _load(store_path)
    if ids_path is not None:
        ids = [int(line) for line in Path(ids_path).read_text().split()]
        count = knowledge.delete(ids)
    else:
        count = knowledge.delete_by_label(label)
    formats.save_store(knowledge, store_path)
    click.echo(f"deleted {count} records (live_count={knowledge.live_count})")


@store.command("relabel")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--id", "record_id", required=True, type=int)
@click.option("--labels", required=True, help="Comma-separated new label names.")
@cli_errors
def store_relabel(store_path: str, record_id: int, labels: str):
    knowledge = _load(store_path)
    previous = knowledge.relabel(record_id, _parse_labels(labels))
    formats.save_store(knowledge, store_path)
    click.echo(f"relabeled {record_id}: {','.join(sorted(previous))} -> {labels}")


@store.command("stats")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--refs", type=click.Choice(["most", "least"]), default=None)
@click.option("--top", type=int, default=10)
@cli_errors
def store_stats(store_path: str, refs: str | None, top: int):
    knowledge = _load(store_path)
    click.echo(f"dimension = {knowledge.dimension}")
    click.echo(f"live_count = {knowledge.live_count}")
    click.echo(f"total_count = {knowledge.total_count}")
    click.echo(f"vocab_size = {len(knowledge.vocab)}")
    click.echo(f"snapshot_bytes = {formats.snapshot_nbytes(knowledge)}")
    if refs:
        for record_id, count in knowledge.reference_stats(top, refs):
            click.echo(f"ref {record_id} = {count}")


@store.command("prune")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--threshold", type=int, required=True, help="Delete records with ref_count <= this.")
@cli_errors
def store_prune(store_path: str, threshold: int):
    knowledge = _load(store_path)
    count = knowledge.prune_rarely_referenced(threshold)
    formats.save_store(knowledge, store_path)
    click.echo(f"pruned {count} records (live_count={knowledge.live_count})")


@store.command("compact")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@cli_errors
def store_compact(store_path: str):
    knowledge = _load(store_path)
    removed = knowledge.compact()
    formats.save_store(knowledge, store_path)
    click.echo(f"compacted {removed} tombstones (total_count={knowledge.total_count})")


@main.command("classify")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True))
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--filter-labels", default=None, help="Restrict search to these labels.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Prediction CSV path.")
@click.option("--audit-out", type=click.Path(), default=None, help="Audit JSONL path.")
@click.option("--no-save", is_flag=True, help="Skip persisting reference-count updates.")
@cli_errors
def classify_cmd(store_path, queries_path, k, filter_labels, out_path, audit_out, no_save):
    """Classify query vectors from a feature (or text) file.

    Labels in the query file are treated as ground truth for the audit log.
    """
    knowledge = _load(store_path)
    records = _read_records(queries_path)
    filt = (
        SearchFilter.for_label_names(knowledge, _parse_labels(filter_labels))
        if filter_labels
        else None
    )
    log = AuditLog()
    results, sources = [], []
    correct = total_truth = 0
    for record in records:
        truth = record.label_names[0] if record.label_names else None
        truth_id = (
            knowledge.vocab.id_of(truth) if truth and truth in knowledge.vocab else None
        )
        result = classify(
            knowledge,
            QueryVector.from_raw(record.vector),
            k,
            filt,
            log=log,
            query_source=record.source,
            ground_truth_label_id=truth_id,
        )
        label = (
            knowledge.vocab.name_of(result.predicted_label_id)
            if result.predicted_label_id is not None
            else None
        )
        results.append({"predicted_label": label, "abstained": result.abstained})
        sources.append(record.source)
        if truth is not None:
            total_truth += 1
            if truth_id is not None and result.predicted_label_id == truth_id:
                correct += 1
    lines = prediction_csv_rows(results, sources)
    if out_path:
        Path(out_path).write_text("\n".join(lines) + "\n")
    else:
        for line in lines:
            click.echo(line)
    if audit_out:
        with open(audit_out, "w", encoding="utf-8") as fp:
            log.export_jsonl(fp, knowledge.vocab)
    if not no_save:
        formats.save_store(knowledge, store_path)
    if total_truth:
        click.echo(f"accuracy = {correct / total_truth:.6f} over {total_truth} labeled queries")


def _parse_synthetic(text: str) -> harness.SyntheticSpec:
    fields = {
        "classes": 10,
        "per": 200,
        "dim": 64,
        "spread": 0.35,
        "noise": 0.0,
        "seed": 7,
    }
    for part in text.split(","):
        if not part.strip():
            continue
        key, _, value = part.partition("=")
        key = key.strip()
        if key not in fields:
            raise CliError("invalid-argument", f"unknown synthetic field {key!r}")
        fields[key] = float(value) if key in ("spread", "noise") else int(value)
    return harness.SyntheticSpec(
        num_classes=fields["classes"],
        samples_per_class=fields["per"],
        dimension=fields["dim"],
        cluster_spread=fields["spread"],
        label_noise_rate=fields["noise"],
        seed=fields["seed"],
    )


def _emit_report(report: harness.EvalReport, out_path: str | None):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fp:
            report.write_csv(fp)
        click.echo(f"wrote {out_path}")
    click.echo(report.to_text(), nl=False)


@main.group("eval")
def eval_group():
    """Run evaluation-harness experiments."""


_SYNTH_OPTION = click.option(
    "--synthetic",
    default="classes=10,per=200,dim=64,spread=0.35,noise=0.0,seed=7",
    show_default=True,
    help="Synthetic dataset spec: classes=,per=,dim=,spread=,noise=,seed=.",
)


@eval_group.command("accuracy")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True))
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--filter-labels", default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@cli_errors
def eval_accuracy(store_path, queries_path, k, filter_labels, out_path):
    """Accuracy of the store against a labeled query file (first label = truth)."""
    knowledge = _load(store_path)
    records = _read_records(queries_path)
    queries = harness.LabeledQuerySet(
        examples=tuple(
            harness.LabeledExample(vector=r.vector, label=r.label_names[0], source=r.source)
            for r in records
        ),
        dimension=records[0].vector.shape[0],
    )
    filt = (
        SearchFilter.for_label_names(knowledge, _parse_labels(filter_labels))
        if filter_labels
        else None
    )
    _emit_report(harness.evaluate(knowledge, queries, k, filt), out_path)


@eval_group.command("cv-k")
@_SYNTH_OPTION
@click.option("--candidates", default="1,2,3,5,10,20", show_default=True)
@click.option("--ratio", type=float, default=0.9, show_default=True)
@click.option("--cv-seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@cli_errors
def eval_cv_k(synthetic, candidates, ratio, cv_seed, out_path):
    """Cross-validate k on a seeded support/query split (default 9:1)."""
    support, _ = harness.generate_synthetic(_parse_synthetic(synthetic))
    ks = [int(part) for part in candidates.split(",") if part.strip()]
    best_k, report = harness.cross_validate_k(support, ks, ratio, cv_seed)
    _emit_report(report, out_path)
    click.echo(f"best_k = {best_k}")


@eval_group.command("incremental")
@_SYNTH_OPTION
@click.option("--mode", type=click.Choice(["task", "class"]), default="task", show_default=True)
@click.option("--steps", type=int, default=20, show_default=True)
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@cli_errors
def eval_incremental(synthetic, mode, steps, k, out_path):
    """Task- or class-incremental protocol over a synthetic dataset."""
    spec = _parse_synthetic(synthetic)
    support, queries = harness.generate_synthetic(spec)
    protocol = harness.IncrementalProtocol.balanced(
        [f"class_{i:03d}" for i in range(spec.num_classes)], steps, mode
    )
    _emit_report(harness.run_incremental(protocol, support, queries, k), out_path)


@eval_group.command("eliminate")
@_SYNTH_OPTION
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@cli_errors
def eval_eliminate(synthetic, k, out_path):
    """Before/after accuracy around deleting the known-noisy support rows."""
    support, queries = harness.generate_synthetic(_parse_synthetic(synthetic))
    before, after, delta = harness.run_elimination_experiment(support, queries, k)
    report = harness.EvalReport(
        kind="eliminate",
        config={"k": k, "noisy_rows": len(support.noisy_indices())},
        aggregates={
            "accuracy_before": before.accuracy,
            "accuracy_after": after.accuracy,
            "delta": delta,
        },
    )
    _emit_report(report, out_path)


@eval_group.command("bench")
@click.option("--sizes", default="10000,100000", show_default=True)
@click.option("--dim", type=int, default=128, show_default=True)
@click.option("--reps", type=int, default=30, show_default=True)
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@cli_errors
def eval_bench(sizes, dim, reps, k, out_path):
    """Median linear-scan time over stores of random unit vectors."""
    ns = [int(part) for part in sizes.split(",") if part.strip()]
    _emit_report(harness.benchmark_distance_scan(ns, dim, reps, k), out_path)


@main.command("serve")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@cli_errors
def serve_cmd(config_path: str):
    """Start the HTTP service for the configured store."""
    from . import server

    server.serve(parse_config(config_path))


if __name__ == "__main__":
    main()
