"""Desk-scale reproductions of the system's experimental procedures.

Covers k cross-validation over a 9:1 support/query split, accuracy versus
store size, task- and class-incremental protocols with both aggregate
metrics, mislabel-elimination before/after runs, and linear-scan timing
benchmarks. A seeded Gaussian-cluster generator stands in for encoder
embeddings so every experiment is reproducible bit-for-bit from its seed.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import formats
from .classify import AuditLog, AuditNeighbor, _tally_votes, classify
from .errors import InvalidArgumentError
from .search import QueryVector, SearchFilter, search_topk
from .store import KnowledgeStore


@dataclass(frozen=True)
class LabeledExample:
    """One labeled raw vector. ``true_label`` is set when ``label`` is a
    known-wrong assignment (label-noise bookkeeping for elimination runs)."""

    vector: np.ndarray  # float32, raw (unnormalized)
    label: str
    source: str
    true_label: str | None = None

    @property
    def is_noisy(self) -> bool:
        return self.true_label is not None and self.true_label != self.label


@dataclass(frozen=True)
class LabeledQuerySet:
    """Nonempty, dimension-consistent list of labeled examples."""

    examples: tuple[LabeledExample, ...]
    dimension: int

    def __post_init__(self):
        if not self.examples:
            raise InvalidArgumentError("query set must be nonempty")
        for ex in self.examples:
            if ex.vector.shape != (self.dimension,):
                raise InvalidArgumentError(
                    f"example {ex.source!r} has dimension {ex.vector.shape}, expected {self.dimension}"
                )

    def __len__(self) -> int:
        return len(self.examples)

    def noisy_indices(self) -> list[int]:
        return [i for i, ex in enumerate(self.examples) if ex.is_noisy]

    def class_names(self) -> list[str]:
        seen: dict[str, None] = {}
        for ex in self.examples:
            seen.setdefault(ex.label)
        return list(seen)

    def subset(self, indices: Iterable[int]) -> "LabeledQuerySet":
        return LabeledQuerySet(
            examples=tuple(self.examples[i] for i in indices), dimension=self.dimension
        )


@dataclass(frozen=True)
class SyntheticSpec:
    """Seeded Gaussian clusters around random unit mean directions.

    ``class_sizes`` overrides ``samples_per_class`` per class (imbalance
    knob); the default is balanced.
    """

    num_classes: int
    samples_per_class: int
    dimension: int
    cluster_spread: float
    label_noise_rate: float
    seed: int
    class_sizes: tuple[int, ...] | None = None


@dataclass(frozen=True)
class IncrementalProtocol:
    """Ordered partition of classes into disjoint groups, one per step."""

    mode: str  # "task" | "class"
    subsets: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if self.mode not in ("task", "class"):
            raise InvalidArgumentError(f"mode must be 'task' or 'class', got {self.mode!r}")
        if not self.subsets:
            raise InvalidArgumentError("protocol must have at least one subset")
        seen: set[str] = set()
        for group in self.subsets:
            if not group:
                raise InvalidArgumentError("protocol subsets must be nonempty")
            for name in group:
                if name in seen:
                    raise InvalidArgumentError(f"class {name!r} appears in two subsets")
                seen.add(name)

    @classmethod
    def balanced(
        cls, class_names: Sequence[str], num_steps: int, mode: str, seed: int | None = None
    ) -> "IncrementalProtocol":
        """Chunk classes into ``num_steps`` near-equal groups, optionally shuffled."""
        names = list(class_names)
        if num_steps < 1 or num_steps > len(names):
            raise InvalidArgumentError(
                f"num_steps must be in [1, {len(names)}], got {num_steps}"
            )
        if seed is not None:
            rng = np.random.default_rng(seed)
            names = [names[i] for i in rng.permutation(len(names))]
        base, extra = divmod(len(names), num_steps)
        groups = []
        start = 0
        for step in range(num_steps):
            size = base + (1 if step < extra else 0)
            groups.append(tuple(names[start : start + size]))
            start += size
        return cls(mode=mode, subsets=tuple(groups))


@dataclass(frozen=True)
class StepResult:
    step: int
    accuracy: float
    task_accuracies: dict[int, float] | None = None


@dataclass(frozen=True)
class BenchmarkRow:
    n: int
    median_seconds: float
    ratio_vs_prev: float | None


@dataclass
class EvalReport:
    """Structured experiment output; aggregates recompute from per-step values.

    ``to_csv_rows`` emits the plot-ready (step, metric, value) schema shared
    by the CLI and the review UI (see docs/reports.md).
    """

    kind: str
    config: dict
    accuracy: float | None = None
    per_class_accuracy: dict[str, float] = field(default_factory=dict)
    steps: list[StepResult] = field(default_factory=list)
    aggregates: dict[str, float] = field(default_factory=dict)
    store_stats: dict[str, int] = field(default_factory=dict)
    timing: dict[str, float] = field(default_factory=dict)
    predictions: dict[str, tuple] = field(default_factory=dict)
    bench_rows: list[BenchmarkRow] = field(default_factory=list)

    def to_csv_rows(self) -> list[tuple]:
        rows: list[tuple] = []
        if self.accuracy is not None:
            rows.append((0, "accuracy", self.accuracy))
        for name, value in sorted(self.per_class_accuracy.items()):
            rows.append((0, f"class_accuracy/{name}", value))
        for step in self.steps:
            rows.append((step.step, self.kind + "_accuracy", step.accuracy))
            if step.task_accuracies:
                for task, acc in sorted(step.task_accuracies.items()):
                    rows.append((step.step, f"task_accuracy/{task}", acc))
        last = self.steps[-1].step if self.steps else 0
        for name, value in sorted(self.aggregates.items()):
            rows.append((last, name, value))
        for row in self.bench_rows:
            rows.append((row.n, "median_seconds", row.median_seconds))
            if row.ratio_vs_prev is not None:
                rows.append((row.n, "scale_ratio", row.ratio_vs_prev))
        return rows

    def write_csv(self, fp) -> None:
        fp.write("step,metric,value\n")
        for step, metric, value in self.to_csv_rows():
            fp.write(f"{step},{metric},{value!r}\n".replace("'", ""))

    def to_text(self) -> str:
        lines = [f"report: {self.kind}"]
        for key, value in sorted(self.config.items()):
            lines.append(f"config {key} = {value}")
        if self.accuracy is not None:
            lines.append(f"accuracy = {self.accuracy:.6f}")
        for name, value in sorted(self.per_class_accuracy.items()):
            lines.append(f"class_accuracy {name} = {value:.6f}")
        for step in self.steps:
            lines.append(f"step {step.step} accuracy = {step.accuracy:.6f}")
        for name, value in sorted(self.aggregates.items()):
            lines.append(f"aggregate {name} = {value:.6f}")
        for name, value in sorted(self.store_stats.items()):
            lines.append(f"store {name} = {value}")
        for row in self.bench_rows:
            ratio = "" if row.ratio_vs_prev is None else f" ratio_vs_prev = {row.ratio_vs_prev:.3f}"
            lines.append(f"bench n = {row.n} median_s = {row.median_seconds:.6g}{ratio}")
        for name, value in sorted(self.timing.items()):
            lines.append(f"timing {name} = {value:.6g}")
        return "\n".join(lines) + "\n"


# -- synthetic data ----------------------------------------------------------


def generate_synthetic(spec: SyntheticSpec) -> tuple[LabeledQuerySet, LabeledQuerySet]:
    """Generate (support, query) sets; bit-identical for a given seed.

    Per class: one random unit mean direction, then samples = mean + N(0,
    spread) per coordinate; the first 80% become support, the rest queries.
    Support labels are flipped to a uniformly random wrong class with
    probability ``label_noise_rate``; flips record the true label.
    """
    if spec.num_classes < 2:
        raise InvalidArgumentError(f"need at least 2 classes, got {spec.num_classes}")
    if spec.dimension < 1:
        raise InvalidArgumentError("dimension must be positive")
    if spec.cluster_spread < 0:
        raise InvalidArgumentError("cluster_spread must be nonnegative")
    if not (0.0 <= spec.label_noise_rate < 1.0):
        raise InvalidArgumentError("label_noise_rate must be in [0, 1)")
    sizes = spec.class_sizes or tuple([spec.samples_per_class] * spec.num_classes)
    if len(sizes) != spec.num_classes:
        raise InvalidArgumentError("class_sizes length must equal num_classes")
    if any(s < 2 for s in sizes):
        raise InvalidArgumentError("every class needs at least 2 samples to split 80/20")

    rng = np.random.default_rng(spec.seed)
    names = [f"class_{c:03d}" for c in range(spec.num_classes)]
    support: list[LabeledExample] = []
    support_class: list[int] = []
    queries: list[LabeledExample] = []
    for c, count in enumerate(sizes):
        mean = rng.standard_normal(spec.dimension)
        mean /= np.sqrt(np.dot(mean, mean))
        points = mean + rng.standard_normal((count, spec.dimension)) * spec.cluster_spread
        points = points.astype(np.float32)
        n_support = max(1, min(count - 1, int(round(count * 0.8))))
        for i in range(count):
            ex = LabeledExample(
                vector=points[i], label=names[c], source=f"synth/{names[c]}/{i:05d}"
            )
            if i < n_support:
                support.append(ex)
                support_class.append(c)
            else:
                queries.append(ex)

    flips = rng.random(len(support)) < spec.label_noise_rate
    draws = rng.integers(0, spec.num_classes - 1, size=len(support))
    for i in np.flatnonzero(flips):
        true_c = support_class[i]
        wrong_c = int(draws[i]) + (1 if draws[i] >= true_c else 0)
        ex = support[i]
        support[i] = LabeledExample(
            vector=ex.vector, label=names[wrong_c], source=ex.source, true_label=names[true_c]
        )
    return (
        LabeledQuerySet(examples=tuple(support), dimension=spec.dimension),
        LabeledQuerySet(examples=tuple(queries), dimension=spec.dimension),
    )


def build_store(support: LabeledQuerySet, task_id: int | None = None) -> tuple[KnowledgeStore, list[int]]:
    """Ingest a support set (assigned labels) into a fresh store."""
    store = KnowledgeStore(support.dimension)
    ids = ingest_examples(store, support.examples, task_id)
    return store, ids


def ingest_examples(
    store: KnowledgeStore, examples: Sequence[LabeledExample], task_id: int | None = None
) -> list[int]:
    if not examples:
        return []
    return store.ingest_many(
        np.stack([ex.vector for ex in examples]),
        [{ex.label} for ex in examples],
        [ex.source for ex in examples],
        task_id,
    )


# -- evaluation --------------------------------------------------------------


def _classify_set(
    store: KnowledgeStore,
    queries: Sequence[LabeledExample],
    k: int,
    filt: SearchFilter | None,
    log: AuditLog | None,
) -> tuple[list[int | None], list[bool], list[float]]:
    """Predictions, correctness flags, and per-query durations."""
    predictions: list[int | None] = []
    correct: list[bool] = []
    durations: list[float] = []
    for ex in queries:
        truth_id = store.vocab.id_of(ex.label) if ex.label in store.vocab else None
        start = time.perf_counter()
        result = classify(
            store,
            QueryVector.from_raw(ex.vector),
            k,
            filt,
            log=log,
            query_source=ex.source,
            ground_truth_label_id=truth_id,
        )
        durations.append(time.perf_counter() - start)
        predictions.append(result.predicted_label_id)
        correct.append(
            not result.abstained
            and truth_id is not None
            and result.predicted_label_id == truth_id
        )
    return predictions, correct, durations


def evaluate(
    store: KnowledgeStore,
    queries: LabeledQuerySet,
    k: int,
    filt: SearchFilter | None = None,
    log: AuditLog | None = None,
) -> EvalReport:
    """Accuracy of majority-vote classification over a labeled query set.

    Abstentions and ground-truth labels missing from the vocabulary count as
    errors, never crashes.
    """
    if queries.dimension != store.dimension:
        raise InvalidArgumentError(
            f"dimension mismatch: queries {queries.dimension}, store {store.dimension}"
        )
    predictions, correct, durations = _classify_set(store, queries.examples, k, filt, log)
    by_class: dict[str, list[bool]] = {}
    for ex, ok in zip(queries.examples, correct):
        by_class.setdefault(ex.label, []).append(ok)
    report = EvalReport(
        kind="accuracy",
        config={"k": k, "filter": None if filt is None else repr(filt), "queries": len(queries)},
        accuracy=sum(correct) / len(correct),
        per_class_accuracy={name: sum(v) / len(v) for name, v in sorted(by_class.items())},
        store_stats={
            "live_count": store.live_count,
            "serialized_bytes": formats.snapshot_nbytes(store),
        },
        timing=_timing_summary(durations),
        predictions={"all": tuple(predictions)},
    )
    return report


def _timing_summary(durations: Sequence[float]) -> dict[str, float]:
    return {
        "total_s": float(sum(durations)),
        "mean_query_s": float(statistics.fmean(durations)),
        "median_query_s": float(statistics.median(durations)),
    }


def cross_validate_k(
    support: LabeledQuerySet,
    k_candidates: Sequence[int],
    split_ratio: float = 0.9,
    seed: int = 0,
) -> tuple[int, EvalReport]:
    """Select k by a seeded support/query split (default 9:1).

    Returns ``(best_k, report)`` where the report carries one step per
    candidate k. Ties prefer the smaller k. Candidate accuracies reuse one
    top-max(k) retrieval per query; vote prefixes are exactly what separate
    ``classify`` calls at each k would produce.
    """
    if not k_candidates:
        raise InvalidArgumentError("k_candidates must be nonempty")
    if any(k < 1 for k in k_candidates):
        raise InvalidArgumentError("k candidates must be >= 1")
    if not (0.0 < split_ratio < 1.0):
        raise InvalidArgumentError(f"split_ratio must be in (0, 1), got {split_ratio}")
    n = len(support)
    n_support = int(n * split_ratio)
    if n_support == 0 or n_support == n:
        raise InvalidArgumentError(f"split {split_ratio} leaves an empty side for n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    store, _ = build_store(support.subset(perm[:n_support]))
    holdout = support.subset(perm[n_support:])

    k_max = max(k_candidates)
    hits = {k: 0 for k in k_candidates}
    for ex in holdout.examples:
        truth_id = store.vocab.id_of(ex.label) if ex.label in store.vocab else None
        neighbors = search_topk(store, QueryVector.from_raw(ex.vector), k_max)
        audit = [
            AuditNeighbor(
                record_id=nb.record_id,
                source="",
                labels=store.get(nb.record_id).labels,
                distance=nb.distance,
                rank=nb.rank,
            )
            for nb in neighbors
        ]
        for k in k_candidates:
            tally = _tally_votes(audit[:k], weighted=False)
            if truth_id is not None and tally.winning_label_id == truth_id:
                hits[k] += 1

    accuracies = {k: hits[k] / len(holdout) for k in k_candidates}
    best_acc = max(accuracies.values())
    best_k = min(k for k, acc in accuracies.items() if acc == best_acc)
    report = EvalReport(
        kind="cv",
        config={"split_ratio": split_ratio, "seed": seed, "n_support": n_support},
        steps=[StepResult(step=k, accuracy=accuracies[k]) for k in sorted(accuracies)],
        aggregates={"best_k": float(best_k), "best_accuracy": best_acc},
    )
    return best_k, report


def run_incremental(
    protocol: IncrementalProtocol,
    support: LabeledQuerySet,
    queries: LabeledQuerySet,
    k: int,
) -> EvalReport:
    """Sequential ingestion of class subsets with per-step evaluation.

    Task mode evaluates each seen task's queries under a label filter
    restricted to that task's classes (task identity known at test time);
    the headline aggregate is the mean over all tasks at the final step.
    Class mode evaluates all seen queries unfiltered; aggregates are the
    mean over steps and the final-step accuracy.
    """
    known = {name for group in protocol.subsets for name in group}
    data_classes = set(support.class_names()) | set(queries.class_names())
    missing = data_classes - known
    if missing:
        raise InvalidArgumentError(f"classes not covered by protocol: {sorted(missing)}")

    support_by_task = [
        [ex for ex in support.examples if ex.label in set(group)] for group in protocol.subsets
    ]
    queries_by_task = [
        [ex for ex in queries.examples if ex.label in set(group)] for group in protocol.subsets
    ]

    store = KnowledgeStore(support.dimension)
    steps: list[StepResult] = []
    predictions: dict[str, tuple] = {}
    for t, group in enumerate(protocol.subsets):
        ingest_examples(store, support_by_task[t], task_id=t)
        if protocol.mode == "task":
            task_acc: dict[int, float] = {}
            for j in range(t + 1):
                if not queries_by_task[j]:
                    continue
                filt = SearchFilter.for_label_names(store, protocol.subsets[j])
                preds, correct, _ = _classify_set(store, queries_by_task[j], k, filt, None)
                task_acc[j] = sum(correct) / len(correct)
                predictions[f"step={t},task={j}"] = tuple(preds)
            step_accuracy = sum(task_acc.values()) / len(task_acc) if task_acc else 0.0
            steps.append(StepResult(step=t, accuracy=step_accuracy, task_accuracies=task_acc))
        else:
            seen = [ex for j in range(t + 1) for ex in queries_by_task[j]]
            preds, correct, _ = _classify_set(store, seen, k, None, None)
            predictions[f"step={t}"] = tuple(preds)
            steps.append(StepResult(step=t, accuracy=sum(correct) / len(correct)))

    if protocol.mode == "task":
        final = steps[-1].task_accuracies or {}
        aggregates = {
            "task_average": sum(final.values()) / len(final) if final else 0.0,
        }
    else:
        aggregates = {
            "class_step_average": sum(s.accuracy for s in steps) / len(steps),
            "final_accuracy": steps[-1].accuracy,
        }
    return EvalReport(
        kind=f"incremental-{protocol.mode}",
        config={"k": k, "steps": len(protocol.subsets), "mode": protocol.mode},
        steps=steps,
        aggregates=aggregates,
        store_stats={
            "live_count": store.live_count,
            "serialized_bytes": formats.snapshot_nbytes(store),
        },
        predictions=predictions,
    )


def run_elimination_experiment(
    support: LabeledQuerySet,
    queries: LabeledQuerySet,
    k: int,
    noisy_indices: Sequence[int] | None = None,
) -> tuple[EvalReport, EvalReport, float]:
    """Evaluate, delete the known-noisy support rows, evaluate again.

    ``noisy_indices`` defaults to the support set's own noise bookkeeping;
    pass an explicit list to replay an external curation decision.
    """
    store, ids = build_store(support)
    if noisy_indices is None:
        noisy_indices = support.noisy_indices()
    before = evaluate(store, queries, k)
    store.delete([ids[i] for i in noisy_indices])
    after = evaluate(store, queries, k)
    delta = after.accuracy - before.accuracy
    return before, after, delta


def accuracy_vs_store_size(
    support: LabeledQuerySet,
    queries: LabeledQuerySet,
    fractions: Sequence[float],
    k: int,
    seed: int = 0,
) -> EvalReport:
    """Accuracy with nested random subsamples of the support set.

    Steps are keyed by integer percent. The curve is reported, not asserted:
    monotonicity is an empirical observation, not a theorem.
    """
    if not fractions or any(not (0.0 < f <= 1.0) for f in fractions):
        raise InvalidArgumentError("fractions must be in (0, 1]")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(support))
    steps = []
    for fraction in sorted(fractions):
        count = max(1, int(round(fraction * len(support))))
        store, _ = build_store(support.subset(sorted(perm[:count])))
        report = evaluate(store, queries, k)
        steps.append(StepResult(step=int(round(fraction * 100)), accuracy=report.accuracy))
    return EvalReport(
        kind="size-curve",
        config={"k": k, "seed": seed, "support": len(support)},
        steps=steps,
    )


def benchmark_distance_scan(
    sizes: Sequence[int],
    dimension: int,
    repetitions: int,
    k: int = 10,
    seed: int = 0,
) -> EvalReport:
    """Median top-k scan time over stores of random unit vectors.

    One warm-up search precedes timing; the ratio column compares each size
    against the previous one (≈ size ratio for a linear scan).
    """
    if any(n < 1 for n in sizes):
        raise InvalidArgumentError("store sizes must be positive")
    if repetitions < 1:
        raise InvalidArgumentError("repetitions must be positive")
    rng = np.random.default_rng(seed)
    rows: list[BenchmarkRow] = []
    prev: float | None = None
    for n in sizes:
        store = KnowledgeStore(dimension)
        store.ingest_many(
            rng.standard_normal((n, dimension)).astype(np.float32), {"bench"}, "bench"
        )
        query = QueryVector.from_raw(rng.standard_normal(dimension).astype(np.float32))
        search_topk(store, query, k)  # warm-up
        samples = []
        for _ in range(repetitions):
            start = time.perf_counter()
            search_topk(store, query, k)
            samples.append(time.perf_counter() - start)
        median = float(statistics.median(samples))
        rows.append(
            BenchmarkRow(n=n, median_seconds=median, ratio_vs_prev=None if prev is None else median / prev)
        )
        prev = median
        del store
    return EvalReport(
        kind="benchmark",
        config={"dimension": dimension, "repetitions": repetitions, "k": k, "seed": seed},
        bench_rows=rows,
    )
