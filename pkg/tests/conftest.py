import pytest

from knnstore import KnowledgeStore, QueryVector, SearchFilter


@pytest.fixture
def fixture_store():
    """The 4-record, 2-D fixture used throughout: two A supports, two B."""
    store = KnowledgeStore(2)
    ids = {
        "s1": store.ingest([1.0, 0.0], {"A"}, "img-s1"),
        "s2": store.ingest([0.8, 0.6], {"A"}, "img-s2"),
        "s3": store.ingest([0.0, 1.0], {"B"}, "img-s3"),
        "s4": store.ingest([-0.6, 0.8], {"B"}, "img-s4"),
    }
    return store, ids


@pytest.fixture
def fixture_query():
    return QueryVector.from_raw([0.6, 0.8])


def random_store(rng, n, d, n_labels=5, multi_label=True, n_tasks=3, delete_frac=0.1, dup_frac=0.1):
    """Randomized store with duplicated vectors (distance ties), multi-label
    records, task ids, and tombstones."""
    store = KnowledgeStore(d)
    vectors = rng.standard_normal((n, d))
    for i in range(1, n):
        if rng.random() < dup_frac:
            vectors[i] = vectors[rng.integers(0, i)]
    labels = []
    for _ in range(n):
        count = 1 + (rng.integers(1, 3) if (multi_label and rng.random() < 0.3) else 0)
        picks = rng.choice(n_labels, size=min(count, n_labels), replace=False)
        labels.append({f"L{j}" for j in picks})
    tasks = [int(t) if rng.random() < 0.8 else None for t in rng.integers(0, n_tasks, size=n)]
    ids = store.ingest_many(vectors, labels, [f"src/{i}" for i in range(n)], tasks)
    if delete_frac > 0 and n > 1:
        doomed = rng.choice(n, size=int(n * delete_frac), replace=False)
        store.delete([ids[i] for i in doomed])
    return store, ids


def random_filter(rng, store, ids):
    """None or a random conjunctive filter over the store's vocabulary."""
    kind = rng.integers(0, 5)
    if kind == 0:
        return None
    label_ids = task_ids = exclude_ids = None
    if kind in (1, 4):
        vocab_size = len(store.vocab)
        picks = rng.choice(vocab_size, size=rng.integers(1, vocab_size + 1), replace=False)
        label_ids = frozenset(int(p) for p in picks)
    if kind in (2, 4):
        task_ids = frozenset(int(t) for t in rng.integers(0, 3, size=rng.integers(1, 3)))
    if kind == 3 and ids:
        picks = rng.choice(len(ids), size=min(len(ids), 5), replace=False)
        exclude_ids = frozenset(ids[i] for i in picks)
    return SearchFilter(label_ids=label_ids, task_ids=task_ids, exclude_ids=exclude_ids)


def random_unit_query(rng, d):
    return QueryVector.from_raw(rng.standard_normal(d))
