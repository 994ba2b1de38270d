"""Scikit-learn estimator facade over the knowledge store.

``KnnStoreClassifier`` makes the retrieval classifier compose with the usual
ecosystem (pipelines, cross_val_score, clone). ``fit`` ingests the training
set into a fresh store; ``partial_fit`` ingests more without touching what is
already stored, which is the whole point: adding knowledge never retrains and
never forgets. The fitted ``store_`` and ``audit_log_`` stay available for
curation (delete / relabel) between predictions.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_X_y

from .classify import AuditLog, classify
from .search import QueryVector, SearchFilter, search_topk
from .store import KnowledgeStore


class KnnStoreClassifier(ClassifierMixin, BaseEstimator):
    """Exact cosine-distance k-NN with majority vote and audit logging.

    Parameters
    ----------
    k : int, default=10
        Number of neighbors (the cross-validated sweet spot for the system's
        reference datasets is around 10).
    weighted : bool, default=False
        Use inverse-distance vote weights instead of plain counts.
    """

    def __init__(self, k: int = 10, weighted: bool = False):
        self.k = k
        self.weighted = weighted

    def _check_fitted(self):
        if not hasattr(self, "store_"):
            raise NotFittedError("this KnnStoreClassifier instance is not fitted yet")

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.store_ = KnowledgeStore(X.shape[1])
        self.audit_log_ = AuditLog()
        self.n_features_in_ = X.shape[1]
        self._ingest(X, y)
        return self

    def partial_fit(self, X, y, classes=None):
        """Ingest additional samples; existing knowledge is untouched."""
        if not hasattr(self, "store_"):
            return self.fit(X, y)
        X, y = check_X_y(X, y, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but this estimator was fitted with {self.n_features_in_}"
            )
        self._ingest(X, y)
        return self

    def _ingest(self, X, y):
        names = [str(label) for label in y]
        self._value_of = getattr(self, "_value_of", {})
        for label, name in zip(y, names):
            self._value_of.setdefault(name, label)
        offset = self.store_.total_count
        self.store_.ingest_many(
            X, [{n} for n in names], [f"fit[{offset + i}]" for i in range(len(names))]
        )
        self.classes_ = np.array(sorted(self._value_of.values(), key=str))

    def predict(self, X):
        self._check_fitted()
        X = check_array(X, dtype=np.float64)
        out = []
        for i, row in enumerate(X):
            result = classify(
                self.store_,
                QueryVector.from_raw(row),
                self.k,
                log=self.audit_log_,
                query_source=f"predict[{i}]",
                weighted=self.weighted,
            )
            name = self.store_.vocab.name_of(result.predicted_label_id)
            out.append(self._value_of[name])
        return np.asarray(out)

    def predict_proba(self, X):
        """Vote fractions per class, aligned with ``classes_``."""
        self._check_fitted()
        X = check_array(X, dtype=np.float64)
        class_index = {str(c): j for j, c in enumerate(self.classes_)}
        proba = np.zeros((X.shape[0], len(self.classes_)))
        for i, row in enumerate(X):
            result = classify(
                self.store_,
                QueryVector.from_raw(row),
                self.k,
                log=self.audit_log_,
                query_source=f"predict_proba[{i}]",
                weighted=self.weighted,
            )
            total = sum(result.tally.counts.values())
            for label_id, votes in result.tally.counts.items():
                name = self.store_.vocab.name_of(label_id)
                proba[i, class_index[name]] = votes / total
        return proba

    def kneighbors(self, X, n_neighbors: int | None = None):
        """Distances and record ids of the nearest stored samples."""
        self._check_fitted()
        X = check_array(X, dtype=np.float64)
        k = n_neighbors or self.k
        distances, ids = [], []
        for row in X:
            hits = search_topk(self.store_, QueryVector.from_raw(row), k)
            distances.append([nb.distance for nb in hits])
            ids.append([nb.record_id for nb in hits])
        return np.asarray(distances), np.asarray(ids)

    def filtered_predict(self, X, label_names):
        """Predict restricted to candidate labels (task-incremental mode)."""
        self._check_fitted()
        X = check_array(X, dtype=np.float64)
        filt = SearchFilter.for_label_names(self.store_, label_names)
        out = []
        for i, row in enumerate(X):
            result = classify(
                self.store_,
                QueryVector.from_raw(row),
                self.k,
                filt,
                log=self.audit_log_,
                query_source=f"filtered_predict[{i}]",
                weighted=self.weighted,
            )
            if result.abstained:
                out.append(None)
            else:
                out.append(self._value_of[self.store_.vocab.name_of(result.predicted_label_id)])
        return np.asarray(out)
