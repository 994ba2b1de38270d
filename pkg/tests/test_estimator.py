import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from knnstore import KnnStoreClassifier


def blobs(rng, n_per_class=30, d=8, classes=("a", "b", "c")):
    X, y = [], []
    for i, name in enumerate(classes):
        center = np.zeros(d)
        center[i] = 3.0
        X.append(center + rng.standard_normal((n_per_class, d)) * 0.3)
        y += [name] * n_per_class
    return np.vstack(X), np.array(y)


class TestEstimator:
    def test_fit_predict(self):
        rng = np.random.default_rng(0)
        X, y = blobs(rng)
        clf = KnnStoreClassifier(k=5).fit(X, y)
        assert (clf.predict(X) == y).mean() > 0.95
        assert list(clf.classes_) == ["a", "b", "c"]
        assert clf.n_features_in_ == 8

    def test_integer_labels_round_trip(self):
        rng = np.random.default_rng(1)
        X, y = blobs(rng, classes=(0, 1, 2))
        clf = KnnStoreClassifier(k=3).fit(X, y)
        preds = clf.predict(X[:5])
        assert preds.dtype == y.dtype

    def test_predict_proba_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        X, y = blobs(rng)
        clf = KnnStoreClassifier(k=5).fit(X, y)
        proba = clf.predict_proba(X[:10])
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)
        assert proba.shape == (10, 3)

    def test_partial_fit_adds_classes_without_forgetting(self):
        rng = np.random.default_rng(3)
        X, y = blobs(rng, classes=("a", "b"))
        clf = KnnStoreClassifier(k=3).fit(X, y)
        X2, y2 = blobs(rng, classes=("c",))
        X2 = X2 + 0  # same synthetic family, new class center at dim 0
        X2[:, 0] -= 3.0
        X2[:, 3] += 3.0
        clf.partial_fit(X2, y2)
        assert list(clf.classes_) == ["a", "b", "c"]
        assert (clf.predict(X) == y).mean() > 0.95
        assert (clf.predict(X2) == y2).mean() > 0.95

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            KnnStoreClassifier().predict([[1.0, 2.0]])

    def test_get_params_and_clone(self):
        clf = KnnStoreClassifier(k=7, weighted=True)
        assert clf.get_params() == {"k": 7, "weighted": True}
        twin = clone(clf)
        assert twin.get_params() == clf.get_params()

    def test_composes_with_pipeline_and_cv(self):
        rng = np.random.default_rng(4)
        X, y = blobs(rng, n_per_class=20)
        pipe = make_pipeline(StandardScaler(), KnnStoreClassifier(k=3))
        scores = cross_val_score(pipe, X, y, cv=3)
        assert scores.mean() > 0.8

    def test_kneighbors(self):
        rng = np.random.default_rng(5)
        X, y = blobs(rng)
        clf = KnnStoreClassifier(k=4).fit(X, y)
        dist, ids = clf.kneighbors(X[:2])
        assert dist.shape == (2, 4)
        assert (np.diff(dist, axis=1) >= 0).all()

    def test_curation_through_store(self):
        # the fitted store stays open for delete/relabel between predictions
        rng = np.random.default_rng(6)
        X, y = blobs(rng, classes=("keep", "drop"))
        clf = KnnStoreClassifier(k=3).fit(X, y)
        clf.store_.delete_by_label("drop")
        preds = clf.predict(X)
        assert set(preds) == {"keep"}

    def test_audit_log_populated(self):
        rng = np.random.default_rng(7)
        X, y = blobs(rng)
        clf = KnnStoreClassifier(k=3).fit(X, y)
        clf.predict(X[:4])
        assert len(clf.audit_log_) == 4
