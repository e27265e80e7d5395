"""Confusion-matrix metrics and the comparison baselines (constant, MFC, TF-IDF + linear hinge)."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.feature_extraction.text import TfidfVectorizer
from sklearn.utils.validation import check_is_fitted


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    """Entry (g, p) counts examples with gold class g predicted as p."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("gold and predicted label arrays differ in length")
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"labels must lie in [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _ratio(num, den):
    # 0/0 is scored as 0
    return np.divide(num, den, out=np.zeros(len(num)), where=den > 0)


@dataclass
class MetricsReport:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float
    accuracy: float
    confusion: np.ndarray

    def format_text(self, class_names: Sequence[str] | None = None) -> str:
        names = list(class_names) if class_names is not None else [str(i) for i in range(len(self.f1))]
        width = max(8, *(len(n) for n in names))
        lines = [f"{'class':<{width}}  precision  recall  f1      support"]
        support = self.confusion.sum(axis=1)
        for i, name in enumerate(names):
            lines.append(f"{name:<{width}}  {self.precision[i]:.4f}     {self.recall[i]:.4f}  "
                         f"{self.f1[i]:.4f}  {support[i]}")
        lines.append("")
        lines.append(f"macro-F1  {self.macro_f1:.4f}")
        lines.append(f"accuracy  {self.accuracy:.4f}")
        lines.append("")
        lines.append(self.format_kv(names))
        return "\n".join(lines)

    def format_kv(self, class_names: Sequence[str] | None = None) -> str:
        names = list(class_names) if class_names is not None else [str(i) for i in range(len(self.f1))]
        kv = [f"macro_f1={self.macro_f1!r}", f"accuracy={self.accuracy!r}",
              f"total={int(self.confusion.sum())}"]
        for i, name in enumerate(names):
            kv.append(f"precision.{name}={self.precision[i]!r}")
            kv.append(f"recall.{name}={self.recall[i]!r}")
            kv.append(f"f1.{name}={self.f1[i]!r}")
        kv.append("confusion=" + ";".join(",".join(str(int(c)) for c in row) for row in self.confusion))
        return "\n".join(kv)


def metrics_from_confusion(cm) -> MetricsReport:
    """Per-class P/R/F1, macro-F1 over every class of the matrix, and accuracy."""
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] == 0:
        raise ValueError(f"confusion matrix must be square and nonempty, got shape {cm.shape}")
    total = cm.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty (no evaluated examples)")
    tp = np.diag(cm).astype(np.float64)
    precision = _ratio(tp, cm.sum(axis=0).astype(np.float64))
    recall = _ratio(tp, cm.sum(axis=1).astype(np.float64))
    f1 = _ratio(2 * precision * recall, precision + recall)
    return MetricsReport(precision, recall, f1, float(f1.mean()), float(tp.sum() / total), cm)


class ConstantClassifier(BaseEstimator, ClassifierMixin):
    """Predicts one class for every input.

    ``strategy="most_frequent"`` learns the class from the training labels
    (ties to the lowest index); ``strategy="constant"`` uses ``constant``.
    """

    def __init__(self, strategy="most_frequent", constant=None, n_classes=None):
        self.strategy = strategy
        self.constant = constant
        self.n_classes = n_classes

    def fit(self, X=None, y=None):
        if self.strategy == "constant":
            if self.constant is None:
                raise ValueError("strategy='constant' requires a constant class index")
            self.class_ = int(self.constant)
        elif self.strategy == "most_frequent":
            counts = np.bincount(np.asarray(y, dtype=np.int64), minlength=self.n_classes or 0)
            if counts.sum() == 0:
                raise ValueError("most_frequent needs a nonempty label distribution")
            self.class_ = int(np.argmax(counts))
        else:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        n = self.n_classes if self.n_classes is not None else self.class_ + 1
        self.classes_ = np.arange(max(n, self.class_ + 1))
        return self

    def predict(self, X):
        check_is_fitted(self, "class_")
        return np.full(len(X), self.class_, dtype=np.int64)


def constant_baseline(class_index: int, n_classes: int | None = None) -> ConstantClassifier:
    return ConstantClassifier("constant", class_index, n_classes).fit()


def mfc_baseline(train_distribution) -> ConstantClassifier:
    """Most-frequent-class predictor from per-class counts (list, array or ordered mapping)."""
    counts = list(train_distribution.values()) if hasattr(train_distribution, "values") else list(train_distribution)
    if not counts or sum(counts) <= 0:
        raise ValueError("MFC baseline needs a nonempty training distribution")
    return ConstantClassifier("constant", int(np.argmax(counts)), len(counts)).fit()


def _tokens_of(seq):
    return list(getattr(seq, "tokens", seq))


class TfidfFeatures(BaseEstimator, TransformerMixin):
    """Token sequences -> L2-normalised tf-idf rows, idf = ln((1+N)/(1+df)) + 1."""

    def fit(self, X, y=None):
        if len(X) == 0:
            raise ValueError("cannot fit tf-idf on an empty corpus")
        self.vectorizer_ = TfidfVectorizer(analyzer=_tokens_of, smooth_idf=True, norm="l2",
                                           sublinear_tf=False, dtype=np.float64)
        self.vectorizer_.fit(X)
        self.vocabulary_ = self.vectorizer_.vocabulary_
        return self

    def transform(self, X):
        check_is_fitted(self, "vectorizer_")
        return self.vectorizer_.transform(X)


def tfidf_vectorize(corpus):
    """Fit tf-idf on ``corpus``; returns ``(vocabulary, matrix, fitted transformer)``."""
    feats = TfidfFeatures().fit(corpus)
    return feats.vocabulary_, feats.transform(corpus), feats


class LinearSVMBaseline(BaseEstimator, ClassifierMixin):
    """One-vs-rest linear scorers trained by seeded SGD on L2-regularised hinge loss.

    Weights are kept as ``scale * v`` so the per-step L2 shrinkage costs O(1)
    on sparse rows.
    """

    def __init__(self, epochs=10, learning_rate=0.1, alpha=1e-4, random_state=0):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.alpha = alpha
        self.random_state = random_state

    def fit(self, X, y):
        X = sp.csr_matrix(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("linear baseline needs at least two classes in the training labels")
        n_cls = int(self.classes_.max()) + 1
        targets = np.where(y[:, None] == np.arange(n_cls)[None, :], 1.0, -1.0)  # (n, C)
        v = np.zeros((n_cls, X.shape[1]))
        b = np.zeros(n_cls)
        scale = 1.0
        lr, lam = self.learning_rate, self.alpha
        rng = np.random.default_rng(self.random_state)
        for _ in range(self.epochs):
            for i in rng.permutation(X.shape[0]):
                lo, hi = X.indptr[i], X.indptr[i + 1]
                idx, val = X.indices[lo:hi], X.data[lo:hi]
                score = scale * (v[:, idx] @ val) + b
                viol = targets[i] * score < 1.0
                scale *= 1.0 - lr * lam
                if viol.any():
                    t = targets[i, viol]
                    v[np.ix_(viol, idx)] += (lr / scale) * t[:, None] * val[None, :]
                    b[viol] += lr * t
                if scale < 1e-9:
                    v *= scale
                    scale = 1.0
        self.coef_ = v * scale
        self.intercept_ = b
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = sp.csr_matrix(X, dtype=np.float64)
        return np.asarray(X @ self.coef_.T) + self.intercept_

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1).astype(np.int64)


def train_linear_baseline(vectors, labels, epochs=10, lr=0.1, seed=0) -> LinearSVMBaseline:
    return LinearSVMBaseline(epochs=epochs, learning_rate=lr, random_state=seed).fit(vectors, labels)


def evaluate(predictor, dataset, schema) -> MetricsReport:
    """Score ``predictor.predict(dataset)`` against the gold labels of ``dataset``."""
    gold = []
    for ex in dataset:
        if ex.label is None:
            raise ValueError(f"example {ex.id!r} is unlabeled")
        gold.append(ex.label)
    preds = predictor.predict(dataset)
    return metrics_from_confusion(confusion_matrix(gold, preds, len(schema)))
