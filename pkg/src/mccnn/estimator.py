"""scikit-learn estimator around the MC-CNN ensemble."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_labels, check_sequences
from .model import Ensemble, ModelConfig, ensemble_predict, load_model, save_model
from .training import TrainConfig, stratified_split_indices, train_ensemble


class MCCNNClassifier(BaseEstimator, ClassifierMixin):
    """Ensemble of grouped-softmax CNNs over embedded token sequences.

    ``X`` is a list of ``(T, d)`` float arrays (see ``SequenceEmbedder``);
    ``y`` holds class indices in ``[0, n_classes)``. When no dev set is passed
    to :meth:`fit`, a stratified ``dev_fraction`` split of the training data is
    held out for early stopping.
    """

    def __init__(self, n_classes=None, filter_sizes=(1, 2, 3, 4), groups_per_size=(10, 6, 4, 2),
                 group_size=7, filter_activation="sigmoid", hidden_size=10, hidden_activation="tanh",
                 ensemble_size=5, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8,
                 batch_size=32, max_epochs=30, patience=5, dev_fraction=0.1, random_state=0,
                 n_jobs=1):
        self.n_classes = n_classes
        self.filter_sizes = filter_sizes
        self.groups_per_size = groups_per_size
        self.group_size = group_size
        self.filter_activation = filter_activation
        self.hidden_size = hidden_size
        self.hidden_activation = hidden_activation
        self.ensemble_size = ensemble_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.dev_fraction = dev_fraction
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _configs(self, dim, n_classes):
        mcfg = ModelConfig(
            embedding_dim=dim, filter_sizes=tuple(self.filter_sizes),
            groups_per_size=tuple(self.groups_per_size), group_size=self.group_size,
            filter_activation=self.filter_activation, hidden_size=self.hidden_size,
            hidden_activation=self.hidden_activation, num_classes=n_classes,
            ensemble_size=self.ensemble_size, seed=self.random_state)
        tcfg = TrainConfig(
            learning_rate=self.learning_rate, beta1=self.beta1, beta2=self.beta2,
            epsilon=self.epsilon, batch_size=self.batch_size, max_epochs=self.max_epochs,
            patience=self.patience, dev_fraction=self.dev_fraction, seed=self.random_state)
        return mcfg, tcfg

    def fit(self, X, y, X_dev=None, y_dev=None):
        X = check_sequences(X)
        n_classes = self.n_classes
        y = check_labels(y, len(X), n_classes)
        if n_classes is None:
            n_classes = max(int(y.max()) + 1, 2)
        mcfg, tcfg = self._configs(X[0].shape[1], n_classes)
        if X_dev is None:
            train_idx, dev_idx = stratified_split_indices(y, tcfg.dev_fraction, tcfg.seed)
            X_tr, y_tr = [X[i] for i in train_idx], y[train_idx]
            X_dev, y_dev = [X[i] for i in dev_idx], y[dev_idx]
        else:
            X_tr, y_tr = X, y
            X_dev = check_sequences(X_dev, dim=mcfg.embedding_dim)
            y_dev = check_labels(y_dev, len(X_dev), n_classes)
        self.ensemble_, self.histories_ = train_ensemble(
            mcfg, tcfg, X_tr, y_tr, X_dev, y_dev, n_jobs=self.n_jobs)
        self.classes_ = np.arange(n_classes)
        return self

    @classmethod
    def from_ensemble(cls, ensemble: Ensemble) -> "MCCNNClassifier":
        cfg = ensemble.config
        est = cls(n_classes=cfg.num_classes, filter_sizes=cfg.filter_sizes,
                  groups_per_size=cfg.groups_per_size, group_size=cfg.group_size,
                  filter_activation=cfg.filter_activation, hidden_size=cfg.hidden_size,
                  hidden_activation=cfg.hidden_activation, ensemble_size=len(ensemble),
                  random_state=cfg.seed)
        est.ensemble_ = ensemble
        est.classes_ = np.arange(cfg.num_classes)
        return est

    def predict_proba(self, X):
        check_is_fitted(self, "ensemble_")
        X = check_sequences(X, dim=self.ensemble_.config.embedding_dim, allow_empty=True)
        out = np.empty((len(X), self.ensemble_.config.num_classes))
        for i, seq in enumerate(X):
            out[i] = ensemble_predict(self.ensemble_, seq)
        return out

    def predict(self, X):
        # np.argmax breaks ties toward the lowest class index
        return np.argmax(self.predict_proba(X), axis=1).astype(np.int64)

    def save(self, path):
        check_is_fitted(self, "ensemble_")
        save_model(self.ensemble_, path)

    @classmethod
    def load(cls, path) -> "MCCNNClassifier":
        return cls.from_ensemble(load_model(path))
