"""scikit-learn style wrappers around training and the outlier analysis."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .analysis import derive_seed, run_analysis
from .data import LabeledDataset
from .errors import ConfigError
from .logistic import softmax
from .model import MlpModel, forward, init_mlp
from .train import TrainConfig, sgd_train


class SoftmaxMLPClassifier(ClassifierMixin, BaseEstimator):
    """MLP softmax classifier trained by momentum SGD with a three-step learning rate.

    Fitted attributes: ``classes_``, ``model_``, ``trace_``, ``n_features_in_``.
    """

    def __init__(self, hidden_layer_sizes=(64, 64), activation="relu", initial_lr=0.1,
                 momentum=0.9, weight_decay=5e-3, batch_size=128, epochs=300,
                 snapshot_epochs=None, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.initial_lr = initial_lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.epochs = epochs
        self.snapshot_epochs = snapshot_epochs
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        check_classification_targets(y)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ConfigError("need at least two classes")
        seed = 0 if self.random_state is None else int(self.random_state)
        sizes = (X.shape[1], *self.hidden_layer_sizes, len(self.classes_))
        model = init_mlp(sizes, self.activation, seed=derive_seed(seed, "init"))
        cfg = TrainConfig(
            initial_lr=self.initial_lr, momentum=self.momentum, weight_decay=self.weight_decay,
            batch_size=self.batch_size, epochs=self.epochs,
            snapshot_epochs=self.snapshot_epochs, seed=derive_seed(seed, "train"))
        dataset = LabeledDataset(X, y_enc, len(self.classes_))
        self.model_, self.trace_ = sgd_train(model, dataset, cfg)
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_model(cls, model, classes=None):
        """Wrap an already trained :class:`MlpModel` as a fitted estimator."""
        est = cls(hidden_layer_sizes=tuple(model.layer_sizes[1:-1]), activation=model.activation)
        est.model_ = model
        est.trace_ = None
        est.classes_ = np.arange(model.n_classes) if classes is None else np.asarray(classes)
        est.n_features_in_ = model.n_features
        return est

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return forward(self.model_, X)

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]


class HessianOutlierAnalysis(BaseEstimator):
    """Fit-only analysis of a trained classifier on labeled data.

    ``model`` is a fitted :class:`SoftmaxMLPClassifier` or a bare
    :class:`MlpModel`; for the latter labels must already be ``0..C-1``.

    Fitted attributes: ``result_`` plus the shortcuts ``report_``,
    ``geometry_``, ``density_``, ``top_eigenvalues_``, ``gram_g1_`` and
    ``gram_g12_``.
    """

    def __init__(self, model=None, topk=None, slq_probes=10, slq_steps=100, tol=1e-8,
                 random_state=0):
        self.model = model
        self.topk = topk
        self.slq_probes = slq_probes
        self.slq_steps = slq_steps
        self.tol = tol
        self.random_state = random_state

    def _resolve(self, y):
        if isinstance(self.model, MlpModel):
            return self.model, np.asarray(y)
        if isinstance(self.model, SoftmaxMLPClassifier):
            check_is_fitted(self.model, "model_")
            classes = self.model.classes_
            pos = np.searchsorted(classes, y)
            pos = np.clip(pos, 0, len(classes) - 1)
            if not np.all(classes[pos] == y):
                raise ValueError("y contains labels unseen by the classifier")
            return self.model.model_, pos
        raise ConfigError("model must be an MlpModel or a fitted SoftmaxMLPClassifier")

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        model, y_enc = self._resolve(y)
        dataset = LabeledDataset(X, y_enc, model.n_classes)
        seed = 0 if self.random_state is None else int(self.random_state)
        self.result_ = run_analysis(model, dataset, topk=self.topk, slq_probes=self.slq_probes,
                                    slq_steps=self.slq_steps, tol=self.tol, seed=seed)
        self.report_ = self.result_.report
        self.geometry_ = self.result_.geometry
        self.density_ = self.result_.density
        self.top_eigenvalues_ = self.result_.top.eigenvalues
        self.gram_g1_ = self.result_.gram_g1
        self.gram_g12_ = self.result_.gram_g12
        self.n_features_in_ = X.shape[1]
        return self
