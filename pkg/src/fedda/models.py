"""scikit-learn style wrappers that train a linear model with federated dual averaging."""

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from fedda.config import ExperimentConfig
from fedda.federation.runner import run_training
from fedda.problems import FederatedProblem, LeastSquares, LogisticRegression, PartitionSpec, partition_dataset


class _FedDABase(BaseEstimator):
    def __init__(self, n_clients=4, local_steps=5, rounds=100, lam=1.0, eta=0.01, schedule="constant",
                 estimator="mvr", alpha=None, adaptive="elementwise", beta=0.999, epsilon=0.01,
                 constraint="none", radius=1.0, batch_size=16, het_fraction=None, fit_intercept=True,
                 random_state=0):
        self.n_clients = n_clients
        self.local_steps = local_steps
        self.rounds = rounds
        self.lam = lam
        self.eta = eta
        self.schedule = schedule
        self.estimator = estimator
        self.alpha = alpha
        self.adaptive = adaptive
        self.beta = beta
        self.epsilon = epsilon
        self.constraint = constraint
        self.radius = radius
        self.batch_size = batch_size
        self.het_fraction = het_fraction
        self.fit_intercept = fit_intercept
        self.random_state = random_state

    def _design(self, X):
        return np.hstack([X, np.ones((X.shape[0], 1))]) if self.fit_intercept else X

    def _split(self, y, stratify):
        rng = np.random.default_rng(self.random_state)
        if stratify and self.het_fraction is not None:
            spec = PartitionSpec(self.n_clients, self.het_fraction, self.random_state)
            return partition_dataset(y, spec)
        return [np.sort(p) for p in np.array_split(rng.permutation(len(y)), self.n_clients)]

    def _config(self):
        return ExperimentConfig().with_overrides(
            run={"K": self.n_clients, "I": self.local_steps, "E": self.rounds, "lam": float(self.lam),
                 "seed": self.random_state, "batch_size": self.batch_size, "init_batch": self.batch_size,
                 "trace_clients": False},
            schedule={"mode": self.schedule, "eta": float(self.eta)},
            estimator={"variant": self.estimator,
                       "alpha_mode": "schedule" if self.alpha is None else "constant",
                       "alpha": 0.9 if self.alpha is None else float(self.alpha)},
            adaptive={"variant": self.adaptive, "beta": float(self.beta), "epsilon": float(self.epsilon)},
            constraint={"kind": self.constraint, "radius": float(self.radius)},
        )

    def _fit(self, X, target, labels, objective):
        if self.n_clients > X.shape[0]:
            raise ValueError("need at least one sample per client")
        design = self._design(X)
        parts = self._split(labels, stratify=objective is LogisticRegression)
        if any(p.size == 0 for p in parts):
            raise ValueError("a client received no samples")
        problem = FederatedProblem([objective(design[p], target[p]) for p in parts])
        result = run_training(self._config(), problem)
        w = result.x
        self.coef_ = w[:-1] if self.fit_intercept else w
        self.intercept_ = float(w[-1]) if self.fit_intercept else 0.0
        self.metrics_ = result.table
        self.n_features_in_ = X.shape[1]
        return self

    def _decision(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X @ self.coef_ + self.intercept_


class FedDARegressor(RegressorMixin, _FedDABase):
    """Least-squares linear regression split across ``n_clients`` simulated clients."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        return self._fit(X, y, y, LeastSquares)

    def predict(self, X):
        return self._decision(X)


class FedDAClassifier(ClassifierMixin, _FedDABase):
    """Binary logistic regression; ``het_fraction`` skews the label mix per client."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ValueError("FedDAClassifier supports exactly two classes")
        target = (y == self.classes_[1]).astype(np.float64)
        return self._fit(X, target, y, LogisticRegression)

    def decision_function(self, X):
        return self._decision(X)

    def predict_proba(self, X):
        p = expit(self._decision(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return self.classes_[(self._decision(X) > 0).astype(int)]
