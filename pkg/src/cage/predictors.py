"""Predictive models and losses being explained.

Both models follow the scikit-learn estimator protocol (``fit``/``predict``,
``get_params``) so they drop into pipelines and model selection utilities.
"""

import warnings
from collections.abc import Mapping

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

LOSSES = ("mse", "bce")
BCE_CLAMP = 1e-12
FALLBACK_RIDGE = 1e-8

# the larger architecture used for the tabular classification pipeline
DEEP_PRESET = (64, 128, 128, 64, 32)


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch


def _feature_names(names, n_features):
    if names is None:
        return tuple(f"x{i}" for i in range(n_features))
    names = tuple(names)
    if len(names) != n_features:
        raise ValueError(f"expected {n_features} feature names, got {len(names)}")
    return names


def as_feature_matrix(rows, feature_names):
    """Coerce ``rows`` to a float matrix whose columns follow ``feature_names``.

    Named tables (mappings of columns or data frames) are reordered by name and
    any missing or extra column is reported; plain arrays are checked by width.
    """
    names = list(feature_names)
    if isinstance(rows, Mapping) or hasattr(rows, "columns"):
        cols = list(rows.keys()) if isinstance(rows, Mapping) else list(rows.columns)
        missing = [c for c in names if c not in cols]
        if missing:
            raise ValueError(f"missing column {missing[0]!r}")
        extra = [c for c in cols if c not in names]
        if extra:
            raise ValueError(f"unexpected column {extra[0]!r}")
        if not names:
            return np.empty((0, 0))
        return np.column_stack([np.asarray(rows[c], dtype=float) for c in names])
    X = np.asarray(rows, dtype=float)
    if X.size == 0:
        return X.reshape(0, len(names))
    X = check_array(X, ensure_2d=True)
    if X.shape[1] != len(names):
        raise ValueError(f"expected {len(names)} columns {names}, got {X.shape[1]}")
    return X


class LinearModel(RegressorMixin, BaseEstimator):
    """Ordinary least squares via the normal equations."""

    kind = "linear"
    output = "identity"

    def __init__(self, feature_names=None):
        self.feature_names = feature_names

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[0] < X.shape[1] + 1:
            raise ValueError(f"need at least {X.shape[1] + 1} rows, got {X.shape[0]}")
        self.feature_names_ = _feature_names(self.feature_names, X.shape[1])
        Z = np.column_stack([np.ones(X.shape[0]), X])
        gram = Z.T @ Z
        rhs = Z.T @ y
        self.ridge_used_ = 0.0
        if np.linalg.matrix_rank(gram) < gram.shape[0]:
            warnings.warn("singular Gram matrix; applying ridge 1e-8", RuntimeWarning)
            self.ridge_used_ = FALLBACK_RIDGE
            gram = gram + FALLBACK_RIDGE * np.eye(gram.shape[0])
        beta = np.linalg.solve(gram, rhs)
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = as_feature_matrix(X, self.feature_names_)
        return X @ self.coef_ + self.intercept_

    @classmethod
    def from_coefficients(cls, coef, intercept=0.0, feature_names=None):
        model = cls(feature_names=feature_names)
        model.coef_ = np.asarray(coef, dtype=float)
        model.intercept_ = float(intercept)
        model.n_features_in_ = model.coef_.size
        model.feature_names_ = _feature_names(feature_names, model.coef_.size)
        model.ridge_used_ = 0.0
        return model

    def _params_for_io(self):
        return [self.coef_[:, None], np.array([self.intercept_])]


def _relu(z):
    return np.maximum(z, 0.0)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class MLPModel(BaseEstimator):
    """Feed-forward ReLU network trained with Adam on minibatches.

    ``output="logistic"`` turns the network into a probabilistic binary classifier
    trained with cross-entropy; otherwise it regresses with squared error.
    """

    kind = "mlp"

    def __init__(self, hidden_layers=(100,), epochs=200, learning_rate=1e-3, batch_size=32,
                 output="identity", random_state=0, feature_names=None):
        self.hidden_layers = hidden_layers
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.output = output
        self.random_state = random_state
        self.feature_names = feature_names

    @property
    def loss_kind(self):
        return "bce" if self.output == "logistic" else "mse"

    def _init_params(self, n_in, rng):
        widths = [n_in, *self.hidden_layers, 1]
        params = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            params.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            params.append(rng.uniform(-bound, bound, fan_out))
        return params

    def _forward(self, params, X):
        acts = [X]
        a = X
        n_layers = len(params) // 2
        for layer in range(n_layers):
            z = a @ params[2 * layer] + params[2 * layer + 1]
            a = _relu(z) if layer < n_layers - 1 else z
            acts.append(a)
        return acts

    def _loss_and_grads(self, params, X, y):
        """Training loss and its gradient with respect to every parameter array."""
        acts = self._forward(params, X)
        z = acts[-1][:, 0]
        B = X.shape[0]
        if self.output == "logistic":
            # cross-entropy on logits: softplus(z) - y z
            loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
            delta = (_sigmoid(z) - y) / B
        else:
            loss = float(np.mean((z - y) ** 2))
            delta = 2.0 * (z - y) / B
        delta = delta[:, None]
        grads = [None] * len(params)
        n_layers = len(params) // 2
        for layer in reversed(range(n_layers)):
            grads[2 * layer] = acts[layer].T @ delta
            grads[2 * layer + 1] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ params[2 * layer].T) * (acts[layer] > 0)
        return loss, grads

    def fit(self, X, y):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if len(self.hidden_layers) == 0:
            raise ValueError("hidden_layers must be non-empty")
        if self.output not in ("identity", "logistic"):
            raise ValueError(f"unknown output transform {self.output!r}")
        X, y = check_X_y(X, y, y_numeric=True)
        y = y.astype(float)
        if self.output == "logistic" and not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("logistic output requires targets in {0, 1}")
        self.feature_names_ = _feature_names(self.feature_names, X.shape[1])
        self.n_features_in_ = X.shape[1]
        rng = np.random.default_rng(self.random_state)
        params = self._init_params(X.shape[1], rng)
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        step = 0
        n = X.shape[0]
        bs = min(self.batch_size, n)
        self.loss_curve_ = []
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, bs):
                batch = order[start:start + bs]
                loss, grads = self._loss_and_grads(params, X[batch], y[batch])
                total += loss * batch.size
                step += 1
                lr_t = self.learning_rate * np.sqrt(1 - beta2 ** step) / (1 - beta1 ** step)
                for p, g, mi, vi in zip(params, grads, m, v):
                    mi *= beta1
                    mi += (1 - beta1) * g
                    vi *= beta2
                    vi += (1 - beta2) * g * g
                    p -= lr_t * mi / (np.sqrt(vi) + eps)
            epoch_loss = total / n
            if not np.isfinite(epoch_loss):
                raise TrainingDivergedError(epoch, epoch_loss)
            self.loss_curve_.append(epoch_loss)
        self.params_ = params
        self.loss_ = self._loss_and_grads(params, X, y)[0]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        X = as_feature_matrix(X, self.feature_names_)
        if X.shape[0] == 0:
            return np.empty(0)
        return self._forward(self.params_, X)[-1][:, 0]

    def predict(self, X):
        """Regression output, or the positive-class probability for logistic output."""
        z = self.decision_function(X)
        return _sigmoid(z) if self.output == "logistic" else z

    @classmethod
    def from_params(cls, params, output="identity", feature_names=None):
        widths = [params[0].shape[0]] + [w.shape[1] for w in params[0::2]]
        model = cls(hidden_layers=tuple(widths[1:-1]), output=output, feature_names=feature_names)
        model.params_ = [np.asarray(p, dtype=float) for p in params]
        model.n_features_in_ = widths[0]
        model.feature_names_ = _feature_names(feature_names, widths[0])
        return model

    def _params_for_io(self):
        return self.params_


def predict_batch(model, rows):
    """Model predictions for a table; an empty table yields an empty vector."""
    X = as_feature_matrix(rows, model.feature_names_)
    if X.shape[0] == 0:
        return np.empty(0)
    return np.asarray(model.predict(X), dtype=float)


def compute_loss(kind, predictions, targets, reduce=True):
    """Mean squared error or mean binary cross-entropy.

    With ``reduce=False`` the per-element losses are returned instead of the mean.
    """
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(targets, dtype=float)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} predictions vs {y.shape} targets")
    if p.size == 0:
        raise ValueError("loss of an empty vector is undefined")
    if kind == "mse":
        out = (p - y) ** 2
    elif kind == "bce":
        q = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
        out = -(y * np.log(q) + (1.0 - y) * np.log1p(-q))
    else:
        raise ValueError(f"unknown loss {kind!r}; choose from {LOSSES}")
    return out if not reduce else float(np.mean(out))


def mean_prediction(model, data):
    preds = predict_batch(model, data)
    if preds.size == 0:
        raise ValueError("mean prediction of empty data is undefined")
    return float(np.mean(preds))


class ConstantModel(BaseEstimator):
    """Predicts ``value`` everywhere; a null model for sanity checks."""

    kind = "constant"
    output = "identity"

    def __init__(self, value=0.0, feature_names=None):
        self.value = value
        self.feature_names = feature_names

    def fit(self, X, y=None):
        X = check_array(X)
        self.feature_names_ = _feature_names(self.feature_names, X.shape[1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = as_feature_matrix(X, self.feature_names_)
        return np.full(X.shape[0], float(self.value))


def save_model(model, path):
    """Write ``model`` in the flat text format (full-precision decimals)."""
    params = model._params_for_io()
    lines = [
        f"kind {model.kind}",
        f"output {model.output}",
        "features " + " ".join(model.feature_names_),
    ]
    if model.kind == "mlp":
        widths = [params[0].shape[0]] + [w.shape[1] for w in params[0::2]]
        lines.append("layers " + " ".join(str(w) for w in widths))
    for i, p in enumerate(params):
        p = np.atleast_1d(p)
        shape = "x".join(str(s) for s in p.shape)
        lines.append(f"param {i} {shape} " + " ".join(repr(float(x)) for x in p.ravel(order="C")))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path):
    header, params = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            key, _, rest = line.rstrip("\n").partition(" ")
            if key == "param":
                _, shape, *values = rest.split(" ")
                dims = tuple(int(s) for s in shape.split("x"))
                params.append(np.array([float(x) for x in values]).reshape(dims))
            elif key:
                header[key] = rest
    names = tuple(header.get("features", "").split())
    if header["kind"] == "linear":
        return LinearModel.from_coefficients(params[0][:, 0], params[1][0], names)
    if header["kind"] == "mlp":
        return MLPModel.from_params(params, output=header.get("output", "identity"),
                                    feature_names=names)
    raise ValueError(f"unknown model kind {header['kind']!r}")
