"""Random-feature classifier trained in closed form.

A single hidden layer of fixed random weights maps inputs through a
nonlinearity; only the linear output layer is learned, by minimizing

    ||B||_F^2 / 2  +  C/2 * ||T - H B||_F^2

over the output weights B, where H holds the hidden responses and T the
one-hot targets.  The minimizer satisfies the symmetric positive definite
system (HᵀH + I/C) B = HᵀT, solved here by Cholesky factorization.  No
iterative optimization is involved, which is what makes training fast
enough for interactive use.
"""

from __future__ import annotations

import io

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from . import fileio, rng
from .linalg import gram, spd_solve

MODEL_MAGIC = b"ELM1"
MODEL_VERSION = 1

# Floor applied to per-feature standard deviations so constant features
# do not produce divisions by zero.
STD_FLOOR = 1e-8


def sigmoid(z):
    """Logistic function 1 / (1 + e^-z), overflow-safe."""
    return expit(z)


def relu(z):
    return np.maximum(z, 0.0)


ACTIVATIONS = {"sigmoid": sigmoid, "relu": relu}

# Tags used in the binary model format.
_ACTIVATION_TAGS = {"sigmoid": 0, "relu": 1}
_TAG_ACTIVATIONS = {tag: name for name, tag in _ACTIVATION_TAGS.items()}


def init_hidden(n_features: int, n_hidden: int, seed: int):
    """Draw the fixed hidden layer: weights (n_hidden, n_features) and biases.

    Entries are independent uniform on [-1, 1] from counter-based streams, so
    identical (n_features, n_hidden, seed) always produces bit-identical
    arrays.
    """
    if n_features < 1:
        raise ValueError(f"n_features must be >= 1, got {n_features}")
    if n_hidden < 1:
        raise ValueError(f"n_hidden must be >= 1, got {n_hidden}")
    weights = rng.stream(seed, "hidden-weights").uniform(
        -1.0, 1.0, size=(n_hidden, n_features)
    )
    biases = rng.stream(seed, "hidden-biases").uniform(-1.0, 1.0, size=n_hidden)
    return weights, biases


def one_hot(labels, n_classes: int) -> np.ndarray:
    """Encode integer class indices as rows with a single 1.0."""
    idx = np.asarray(labels)
    if idx.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {idx.shape}")
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValueError(f"labels must be integers, got dtype {idx.dtype}")
    if idx.size and (idx.min() < 0 or idx.max() >= n_classes):
        raise ValueError(
            f"class index out of range: values in [{idx.min()}, {idx.max()}] "
            f"for {n_classes} classes"
        )
    out = np.zeros((idx.shape[0], n_classes))
    out[np.arange(idx.shape[0]), idx] = 1.0
    return out


def hidden_map(X, weights, biases, activation: str = "sigmoid", mean=None, std=None):
    """Hidden-layer response matrix, one row per sample.

    Row j is g(W x̂_j + b) with x̂_j = (x_j - mean) / std; pass mean=None to
    skip standardization.
    """
    X = np.asarray(X, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    if X.shape[1] != weights.shape[1]:
        raise ValueError(
            f"dimension mismatch: X has {X.shape[1]} features, "
            f"hidden weights expect {weights.shape[1]}"
        )
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    if mean is not None:
        X = (X - np.asarray(mean, dtype=np.float64)) / np.asarray(
            std, dtype=np.float64
        )
    return ACTIVATIONS[activation](X @ weights.T + np.asarray(biases, dtype=np.float64))


class ElmClassifier(ClassifierMixin, BaseEstimator):
    """Single-hidden-layer classifier with random fixed hidden weights.

    Training is one linear solve, so fitting takes milliseconds per image
    even with thousands of hidden units.

    Parameters
    ----------
    n_hidden : int, default=2000
        Number of hidden units.
    C : float, default=1.0
        Trade-off coefficient on the squared-error term; larger C means
        weaker regularization of the output weights.
    activation : {'sigmoid', 'relu'}, default='sigmoid'
        Hidden-layer nonlinearity.
    normalize : bool, default=True
        Standardize features (z-score with training-set statistics) before
        the hidden map.  Recommended for raw conv features, whose magnitudes
        otherwise saturate the sigmoid.
    seed : int, default=0
        Seed for the hidden-layer draw.  Identical seeds give bit-identical
        hidden weights.

    Attributes
    ----------
    classes_ : ndarray of shape (n_classes,)
        Class labels, in sorted order; prediction ties resolve to the
        earliest entry.
    hidden_weights_ : ndarray of shape (n_hidden, n_features)
    hidden_biases_ : ndarray of shape (n_hidden,)
    output_weights_ : ndarray of shape (n_hidden, n_classes)
    feature_mean_, feature_std_ : ndarray of shape (n_features,)
        Standardization statistics (zeros/ones when normalize=False).
    """

    def __init__(
        self,
        n_hidden: int = 2000,
        C: float = 1.0,
        activation: str = "sigmoid",
        normalize: bool = True,
        seed: int = 0,
    ):
        self.n_hidden = n_hidden
        self.C = C
        self.activation = activation
        self.normalize = normalize
        self.seed = seed

    def _check_params(self):
        if int(self.n_hidden) < 1:
            raise ValueError(f"n_hidden must be >= 1, got {self.n_hidden}")
        if not self.C > 0.0:
            raise ValueError(f"C must be > 0, got {self.C}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(
                f"unknown activation {self.activation!r}; "
                f"choose from {sorted(ACTIVATIONS)}"
            )

    def fit(self, X, y):
        """Fit output weights in closed form.

        X is (n_samples, n_features); y holds class labels of any sortable
        type (class order is np.unique order).
        """
        self._check_params()
        X, y = validate_data(self, X, y, dtype=np.float64)
        if X.shape[0] < 1:
            raise ValueError("at least one training sample is required")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        n_classes = self.classes_.shape[0]

        if self.normalize:
            mean = X.mean(axis=0)
            std = np.maximum(X.std(axis=0), STD_FLOOR)
        else:
            mean = np.zeros(X.shape[1])
            std = np.ones(X.shape[1])

        weights, biases = init_hidden(X.shape[1], int(self.n_hidden), self.seed)
        responses = hidden_map(X, weights, biases, self.activation, mean, std)
        targets = one_hot(y_idx, n_classes)

        system = gram(responses)
        system[np.diag_indices_from(system)] += 1.0 / self.C
        self.output_weights_ = spd_solve(system, responses.T @ targets)

        self.hidden_weights_ = weights
        self.hidden_biases_ = biases
        self.feature_mean_ = mean
        self.feature_std_ = std
        return self

    def decision_function(self, X):
        """Raw output-layer scores, shape (n_samples, n_classes).

        Unlike common binary-classifier conventions, the result always has
        one column per class (each column is an independent one-hot
        regression target).
        """
        check_is_fitted(self)
        X = validate_data(self, X, reset=False, dtype=np.float64)
        responses = hidden_map(
            X,
            self.hidden_weights_,
            self.hidden_biases_,
            self.activation,
            self.feature_mean_,
            self.feature_std_,
        )
        return responses @ self.output_weights_

    def predict(self, X):
        """Class of the maximum score; ties go to the lowest class index."""
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]


def save_model(model: ElmClassifier, path) -> None:
    """Write a fitted classifier in the ELM1 binary format."""
    check_is_fitted(model)
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    fileio.write_u32(buf, MODEL_VERSION)
    fileio.write_u64(buf, int(model.seed) & ((1 << 64) - 1))
    n_hidden, n_features = model.hidden_weights_.shape
    n_classes = model.output_weights_.shape[1]
    fileio.write_u32(buf, n_hidden)
    fileio.write_u32(buf, n_features)
    fileio.write_u32(buf, n_classes)
    fileio.write_u8(buf, _ACTIVATION_TAGS[model.activation])
    fileio.write_f64(buf, float(model.C))
    fileio.write_array(buf, model.hidden_weights_, np.float64)
    fileio.write_array(buf, model.hidden_biases_, np.float64)
    fileio.write_array(buf, model.output_weights_, np.float64)
    fileio.write_array(buf, model.feature_mean_, np.float64)
    fileio.write_array(buf, model.feature_std_, np.float64)
    for name in model.classes_:
        fileio.write_string(buf, str(name))
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_model(path) -> ElmClassifier:
    """Read an ELM1 file back into a fitted classifier.

    Class labels come back as strings (their serialized names).
    """
    with open(path, "rb") as f:
        fileio.expect_magic(f, MODEL_MAGIC)
        fileio.expect_version(f, MODEL_VERSION, "model")
        seed = fileio.read_u64(f, "seed")
        n_hidden = fileio.read_u32(f, "hidden count")
        n_features = fileio.read_u32(f, "feature count")
        n_classes = fileio.read_u32(f, "class count")
        tag = fileio.read_u8(f, "activation tag")
        if tag not in _TAG_ACTIVATIONS:
            raise fileio.FileFormatError(f"unknown activation tag {tag}")
        C = fileio.read_f64(f, "trade-off coefficient")
        model = ElmClassifier(
            n_hidden=n_hidden,
            C=C,
            activation=_TAG_ACTIVATIONS[tag],
            seed=seed,
        )
        model.hidden_weights_ = fileio.read_array(
            f, np.float64, (n_hidden, n_features), "hidden weights"
        )
        model.hidden_biases_ = fileio.read_array(
            f, np.float64, (n_hidden,), "hidden biases"
        )
        model.output_weights_ = fileio.read_array(
            f, np.float64, (n_hidden, n_classes), "output weights"
        )
        model.feature_mean_ = fileio.read_array(
            f, np.float64, (n_features,), "feature mean"
        )
        model.feature_std_ = fileio.read_array(
            f, np.float64, (n_features,), "feature std"
        )
        model.classes_ = np.array(
            [fileio.read_string(f, f"class name {i}") for i in range(n_classes)]
        )
    model.n_features_in_ = n_features
    return model
