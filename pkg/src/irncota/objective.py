"""Local objectives, datasets and the centralized optimum.

The classification task is multiclass logistic regression with class 0
pinned to zero weights: ``w`` stacks the ``C - 1`` free class blocks, each of
length ``F`` (features include a trailing bias and have unit norm). Every node
holds a small local dataset; the global objective is the mean of the local
ones.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import standard_normal, uniform

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class LocalDataset:
    features: np.ndarray  # (n, F), unit-norm rows
    labels: np.ndarray  # (n,)

    def __post_init__(self):
        if len(self.features) == 0:
            raise ValueError("local dataset is empty")
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels differ in length")

    def __len__(self):
        return len(self.labels)


def _scores(features, w, n_classes):
    W = np.asarray(w, dtype=float).reshape(n_classes - 1, -1)
    s = features @ W.T
    return np.concatenate([np.zeros((*s.shape[:-1], 1)), s], axis=-1)


def _log_softmax(scores):
    top = scores.max(axis=-1, keepdims=True)
    return scores - top - np.log(np.exp(scores - top).sum(axis=-1, keepdims=True))


def loss(label: int, feature, w, mu: float, n_classes: int = 10) -> float:
    """Regularized cross-entropy of a single sample."""
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} outside 0..{n_classes - 1}")
    w = np.asarray(w, dtype=float)
    logp = _log_softmax(_scores(np.asarray(feature, dtype=float)[None, :], w, n_classes))[0]
    return 0.5 * mu * float(w @ w) - float(logp[label])


def _weighted_value_grad(features, labels, weights, w, mu, n_classes):
    """Sum over samples of ``weights * loss`` (without the regularizer) and its gradient."""
    logp = _log_softmax(_scores(features, w, n_classes))
    n = len(labels)
    value = -float(np.sum(weights * logp[np.arange(n), labels]))
    resid = np.exp(logp)
    resid[np.arange(n), labels] -= 1.0
    grad = (resid[:, 1:] * weights[:, None]).T @ features
    return value, grad.ravel()


def local_value_grad(dataset: LocalDataset, w, mu: float, n_classes: int = 10):
    w = np.asarray(w, dtype=float)
    weights = np.full(len(dataset), 1.0 / len(dataset))
    value, grad = _weighted_value_grad(dataset.features, dataset.labels, weights, w, mu, n_classes)
    return value + 0.5 * mu * float(w @ w), grad + mu * w


def local_gradient(dataset: LocalDataset, w, mu: float, n_classes: int = 10) -> np.ndarray:
    return local_value_grad(dataset, w, mu, n_classes)[1]


def global_objective(datasets, w, mu: float, n_classes: int = 10):
    """``(F(w), grad F(w))`` with ``F`` the mean of the node objectives."""
    return LogisticObjective(list(datasets), mu, n_classes).value_grad(w)


class LogisticObjective:
    """Regularized multiclass logistic regression spread over nodes."""

    def __init__(self, datasets, mu: float, n_classes: int = 10, test_set: LocalDataset | None = None):
        if not mu > 0:
            raise ValueError("regularization mu must be positive")
        self.datasets = list(datasets)
        self.mu = float(mu)
        self.n_classes = n_classes
        self.n_features = self.datasets[0].features.shape[1]
        self.dim = (n_classes - 1) * self.n_features
        self.test_set = test_set
        N = len(self.datasets)
        self._X = np.concatenate([ds.features for ds in self.datasets])
        self._y = np.concatenate([ds.labels for ds in self.datasets]).astype(int)
        self._wts = np.concatenate([np.full(len(ds), 1.0 / (N * len(ds))) for ds in self.datasets])
        sizes = {len(ds) for ds in self.datasets}
        self._stacked = None
        if len(sizes) == 1:
            self._stacked = (np.stack([ds.features for ds in self.datasets]),
                             np.stack([ds.labels for ds in self.datasets]).astype(int))

    @property
    def L(self) -> float:
        """Smoothness constant for unit-norm features."""
        return self.mu + 2.0

    @property
    def N(self) -> int:
        return len(self.datasets)

    def value_grad(self, w):
        w = np.asarray(w, dtype=float)
        value, grad = _weighted_value_grad(self._X, self._y, self._wts, w, self.mu, self.n_classes)
        return value + 0.5 * self.mu * float(w @ w), grad + self.mu * w

    def value(self, w) -> float:
        return self.value_grad(w)[0]

    def local_gradients(self, W) -> np.ndarray:
        """Gradients of every node's objective at its own iterate, shape ``(N, d)``."""
        W = np.asarray(W, dtype=float)
        if self._stacked is None:
            return np.stack([local_gradient(ds, w, self.mu, self.n_classes)
                             for ds, w in zip(self.datasets, W)])
        X, y = self._stacked  # (N, n, F), (N, n)
        N, n, F = X.shape
        blocks = W.reshape(N, self.n_classes - 1, F)
        s = np.einsum("inf,icf->inc", X, blocks)
        scores = np.concatenate([np.zeros((N, n, 1)), s], axis=-1)
        p = np.exp(_log_softmax(scores))
        idx_n, idx_i = np.meshgrid(np.arange(n), np.arange(N))
        p[idx_i, idx_n, y] -= 1.0
        grad = np.einsum("inc,inf->icf", p[:, :, 1:], X) / n
        return grad.reshape(N, -1) + self.mu * W

    def predict(self, w, features) -> np.ndarray:
        return np.argmax(_scores(np.asarray(features, dtype=float), w, self.n_classes), axis=-1)

    def error_rate(self, w, dataset: LocalDataset) -> float:
        return float(np.mean(self.predict(w, dataset.features) != dataset.labels))

    def test_error(self, w) -> float:
        if self.test_set is None:
            return 0.0
        return self.error_rate(w, self.test_set)


class QuadraticObjective:
    """Toy objective ``f_i(w) = 0.5 ||w - c_i||^2``; optimum is the mean center."""

    def __init__(self, centers):
        self.centers = np.asarray(centers, dtype=float)
        self.mu = 1.0
        self.dim = self.centers.shape[1]

    @property
    def L(self) -> float:
        return 1.0

    @property
    def N(self) -> int:
        return len(self.centers)

    def value_grad(self, w):
        diff = np.asarray(w, dtype=float) - self.centers
        return 0.5 * float(np.mean(np.sum(diff**2, axis=1))), diff.mean(axis=0)

    def value(self, w) -> float:
        return self.value_grad(w)[0]

    def local_gradients(self, W) -> np.ndarray:
        return np.asarray(W, dtype=float) - self.centers

    def test_error(self, w) -> float:
        # no classification task attached
        return 0.0


@dataclass
class Optimum:
    w: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool = field(default=True)


def solve_optimum(objective, tol: float = 1e-9, max_iter: int = 1_000_000, w0=None) -> Optimum:
    """Full-batch gradient descent with step ``2 / (mu + L)``."""
    step = 2.0 / (objective.mu + objective.L)
    w = np.zeros(objective.dim) if w0 is None else np.array(w0, dtype=float)
    value, grad = objective.value_grad(w)
    gnorm = float(np.linalg.norm(grad))
    for k in range(max_iter):
        if gnorm <= tol:
            return Optimum(w, value, gnorm, k)
        w = w - step * grad
        value, grad = objective.value_grad(w)
        gnorm = float(np.linalg.norm(grad))
    return Optimum(w, value, gnorm, max_iter, converged=gnorm <= tol)


def radius_from_optimum(mu: float, grad_at_zero) -> float:
    """Ball radius ``||grad F(0)|| / mu``; contains the optimum by strong convexity."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    return float(np.linalg.norm(grad_at_zero)) / mu


# --- data -----------------------------------------------------------------


def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    if len(raw) < 4 + 4 * ndim:
        raise ValueError(f"{path}: truncated IDX header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise ValueError(f"{path}: bad magic number 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4 : 4 + 4 * ndim])
    body = raw[4 + 4 * ndim :]
    expected = int(np.prod(dims))
    if len(body) < expected:
        raise ValueError(f"{path}: truncated IDX payload ({len(body)} of {expected} bytes)")
    return np.frombuffer(body[:expected], dtype=np.uint8).reshape(dims)


def image_features(images: np.ndarray, pool: int = 4) -> np.ndarray:
    """Mean-pool 28x28 uint8 images to 7x7, append a bias of 1, normalize."""
    images = np.asarray(images, dtype=float) / 255.0
    n, rows, cols = images.shape
    pooled = images.reshape(n, rows // pool, pool, cols // pool, pool).mean(axis=(2, 4))
    feats = np.concatenate([pooled.reshape(n, -1), np.ones((n, 1))], axis=1)
    return feats / np.linalg.norm(feats, axis=1, keepdims=True)


def ingest_fashion_mnist(images_path, labels_path) -> LocalDataset:
    """Parse an IDX image/label pair (optionally gzipped) into unit-norm features."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise ValueError(f"image/label count mismatch: {len(images)} vs {len(labels)}")
    return LocalDataset(image_features(images), labels.astype(int))


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array in IDX format (used to build fixtures)."""
    array = np.asarray(array, dtype=np.uint8)
    magic = {1: IDX_LABELS_MAGIC, 3: IDX_IMAGES_MAGIC}[array.ndim]
    header = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    data = header + array.tobytes()
    if str(path).endswith(".gz"):
        data = gzip.compress(data, mtime=0)
    with open(path, "wb") as fh:
        fh.write(data)


def split_by_class(pool: LocalDataset, N: int, per_node: int, stream,
                   n_classes: int = 10) -> list[LocalDataset]:
    """Node ``i`` gets ``per_node`` samples of class ``i mod C``, drawn without
    replacement after a seeded shuffle."""
    if N % n_classes:
        raise ValueError(f"N={N} is not divisible by the number of classes {n_classes}")
    order = np.argsort(uniform(stream, len(pool)), kind="stable")
    by_class = {c: order[pool.labels[order] == c] for c in range(n_classes)}
    taken = {c: 0 for c in range(n_classes)}
    out = []
    for i in range(N):
        c = i % n_classes
        idx = by_class[c][taken[c] : taken[c] + per_node]
        if len(idx) < per_node:
            raise ValueError(f"not enough samples of class {c}")
        taken[c] += per_node
        out.append(LocalDataset(pool.features[idx], pool.labels[idx]))
    return out


def balanced_subset(pool: LocalDataset, per_class: int, stream, n_classes: int = 10) -> LocalDataset:
    order = np.argsort(uniform(stream, len(pool)), kind="stable")
    idx = np.concatenate([order[pool.labels[order] == c][:per_class] for c in range(n_classes)])
    return LocalDataset(pool.features[idx], pool.labels[idx])


def class_means(n_classes: int, n_features: int, stream) -> np.ndarray:
    """Random unit-norm class directions for synthetic data."""
    means = standard_normal(stream, (n_classes, n_features))
    return means / np.linalg.norm(means, axis=1, keepdims=True)


def synthetic_samples(means: np.ndarray, labels, noise: float, stream) -> LocalDataset:
    labels = np.asarray(labels, dtype=int)
    x = means[labels] + noise * standard_normal(stream, (len(labels), means.shape[1]))
    return LocalDataset(x / np.linalg.norm(x, axis=1, keepdims=True), labels)


def synthetic_dataset(n_classes: int, n_features: int, per_node: int, N: int, stream,
                      noise: float = 0.3, means: np.ndarray | None = None) -> list[LocalDataset]:
    """Per-node datasets; node ``i`` owns class ``i mod C``."""
    if N % n_classes:
        raise ValueError(f"N={N} is not divisible by the number of classes {n_classes}")
    if means is None:
        means = class_means(n_classes, n_features, stream)
    return [synthetic_samples(means, np.full(per_node, i % n_classes), noise, stream)
            for i in range(N)]
