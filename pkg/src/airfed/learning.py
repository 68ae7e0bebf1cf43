"""Learning tasks, local mini-batch SGD, global loss, and curvature estimators.

The default task is regularized multinomial logistic regression (single-logit
sigmoid when there are exactly two classes), for which smoothness and strong
convexity constants are exact. A one-hidden-layer tanh MLP is available for
richer experiments; its constants are empirical and flagged heuristic.

Model vectors are padded to even length so the transmission layer can pack
them into complex symbols; padding entries carry no loss, gradient or
regularization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class LossSpec:
    """Task family, class count, feature dimension and ridge weight."""

    kind: str  # "logistic" | "mlp"
    n_classes: int
    n_features: int
    l2_reg: float = 0.0
    hidden: int = 32

    def __post_init__(self):
        if self.kind not in ("logistic", "mlp"):
            raise ConfigError(f"unknown task kind: {self.kind!r}")
        if self.n_classes < 2 or self.n_features < 1:
            raise ConfigError("need n_classes >= 2 and n_features >= 1")
        if self.l2_reg < 0:
            raise ConfigError("l2_reg must be >= 0")


@dataclass(frozen=True)
class LocalUpdateResult:
    """End state and exact change of one device's local training pass."""

    theta_j: np.ndarray
    delta: np.ndarray


@dataclass(frozen=True)
class SmoothnessEstimate:
    smoothness: float  # L
    strong_convexity: float  # lambda
    heuristic: bool


@dataclass(frozen=True)
class SgdConstants:
    grad_variance: float  # mu
    grad_divergence: float  # delta


def _logsumexp(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=1, keepdims=True)))[:, 0]


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class Task:
    """Loss/gradient/prediction bundle over padded parameter vectors."""

    def __init__(self, spec: LossSpec):
        self.spec = spec
        self.raw_dim = self._raw_dim(spec)
        self.dim = self.raw_dim + (self.raw_dim % 2)

    @staticmethod
    def _raw_dim(spec: LossSpec) -> int:
        raise NotImplementedError

    def init_theta(self, kind: str, scale: float, gen: np.random.Generator) -> np.ndarray:
        theta = np.zeros(self.dim)
        if kind == "gaussian":
            theta[: self.raw_dim] = scale * gen.standard_normal(self.raw_dim)
        elif kind != "zeros":
            raise ConfigError(f"unknown init kind: {kind!r}")
        return theta

    def _check(self, theta: np.ndarray, X: np.ndarray):
        if theta.shape != (self.dim,):
            raise DomainError(f"expected parameter vector of length {self.dim}, got {theta.shape}")
        if X.shape[1] != self.spec.n_features:
            raise DomainError(f"expected {self.spec.n_features} features, got {X.shape[1]}")

    # Data-term pieces (no regularizer); subclasses implement these.
    def data_loss(self, theta, X, y) -> float:
        raise NotImplementedError

    def data_grad(self, theta, X, y) -> np.ndarray:
        raise NotImplementedError

    def scores(self, theta, X) -> np.ndarray:
        raise NotImplementedError

    def per_sample_grad_sq_stats(self, theta, X, y) -> tuple[float, float]:
        """Return (mean ||g_i||^2, ||mean g_i||^2) over per-sample data gradients."""
        raise NotImplementedError

    def loss(self, theta, X, y) -> float:
        """Mean sample loss plus (l2/2)||theta||^2 over the unpadded entries."""
        self._check(theta, X)
        raw = theta[: self.raw_dim]
        return self.data_loss(theta, X, y) + 0.5 * self.spec.l2_reg * float(raw @ raw)

    def grad(self, theta, X, y) -> np.ndarray:
        self._check(theta, X)
        if X.shape[0] == 0:
            raise DomainError("gradient of an empty batch is undefined")
        g = self.data_grad(theta, X, y)
        g[: self.raw_dim] += self.spec.l2_reg * theta[: self.raw_dim]
        return g

    def predict(self, theta, X) -> np.ndarray:
        """Argmax class scores; ties resolve to the lowest class index."""
        return np.argmax(self.scores(theta, X), axis=1)


class LogisticTask(Task):
    """Multinomial logistic regression; plain sigmoid when n_classes == 2."""

    @staticmethod
    def _raw_dim(spec: LossSpec) -> int:
        return spec.n_features if spec.n_classes == 2 else spec.n_classes * spec.n_features

    @property
    def binary(self) -> bool:
        return self.spec.n_classes == 2

    def _weights(self, theta):
        raw = theta[: self.raw_dim]
        if self.binary:
            return raw
        return raw.reshape(self.spec.n_classes, self.spec.n_features)

    def scores(self, theta, X):
        if self.binary:
            z = X @ self._weights(theta)
            return np.column_stack([np.zeros_like(z), z])
        return X @ self._weights(theta).T

    def data_loss(self, theta, X, y):
        if self.binary:
            z = X @ self._weights(theta)
            return float(np.mean(np.logaddexp(0.0, z) - y * z))
        Z = self.scores(theta, X)
        return float(np.mean(_logsumexp(Z) - Z[np.arange(len(y)), y]))

    def _residuals(self, theta, X, y) -> np.ndarray:
        """Per-sample score residuals (probabilities minus one-hot labels)."""
        if self.binary:
            z = X @ self._weights(theta)
            return 1.0 / (1.0 + np.exp(-z)) - y
        P = _softmax(self.scores(theta, X))
        P[np.arange(len(y)), y] -= 1.0
        return P

    def data_grad(self, theta, X, y):
        n = X.shape[0]
        r = self._residuals(theta, X, y)
        g = np.zeros(self.dim)
        if self.binary:
            g[: self.raw_dim] = (r @ X) / n
        else:
            g[: self.raw_dim] = ((r.T @ X) / n).ravel()
        return g

    def per_sample_grad_sq_stats(self, theta, X, y):
        # Per-sample gradient is a rank-one (residual x feature) outer product,
        # so squared norms factor without materializing the gradients.
        n = X.shape[0]
        r = self._residuals(theta, X, y)
        x_sq = np.einsum("ij,ij->i", X, X)
        r_sq = r**2 if self.binary else np.einsum("ij,ij->i", r, r)
        mean_sq = float(np.mean(r_sq * x_sq))
        gbar = self.data_grad(theta, X, y)
        return mean_sq, float(gbar @ gbar)

    def hessian(self, theta, X, y) -> np.ndarray:
        """Dense Hessian of the regularized loss over the unpadded entries."""
        n, b = X.shape
        if self.binary:
            z = X @ self._weights(theta)
            s = 1.0 / (1.0 + np.exp(-z))
            H = (X.T * (s * (1.0 - s))) @ X / n
        else:
            V = self.spec.n_classes
            P = _softmax(self.scores(theta, X))
            M = np.einsum("ni,nj->nij", P, P)
            M[:, np.arange(V), np.arange(V)] -= P
            M = -M  # diag(p) - p p^T
            H = np.einsum("nij,nf,ng->ifjg", M, X, X).reshape(V * b, V * b) / n
        return H + self.spec.l2_reg * np.eye(self.raw_dim)


class MlpTask(Task):
    """One hidden tanh layer with a softmax readout."""

    @staticmethod
    def _raw_dim(spec: LossSpec) -> int:
        return spec.hidden * (spec.n_features + 1) + spec.n_classes * (spec.hidden + 1)

    def _unpack(self, theta):
        b, h, V = self.spec.n_features, self.spec.hidden, self.spec.n_classes
        i = 0
        W1 = theta[i : i + h * b].reshape(h, b)
        i += h * b
        b1 = theta[i : i + h]
        i += h
        W2 = theta[i : i + V * h].reshape(V, h)
        i += V * h
        b2 = theta[i : i + V]
        return W1, b1, W2, b2

    def scores(self, theta, X):
        W1, b1, W2, b2 = self._unpack(theta)
        return np.tanh(X @ W1.T + b1) @ W2.T + b2

    def data_loss(self, theta, X, y):
        Z = self.scores(theta, X)
        return float(np.mean(_logsumexp(Z) - Z[np.arange(len(y)), y]))

    def data_grad(self, theta, X, y):
        W1, b1, W2, b2 = self._unpack(theta)
        n = X.shape[0]
        A = np.tanh(X @ W1.T + b1)
        P = _softmax(A @ W2.T + b2)
        P[np.arange(len(y)), y] -= 1.0
        dZ = P / n
        dW2 = dZ.T @ A
        db2 = dZ.sum(axis=0)
        dA = (dZ @ W2) * (1.0 - A**2)
        dW1 = dA.T @ X
        db1 = dA.sum(axis=0)
        g = np.zeros(self.dim)
        g[: self.raw_dim] = np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])
        return g

    def per_sample_grad_sq_stats(self, theta, X, y):
        n = X.shape[0]
        total_sq = 0.0
        for i in range(n):
            gi = self.data_grad(theta, X[i : i + 1], y[i : i + 1])
            total_sq += float(gi @ gi)
        gbar = self.data_grad(theta, X, y)
        return total_sq / n, float(gbar @ gbar)


def make_task(spec: LossSpec) -> Task:
    return LogisticTask(spec) if spec.kind == "logistic" else MlpTask(spec)


def local_loss(task: Task, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Device loss: mean sample loss over the device's data plus the ridge term."""
    return task.loss(theta, X, y)


def local_grad(task: Task, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Mini-batch gradient: mean per-sample gradient plus the ridge gradient."""
    return task.grad(theta, X, y)


def local_update(
    task: Task,
    theta0: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    eta: float,
    n_steps: int,
    batch_size: int,
    gen: np.random.Generator,
) -> LocalUpdateResult:
    """Run local mini-batch SGD steps; each batch is drawn uniformly without
    replacement, fresh at every step."""
    n = X.shape[0]
    if eta <= 0 or n_steps < 1:
        raise ConfigError("need eta > 0 and n_steps >= 1")
    if not (1 <= batch_size <= n):
        raise ConfigError(f"batch_size must be in [1, {n}]")
    theta = theta0.copy()
    for _ in range(n_steps):
        batch = gen.choice(n, size=batch_size, replace=False)
        theta = theta - eta * task.grad(theta, X[batch], y[batch])
    return LocalUpdateResult(theta_j=theta, delta=theta - theta0)


def global_loss(task: Task, theta: np.ndarray, dataset: Dataset) -> float:
    """Shard-weighted mean of the device losses."""
    weights = dataset.shard_weights
    return float(
        sum(w * task.loss(theta, *dataset.device(k)) for k, w in enumerate(weights))
    )


def global_grad(task: Task, theta: np.ndarray, dataset: Dataset) -> np.ndarray:
    weights = dataset.shard_weights
    g = np.zeros(task.dim)
    for k, w in enumerate(weights):
        g += w * task.grad(theta, *dataset.device(k))
    return g


def evaluate_accuracy(task: Task, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Fraction of argmax-correct predictions (ties go to the lowest class)."""
    if X.shape[0] == 0:
        raise ConfigError("test set must be non-empty")
    return float(np.mean(task.predict(theta, X) == y))


def estimate_smoothness(task: Task, dataset: Dataset, n_probe: int = 8, seed: int = 0) -> SmoothnessEstimate:
    """Curvature constants of the device losses.

    Logistic: exact bounds, ``L = (c / S) * sigma_max(X^T X) + l2`` with the
    task curvature constant c (1/4 for the binary sigmoid, 1/2 for the softmax
    upper bound), and strong convexity equal to the ridge weight. MLP: largest
    and smallest Rayleigh quotients of finite-difference Hessian products over
    random probes, flagged heuristic.
    """
    X = dataset.features
    if isinstance(task, LogisticTask):
        c = 0.25 if task.binary else 0.5
        sigma_max = float(np.linalg.norm(X, ord=2) ** 2)
        L = c * sigma_max / X.shape[0] + task.spec.l2_reg
        return SmoothnessEstimate(L, task.spec.l2_reg, heuristic=False)
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 17])))
    y = dataset.labels
    eps = 1e-5
    hi, lo = 0.0, np.inf
    for _ in range(n_probe):
        theta = 0.5 * gen.standard_normal(task.dim)
        theta[task.raw_dim :] = 0.0
        v = gen.standard_normal(task.dim)
        v[task.raw_dim :] = 0.0
        v /= np.linalg.norm(v)
        hv = (task.grad(theta + eps * v, X, y) - task.grad(theta - eps * v, X, y)) / (2 * eps)
        curv = float(v @ hv)
        hi = max(hi, abs(curv))
        lo = min(lo, curv)
    return SmoothnessEstimate(hi, lo, heuristic=True)


def estimate_sgd_constants(
    task: Task,
    dataset: Dataset,
    theta_samples,
    batch_size: int,
    weights: np.ndarray | None = None,
) -> SgdConstants:
    """Bounds on mini-batch gradient variance and on gradient divergence.

    The variance term is the exact without-replacement sampling variance of
    the mini-batch mean, maximized over devices and the supplied parameter
    states. The divergence term defaults to the worst case over all convex
    aggregation weightings, i.e. ``max_k ||grad F - grad F_k||^2``, which
    upper-bounds the divergence for every weight vector on the simplex; pass
    ``weights`` to evaluate one fixed weighting instead.
    """
    theta_samples = list(theta_samples)
    if not theta_samples:
        raise ConfigError("need at least one parameter sample")
    mu = 0.0
    delta = 0.0
    for theta in theta_samples:
        device_grads = []
        for k in range(dataset.n_devices):
            Xk, yk = dataset.device(k)
            n = Xk.shape[0]
            m = min(batch_size, n)
            mean_sq, mean_norm_sq = task.per_sample_grad_sq_stats(theta, Xk, yk)
            pop_var = mean_sq - mean_norm_sq  # mean ||g_i - gbar||^2
            fpc = (n - m) / (m * (n - 1)) if n > 1 else 0.0
            mu = max(mu, fpc * pop_var)
            device_grads.append(task.grad(theta, Xk, yk))
        g_global = global_grad(task, theta, dataset)
        if weights is None:
            for gk in device_grads:
                d = g_global - gk
                delta = max(delta, float(d @ d))
        else:
            d = g_global - sum(w * gk for w, gk in zip(weights, device_grads))
            delta = max(delta, float(d @ d))
    return SgdConstants(grad_variance=mu, grad_divergence=delta)


def train_to_optimum(
    task: Task,
    X: np.ndarray,
    y: np.ndarray,
    grad_tol: float = 1e-10,
    max_iters: int = 200,
) -> tuple[np.ndarray, float]:
    """Deterministic full-gradient training of the pooled logistic loss to a
    gradient norm below ``grad_tol``; returns (theta_star, loss_star).

    Damped Newton; the ridge term keeps the Hessian positive definite.
    """
    if not isinstance(task, LogisticTask):
        raise ConfigError("the training oracle supports the logistic task only")
    if task.spec.l2_reg <= 0:
        raise ConfigError("the training oracle requires l2_reg > 0")
    theta = np.zeros(task.dim)
    f = task.loss(theta, X, y)
    for _ in range(max_iters):
        g = task.grad(theta, X, y)
        gn = float(np.linalg.norm(g))
        if gn < grad_tol:
            return theta, f
        H = task.hessian(theta, X, y)
        step = np.zeros(task.dim)
        step[: task.raw_dim] = np.linalg.solve(H, g[: task.raw_dim])
        t = 1.0
        for _ in range(60):
            cand = theta - t * step
            fc = task.loss(cand, X, y)
            if fc <= f:
                theta, f = cand, fc
                break
            t *= 0.5
        else:
            raise DomainError("Newton line search failed to decrease the loss")
    g = task.grad(theta, X, y)
    if float(np.linalg.norm(g)) >= grad_tol:
        raise DomainError(f"training oracle did not reach gradient norm {grad_tol}")
    return theta, f
