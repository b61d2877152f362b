"""Epsilon-insensitive support vector regression.

The solver works on the dual in the difference variables
``beta_i = alpha_i - alpha_i*``::

    maximize   -1/2 sum_ij beta_i beta_j k(x_i, x_j) - eps sum_i |beta_i| + sum_i y_i beta_i
    subject to sum_i beta_i = 0,  -C <= beta_i <= C

and optimizes it with SMO-style pair updates: each step moves mass ``t``
from one coefficient to another (``beta_i += t``, ``beta_j -= t``), which
keeps the equality constraint, and maximizes the resulting concave
piecewise-quadratic in ``t`` exactly.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _smo
from .errors import (
    ConfigError,
    DimensionMismatch,
    EmptyTrainingSet,
    InfeasiblePoint,
    NonFiniteInput,
    SchemaError,
)

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
KERNEL_CACHE_LIMIT = 4096
_BLOCK = 512


@dataclass(frozen=True)
class KernelSpec:
    variant: str = "linear"
    gamma: float | None = None

    def __post_init__(self):
        if self.variant not in ("linear", "rbf"):
            raise ConfigError(f"kernel must be 'linear' or 'rbf', got {self.variant!r}")
        if self.variant == "rbf":
            if self.gamma is None or not (math.isfinite(self.gamma) and self.gamma > 0):
                raise ConfigError(f"rbf kernel needs gamma > 0, got {self.gamma!r}")
        elif self.gamma is not None:
            raise ConfigError("gamma is invalid for the linear kernel")

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def rbf(cls, gamma: float):
        return cls("rbf", float(gamma))

    def to_dict(self):
        d = {"variant": self.variant}
        if self.gamma is not None:
            d["gamma"] = self.gamma
        return d


@dataclass(frozen=True)
class TrainConfig:
    c: float
    epsilon: float
    kernel: KernelSpec = field(default_factory=KernelSpec.linear)
    kkt_tolerance: float = 1e-3
    max_epochs: int = 10000
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise ConfigError(f"C must be a positive finite number, got {self.c!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon!r}")
        if not (math.isfinite(self.kkt_tolerance) and self.kkt_tolerance > 0):
            raise ConfigError(f"kkt_tolerance must be > 0, got {self.kkt_tolerance!r}")
        if int(self.max_epochs) < 1:
            raise ConfigError("max_epochs must be a positive integer")
        if int(self.seed) < 0:
            raise ConfigError("seed must be non-negative")


@dataclass(frozen=True)
class SolveStats:
    epochs_run: int
    iterations: int
    dual_objective: float
    kkt_violations_remaining: int
    converged: bool
    objective_history: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class SvrModel:
    support_vectors: np.ndarray
    betas: np.ndarray
    bias: float
    kernel: KernelSpec
    dimension: int
    c: float = 1.0
    epsilon: float = 0.0
    kkt_tolerance: float = 1e-3
    seed: int = 0
    converged: bool = True
    feature_names: tuple[str, ...] = ()
    target_name: str = ""

    def __post_init__(self):
        sv = np.array(self.support_vectors, dtype=float).reshape(-1, self.dimension)
        betas = np.array(self.betas, dtype=float).reshape(-1)
        if len(sv) != len(betas):
            raise ValueError("support_vectors and betas differ in length")
        sv.flags.writeable = False
        betas.flags.writeable = False
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_support(self) -> int:
        return len(self.betas)

    def weights(self) -> np.ndarray:
        """Primal weight vector; only meaningful for the linear kernel."""
        if self.kernel.variant != "linear":
            raise ValueError("primal weights exist only for the linear kernel")
        return self.betas @ self.support_vectors if self.n_support else np.zeros(self.dimension)


def _as_vector(u) -> np.ndarray:
    return np.asarray(u, dtype=float).reshape(-1)


def kernel_eval(kernel: KernelSpec, u, v) -> float:
    u, v = _as_vector(u), _as_vector(v)
    if u.shape != v.shape:
        raise DimensionMismatch(f"vectors of length {len(u)} and {len(v)}")
    if kernel.variant == "linear":
        return float(np.dot(u, v))
    d = u - v
    return float(np.exp(-kernel.gamma * np.dot(d, d)))


def kernel_matrix(kernel: KernelSpec, a, b) -> np.ndarray:
    """Gram block ``K[i, j] = k(a_i, b_j)``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"dimensions {a.shape[1]} and {b.shape[1]}")
    if kernel.variant == "linear":
        return a @ b.T
    out = np.empty((len(a), len(b)))
    # explicit differences keep k(u, u) == 1 exactly
    for start in range(0, len(a), _BLOCK):
        chunk = a[start:start + _BLOCK]
        diff = chunk[:, None, :] - b[None, :, :]
        out[start:start + _BLOCK] = np.exp(-kernel.gamma * np.einsum("ijk,ijk->ij", diff, diff))
    return out


class _Gram:
    """Kernel rows for the training set, cached up to KERNEL_CACHE_LIMIT points."""

    def __init__(self, kernel: KernelSpec, xs: np.ndarray):
        self.kernel = kernel
        self.xs = xs
        n = len(xs)
        if n <= KERNEL_CACHE_LIMIT:
            self.full = kernel_matrix(kernel, xs, xs)
            self.diag = np.diag(self.full).copy()
        else:
            self.full = None
            if kernel.variant == "linear":
                self.diag = np.einsum("ij,ij->i", xs, xs)
            else:
                self.diag = np.ones(n)

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        return kernel_matrix(self.kernel, self.xs[i:i + 1], self.xs)[0]

    def dot(self, beta: np.ndarray) -> np.ndarray:
        if self.full is not None:
            return self.full @ beta
        out = np.zeros(len(self.xs))
        nz = np.flatnonzero(beta)
        for start in range(0, len(nz), _BLOCK):
            idx = nz[start:start + _BLOCK]
            out += kernel_matrix(self.kernel, self.xs, self.xs[idx]) @ beta[idx]
        return out


def _validate_training_set(xs, ys):
    try:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float).reshape(-1)
    except ValueError as exc:
        raise DimensionMismatch(f"training inputs are ragged or non-numeric: {exc}") from None
    if xs.size == 0 or len(ys) == 0:
        raise EmptyTrainingSet("training set is empty")
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    if xs.ndim != 2:
        raise DimensionMismatch("xs must be a list of equal-length vectors")
    if len(xs) != len(ys):
        raise DimensionMismatch(f"{len(xs)} feature vectors but {len(ys)} targets")
    if not (np.isfinite(xs).all() and np.isfinite(ys).all()):
        raise NonFiniteInput("training data contains NaN or infinity")
    return np.ascontiguousarray(xs), ys


def _objective(beta, y, grad, eps) -> float:
    # K beta = y - grad
    return float(-0.5 * beta @ (y - grad) - eps * np.abs(beta).sum() + y @ beta)


def dual_objective(config: TrainConfig, xs, ys, betas) -> float:
    xs, ys = _validate_training_set(xs, ys)
    betas = np.asarray(betas, dtype=float).reshape(-1)
    if len(betas) != len(ys):
        raise DimensionMismatch(f"{len(betas)} betas for {len(ys)} points")
    tol = config.kkt_tolerance
    if abs(betas.sum()) > tol or np.abs(betas).max(initial=0.0) > config.c + tol:
        raise InfeasiblePoint("betas violate sum(beta) = 0 or |beta| <= C")
    k = kernel_matrix(config.kernel, xs, xs)
    return float(-0.5 * betas @ k @ betas - config.epsilon * np.abs(betas).sum() + ys @ betas)


def _up_low(beta, grad, c, eps):
    """Directional KKT values and the sets that may move up or down.

    ``up[i]`` is the objective slope for increasing beta_i, ``low[j]`` the
    negated slope for decreasing beta_j; a pair (i, j) improves the
    objective iff ``up[i] > low[j]``.
    """
    up = grad - np.where(beta >= 0, eps, -eps)
    low = grad + np.where(beta <= 0, eps, -eps)
    can_up = beta < c
    can_down = beta > -c
    return up, low, can_up, can_down


def _bias(beta, grad, c, eps):
    free = (beta != 0) & (np.abs(beta) < c)
    if free.any():
        return float(np.mean(grad[free] - np.sign(beta[free]) * eps))
    up, low, can_up, can_down = _up_low(beta, grad, c, eps)
    lo = up[can_up].max() if can_up.any() else None
    hi = low[can_down].min() if can_down.any() else None
    if lo is None and hi is None:
        return 0.0
    if lo is None:
        return float(hi)
    if hi is None:
        return float(lo)
    return float(0.5 * (lo + hi))


def _count_violations(beta, grad, b, c, eps, tol) -> int:
    up, low, can_up, can_down = _up_low(beta, grad, c, eps)
    bad = (can_up & (up > b + tol)) | (can_down & (low < b - tol))
    return int(bad.sum())


def train(config: TrainConfig, xs, ys, feature_names: Sequence[str] = (), target_name: str = ""):
    """Fit an epsilon-SVR; returns ``(SvrModel, SolveStats)``.

    Stops once the maximal KKT violation ``max up - min low`` is within
    ``config.kkt_tolerance``. If ``max_epochs`` runs out first the model is
    still returned with ``converged=False``.
    """
    xs, ys = _validate_training_set(xs, ys)
    n, dim = xs.shape
    c, eps, tol = float(config.c), float(config.epsilon), float(config.kkt_tolerance)

    gram = _Gram(config.kernel, xs)
    cached = gram.full is not None
    full = gram.full if cached else np.zeros((1, 1))
    rbf = config.kernel.variant == "rbf"
    gamma = float(config.kernel.gamma or 0.0)
    beta = np.zeros(n)
    grad = ys.copy()
    history = [0.0]
    converged = False
    iterations = 0
    epochs = 0

    # one epoch = n pair updates; the gradient is rebuilt exactly after each
    while epochs < config.max_epochs and not converged:
        steps, status = _smo.run_steps(
            beta, grad, full, xs, cached, rbf, gamma, gram.diag, c, eps, tol, max(n, 1)
        )
        iterations += steps
        converged = status != _smo.BUDGET
        epochs += 1
        grad = ys - gram.dot(beta)
        history.append(_objective(beta, ys, grad, eps))

    if not converged:
        up, low, can_up, can_down = _up_low(beta, grad, c, eps)
        if can_up.any() and can_down.any():
            converged = bool(up[can_up].max() - low[can_down].min() <= tol)
        else:
            converged = True

    b = _bias(beta, grad, c, eps)
    violations = _count_violations(beta, grad, b, c, eps, tol)
    if not converged:
        log.warning("SVR solver hit max_epochs=%d with %d KKT violations", config.max_epochs, violations)

    keep = beta != 0.0
    model = SvrModel(
        support_vectors=xs[keep],
        betas=beta[keep],
        bias=b,
        kernel=config.kernel,
        dimension=dim,
        c=c,
        epsilon=eps,
        kkt_tolerance=tol,
        seed=int(config.seed),
        converged=converged,
        feature_names=tuple(feature_names),
        target_name=target_name,
    )
    stats = SolveStats(
        epochs_run=epochs,
        iterations=iterations,
        dual_objective=history[-1],
        kkt_violations_remaining=violations,
        converged=converged,
        objective_history=tuple(history),
    )
    return model, stats


def predict_many(model: SvrModel, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs.reshape(1, -1) if xs.size else xs.reshape(0, model.dimension)
    if xs.shape[1] != model.dimension:
        raise DimensionMismatch(f"model expects {model.dimension} features, got {xs.shape[1]}")
    if model.n_support == 0 or len(xs) == 0:
        return np.full(len(xs), model.bias)
    return kernel_matrix(model.kernel, xs, model.support_vectors) @ model.betas + model.bias


def predict(model: SvrModel, x) -> float:
    x = _as_vector(x)
    if len(x) != model.dimension:
        raise DimensionMismatch(f"model expects {model.dimension} features, got {len(x)}")
    return float(predict_many(model, x.reshape(1, -1))[0])


def model_to_dict(model: SvrModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kernel": model.kernel.to_dict(),
        "c": model.c,
        "epsilon": model.epsilon,
        "kkt_tolerance": model.kkt_tolerance,
        "seed": model.seed,
        "converged": model.converged,
        "dimension": model.dimension,
        "bias": model.bias,
        "support_vectors": model.support_vectors.tolist(),
        "betas": model.betas.tolist(),
        "feature_names": list(model.feature_names),
        "target_name": model.target_name,
    }


def model_from_dict(d: dict) -> SvrModel:
    version = d.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise SchemaError(f"unsupported model format_version {version!r}")
    try:
        k = d["kernel"]
        kernel = KernelSpec(k["variant"], k.get("gamma"))
        return SvrModel(
            support_vectors=np.array(d["support_vectors"], dtype=float).reshape(-1, int(d["dimension"])),
            betas=d["betas"],
            bias=float(d["bias"]),
            kernel=kernel,
            dimension=int(d["dimension"]),
            c=float(d["c"]),
            epsilon=float(d["epsilon"]),
            kkt_tolerance=float(d.get("kkt_tolerance", 1e-3)),
            seed=int(d.get("seed", 0)),
            converged=bool(d.get("converged", True)),
            feature_names=d.get("feature_names", []),
            target_name=d.get("target_name", ""),
        )
    except KeyError as exc:
        raise SchemaError(f"model file missing field {exc.args[0]!r}") from None


def save_model(model: SvrModel, path) -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly
    text = json.dumps(model_to_dict(model), indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def load_model(path) -> SvrModel:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not a JSON model file ({exc})") from None
    return model_from_dict(data)
