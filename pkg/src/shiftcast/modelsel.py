"""Cross-validation, grid search and the MAE/RMSE report."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .domain import FEATURE_NAMES, TARGETS, FeatureRow, feature_matrix, resolve_target, target_vector
from .errors import ConfigError, EmptyInput, KTooLarge, KTooSmall, LengthMismatch
from .svr import KernelSpec, TrainConfig, predict_many, train

DEFAULT_CS = (0.01, 0.1, 0.13, 1.0, 10.0, 100.0)
DEFAULT_EPSILONS = (0.00097, 0.001, 0.01, 0.031, 0.1)
DEFAULT_GAMMAS = (0.01, 0.1, 1.0, 10.0)

REFERENCE_LINEAR = TrainConfig(c=1.0, epsilon=0.031, kernel=KernelSpec.linear())
REFERENCE_RBF = TrainConfig(c=0.13, epsilon=0.00097, kernel=KernelSpec.rbf(1.0))
REFERENCE_MODELS = (("SVR-Linear", REFERENCE_LINEAR), ("SVR-RBF", REFERENCE_RBF))

TARGET_ORDER = tuple(TARGETS)


@dataclass(frozen=True)
class FoldPlan:
    n: int
    k: int
    assignment: tuple[int, ...]
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.assignment) == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.assignment) != fold)

    def sizes(self) -> list[int]:
        return np.bincount(self.assignment, minlength=self.k).tolist()


def kfold_split(n: int, k: int, seed: int = 0) -> FoldPlan:
    """Balanced, seeded fold assignment.

    The shuffle is drawn from a stream keyed on (seed, n, k), so one master
    seed gives independent plans for different k.
    """
    if k < 2:
        raise KTooSmall(f"k must be >= 2, got {k}")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the number of rows n={n}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(n), int(k)]))
    order = rng.permutation(n)
    assignment = np.empty(n, dtype=int)
    assignment[order] = np.arange(n) % k
    return FoldPlan(n=n, k=k, assignment=tuple(int(a) for a in assignment), seed=int(seed))


def _residuals(actual, predicted) -> np.ndarray:
    a = np.asarray(actual, dtype=float).reshape(-1)
    p = np.asarray(predicted, dtype=float).reshape(-1)
    if len(a) != len(p):
        raise LengthMismatch(f"{len(a)} actual values but {len(p)} predictions")
    if len(a) == 0:
        raise EmptyInput("metrics need at least one value")
    return a - p


def _scaled(actual, predicted):
    # dividing by max|r| keeps squares clear of underflow and overflow
    r = np.abs(_residuals(actual, predicted))
    scale = float(r.max())
    return (r / scale if scale > 0 else r), scale


def mae(actual, predicted) -> float:
    u, scale = _scaled(actual, predicted)
    return scale * (math.fsum(u) / len(u))


def rmse(actual, predicted) -> float:
    u, scale = _scaled(actual, predicted)
    return scale * math.sqrt(math.fsum(u * u) / len(u))


class Standardizer:
    """Per-feature z-score; constant columns are left unscaled."""

    def __init__(self):
        self.mean_ = None
        self.scale_ = None

    def fit(self, xs):
        xs = np.asarray(xs, dtype=float)
        self.mean_ = xs.mean(axis=0)
        std = xs.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        return self

    def transform(self, xs):
        return (np.asarray(xs, dtype=float) - self.mean_) / self.scale_


@dataclass(frozen=True)
class CVResult:
    mean_mae: float
    mean_rmse: float
    fold_mae: tuple[float, ...]
    fold_rmse: tuple[float, ...]
    not_converged: int = 0


def _cross_validate_arrays(config, xs, ys, plan, standardize) -> CVResult:
    maes, rmses, not_conv = [], [], 0
    for fold in range(plan.k):
        tr, te = plan.train_indices(fold), plan.test_indices(fold)
        x_tr, x_te = xs[tr], xs[te]
        if standardize:
            scaler = Standardizer().fit(x_tr)
            x_tr, x_te = scaler.transform(x_tr), scaler.transform(x_te)
        model, stats = train(config, x_tr, ys[tr])
        if not stats.converged:
            not_conv += 1
        pred = predict_many(model, x_te)
        maes.append(mae(ys[te], pred))
        rmses.append(rmse(ys[te], pred))
    return CVResult(
        mean_mae=math.fsum(maes) / len(maes),
        mean_rmse=math.fsum(rmses) / len(rmses),
        fold_mae=tuple(maes),
        fold_rmse=tuple(rmses),
        not_converged=not_conv,
    )


def _arrays(rows, target):
    if isinstance(rows, tuple) and len(rows) == 2 and isinstance(rows[0], np.ndarray):
        return rows
    return feature_matrix(rows), target_vector(rows, target)


def cross_validate(
    config: TrainConfig,
    rows: Sequence[FeatureRow],
    target: str,
    k: int = 10,
    seed: int = 0,
    standardize: bool = False,
) -> CVResult:
    """Unweighted mean of per-fold MAE/RMSE over a seeded k-fold plan.

    With ``standardize`` the z-score statistics come from the training
    folds only.
    """
    xs, ys = _arrays(rows, target)
    plan = kfold_split(len(ys), k, seed)
    return _cross_validate_arrays(config, xs, ys, plan, standardize)


@dataclass(frozen=True)
class Grid:
    cs: tuple[float, ...] = DEFAULT_CS
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    gammas: tuple[float, ...] = DEFAULT_GAMMAS
    kernel: str = "rbf"

    def __post_init__(self):
        if self.kernel not in ("linear", "rbf"):
            raise ConfigError(f"kernel must be 'linear' or 'rbf', got {self.kernel!r}")
        for name in ("cs", "epsilons") + (("gammas",) if self.kernel == "rbf" else ()):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise ConfigError(f"grid list {name} is empty")
            if not all(math.isfinite(v) for v in values):
                raise ConfigError(f"grid list {name} has non-finite values")
            object.__setattr__(self, name, values)

    def configs(self, template: TrainConfig | None = None) -> list[TrainConfig]:
        base = template or TrainConfig(c=1.0, epsilon=0.0)
        if self.kernel == "linear":
            kernels = [KernelSpec.linear()]
        else:
            kernels = [KernelSpec.rbf(g) for g in self.gammas]
        return [
            replace(base, c=c, epsilon=e, kernel=kern)
            for c, e, kern in itertools.product(self.cs, self.epsilons, kernels)
        ]


@dataclass(frozen=True)
class GridResult:
    config: TrainConfig
    cv: CVResult

    @property
    def gamma(self):
        return self.config.kernel.gamma


def _grid_key(r: GridResult):
    return (r.cv.mean_rmse, r.config.c, -r.config.epsilon, r.config.kernel.gamma or 0.0)


def _eval_point(args):
    config, xs, ys, plan, standardize = args
    return _cross_validate_arrays(config, xs, ys, plan, standardize)


def grid_search(
    grid: Grid,
    rows,
    target: str,
    k: int = 10,
    seed: int = 0,
    standardize: bool = False,
    jobs: int = 1,
    template: TrainConfig | None = None,
) -> tuple[TrainConfig, list[GridResult]]:
    """Exhaustive search; every grid point shares one fold plan.

    The table keeps the grid's enumeration order whatever ``jobs`` is. The
    winner has the lowest mean RMSE, ties going to smaller C, then larger
    epsilon, then smaller gamma.
    """
    xs, ys = _arrays(rows, target)
    plan = kfold_split(len(ys), k, seed)
    configs = grid.configs(template)
    work = [(cfg, xs, ys, plan, standardize) for cfg in configs]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cvs = list(pool.map(_eval_point, work))
    else:
        cvs = [_eval_point(w) for w in work]
    table = [GridResult(cfg, cv) for cfg, cv in zip(configs, cvs)]
    best = min(table, key=_grid_key)
    return best.config, table


def k_sweep(config: TrainConfig, rows, target: str, ks: Sequence[int], seed: int = 0,
            standardize: bool = False) -> list[tuple[int, float]]:
    xs, ys = _arrays(rows, target)
    for k in ks:
        if k < 2:
            raise KTooSmall(f"k must be >= 2, got {k}")
        if k > len(ys):
            raise KTooLarge(f"k={k} exceeds the number of rows n={len(ys)}")
    return [
        (int(k), cross_validate(config, (xs, ys), target, k, seed, standardize).mean_rmse)
        for k in ks
    ]


@dataclass(frozen=True)
class EvalRow:
    model: str
    target: str
    mae: float
    rmse: float
    k: int
    c: float
    epsilon: float
    gamma: float | None
    not_converged: int = 0


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    CSV_HEADER = ("model", "target", "mae", "rmse", "k", "c", "epsilon", "gamma")

    def csv_rows(self):
        for r in self.rows:
            yield (r.model, r.target, r.mae, r.rmse, r.k, r.c, r.epsilon,
                   "" if r.gamma is None else r.gamma)

    def to_text(self, digits: int = 3) -> str:
        labels = {
            "shift_x_ratio": "Shift X (ratio)",
            "shift_y_ratio": "Shift Y (ratio)",
            "shift_angle_deg": "Shift Angle (deg)",
        }
        head = ("Model", "Response", "MAE", "RMSE")
        body = []
        last_model = None
        for r in self.rows:
            body.append((
                r.model if r.model != last_model else "",
                labels.get(r.target, r.target),
                f"{r.mae:.{digits}f}",
                f"{r.rmse:.{digits}f}",
            ))
            last_model = r.model
        widths = [max(len(line[i]) for line in [head] + body) for i in range(4)]
        aligns = ("<", "<", ">", ">")

        def fmt(line):
            return "  ".join(f"{cell:{a}{w}}" for cell, a, w in zip(line, aligns, widths)).rstrip()

        rule = "-" * len(fmt(head))
        return "\n".join([fmt(head), rule] + [fmt(line) for line in body]) + "\n"


def evaluate_models(
    rows,
    configs: Sequence[tuple[str, TrainConfig]] = REFERENCE_MODELS,
    targets: Sequence[str] = TARGET_ORDER,
    k: int = 10,
    seed: int = 0,
    standardize: bool = False,
) -> EvalReport:
    """Cross-validated MAE/RMSE per (model, target), models outermost."""
    targets = sorted({resolve_target(t) for t in targets}, key=TARGET_ORDER.index)
    report = EvalReport()
    xs = feature_matrix(rows)
    for name, cfg in configs:
        for t in targets:
            cv = cross_validate(cfg, (xs, target_vector(rows, t)), t, k, seed, standardize)
            report.rows.append(EvalRow(
                model=name, target=t, mae=cv.mean_mae, rmse=cv.mean_rmse, k=k,
                c=cfg.c, epsilon=cfg.epsilon, gamma=cfg.kernel.gamma,
                not_converged=cv.not_converged,
            ))
    return report


__all__ = [
    "FEATURE_NAMES", "FoldPlan", "kfold_split", "mae", "rmse", "Standardizer", "CVResult",
    "cross_validate", "Grid", "GridResult", "grid_search", "k_sweep", "EvalRow", "EvalReport",
    "evaluate_models", "REFERENCE_MODELS", "REFERENCE_LINEAR", "REFERENCE_RBF",
]
