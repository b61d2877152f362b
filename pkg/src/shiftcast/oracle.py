"""Slow reference solver for the epsilon-SVR dual, for tests and debugging.

Shares nothing with :mod:`shiftcast.svr` beyond the configuration type:
the kernels are re-derived here and the optimizer is accelerated proximal
gradient ascent rather than pairwise updates. Each step takes a gradient
step on the smooth part ``y.beta - 1/2 beta'K beta`` and then applies the
exact proximal map of ``eps*|beta|_1`` restricted to
``{sum(beta) = 0, |beta_i| <= C}``; that map is a clipped soft-threshold
shifted by a scalar multiplier, found by a piecewise-linear root search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteInput, TooLarge

MAX_POINTS = 64


@dataclass(frozen=True)
class OracleSolution:
    betas: tuple[float, ...]
    dual_objective: float
    iterations: int
    bias: float


def _gram(config, xs):
    n = len(xs)
    k = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            if config.kernel.variant == "linear":
                k[i, j] = math.fsum(a * b for a, b in zip(xs[i], xs[j]))
            else:
                sq = math.fsum((a - b) ** 2 for a, b in zip(xs[i], xs[j]))
                k[i, j] = math.exp(-config.kernel.gamma * sq)
    return k


def _prox(v, tau, c):
    """argmin 1/2|b - v|^2 + tau*|b|_1  s.t. sum(b) = 0, |b_i| <= c."""

    def shape(lam):
        z = v - lam
        return np.clip(np.sign(z) * np.maximum(np.abs(z) - tau, 0.0), -c, c)

    # sum(shape(lam)) is non-increasing and piecewise linear between these knots
    knots = np.unique(np.concatenate([v - tau - c, v - tau, v + tau, v + tau + c]))
    sums = np.array([shape(k).sum() for k in knots])
    # sums[0] == n*c >= 0 >= -n*c == sums[-1]
    idx = int(np.searchsorted(-sums, 0.0))
    if sums[idx] == 0.0 or idx == 0:
        return shape(knots[idx])
    l0, l1 = knots[idx - 1], knots[idx]
    s0, s1 = sums[idx - 1], sums[idx]
    lam = l0 + (l1 - l0) * s0 / (s0 - s1)
    return shape(lam)


def _dual(k, y, eps, beta):
    return float(-0.5 * beta @ k @ beta - eps * np.abs(beta).sum() + y @ beta)


def _bias(k, y, eps, c, beta, snap=1e-9):
    """Bias from the KKT conditions.

    Accelerated iterates approach the box faces from inside, so values
    within ``snap * max(1, c)`` of 0 or +-c are classified as sitting on it.
    """
    delta = snap * max(1.0, c)
    grad = y - k @ beta
    at_zero = np.abs(beta) <= delta
    at_top = beta >= c - delta
    at_bottom = beta <= -c + delta
    free = ~(at_zero | at_top | at_bottom)
    if free.any():
        return float(np.mean(grad[free] - eps * np.sign(beta[free])))
    lower, upper = -math.inf, math.inf
    for g, z, top, bottom, b in zip(grad, at_zero, at_top, at_bottom, beta):
        # slope of increasing b must be <= bias, slope of decreasing >= bias
        if not top:
            lower = max(lower, g - eps if (z or b > 0) else g + eps)
        if not bottom:
            upper = min(upper, g + eps if (z or b < 0) else g - eps)
    if math.isinf(lower) and math.isinf(upper):
        return 0.0
    if math.isinf(lower):
        return float(upper)
    if math.isinf(upper):
        return float(lower)
    return float(0.5 * (lower + upper))


def qp_reference_solve(config, xs, ys, max_iter=2_000_000, patience=1000) -> OracleSolution:
    """Solve the dual to high accuracy for small problems (n <= 64).

    Runs until ``max_iter`` or until the objective has moved by less than
    1e-14 (relative) for ``patience`` consecutive steps; returns the best
    iterate seen together with its bias.
    """
    xs = [list(map(float, np.atleast_1d(x))) for x in xs]
    y = np.asarray(ys, dtype=float).reshape(-1)
    n = len(y)
    if n > MAX_POINTS:
        raise TooLarge(f"oracle is limited to {MAX_POINTS} points, got {n}")
    if n != len(xs):
        raise ValueError("xs and ys differ in length")
    if not (np.isfinite(y).all() and all(math.isfinite(a) for x in xs for a in x)):
        raise NonFiniteInput("oracle input contains NaN or infinity")
    c, eps = float(config.c), float(config.epsilon)
    if n == 0:
        return OracleSolution((), 0.0, 0, 0.0)

    k = _gram(config, xs)
    lip = float(np.linalg.eigvalsh(k).max()) if n else 0.0
    step = 1.0 / lip if lip > 0 else 1.0

    rng = np.random.default_rng(config.seed)
    beta = np.zeros(n)
    if config.seed:
        beta = _prox(rng.uniform(-c, c, n), 0.0, c)
    best_beta, best_obj = beta.copy(), _dual(k, y, eps, beta)
    zero_obj = _dual(k, y, eps, np.zeros(n))
    if zero_obj > best_obj:
        best_beta, best_obj = np.zeros(n), zero_obj

    z, momentum = beta.copy(), 1.0
    prev_obj, quiet, it = best_obj, 0, 0
    for it in range(1, max_iter + 1):
        nxt = _prox(z + step * (y - k @ z), step * eps, c)
        obj = _dual(k, y, eps, nxt)
        if obj < prev_obj and momentum > 1.0:
            # adaptive restart: drop momentum when the objective goes backwards
            momentum, z = 1.0, beta.copy()
            continue
        m_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * momentum * momentum))
        z = nxt + ((momentum - 1.0) / m_next) * (nxt - beta)
        beta, momentum = nxt, m_next
        if obj > best_obj:
            best_beta, best_obj = beta.copy(), obj
        if abs(obj - prev_obj) <= 1e-14 * max(1.0, abs(obj)):
            quiet += 1
            if quiet >= patience:
                break
        else:
            quiet = 0
        prev_obj = obj

    return OracleSolution(
        betas=tuple(float(b) for b in best_beta),
        dual_objective=best_obj,
        iterations=it,
        bias=_bias(k, y, eps, c, best_beta),
    )


def reference_predict(config, xs, solution: OracleSolution, x) -> float:
    x = list(map(float, np.atleast_1d(x)))
    total = [solution.bias]
    for xi, b in zip(xs, solution.betas):
        xi = list(map(float, np.atleast_1d(xi)))
        if config.kernel.variant == "linear":
            kv = math.fsum(p * q for p, q in zip(xi, x))
        else:
            kv = math.exp(-config.kernel.gamma * math.fsum((p - q) ** 2 for p, q in zip(xi, x)))
        total.append(b * kv)
    return math.fsum(total)
