"""Compiled inner loop of the pairwise dual solver.

Kept separate from :mod:`shiftcast.svr` so the numba-compiled code holds
only scalar loops over plain arrays.
"""

import math

import numpy as np
from numba import njit

ETA_FLOOR = 1e-12

CONVERGED = 1
STALLED = 2
BUDGET = 0


@njit(cache=True)
def kernel_row(gram, xs, cached, rbf, gamma, i):
    if cached:
        return gram[i]
    n, d = xs.shape
    out = np.empty(n)
    for t in range(n):
        acc = 0.0
        if rbf:
            for k in range(d):
                diff = xs[t, k] - xs[i, k]
                acc += diff * diff
            out[t] = math.exp(-gamma * acc)
        else:
            for k in range(d):
                acc += xs[t, k] * xs[i, k]
            out[t] = acc
    return out


@njit(cache=True)
def up_value(b, g, eps):
    # slope of the objective when b increases
    return g - eps if b >= 0.0 else g + eps


@njit(cache=True)
def low_value(b, g, eps):
    # negated slope of the objective when b decreases
    return g + eps if b <= 0.0 else g - eps


@njit(cache=True)
def pair_step(bi, bj, gi, gj, eta, c, eps):
    """Exact maximizer t of the pair objective for (bi + t, bj - t)."""
    lo = max(-c - bi, bj - c)
    hi = min(c - bi, bj + c)
    if hi <= lo:
        return 0.0, 0.0
    g = gi - gj
    base = abs(bi) + abs(bj)

    knots = np.empty(4)
    nk = 0
    knots[nk] = lo
    nk += 1
    for p in (-bi, bj):
        if lo < p < hi:
            knots[nk] = p
            nk += 1
    knots[nk] = hi
    nk += 1
    knots[:nk].sort()

    cands = np.empty(2 * nk + 1)
    nc = 0
    for q in range(nk):
        cands[nc] = knots[q]
        nc += 1
    if lo < 0.0 < hi:
        cands[nc] = 0.0
        nc += 1
    if eta > 0.0:
        for q in range(nk - 1):
            a, b = knots[q], knots[q + 1]
            mid = 0.5 * (a + b)
            si = 1.0 if bi + mid > 0.0 else -1.0
            sj = 1.0 if bj - mid > 0.0 else -1.0
            t = (g - eps * (si - sj)) / eta
            cands[nc] = min(max(t, a), b)
            nc += 1

    best_t, best = 0.0, 0.0
    for q in range(nc):
        t = cands[q]
        val = -0.5 * eta * t * t + g * t - eps * (abs(bi + t) + abs(bj - t) - base)
        if val > best:
            best_t, best = t, val
    return best_t, best


@njit(cache=True)
def snap(v, c):
    delta = 4.0 * 2.220446049250313e-16 * c
    if abs(v) <= delta:
        return 0.0
    if abs(v - c) <= delta:
        return c
    if abs(v + c) <= delta:
        return -c
    return v


@njit(cache=True)
def apply_step(beta, grad, gram, xs, cached, rbf, gamma, i, j, t, c):
    bi, bj = beta[i], beta[j]
    new_i = bi + t
    new_j = bj - t
    # land exactly on the face the step was aimed at
    if t == -bi:
        new_i = 0.0
    elif t == c - bi:
        new_i = c
    elif t == -c - bi:
        new_i = -c
    if t == bj:
        new_j = 0.0
    elif t == bj + c:
        new_j = -c
    elif t == bj - c:
        new_j = c
    new_i = snap(new_i, c)
    new_j = snap(new_j, c)
    di = new_i - bi
    dj = new_j - bj
    beta[i] = new_i
    beta[j] = new_j
    ki = kernel_row(gram, xs, cached, rbf, gamma, i)
    kj = kernel_row(gram, xs, cached, rbf, gamma, j)
    for q in range(len(grad)):
        grad[q] -= di * ki[q] + dj * kj[q]


@njit(cache=True)
def full_pass(beta, grad, gram, xs, cached, rbf, gamma, diag, c, eps, tol):
    """First pair in index order whose exact step makes progress."""
    n = len(beta)
    for i in range(n):
        if not beta[i] < c:
            continue
        up_i = up_value(beta[i], grad[i], eps)
        ki = kernel_row(gram, xs, cached, rbf, gamma, i)
        for j in range(n):
            if j == i or not beta[j] > -c:
                continue
            if up_i - low_value(beta[j], grad[j], eps) <= tol:
                continue
            eta = max(diag[i] + diag[j] - 2.0 * ki[j], 0.0)
            t, gain = pair_step(beta[i], beta[j], grad[i], grad[j], eta, c, eps)
            if t != 0.0 and gain > 0.0:
                return i, j, t
    return -1, -1, 0.0


@njit(cache=True)
def run_steps(beta, grad, gram, xs, cached, rbf, gamma, diag, c, eps, tol, max_steps):
    """Pair updates until converged, stalled, or ``max_steps`` are spent.

    i is the maximal violator of the up direction; its partner j is the
    violating index with the largest unclipped second-order gain, lowest
    index on ties.
    """
    n = len(beta)
    steps = 0
    while steps < max_steps:
        i = -1
        gmax = -np.inf
        for q in range(n):
            if beta[q] < c:
                v = up_value(beta[q], grad[q], eps)
                if v > gmax:
                    gmax = v
                    i = q
        gmin = np.inf
        jmin = -1
        for q in range(n):
            if beta[q] > -c:
                v = low_value(beta[q], grad[q], eps)
                if v < gmin:
                    gmin = v
                    jmin = q
        if i < 0 or jmin < 0 or gmax - gmin <= tol:
            return steps, CONVERGED

        ki = kernel_row(gram, xs, cached, rbf, gamma, i)
        j = -1
        best = -np.inf
        for q in range(n):
            if q == i or not beta[q] > -c:
                continue
            gap = gmax - low_value(beta[q], grad[q], eps)
            if gap > 0.0:
                eta = diag[i] + diag[q] - 2.0 * ki[q]
                if eta < ETA_FLOOR:
                    eta = ETA_FLOOR
                score = gap * gap / eta
                if score > best:
                    best = score
                    j = q

        eta = max(diag[i] + diag[j] - 2.0 * ki[j], 0.0)
        t, gain = pair_step(beta[i], beta[j], grad[i], grad[j], eta, c, eps)
        if t == 0.0 or gain <= 0.0:
            i, j, t = full_pass(beta, grad, gram, xs, cached, rbf, gamma, diag, c, eps, tol)
            if i < 0:
                return steps, STALLED
        apply_step(beta, grad, gram, xs, cached, rbf, gamma, i, j, t, c)
        steps += 1
    return steps, BUDGET
