"""Compiled coordinate-descent kernels for elastic-net logistic regression.

Both kernels take the design matrix in CSC form and update the weights,
intercepts and cached scores in place.  Every coordinate takes a Newton step
on the smooth part, soft-thresholded for the L1 term, followed by a
backtracking line search on the full penalized objective, so the objective
never increases.
"""

import math

import numpy as np
from numba import njit

SIGMA = 0.01
MAX_HALVINGS = 30
CURVATURE_FLOOR = 1e-12


@njit(cache=True)
def _log1pexp(z):
    if z > 0.0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


@njit(cache=True)
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _shrink(z, gamma):
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


@njit(cache=True)
def _newton_step(w, g, h, l1):
    # minimizer of g*d + h*d^2/2 + l1*|w+d| over d
    return _shrink(h * w - g, l1) / h - w


@njit(cache=True)
def binary_kkt(indptr, indices, data, t1, v, w, s, inv_norm, l1, l2):
    n = s.shape[0]
    r = np.empty(n)
    g0 = 0.0
    for i in range(n):
        r[i] = v[i] * _sigmoid(s[i]) - t1[i]
        g0 += r[i]
    worst = abs(g0 * inv_norm)
    for j in range(w.shape[0]):
        g = 0.0
        for k in range(indptr[j], indptr[j + 1]):
            g += data[k] * r[indices[k]]
        g = g * inv_norm + 2.0 * l2 * w[j]
        if w[j] > 0.0:
            viol = abs(g + l1)
        elif w[j] < 0.0:
            viol = abs(g - l1)
        else:
            viol = max(abs(g) - l1, 0.0)
        if viol > worst:
            worst = viol
    return worst


@njit(cache=True)
def binary_sweeps(indptr, indices, data, t1, v, w, b, s, inv_norm, l1, l2, n_sweeps, tol):
    """Run up to ``n_sweeps`` passes; ``b`` is a length-1 array holding the intercept.

    Returns (sweeps_run, converged, kkt_violation).
    """
    n = s.shape[0]
    kkt = np.inf
    for sweep in range(n_sweeps):
        # intercept: unpenalized, touches every row
        g = 0.0
        h = 0.0
        for i in range(n):
            p = _sigmoid(s[i])
            g += v[i] * p - t1[i]
            h += v[i] * p * (1.0 - p)
        g *= inv_norm
        h = h * inv_norm + CURVATURE_FLOOR
        d = -g / h
        if d != 0.0:
            step = 1.0
            for _ in range(MAX_HALVINGS):
                delta = step * d
                change = 0.0
                for i in range(n):
                    change += v[i] * (_log1pexp(s[i] + delta) - _log1pexp(s[i])) - t1[i] * delta
                change *= inv_norm
                if change <= SIGMA * step * g * d:
                    b[0] += delta
                    for i in range(n):
                        s[i] += delta
                    break
                step *= 0.5

        for j in range(w.shape[0]):
            lo = indptr[j]
            hi = indptr[j + 1]
            if lo == hi and w[j] == 0.0:
                continue
            g = 0.0
            h = 0.0
            for k in range(lo, hi):
                i = indices[k]
                x = data[k]
                p = _sigmoid(s[i])
                g += x * (v[i] * p - t1[i])
                h += x * x * v[i] * p * (1.0 - p)
            g = g * inv_norm + 2.0 * l2 * w[j]
            h = h * inv_norm + 2.0 * l2 + CURVATURE_FLOOR
            d = _newton_step(w[j], g, h, l1)
            if d == 0.0:
                continue
            wj = w[j]
            bound = g * d + l1 * (abs(wj + d) - abs(wj))
            step = 1.0
            for _ in range(MAX_HALVINGS):
                delta = step * d
                change = 0.0
                for k in range(lo, hi):
                    i = indices[k]
                    z = delta * data[k]
                    change += v[i] * (_log1pexp(s[i] + z) - _log1pexp(s[i])) - t1[i] * z
                change *= inv_norm
                nw = wj + delta
                change += l2 * (nw * nw - wj * wj) + l1 * (abs(nw) - abs(wj))
                if change <= SIGMA * step * bound:
                    w[j] = nw
                    for k in range(lo, hi):
                        s[indices[k]] += delta * data[k]
                    break
                step *= 0.5

        kkt = binary_kkt(indptr, indices, data, t1, v, w, s, inv_norm, l1, l2)
        if kkt <= tol:
            return sweep + 1, True, kkt
    return n_sweeps, False, kkt


@njit(cache=True)
def _row_lse(S, i):
    m = S[i, 0]
    for c in range(1, S.shape[1]):
        if S[i, c] > m:
            m = S[i, c]
    acc = 0.0
    for c in range(S.shape[1]):
        acc += math.exp(S[i, c] - m)
    return m + math.log(acc)


@njit(cache=True)
def _lse_shift(S, lse, i, c, z):
    """Change in the log-normalizer of row ``i`` when ``S[i, c]`` moves by ``z``."""
    p = math.exp(S[i, c] - lse[i])
    if z > 0.0:
        inner = p + (1.0 - p) * math.exp(-z)
        if inner > 1e-300:
            return z + math.log(inner)
    else:
        inner = 1.0 + p * math.expm1(z)
        if inner > 1e-300:
            return math.log(inner)
    # fall back to exact recomputation when the shortcut loses all precision
    old = S[i, c]
    S[i, c] = old + z
    out = _row_lse(S, i) - lse[i]
    S[i, c] = old
    return out


@njit(cache=True)
def multinomial_kkt(indptr, indices, data, T, v, W, S, lse, inv_norm, l1, l2):
    n, n_classes = S.shape
    R = np.empty((n, n_classes))
    worst = 0.0
    for c in range(n_classes):
        g0 = 0.0
        for i in range(n):
            R[i, c] = v[i] * math.exp(S[i, c] - lse[i]) - T[i, c]
            g0 += R[i, c]
        worst = max(worst, abs(g0 * inv_norm))
    for j in range(W.shape[1]):
        for c in range(n_classes):
            g = 0.0
            for k in range(indptr[j], indptr[j + 1]):
                g += data[k] * R[indices[k], c]
            g = g * inv_norm + 2.0 * l2 * W[c, j]
            if W[c, j] > 0.0:
                viol = abs(g + l1)
            elif W[c, j] < 0.0:
                viol = abs(g - l1)
            else:
                viol = max(abs(g) - l1, 0.0)
            if viol > worst:
                worst = viol
    return worst


@njit(cache=True)
def multinomial_sweeps(indptr, indices, data, T, v, W, b, S, lse, inv_norm, l1, l2, n_sweeps, tol):
    """Cyclic class-then-feature coordinate descent for the softmax model.

    ``T[i, c]`` is the weight example ``i`` puts on class ``c`` (soft targets
    allowed); ``v[i]`` is the row total.  ``S`` and ``lse`` cache the scores
    and per-row log-normalizers; ``lse`` is refreshed exactly once per sweep.
    """
    n, n_classes = S.shape
    kkt = np.inf
    for sweep in range(n_sweeps):
        for i in range(n):
            lse[i] = _row_lse(S, i)
        for c in range(n_classes):
            g = 0.0
            h = 0.0
            for i in range(n):
                p = math.exp(S[i, c] - lse[i])
                g += v[i] * p - T[i, c]
                h += v[i] * p * (1.0 - p)
            g *= inv_norm
            h = h * inv_norm + CURVATURE_FLOOR
            d = -g / h
            if d != 0.0:
                step = 1.0
                for _ in range(MAX_HALVINGS):
                    delta = step * d
                    change = 0.0
                    for i in range(n):
                        change += v[i] * _lse_shift(S, lse, i, c, delta) - T[i, c] * delta
                    change *= inv_norm
                    if change <= SIGMA * step * g * d:
                        b[c] += delta
                        for i in range(n):
                            lse[i] += _lse_shift(S, lse, i, c, delta)
                            S[i, c] += delta
                        break
                    step *= 0.5

            for j in range(W.shape[1]):
                lo = indptr[j]
                hi = indptr[j + 1]
                if lo == hi and W[c, j] == 0.0:
                    continue
                g = 0.0
                h = 0.0
                for k in range(lo, hi):
                    i = indices[k]
                    x = data[k]
                    p = math.exp(S[i, c] - lse[i])
                    g += x * (v[i] * p - T[i, c])
                    h += x * x * v[i] * p * (1.0 - p)
                g = g * inv_norm + 2.0 * l2 * W[c, j]
                h = h * inv_norm + 2.0 * l2 + CURVATURE_FLOOR
                wj = W[c, j]
                d = _newton_step(wj, g, h, l1)
                if d == 0.0:
                    continue
                bound = g * d + l1 * (abs(wj + d) - abs(wj))
                step = 1.0
                for _ in range(MAX_HALVINGS):
                    delta = step * d
                    change = 0.0
                    for k in range(lo, hi):
                        i = indices[k]
                        z = delta * data[k]
                        change += v[i] * _lse_shift(S, lse, i, c, z) - T[i, c] * z
                    change *= inv_norm
                    nw = wj + delta
                    change += l2 * (nw * nw - wj * wj) + l1 * (abs(nw) - abs(wj))
                    if change <= SIGMA * step * bound:
                        W[c, j] = nw
                        for k in range(lo, hi):
                            i = indices[k]
                            z = delta * data[k]
                            lse[i] += _lse_shift(S, lse, i, c, z)
                            S[i, c] += z
                        break
                    step *= 0.5

        for i in range(n):
            lse[i] = _row_lse(S, i)
        kkt = multinomial_kkt(indptr, indices, data, T, v, W, S, lse, inv_norm, l1, l2)
        if kkt <= tol:
            return sweep + 1, True, kkt
    return n_sweeps, False, kkt
