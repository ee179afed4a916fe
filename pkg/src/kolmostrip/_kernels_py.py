"""Pure-Python prox kernels (fallback when the compiled core is unavailable).

The algorithm is a primal active-set method for

    minimize  0.5 |y - x|^2 + t   subject to   <v_i, y> + c_i <= t,

started from the feasible point ``(x, f(x))``. The working set always has
affinely independent gradients, so each equality-constrained subproblem is a
nonsingular KKT system of size ``|W| + 1 <= d + 2`` in the multipliers and
``t``; ``y = x - sum_W lam_i v_i`` follows. Multipliers are the dual weights.

``_kernels.pyx`` is a line-for-line port; keep the two in sync.
"""

from __future__ import annotations

import math

import numpy as np

OK = 0
FAILED = 1

LAM_TOL = 1e-12
FEAS_TOL = 1e-10
WARM_FEAS_TOL = 1e-12
PIVOT_REL = 1e-12
STEP_REL = 1e-14


def _solve_kkt(V, vals_x, W, k):
    """Solve the KKT system for working set ``W[:k]``.

    Returns ``(lam, t)`` or ``None`` if the gradients are (numerically)
    affinely dependent.
    """
    n = k + 1
    M = [[0.0] * (n + 1) for _ in range(n)]
    qmax = 0.0
    for a in range(k):
        va = V[W[a]]
        for b in range(a, k):
            q = float(va @ V[W[b]])
            M[a][b] = q
            M[b][a] = q
        if M[a][a] > qmax:
            qmax = M[a][a]
        M[a][k] = 1.0
        M[k][a] = 1.0
        M[a][n] = vals_x[W[a]]
    M[k][k] = 0.0
    M[k][n] = 1.0
    piv_tol = PIVOT_REL * qmax
    for col in range(n):
        p = col
        best = abs(M[col][col])
        for r in range(col + 1, n):
            if abs(M[r][col]) > best:
                best = abs(M[r][col])
                p = r
        if best <= piv_tol or best == 0.0:
            return None
        if p != col:
            M[col], M[p] = M[p], M[col]
        piv = M[col][col]
        for r in range(col + 1, n):
            fac = M[r][col] / piv
            if fac != 0.0:
                rowr = M[r]
                rowc = M[col]
                for cc in range(col, n + 1):
                    rowr[cc] -= fac * rowc[cc]
    sol = [0.0] * n
    for r in range(n - 1, -1, -1):
        s = M[r][n]
        for cc in range(r + 1, n):
            s -= M[r][cc] * sol[cc]
        sol[r] = s / M[r][r]
    return sol[:k], sol[k]


def _y_from(V, x, W, k, lam):
    y = x.copy()
    for a in range(k):
        y -= lam[a] * V[W[a]]
    return y


def _prox_one(V, c, x, W, k_warm, max_iter):
    """Active-set prox at one point.

    ``W`` is a length ``d + 1`` int list; its first ``k_warm`` entries are a
    warm-start working set (``k_warm == 0`` for a cold start). Returns
    ``(y, W, k, lam, status)``.
    """
    m, d = V.shape
    vals_x = V @ x + c

    if k_warm > 0:
        sol = _solve_kkt(V, vals_x, W, k_warm)
        if sol is not None:
            lam, t = sol
            if min(lam) >= -LAM_TOL:
                y = _y_from(V, x, W, k_warm, lam)
                vy = V @ y + c
                if float(vy.max()) - t <= WARM_FEAS_TOL * (1.0 + abs(t)):
                    return y, W, k_warm, lam, OK

    i0 = int(np.argmax(vals_x))
    W = [i0] + [-1] * d
    k = 1
    y = x.copy()
    t = float(vals_x[i0])
    lam = [1.0]
    in_w = np.zeros(m, dtype=bool)
    in_w[i0] = True

    for _ in range(max_iter):
        sol = _solve_kkt(V, vals_x, W, k)
        if sol is None:
            return y, W, k, lam, FAILED
        lam_w, t_w = sol
        y_w = _y_from(V, x, W, k, lam_w)
        py = y_w - y
        pt = t_w - t
        scale = 1.0 + float(np.max(np.abs(y))) + abs(t)
        # a full working set pins (y, t); any step left is rounding
        if k == d + 1 or max(float(np.max(np.abs(py))), abs(pt)) <= STEP_REL * scale:
            lmin = min(lam_w)
            if lmin >= -LAM_TOL:
                vy = V @ y_w + c
                status = OK if float(vy.max()) - t_w <= FEAS_TOL * (1.0 + abs(t_w)) else FAILED
                return y_w, W, k, lam_w, status
            a = lam_w.index(lmin)
            in_w[W[a]] = False
            del W[a]
            W.append(-1)
            k -= 1
            y = y_w
            t = t_w
            continue
        slope = V @ py - pt
        slack = t - (V @ y + c)
        alpha = 1.0
        block = -1
        for j in np.nonzero((slope > 0) & ~in_w)[0]:
            s = slack[j]
            a_j = (s if s > 0.0 else 0.0) / slope[j]
            if a_j < alpha:
                alpha = a_j
                block = int(j)
        y = y + alpha * py
        t = t + alpha * pt
        lam = lam_w
        if block >= 0:
            if k == d + 1:
                return y, W, k, lam, FAILED
            W[k] = block
            k += 1
            in_w[block] = True
    return y, W, k, lam, FAILED


def classify_batch(V, c, Y, act_tol, grad_tol):
    """Differentiability classification at each row of ``Y``.

    Returns ``(nondiff, flat_dist, piece)``: whether two active pieces have
    gradients farther apart than ``grad_tol``; the smallest distance from y to
    a hyperplane ``{f_i = f_j}`` over such active pairs (``inf`` when
    differentiable); and the lowest-index piece attaining the max.
    """
    V = np.ascontiguousarray(V, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    n = Y.shape[0]
    nondiff = np.zeros(n, dtype=np.uint8)
    flat = np.full(n, np.inf)
    piece = np.zeros(n, dtype=np.int64)
    g2 = grad_tol * grad_tol
    for r in range(n):
        vals = V @ Y[r] + c
        i0 = int(np.argmax(vals))
        piece[r] = i0
        fmax = vals[i0]
        act = np.nonzero(fmax - vals <= act_tol * (1.0 + abs(fmax)))[0]
        if act.shape[0] < 2:
            continue
        best = math.inf
        for ia in range(act.shape[0]):
            a = act[ia]
            for ib in range(ia + 1, act.shape[0]):
                b = act[ib]
                diff = V[a] - V[b]
                gd2 = float(diff @ diff)
                if gd2 > g2:
                    nondiff[r] = 1
                    dist = abs(vals[a] - vals[b]) / math.sqrt(gd2)
                    if dist < best:
                        best = dist
        flat[r] = best
    return nondiff, flat, piece


def prox_batch(V, c, X, act_tol, grad_tol, max_iter):
    """Prox at every row of ``X``.

    Returns ``(Y, W, LAM, status, nondiff, flat_dist, piece)``; ``W`` and
    ``LAM`` are ``(n, d + 1)`` with ``-1`` / ``0`` padding.
    """
    V = np.ascontiguousarray(V, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    Y = np.empty((n, d))
    Wout = np.full((n, d + 1), -1, dtype=np.int64)
    Lout = np.zeros((n, d + 1))
    status = np.zeros(n, dtype=np.int8)
    W = [-1] * (d + 1)
    k = 0
    for r in range(n):
        y, W, k, lam, st = _prox_one(V, c, X[r], list(W), k, max_iter)
        Y[r] = y
        status[r] = st
        Wout[r, :k] = W[:k]
        Lout[r, :k] = lam[:k]
        if st != OK:
            W = [-1] * (d + 1)
            k = 0
    nondiff, flat, piece = classify_batch(V, c, Y, act_tol, grad_tol)
    return Y, Wout, Lout, status, nondiff, flat, piece


def eval_batch(V, c, X):
    """``(max_i f_i(x), lowest argmax)`` for each row."""
    vals = np.asarray(X, dtype=np.float64) @ np.asarray(V, dtype=np.float64).T + c
    idx = np.argmax(vals, axis=1)
    return vals[np.arange(vals.shape[0]), idx], idx.astype(np.int64)
