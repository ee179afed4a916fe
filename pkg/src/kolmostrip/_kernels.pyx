# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled prox kernels; a port of ``_kernels_py``. Keep the two in sync."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    MAXD = 8
    MAXW = 9
    MAXN = 10

cdef double LAM_TOL = 1e-12
cdef double FEAS_TOL = 1e-10
cdef double WARM_FEAS_TOL = 1e-12
cdef double PIVOT_REL = 1e-12
cdef double STEP_REL = 1e-14


cdef inline double _dot(const double[:, ::1] V, Py_ssize_t a, const double* x, int d) noexcept nogil:
    cdef double s = 0.0
    cdef int i
    for i in range(d):
        s += V[a, i] * x[i]
    return s


cdef int _solve_kkt(const double[:, ::1] V, const double* vals_x, const long* W, int k, int d,
                    double* lam, double* t_out) noexcept nogil:
    cdef double M[MAXN][MAXN + 1]
    cdef double sol[MAXN]
    cdef int n = k + 1
    cdef int a, b, col, r, p, cc, i
    cdef double q, qmax = 0.0, best, piv, fac, s, tmp
    for a in range(k):
        for b in range(a, k):
            q = 0.0
            for i in range(d):
                q += V[W[a], i] * V[W[b], i]
            M[a][b] = q
            M[b][a] = q
        if M[a][a] > qmax:
            qmax = M[a][a]
        M[a][k] = 1.0
        M[k][a] = 1.0
        M[a][n] = vals_x[W[a]]
    M[k][k] = 0.0
    M[k][n] = 1.0
    cdef double piv_tol = PIVOT_REL * qmax
    for col in range(n):
        p = col
        best = fabs(M[col][col])
        for r in range(col + 1, n):
            if fabs(M[r][col]) > best:
                best = fabs(M[r][col])
                p = r
        if best <= piv_tol or best == 0.0:
            return 0
        if p != col:
            for cc in range(n + 1):
                tmp = M[col][cc]
                M[col][cc] = M[p][cc]
                M[p][cc] = tmp
        piv = M[col][col]
        for r in range(col + 1, n):
            fac = M[r][col] / piv
            if fac != 0.0:
                for cc in range(col, n + 1):
                    M[r][cc] -= fac * M[col][cc]
    for r in range(n - 1, -1, -1):
        s = M[r][n]
        for cc in range(r + 1, n):
            s -= M[r][cc] * sol[cc]
        sol[r] = s / M[r][r]
    for a in range(k):
        lam[a] = sol[a]
    t_out[0] = sol[k]
    return 1


cdef inline void _y_from(const double[:, ::1] V, const double* x, const long* W, int k,
                         const double* lam, int d, double* y) noexcept nogil:
    cdef int a, i
    for i in range(d):
        y[i] = x[i]
    for a in range(k):
        for i in range(d):
            y[i] -= lam[a] * V[W[a], i]


cdef double _max_val(const double[:, ::1] V, const double[::1] c, const double* y, int m, int d) noexcept nogil:
    cdef double best = -INFINITY, v
    cdef Py_ssize_t j
    for j in range(m):
        v = _dot(V, j, y, d) + c[j]
        if v > best:
            best = v
    return best


cdef int _prox_one(const double[:, ::1] V, const double[::1] c, const double* x,
                   long* W, int* k_io, double* lam, double* y, double* vals_x,
                   unsigned char* in_w, long max_iter) noexcept nogil:
    cdef int m = V.shape[0]
    cdef int d = V.shape[1]
    cdef int k = k_io[0]
    cdef Py_ssize_t j
    cdef int a, i, status
    cdef long it
    cdef double t, t_w, lmin, scale, stepmax, pt, sl, s, alpha, a_j, vmax, v
    cdef double lam_w[MAXW]
    cdef double y_w[MAXD]
    cdef double py[MAXD]
    cdef long block
    cdef int i0

    for j in range(m):
        vals_x[j] = _dot(V, j, x, d) + c[j]

    if k > 0:
        if _solve_kkt(V, vals_x, W, k, d, lam_w, &t):
            lmin = lam_w[0]
            for a in range(1, k):
                if lam_w[a] < lmin:
                    lmin = lam_w[a]
            if lmin >= -LAM_TOL:
                _y_from(V, x, W, k, lam_w, d, y)
                if _max_val(V, c, y, m, d) - t <= WARM_FEAS_TOL * (1.0 + fabs(t)):
                    for a in range(k):
                        lam[a] = lam_w[a]
                    return 0

    i0 = 0
    vmax = vals_x[0]
    for j in range(1, m):
        if vals_x[j] > vmax:
            vmax = vals_x[j]
            i0 = <int>j
    W[0] = i0
    k = 1
    for i in range(d):
        y[i] = x[i]
    t = vmax
    lam[0] = 1.0
    in_w[i0] = 1
    status = 1

    for it in range(max_iter):
        if not _solve_kkt(V, vals_x, W, k, d, lam_w, &t_w):
            status = 1
            break
        _y_from(V, x, W, k, lam_w, d, y_w)
        scale = 1.0 + fabs(t)
        stepmax = fabs(t_w - t)
        for i in range(d):
            if fabs(y[i]) + 1.0 + fabs(t) > scale:
                scale = fabs(y[i]) + 1.0 + fabs(t)
            py[i] = y_w[i] - y[i]
            if fabs(py[i]) > stepmax:
                stepmax = fabs(py[i])
        pt = t_w - t
        # a full working set pins (y, t); any step left is rounding
        if k == d + 1 or stepmax <= STEP_REL * scale:
            lmin = lam_w[0]
            i0 = 0
            for a in range(1, k):
                if lam_w[a] < lmin:
                    lmin = lam_w[a]
                    i0 = a
            if lmin >= -LAM_TOL:
                for i in range(d):
                    y[i] = y_w[i]
                for a in range(k):
                    lam[a] = lam_w[a]
                if _max_val(V, c, y, m, d) - t_w <= FEAS_TOL * (1.0 + fabs(t_w)):
                    status = 0
                else:
                    status = 1
                break
            in_w[W[i0]] = 0
            for a in range(i0, k - 1):
                W[a] = W[a + 1]
            W[k - 1] = -1
            k -= 1
            for i in range(d):
                y[i] = y_w[i]
            t = t_w
            continue
        alpha = 1.0
        block = -1
        for j in range(m):
            if in_w[j]:
                continue
            s = _dot(V, j, py, d) - pt
            if s > 0.0:
                sl = t - (_dot(V, j, y, d) + c[j])
                if sl < 0.0:
                    sl = 0.0
                a_j = sl / s
                if a_j < alpha:
                    alpha = a_j
                    block = j
        for i in range(d):
            y[i] += alpha * py[i]
        t += alpha * pt
        for a in range(k):
            lam[a] = lam_w[a]
        if block >= 0:
            if k == d + 1:
                status = 1
                break
            W[k] = block
            k += 1
            in_w[block] = 1

    for a in range(k):
        if W[a] >= 0:
            in_w[W[a]] = 0
    k_io[0] = k
    return status


cdef void _classify_one(const double[:, ::1] V, const double[::1] c, const double* y, int m, int d,
                        double act_tol, double g2, double* vals, long* act,
                        unsigned char* nd, double* flat, long* piece) noexcept nogil:
    cdef Py_ssize_t j
    cdef long i0 = 0, na = 0, ia, ib, a, b
    cdef double fmax, thr, gd2, diff, dist, best = INFINITY
    cdef int i
    for j in range(m):
        vals[j] = _dot(V, j, y, d) + c[j]
    fmax = vals[0]
    for j in range(1, m):
        if vals[j] > fmax:
            fmax = vals[j]
            i0 = j
    piece[0] = i0
    nd[0] = 0
    flat[0] = INFINITY
    thr = act_tol * (1.0 + fabs(fmax))
    for j in range(m):
        if fmax - vals[j] <= thr:
            act[na] = j
            na += 1
    if na < 2:
        return
    for ia in range(na):
        a = act[ia]
        for ib in range(ia + 1, na):
            b = act[ib]
            gd2 = 0.0
            for i in range(d):
                diff = V[a, i] - V[b, i]
                gd2 += diff * diff
            if gd2 > g2:
                nd[0] = 1
                dist = fabs(vals[a] - vals[b]) / sqrt(gd2)
                if dist < best:
                    best = dist
    flat[0] = best


def classify_batch(V, c, Y, double act_tol, double grad_tol):
    cdef const double[:, ::1] Vv = np.ascontiguousarray(V, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t n = Yv.shape[0], r
    cdef int m = Vv.shape[0], d = Vv.shape[1]
    nondiff = np.zeros(n, dtype=np.uint8)
    flat = np.full(n, np.inf)
    piece = np.zeros(n, dtype=np.int64)
    cdef unsigned char[::1] ndv = nondiff
    cdef double[::1] flv = flat
    cdef long[::1] pv = piece
    cdef double* vals = <double*> malloc(m * sizeof(double))
    cdef long* act = <long*> malloc(m * sizeof(long))
    cdef double g2 = grad_tol * grad_tol
    try:
        with nogil:
            for r in range(n):
                _classify_one(Vv, cv, &Yv[r, 0], m, d, act_tol, g2, vals, act,
                              &ndv[r], &flv[r], &pv[r])
    finally:
        free(vals)
        free(act)
    return nondiff, flat, piece


def prox_batch(V, c, X, double act_tol, double grad_tol, long max_iter):
    cdef const double[:, ::1] Vv = np.ascontiguousarray(V, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], r
    cdef int m = Vv.shape[0], d = Vv.shape[1]
    cdef int a, k = 0, st
    if d > MAXD:
        raise ValueError("dimension exceeds compiled maximum")
    Y = np.empty((n, d))
    Wout = np.full((n, d + 1), -1, dtype=np.int64)
    Lout = np.zeros((n, d + 1))
    status = np.zeros(n, dtype=np.int8)
    cdef double[:, ::1] Yv = Y
    cdef long[:, ::1] Wv = Wout
    cdef double[:, ::1] Lv = Lout
    cdef signed char[::1] sv = status
    cdef long W[MAXW]
    cdef double lam[MAXW]
    cdef double* vals = <double*> malloc(m * sizeof(double))
    cdef unsigned char* in_w = <unsigned char*> malloc(m * sizeof(unsigned char))
    for a in range(MAXW):
        W[a] = -1
        lam[a] = 0.0
    for a in range(m):
        in_w[a] = 0
    try:
        with nogil:
            for r in range(n):
                st = _prox_one(Vv, cv, &Xv[r, 0], W, &k, lam, &Yv[r, 0], vals, in_w, max_iter)
                sv[r] = st
                for a in range(k):
                    Wv[r, a] = W[a]
                    Lv[r, a] = lam[a]
                if st != 0:
                    k = 0
                    for a in range(MAXW):
                        W[a] = -1
    finally:
        free(vals)
        free(in_w)
    nondiff, flat, piece = classify_batch(Vv, cv, Y, act_tol, grad_tol)
    return Y, Wout, Lout, status, nondiff, flat, piece


def eval_batch(V, c, X):
    cdef const double[:, ::1] Vv = np.ascontiguousarray(V, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], r, j
    cdef int m = Vv.shape[0], d = Vv.shape[1]
    vals = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    cdef double[::1] vv = vals
    cdef long[::1] iv = idx
    cdef double best, v
    cdef long bi
    with nogil:
        for r in range(n):
            best = _dot(Vv, 0, &Xv[r, 0], d) + cv[0]
            bi = 0
            for j in range(1, m):
                v = _dot(Vv, j, &Xv[r, 0], d) + cv[j]
                if v > best:
                    best = v
                    bi = j
            vv[r] = best
            iv[r] = bi
    return vals, idx
