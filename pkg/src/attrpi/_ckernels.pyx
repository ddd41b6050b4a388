# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

cnp.import_array()

DEF RECOMPUTE_EVERY = 4096


def matched_mask(const cnp.int64_t[::1] class_of, const cnp.int8_t[::1] exposed,
                 const double[::1] keys, Py_ssize_t n_classes):
    cdef Py_ssize_t n = class_of.shape[0], i, pos
    cdef cnp.int64_t[::1] n1 = np.zeros(n_classes, dtype=np.int64)
    cdef cnp.int64_t[::1] n0 = np.zeros(n_classes, dtype=np.int64)
    for i in range(n):
        if exposed[i]:
            n1[class_of[i]] += 1
        else:
            n0[class_of[i]] += 1
    order_np = np.lexsort((np.asarray(keys), np.asarray(exposed), np.asarray(class_of)))
    cdef cnp.int64_t[::1] order = order_np.astype(np.int64)
    cdef cnp.uint8_t[::1] mask = np.zeros(n, dtype=np.uint8)
    cdef cnp.int64_t prev_block = -1, block, rank = 0, k, m
    for pos in range(n):
        i = order[pos]
        k = class_of[i]
        block = k * 2 + exposed[i]
        if block != prev_block:
            rank = 0
            prev_block = block
        m = n1[k] if n1[k] < n0[k] else n0[k]
        if rank < m:
            mask[i] = 1
        rank += 1
    return np.asarray(mask)


cdef double _full_value(Py_ssize_t n, const double[::1] c, const double[:, ::1] Q,
                        const double[::1] q, double z, const cnp.uint8_t[::1] x,
                        double[::1] s, double* quad_out, double* lin_out, double* ql_out):
    cdef Py_ssize_t i, j
    cdef double quad = 0.0, lin = 0.0, ql = 0.0, acc
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if x[j]:
                acc += Q[i, j]
        s[i] = acc
        if x[i]:
            quad += acc
            lin += c[i]
            ql += q[i]
    quad_out[0] = quad
    lin_out[0] = lin
    ql_out[0] = ql
    acc = quad + ql
    return lin + z * (sqrt(acc) if acc > 0 else 0.0)


def gray_enumerate(const double[::1] c, const double[:, ::1] Q, const double[::1] q,
                   double z, const double[:, ::1] G, const double[::1] k, double tol):
    cdef Py_ssize_t n = c.shape[0], m = G.shape[0]
    cdef Py_ssize_t i, j, r
    cdef long long total = 1LL << n, t, gray, best_mask = -1, n_feas = 0
    cdef cnp.uint8_t[::1] x = np.zeros(n, dtype=np.uint8)
    cdef double[::1] s = np.zeros(n)
    cdef double[::1] gx = np.zeros(m)
    cdef double quad = 0.0, lin = 0.0, ql = 0.0, val, rad, best = -INFINITY, sign
    cdef bint ok
    for t in range(total):
        if t > 0:
            # bit that changes between gray(t-1) and gray(t)
            j = 0
            gray = t
            while (gray & 1) == 0:
                gray >>= 1
                j += 1
            if (t & RECOMPUTE_EVERY - 1) == 0:
                x[j] ^= 1
                _full_value(n, c, Q, q, z, x, s, &quad, &lin, &ql)
                for r in range(m):
                    val = 0.0
                    for i in range(n):
                        if x[i]:
                            val += G[r, i]
                    gx[r] = val
            else:
                sign = -1.0 if x[j] else 1.0
                x[j] ^= 1
                quad += sign * (2.0 * s[j]) + Q[j, j]
                lin += sign * c[j]
                ql += sign * q[j]
                for i in range(n):
                    s[i] += sign * Q[i, j]
                for r in range(m):
                    gx[r] += sign * G[r, j]
        ok = True
        for r in range(m):
            if gx[r] > k[r] + tol:
                ok = False
                break
        if not ok:
            continue
        n_feas += 1
        rad = quad + ql
        val = lin + z * (sqrt(rad) if rad > 0 else 0.0)
        gray = t ^ (t >> 1)
        if val > best or (val == best and gray < best_mask):
            best = val
            best_mask = gray
    out = np.zeros(n, dtype=np.uint8)
    if best_mask >= 0:
        for i in range(n):
            out[i] = (best_mask >> i) & 1
        # exact recomputation for the reported maximizer
        best = _full_value(n, c, Q, q, z, out, s, &quad, &lin, &ql)
    return best, out, n_feas


# ---------------------------------------------------------------------------
# projected gradient ascent


cdef inline double _clip(double v, double a, double b) nogil:
    return a if v < a else (b if v > b else v)


cdef double _dot(const double[::1] a, double[::1] b, Py_ssize_t n) nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        acc += a[i] * b[i]
    return acc


cdef void _project(double[::1] y, const double[::1] lo, const double[::1] hi,
                   const double[:, ::1] G, const double[::1] k, double[::1] out,
                   double[:, ::1] incr, double[::1] work, double[::1] prev):
    cdef Py_ssize_t n = y.shape[0], m = G.shape[0], i, s, it
    cdef double lam_lo, lam_hi, mid, acc, viol, nrm, diff
    for i in range(n):
        out[i] = _clip(y[i], lo[i], hi[i])
    if m == 0:
        return
    if m == 1:
        if _dot(G[0], out, n) <= k[0]:
            return
        lam_lo = 0.0
        lam_hi = 1.0
        while True:
            acc = 0.0
            for i in range(n):
                acc += G[0, i] * _clip(y[i] - lam_hi * G[0, i], lo[i], hi[i])
            if acc <= k[0] or lam_hi > 1e300:
                break
            lam_hi *= 2.0
        for it in range(200):
            mid = 0.5 * (lam_lo + lam_hi)
            acc = 0.0
            for i in range(n):
                acc += G[0, i] * _clip(y[i] - mid * G[0, i], lo[i], hi[i])
            if acc > k[0]:
                lam_lo = mid
            else:
                lam_hi = mid
            if lam_hi - lam_lo <= 1e-16 * (lam_hi if lam_hi > 1.0 else 1.0):
                break
        for i in range(n):
            out[i] = _clip(y[i] - lam_hi * G[0, i], lo[i], hi[i])
        return
    # Dykstra
    for s in range(m + 1):
        for i in range(n):
            incr[s, i] = 0.0
    for i in range(n):
        out[i] = y[i]
    for it in range(2000):
        for i in range(n):
            prev[i] = out[i]
        for s in range(m + 1):
            for i in range(n):
                work[i] = out[i] + incr[s, i]
            if s == 0:
                for i in range(n):
                    out[i] = _clip(work[i], lo[i], hi[i])
            else:
                viol = -k[s - 1]
                nrm = 0.0
                for i in range(n):
                    viol += G[s - 1, i] * work[i]
                    nrm += G[s - 1, i] * G[s - 1, i]
                if viol > 0 and nrm > 0:
                    for i in range(n):
                        out[i] = work[i] - (viol / nrm) * G[s - 1, i]
                else:
                    for i in range(n):
                        out[i] = work[i]
            for i in range(n):
                incr[s, i] = work[i] - out[i]
        diff = 0.0
        for i in range(n):
            if fabs(out[i] - prev[i]) > diff:
                diff = fabs(out[i] - prev[i])
        if diff <= 1e-13:
            break


cdef double _evaluate(double[::1] x, const double[::1] c, const double[:, ::1] M,
                      const double[::1] g, double h, double z, double[::1] Mx, double* r_out):
    cdef Py_ssize_t n = x.shape[0], i, j
    cdef double acc, r = h, lin = 0.0
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += M[i, j] * x[j]
        Mx[i] = acc
        r += x[i] * acc + g[i] * x[i]
        lin += c[i] * x[i]
    r_out[0] = r
    return lin + z * (sqrt(r) if r > 0 else 0.0)


cdef void _gradient(double[::1] Mx, double r, const double[::1] c, const double[::1] g,
                    double z, double[::1] out):
    cdef Py_ssize_t n = c.shape[0], i
    cdef double denom
    if z == 0.0:
        for i in range(n):
            out[i] = c[i]
        return
    denom = 2.0 * sqrt(r if r > 1e-30 else 1e-30)
    for i in range(n):
        out[i] = c[i] + z * (2.0 * Mx[i] + g[i]) / denom


def pg_maximize(const double[::1] c, const double[:, ::1] M, const double[::1] g, double h,
                double z, const double[::1] lo, const double[::1] hi,
                const double[:, ::1] G, const double[::1] k, x0, int max_iter, double tol):
    cdef Py_ssize_t n = c.shape[0], m = G.shape[0], i
    cdef double[::1] y = np.array(x0, dtype=np.float64, copy=True)
    cdef double[::1] x = np.empty(n)
    cdef double[::1] xn = np.empty(n)
    cdef double[::1] tmp = np.empty(n)
    cdef double[::1] gr = np.empty(n)
    cdef double[::1] grn = np.empty(n)
    cdef double[::1] Mx = np.empty(n)
    cdef double[::1] Mxn = np.empty(n)
    cdef double[:, ::1] incr = np.zeros((m + 1, n))
    cdef double[::1] work = np.empty(n)
    cdef double[::1] prev = np.empty(n)
    cdef double f, fn, r, rn, step = 1.0, dmax, gd, sy, ss, sv, yv
    cdef int it = 0, stall = 0
    cdef bint converged = False

    _project(y, lo, hi, G, k, x, incr, work, prev)
    f = _evaluate(x, c, M, g, h, z, Mx, &r)
    _gradient(Mx, r, c, g, z, gr)
    for it in range(1, max_iter + 1):
        for i in range(n):
            y[i] = x[i] + gr[i]
        _project(y, lo, hi, G, k, tmp, incr, work, prev)
        dmax = 0.0
        for i in range(n):
            if fabs(tmp[i] - x[i]) > dmax:
                dmax = fabs(tmp[i] - x[i])
        if dmax <= tol:
            converged = True
            break
        while True:
            for i in range(n):
                y[i] = x[i] + step * gr[i]
            _project(y, lo, hi, G, k, xn, incr, work, prev)
            gd = 0.0
            for i in range(n):
                gd += gr[i] * (xn[i] - x[i])
            fn = _evaluate(xn, c, M, g, h, z, Mxn, &rn)
            if fn >= f + 1e-4 * gd or step < 1e-14:
                break
            step *= 0.5
        _gradient(Mxn, rn, c, g, z, grn)
        sy = 0.0
        ss = 0.0
        for i in range(n):
            sv = xn[i] - x[i]
            yv = grn[i] - gr[i]
            sy += sv * yv
            ss += sv * sv
        if fn - f <= 1e-15 * (1.0 + fabs(f)):
            stall += 1
        else:
            stall = 0
        for i in range(n):
            x[i] = xn[i]
            gr[i] = grn[i]
            Mx[i] = Mxn[i]
        f = fn
        r = rn
        if stall >= 30:
            converged = True
            break
        if sy < -1e-300:
            step = ss / -sy
        else:
            step = step * 2.0
        if step < 1e-12:
            step = 1e-12
        elif step > 1e12:
            step = 1e12
    return np.asarray(x).copy(), f, it, converged
