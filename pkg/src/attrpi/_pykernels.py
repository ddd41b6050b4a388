"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable, and as the
reference the extension is tested against.
"""

import numpy as np

_CHUNK_BITS = 14


def matched_mask(class_of, exposed, keys, n_classes):
    """Mark the units kept by within-class matching.

    In class ``k`` the ``min(n_k1, n_k0)`` exposed units and as many
    unexposed units with the smallest ``keys`` are kept.
    """
    class_of = np.asarray(class_of, dtype=np.int64)
    exposed = np.asarray(exposed, dtype=np.int8)
    n1 = np.bincount(class_of, weights=exposed, minlength=n_classes).astype(np.int64)
    n0 = np.bincount(class_of, minlength=n_classes) - n1
    m = np.minimum(n1, n0)
    # rank of each unit among its (class, arm) block by key
    order = np.lexsort((keys, exposed, class_of))
    cls = class_of[order]
    arm = exposed[order]
    block = cls * 2 + arm
    starts = np.r_[0, np.flatnonzero(np.diff(block)) + 1]
    lengths = np.diff(np.r_[starts, block.size])
    rank = np.arange(block.size) - np.repeat(starts, lengths)
    mask = np.zeros(class_of.size, dtype=np.uint8)
    mask[order[rank < m[cls]]] = 1
    return mask


def _objective_rows(B, c, Q, q, z):
    lin = B @ c
    rad = np.einsum("ij,ij->i", B @ Q, B) + B @ q
    return lin + z * np.sqrt(np.maximum(rad, 0.0))


def gray_enumerate(c, Q, q, z, G, k, tol):
    """Maximize ``c.x + z*sqrt(x'Qx + q.x)`` over feasible binary ``x``.

    Feasible means ``G @ x <= k + tol``. Ties go to the smallest mask
    (bit ``i`` is ``x[i]``). Returns ``(value, x, n_feasible)``; value is
    ``-inf`` when nothing is feasible.
    """
    n = c.shape[0]
    total = 1 << n
    chunk = 1 << min(n, _CHUNK_BITS)
    shifts = np.arange(n, dtype=np.int64)
    best_val, best_mask, n_feas = -np.inf, -1, 0
    for start in range(0, total, chunk):
        masks = np.arange(start, min(start + chunk, total), dtype=np.int64)
        B = ((masks[:, None] >> shifts) & 1).astype(float)
        vals = _objective_rows(B, c, Q, q, z)
        if G.shape[0]:
            ok = np.all(B @ G.T <= k + tol, axis=1)
            vals = np.where(ok, vals, -np.inf)
            n_feas += int(ok.sum())
        else:
            n_feas += masks.size
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val, best_mask = float(vals[j]), int(masks[j])
    x = np.zeros(n, dtype=np.uint8)
    if best_mask >= 0:
        x[:] = (best_mask >> shifts) & 1
    return best_val, x, n_feas


# ---------------------------------------------------------------------------
# projected gradient ascent


def project(y, lo, hi, G, k, max_sweeps=2000, tol=1e-13):
    """Euclidean projection of ``y`` onto the box intersected with ``G x <= k``."""
    x = np.clip(y, lo, hi)
    m = G.shape[0]
    if m == 0:
        return x
    if m == 1:
        a, b = G[0], k[0]
        if a @ x <= b:
            return x
        lam_lo, lam_hi = 0.0, 1.0
        while a @ np.clip(y - lam_hi * a, lo, hi) > b:
            lam_hi *= 2.0
            if lam_hi > 1e300:
                break
        for _ in range(200):
            mid = 0.5 * (lam_lo + lam_hi)
            if a @ np.clip(y - mid * a, lo, hi) > b:
                lam_lo = mid
            else:
                lam_hi = mid
            if lam_hi - lam_lo <= 1e-16 * max(1.0, lam_hi):
                break
        return np.clip(y - lam_hi * a, lo, hi)
    # Dykstra's alternating projections over the box and each halfspace
    nrm2 = np.einsum("ij,ij->i", G, G)
    sets = m + 1
    incr = np.zeros((sets, y.size))
    x = y.copy()
    for _ in range(max_sweeps):
        prev = x.copy()
        for s in range(sets):
            v = x + incr[s]
            if s == 0:
                nx = np.clip(v, lo, hi)
            else:
                a = G[s - 1]
                viol = a @ v - k[s - 1]
                nx = v - (viol / nrm2[s - 1]) * a if viol > 0 and nrm2[s - 1] > 0 else v
            incr[s] = v - nx
            x = nx
        if np.max(np.abs(x - prev)) <= tol:
            break
    return x


def _eval(x, c, M, g, h, z):
    Mx = M @ x
    r = x @ Mx + g @ x + h
    rs = np.sqrt(r) if r > 0 else 0.0
    f = c @ x + z * rs
    return f, r, Mx


def _grad(x, r, Mx, c, g, z):
    if z == 0.0:
        return c.copy()
    denom = 2.0 * np.sqrt(max(r, 1e-30))
    return c + z * (2.0 * Mx + g) / denom


def pg_maximize(c, M, g, h, z, lo, hi, G, k, x0, max_iter, tol):
    """Projected gradient ascent for ``c.x + z*sqrt(x'Mx + g.x + h)``.

    ``M`` must be negative semidefinite so the objective is concave on
    the region where the radicand is nonnegative. Uses Barzilai-Borwein
    steps safeguarded by an Armijo backtracking search.

    Returns ``(x, f, iterations, converged)``.
    """
    x = project(np.asarray(x0, dtype=float), lo, hi, G, k)
    f, r, Mx = _eval(x, c, M, g, h, z)
    gr = _grad(x, r, Mx, c, g, z)
    step = 1.0
    stall = 0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d_full = project(x + gr, lo, hi, G, k) - x
        if np.max(np.abs(d_full)) <= tol:
            converged = True
            break
        while True:
            xn = project(x + step * gr, lo, hi, G, k)
            d = xn - x
            fn, rn, Mxn = _eval(xn, c, M, g, h, z)
            if fn >= f + 1e-4 * (gr @ d) or step < 1e-14:
                break
            step *= 0.5
        grn = _grad(xn, rn, Mxn, c, g, z)
        s_vec, y_vec = xn - x, grn - gr
        sy = s_vec @ y_vec
        if fn - f <= 1e-15 * (1.0 + abs(f)):
            stall += 1
        else:
            stall = 0
        x, f, r, Mx, gr = xn, fn, rn, Mxn, grn
        if stall >= 30:
            converged = True
            break
        # concave objective: sy <= 0 along ascent steps
        step = (s_vec @ s_vec) / -sy if sy < -1e-300 else step * 2.0
        step = min(max(step, 1e-12), 1e12)
    return x, float(f), it, converged
