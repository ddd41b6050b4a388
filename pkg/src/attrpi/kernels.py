"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``ATTRPI_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

import numpy as np

from . import _pykernels

IMPLEMENTATION = "python"
_impl = _pykernels

if os.environ.get("ATTRPI_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _impl  # noqa: F811

        IMPLEMENTATION = "cython"
    except ImportError:  # extension not built
        pass


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _constraints(G, k, n):
    if G is None or len(G) == 0:
        return np.zeros((0, n)), np.zeros(0)
    return _f64(np.atleast_2d(G)), _f64(np.atleast_1d(k))


def matched_mask(class_of, exposed, keys, n_classes, impl=None):
    impl = impl or _impl
    return impl.matched_mask(
        np.ascontiguousarray(class_of, dtype=np.int64),
        np.ascontiguousarray(exposed, dtype=np.int8),
        _f64(keys),
        int(n_classes),
    )


def gray_enumerate(c, Q, q, z, G=None, k=None, tol=1e-9, impl=None):
    impl = impl or _impl
    c = _f64(c)
    G, k = _constraints(G, k, c.size)
    return impl.gray_enumerate(c, _f64(Q), _f64(q), float(z), G, k, float(tol))


def pg_maximize(c, M, g, h, z, lo, hi, G=None, k=None, x0=None, max_iter=5000, tol=1e-9, impl=None):
    impl = impl or _impl
    c = _f64(c)
    G, k = _constraints(G, k, c.size)
    lo, hi = _f64(lo), _f64(hi)
    x0 = 0.5 * (lo + hi) if x0 is None else _f64(x0)
    return impl.pg_maximize(c, _f64(M), _f64(g), float(h), float(z), lo, hi, G, k, x0,
                            int(max_iter), float(tol))


def project(y, lo, hi, G=None, k=None):
    y = _f64(y)
    G, k = _constraints(G, k, y.size)
    return _pykernels.project(y, _f64(lo), _f64(hi), G, k)
