import itertools

import numpy as np
import pytest

from attrpi import _pykernels, kernels

from conftest import random_psd

IMPLS = [_pykernels]
try:
    from attrpi import _ckernels

    IMPLS.append(_ckernels)
except ImportError:  # extension not built
    pass

impl_ids = [m.__name__.rsplit(".", 1)[-1] for m in IMPLS]


def _enum_oracle(c, Q, q, z, G=None, k=None):
    best, arg = -np.inf, None
    for t in itertools.product((0, 1), repeat=c.size):
        x = np.array(t, dtype=float)
        if G is not None and np.any(G @ x > k + 1e-9):
            continue
        v = c @ x + z * np.sqrt(max(x @ Q @ x + q @ x, 0))
        if v > best + 1e-12:
            best, arg = v, x
    return best, arg


@pytest.mark.parametrize("impl", IMPLS, ids=impl_ids)
@pytest.mark.parametrize("seed", range(6))
def test_gray_enumerate_matches_oracle(impl, seed):
    rng = np.random.default_rng(seed)
    n = 3 + seed
    c = rng.uniform(-1, 1, n)
    Q = random_psd(rng, n)
    q = rng.uniform(0, 0.1, n)
    G = np.ones((1, n)) if seed % 2 else None
    k = np.array([n // 3]) if seed % 2 else None
    val, x, _ = kernels.gray_enumerate(c, Q, q, 1.645, G, k, impl=impl)
    ref, _ = _enum_oracle(c, Q, q, 1.645, G, k)
    assert val == pytest.approx(ref, abs=1e-10)
    assert c @ x + 1.645 * np.sqrt(x @ Q @ x + q @ x) == pytest.approx(val, abs=1e-10)


def test_gray_enumerate_infeasible():
    val, _, n_feas = kernels.gray_enumerate(np.ones(3), np.eye(3), np.zeros(3), 1.0,
                                            np.ones((1, 3)), np.array([-1.0]))
    assert val == -np.inf and n_feas == 0


@pytest.mark.parametrize("impl", IMPLS, ids=impl_ids)
def test_pg_maximize_concave_optimum(impl):
    rng = np.random.default_rng(4)
    n = 30
    M = -random_psd(rng, n)
    c = rng.uniform(-1, 1, n)
    g = rng.uniform(0.5, 1, n)
    lo, hi = np.zeros(n), np.ones(n)
    x, f, _, conv = kernels.pg_maximize(c, M, g, 1.0, 1.96, lo, hi, impl=impl, max_iter=20000)
    assert conv
    # first-order optimality on the box: projected gradient step is ~zero
    r = x @ M @ x + g @ x + 1.0
    grad = c + 1.96 * (2 * M @ x + g) / (2 * np.sqrt(r))
    step = np.clip(x + grad, lo, hi) - x
    assert np.max(np.abs(step)) < 1e-6


def test_implementations_agree():
    if len(IMPLS) < 2:
        pytest.skip("compiled extension not available")
    rng = np.random.default_rng(9)
    n = 40
    M = -random_psd(rng, n)
    c, g = rng.uniform(-1, 1, n), rng.uniform(0, 1, n)
    lo, hi = np.zeros(n), np.ones(n)
    G, k = np.ones((1, n)), np.array([10.0])
    a = kernels.pg_maximize(c, M, g, 0.5, 1.0, lo, hi, G, k, impl=IMPLS[0])
    b = kernels.pg_maximize(c, M, g, 0.5, 1.0, lo, hi, G, k, impl=IMPLS[1])
    assert a[1] == pytest.approx(b[1], rel=1e-7, abs=1e-9)
    cls = rng.integers(0, 5, 300)
    ex = rng.integers(0, 2, 300)
    keys = rng.random(300)
    np.testing.assert_array_equal(kernels.matched_mask(cls, ex, keys, 5, impl=IMPLS[0]),
                                  kernels.matched_mask(cls, ex, keys, 5, impl=IMPLS[1]))


@pytest.mark.parametrize("impl", IMPLS, ids=impl_ids)
def test_matched_mask_counts(impl):
    cls = np.array([0, 0, 0, 1, 1, 1, 1])
    ex = np.array([1, 0, 0, 1, 1, 1, 0])
    keys = np.array([0.5, 0.9, 0.1, 0.3, 0.2, 0.1, 0.7])
    mask = kernels.matched_mask(cls, ex, keys, 2, impl=impl)
    np.testing.assert_array_equal(mask, [1, 0, 1, 0, 0, 1, 1])


def test_project_box_and_halfspace():
    y = np.array([0.9, 0.8, 0.7, -0.2])
    x = kernels.project(y, np.zeros(4), np.ones(4), np.ones((1, 4)), np.array([1.0]))
    assert x.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all((x >= -1e-12) & (x <= 1 + 1e-12))
    # oracle: clip(y - lam) with lam found by bisection on the sum
    lo_l, hi_l = 0.0, 2.0
    for _ in range(200):
        mid = 0.5 * (lo_l + hi_l)
        lo_l, hi_l = (mid, hi_l) if np.clip(y - mid, 0, 1).sum() > 1 else (lo_l, mid)
    np.testing.assert_allclose(x, np.clip(y - lo_l, 0, 1), atol=1e-8)


def test_env_var_forces_python(monkeypatch):
    import importlib

    monkeypatch.setenv("ATTRPI_PURE_PYTHON", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.IMPLEMENTATION == "python"
    finally:
        monkeypatch.delenv("ATTRPI_PURE_PYTHON")
        importlib.reload(kernels)
