import numpy as np
import pytest

from attrpi.data import DataError, ExperimentData, Network
from attrpi.design import DesignDescriptor
from attrpi.estimands import RegressionScheme, RegressorSpec, Tau1Scheme, WeightedScheme
from attrpi.exposure import PropensityClasses
from attrpi.moments import (
    MomentCache,
    MomentError,
    analytic_stratified_moments,
    analytic_tau1_moments,
    block_mc_moments,
    cached_mc_moments,
    clip_psd,
    expectation_controls,
    mc_weight_moments,
    srs_difference_variance,
)


def _data(n, n1, net=None, **cov):
    x = np.r_[np.ones(n1), np.zeros(n - n1)].astype(int)
    return ExperimentData(np.zeros(n), x, net or Network.empty(n), cov)


def test_analytic_tau1_variance_identity():
    n, n1 = 12, 5
    m = analytic_tau1_moments(DesignDescriptor.srs(n, n1))
    rng = np.random.default_rng(0)
    for _ in range(20):
        theta = rng.integers(0, 2, n)
        assert m.variance(theta) == pytest.approx(srs_difference_variance(theta, n1), abs=1e-12)


def test_mc_tau1_within_standard_errors():
    n, n1 = 10, 4
    d = _data(n, n1)
    design = DesignDescriptor.srs(n, n1)
    mc = mc_weight_moments(Tau1Scheme(), d, design, R=20_000, seed=1)
    exact = analytic_tau1_moments(design)
    z = np.abs(mc.Q - exact.Q) / mc.se_Q
    assert np.mean(z < 3) > 0.98
    assert np.all(np.abs(mc.mean_w) <= 4 * mc.se_mean + 1e-12)
    np.testing.assert_allclose(mc.bar_w, mc.mean_w)


def test_mc_is_thread_invariant():
    d = _data(8, 3)
    design = DesignDescriptor.srs(8, 3)
    a = mc_weight_moments(Tau1Scheme(), d, design, R=1000, seed=5, chunk=100)
    b = mc_weight_moments(Tau1Scheme(), d, design, R=1000, seed=5, chunk=100, threads=4)
    np.testing.assert_array_equal(a.Q, b.Q)


def test_mc_counts_failures():
    d = _data(6, 1)
    design = DesignDescriptor.bernoulli(6, 0.5)
    m = mc_weight_moments(Tau1Scheme(), d, design, R=400, seed=0)
    assert m.n_failed > 0
    with pytest.raises(MomentError):
        mc_weight_moments(Tau1Scheme(), d, DesignDescriptor.bernoulli(6, 0.02), R=200)


def test_stratified_analytic_matches_mc():
    strata = np.array(["a"] * 6 + ["b"] * 8)
    x = np.r_[[1, 1, 0, 0, 0, 0], [1, 1, 1, 1, 1, 0, 0, 0]].astype(int)
    d = ExperimentData(np.zeros(14), x, Network.empty(14), {"g": strata})
    design = DesignDescriptor.matching_observed(d, "stratified-srs", "g")
    spec = RegressorSpec(({"type": "treat"}, {"type": "indicator", "name": "g", "value": "a"},
                          {"type": "indicator", "name": "g", "value": "b"}), (1, 0, 0))
    sch = RegressionScheme(spec, d)
    bm = analytic_stratified_moments(sch, d, design)
    mc = block_mc_moments(sch, d, design, R=20_000, seed=2)
    np.testing.assert_allclose(bm.var, mc.var, rtol=0.05)
    np.testing.assert_allclose(bm.cov, mc.cov, atol=3e-3)
    dense = bm.to_dense()
    mcd = mc_weight_moments(sch, d, design, R=20_000, seed=2)
    np.testing.assert_allclose(dense.Q, mcd.Q, atol=5e-3)


def test_srs_block_moments_equal_tau1_closed_form():
    d = _data(9, 4)
    design = DesignDescriptor.srs(9, 4)
    bm = analytic_stratified_moments(Tau1Scheme(), d, design)
    np.testing.assert_allclose(bm.to_dense().Q, analytic_tau1_moments(design).Q, atol=1e-15)


def test_analytic_stratified_rejects_varying_weights():
    net = Network(6, [0, 1, 2], [1, 2, 3])
    d = _data(6, 3, net)
    sch = WeightedScheme(d, PropensityClasses.single(6), exposure="treatment")
    spec = RegressorSpec(({"type": "const"}, {"type": "exposure"}), (0, 1))
    with pytest.raises(MomentError):
        analytic_stratified_moments(RegressionScheme(spec, d), d, DesignDescriptor.srs(6, 3))
    with pytest.raises(MomentError, match="srs"):
        analytic_stratified_moments(sch, d, DesignDescriptor.bernoulli(6, 0.5))


def test_refine_requires_nesting():
    d = _data(6, 3, g=np.array([0, 0, 0, 1, 1, 1]))
    bm = analytic_stratified_moments(Tau1Scheme(), d, DesignDescriptor.srs(6, 3))
    fine = bm.refine(np.array([0, 0, 1, 1, 2, 2]))
    assert fine.sizes.tolist() == [2, 2, 2]
    np.testing.assert_allclose(fine.to_dense().Q, bm.to_dense().Q)
    strat = analytic_stratified_moments(Tau1Scheme(), d,
                                        DesignDescriptor.stratified(d.covariate("g"), {"0": 1, "1": 2}))
    with pytest.raises(DataError):
        strat.refine(np.array([0, 0, 1, 1, 1, 1]))


def test_clip_psd():
    Q = np.array([[1.0, 2.0], [2.0, 1.0]])
    C = clip_psd(Q)
    assert np.linalg.eigvalsh(C).min() >= -1e-12


def test_cache_roundtrip(tmp_path):
    d = _data(6, 3)
    design = DesignDescriptor.srs(6, 3)
    cache = MomentCache(tmp_path)
    a = cached_mc_moments(Tau1Scheme(), d, design, R=200, seed=0, cache=cache)
    assert len(list(tmp_path.glob("*.npz"))) == 1
    b = cached_mc_moments(Tau1Scheme(), d, design, R=200, seed=0, cache=cache)
    np.testing.assert_array_equal(a.Q, b.Q)


def test_expectation_controls_srs():
    net = Network(5, [0, 0, 1], [1, 2, 0])
    d = _data(5, 2, net)
    cols, se = expectation_controls(DesignDescriptor.srs(5, 2), d, [{"type": "exposure", "label": "z"}], R=4000)
    # E[Z_i] = out-degree * N1/N
    np.testing.assert_allclose(cols["z"], net.out_degree() * 0.4, atol=4 * se["z"].max() + 1e-12)
