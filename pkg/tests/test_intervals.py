import json
import math

import numpy as np
import pytest
from scipy.stats import norm

from attrpi.data import DataError, ExperimentData, Network, expand_aggregate, AggregateTable
from attrpi.design import DesignDescriptor, draw_rng
from attrpi.estimands import EstimandError, RegressionScheme, RegressorSpec, Tau1Scheme, contrasts_from_config
from attrpi.exposure import PropensityClasses, compute_exposure
from attrpi.intervals import (
    BetaAdjProcedure,
    FixedMomentsProcedure,
    alpha_from_level,
    beta_adj_pieces,
    format_table,
    general_interval,
    mean_cap_constraint,
    resolve_constraints,
    results_to_csv,
    tau1_interval,
    z_value,
)
from attrpi.moments import analytic_tau1_moments, analytic_stratified_moments

from importlib import resources


def _srs_data(n, n1, seed=0):
    rng = np.random.default_rng(seed)
    x = np.zeros(n, dtype=int)
    x[rng.choice(n, n1, replace=False)] = 1
    return ExperimentData(rng.integers(0, 2, n).astype(float), x, Network.empty(n))


def test_level_conversion():
    assert alpha_from_level(0.90) == pytest.approx(0.05)
    assert z_value(0.05) == pytest.approx(1.6448536269514722)
    with pytest.raises(ValueError):
        alpha_from_level(1.2)


def test_tau1_half_width_arithmetic():
    d = _srs_data(100, 50)
    r = tau1_interval(d, 0.025)
    expected = 1.959963984540054 * math.sqrt(100 / 99 * 100 / 2500 * 0.25)
    assert r.U == pytest.approx(expected, abs=1e-12)
    assert r.hi - r.lo == pytest.approx(2 * expected, abs=1e-12)
    capped = tau1_interval(d, 0.025, theta_mean_cap=0.007)
    assert capped.U == pytest.approx(1.959963984540054 * math.sqrt(100 / 99 * 100 / 2500 * 0.007 * 0.993), abs=1e-12)
    assert tau1_interval(d, 0.025, theta_mean_cap=0.8).U == pytest.approx(expected, abs=1e-15)


def test_general_pipeline_recovers_tau1_closed_form():
    # with even N, the worst theta has half ones and the variance bound is attained
    d = _srs_data(20, 8)
    design = DesignDescriptor.srs(20, 8)
    closed = tau1_interval(d, 0.05)
    for moments in (analytic_tau1_moments(design), None):
        r = general_interval(Tau1Scheme(), d, design, 0.05, moments=moments, collapse=False if moments else "auto")
        assert r.U == pytest.approx(closed.U, abs=1e-9)
        assert r.L == pytest.approx(-closed.U, abs=1e-9)
        assert r.status_U == "exact"


def test_mean_cap_uses_floor():
    a, k = mean_cap_constraint(200, 0.007)
    assert k == 1 and a.sum() == 200
    G, kk, desc = resolve_constraints([{"type": "mean_cap", "cap": 0.1}, (np.ones(10), 2)], 10)
    assert G.shape == (2, 10) and kk.tolist() == [1, 2]
    with pytest.raises(DataError):
        resolve_constraints([{"type": "mystery"}], 10)


def _cholera():
    pkg = resources.files("attrpi") / "resources"
    data = expand_aggregate(AggregateTable.read_csv(pkg / "table4.csv"))
    spec = json.loads((pkg / "cholera.json").read_text())
    return data, spec


def test_cholera_table_reproduction():
    data, spec = _cholera()
    design = DesignDescriptor.matching_observed(data, "stratified-srs", "group")
    out = {}
    for name, c in contrasts_from_config(spec):
        sch = RegressionScheme(RegressorSpec.from_config(spec, c), data, name=name)
        bm = analytic_stratified_moments(sch, data, design).refine(data.covariate("cell"))
        proc = FixedMomentsProcedure(sch, design, 0.05, bm, constraints=[{"type": "mean_cap", "cap": 0.007}])
        out[name] = proc(data)
    got = {k: tuple(round(1000 * v, 2) for v in (r.point, r.lo, r.hi)) for k, r in out.items()}
    assert got == {"beta1": (-1.30, -3.50, 0.89), "beta2": (-2.20, -4.40, -0.01),
                   "beta1+beta2": (-3.50, -5.58, -1.43)}
    assert all(r.status_U == r.status_L == "exact" for r in out.values())
    assert out["beta1"].bias == (0.0, 0.0) or max(map(abs, out["beta1"].bias)) < 1e-12


def test_widen_by_bias_moves_endpoints():
    d = _srs_data(10, 5)
    design = DesignDescriptor.srs(10, 5)
    m = analytic_tau1_moments(design)
    m.mean_w = np.r_[np.full(5, 0.01), np.full(5, -0.02)]
    plain = FixedMomentsProcedure(Tau1Scheme(), design, 0.05, m, collapse=False)(d)
    wide = FixedMomentsProcedure(Tau1Scheme(), design, 0.05, m, collapse=False, widen_by_bias=True)(d)
    assert plain.bias == pytest.approx((-0.1, 0.05))
    assert wide.lo == pytest.approx(plain.lo - 0.05)
    assert wide.hi == pytest.approx(plain.hi + 0.1)


def test_beta_adj_pieces_match_monte_carlo():
    rng = np.random.default_rng(2)
    n, n1 = 14, 7
    mask = rng.random((n, n)) < 0.3
    np.fill_diagonal(mask, False)
    net = Network(n, *np.nonzero(mask))
    pc = PropensityClasses.from_labels(net.out_degree() >= 4)
    pieces = beta_adj_pieces(net, pc, n1)
    design = DesignDescriptor.srs(n, n1)
    A = net.adjacency().toarray()
    Rm = A - pc.projector() @ A
    vs, dens = [], []
    for i in range(20_000):
        x = design.draw(draw_rng(0, i))
        v = Rm @ x / n
        vs.append(v)
        dens.append(np.sum((Rm @ x) ** 2) / n)
    vs = np.array(vs)
    np.testing.assert_allclose(pieces.mean_v, vs.mean(0), atol=4 * vs.std(0).max() / np.sqrt(len(vs)) + 1e-12)
    np.testing.assert_allclose(pieces.Q_v, np.cov(vs.T), atol=2e-4)
    assert 1 / pieces.a_bar == pytest.approx(np.mean(dens), rel=0.02)


def test_beta_adj_procedure_interval():
    rng = np.random.default_rng(5)
    n, n1 = 30, 15
    mask = rng.random((n, n)) < 0.15
    np.fill_diagonal(mask, False)
    net = Network(n, *np.nonzero(mask))
    pc = PropensityClasses.from_labels(net.out_degree())
    x = np.zeros(n, dtype=int)
    x[rng.choice(n, n1, replace=False)] = 1
    d = ExperimentData(rng.integers(0, 2, n).astype(float), x, net)
    proc = BetaAdjProcedure(net, pc, n1, 0.1, node_budget=2000)
    r = proc(d)
    assert r.lo < r.point < r.hi
    assert r.level == pytest.approx(0.9)
    assert r.U >= proc.pieces.a_bar * norm.ppf(0.95) * math.log(n) / n - 1e-12


def test_degenerate_arm_raises():
    d = ExperimentData(np.zeros(4), np.ones(4, dtype=int), Network.empty(4))
    with pytest.raises(EstimandError):
        tau1_interval(d, 0.05)


def test_output_formats():
    d = _srs_data(40, 20)
    rs = [tau1_interval(d, 0.05)]
    text = format_table(rs, "percent", 2)
    assert "90% PI" in text and text.endswith("(values percent)")
    lines = results_to_csv(rs).splitlines()
    assert lines[0].startswith("estimand,point_estimate")
    assert len(lines) == 2
