import numpy as np
import pytest

from attrpi.data import DataError
from attrpi.design import DesignDescriptor
from attrpi.estimands import tau1_weights
from attrpi.intervals import Tau1Procedure
from attrpi.simulate import (
    CoverageReport,
    VaccineSimParams,
    coverage_study,
    gen_generic,
    gen_vaccinesim,
    generic_population,
    make_theta,
    ring,
    vaccinesim_population,
)


def test_vaccinesim_is_seeded():
    a = gen_vaccinesim(VaccineSimParams(n_neighborhoods=5), seed=3)
    b = gen_vaccinesim(VaccineSimParams(n_neighborhoods=5), seed=3)
    c = gen_vaccinesim(VaccineSimParams(n_neighborhoods=5), seed=4)
    assert a.digest() == b.digest() != c.digest()
    assert {"neighborhood", "age", "river"} <= set(a.covariates)


def test_vaccinesim_network_is_within_neighborhood():
    pop = vaccinesim_population(VaccineSimParams(n_neighborhoods=4, mean_size=6), seed=0)
    nb = pop.covariates["neighborhood"]
    assert np.all(nb[pop.network.src] == nb[pop.network.dst])


def test_vaccinesim_param_validation():
    with pytest.raises(ValueError):
        VaccineSimParams(treat_prob=1.0)


def test_ring_and_theta_models():
    net = ring(10, 2)
    assert np.all(net.out_degree() == 4)
    with pytest.raises(DataError):
        ring(4, 2)
    np.testing.assert_array_equal(make_theta(4, "half"), [1, 0, 1, 0])
    assert make_theta(10, "block", 0.3).sum() == 3


@pytest.mark.parametrize("effect", ["none", "cure", "spillover", "cause"])
def test_effect_models_keep_outcomes_binary(effect):
    d = gen_generic(n=30, effect=effect, seed=1)
    assert set(np.unique(d.y)) <= {0.0, 1.0}
    if effect == "none":
        np.testing.assert_array_equal(d.y, d.theta)


def test_coverage_study_counts_and_csv():
    pop = generic_population(n=60, theta="half", seed=0)
    design = DesignDescriptor.srs(60, 30)
    rep = coverage_study(pop, design, Tau1Procedure(0.05), lambda d: tau1_weights(d.x), reps=200, seed=1)
    assert rep.reps == 200 and rep.failed == 0
    assert 0.85 < rep.coverage <= 1.0
    assert rep.nominal == pytest.approx(0.9)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "rep,realized,lo,hi,covered,width" and len(lines) == 201
    again = coverage_study(pop, design, Tau1Procedure(0.05), lambda d: tau1_weights(d.x), reps=200, seed=1)
    assert again.to_csv() == rep.to_csv()


def test_coverage_failures_are_reported():
    pop = generic_population(n=20, seed=0)
    design = DesignDescriptor.bernoulli(20, 0.05)
    rep = coverage_study(pop, design, Tau1Procedure(0.05), lambda d: tau1_weights(d.x), reps=100)
    assert rep.failed > 0
    assert np.isnan(rep.lo).sum() == rep.failed


def test_coverage_needs_reps():
    with pytest.raises(ValueError):
        coverage_study(generic_population(n=20), DesignDescriptor.srs(20, 10), Tau1Procedure(0.05),
                       lambda d: tau1_weights(d.x), reps=10)


def test_report_pvalue():
    rep = CoverageReport(0.9, 100, np.zeros(100), np.full(100, -1.0), np.r_[np.ones(80), -np.ones(20)] * 1.0)
    assert rep.coverage == pytest.approx(0.8)
    assert rep.binomial_pvalue() < 0.01


def test_tau1_worst_case_coverage_at_95():
    # half-ones theta, N=200, N1=100; the exact lattice coverage is 0.9343
    pop = generic_population(n=200, theta="half", seed=0)
    design = DesignDescriptor.srs(200, 100)
    rep = coverage_study(pop, design, Tau1Procedure(0.025), lambda d: tau1_weights(d.x), reps=2000, seed=0)
    assert rep.coverage >= 0.94


def test_zero_theta_full_coverage():
    pop = generic_population(n=50, theta="block", p_theta=0.0, seed=0)
    rep = coverage_study(pop, DesignDescriptor.srs(50, 25), Tau1Procedure(0.05),
                         lambda d: tau1_weights(d.x), reps=100)
    assert rep.coverage == 1.0
