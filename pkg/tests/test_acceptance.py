"""Acceptance criteria, one block per criterion.

Each check records a pass/fail line; the lines are printed at the end of
the pytest run (see conftest.py) or when this file is run directly:

    python tests/test_acceptance.py
"""

import itertools
import json
import math
import statistics
import time
from importlib import resources

import numpy as np
import pytest
from scipy.stats import hypergeom

from attrpi.data import AggregateTable, ExperimentData, Network, expand_aggregate
from attrpi.design import DesignDescriptor
from attrpi.estimands import (
    RegressionScheme,
    RegressorSpec,
    Tau1Scheme,
    WeightedScheme,
    beta_adj_weights,
    contrasts_from_config,
    expected_matched_weights,
    matched_contrast_weights,
    regression_weights,
    tau1_weights,
)
from attrpi.exposure import PropensityClasses, build_propensity_classes, compute_exposure
from attrpi.intervals import (
    BetaAdjProcedure,
    FixedMomentsProcedure,
    Tau1Procedure,
    analytic_stratified_moments,
    tau1_interval,
)
from attrpi.moments import analytic_tau1_moments, bias_bound, mc_weight_moments, srs_difference_variance
from attrpi.simulate import adversarial_theta, coverage_study, generic_population
from attrpi.solver import BoundProblem, brute_force, solve_bnb, solve_relaxed
from attrpi.split import METHODS, compute_split, verify_split

RESULTS: dict = {}


def record(criterion: int, part: str, ok: bool, detail: str) -> bool:
    RESULTS.setdefault(criterion, []).append((part, bool(ok), detail))
    return ok


def summary_lines() -> list[str]:
    lines = []
    for c in sorted(RESULTS):
        parts = RESULTS[c]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{p[0]}: {'ok' if p[1] else 'FAIL'} ({p[2]})" for p in parts)
        lines.append(f"criterion {c}: {'PASS' if ok else 'FAIL'} - {detail}")
    return lines


def _nd_z(alpha):
    # stdlib normal quantile, independent of scipy
    return statistics.NormalDist().inv_cdf(1 - alpha)


# ---------------------------------------------------------------------------
# 1. aggregate cholera analysis


def test_c1_cholera_point_estimates():
    t0 = time.perf_counter()
    pkg = resources.files("attrpi") / "resources"
    data = expand_aggregate(AggregateTable.read_csv(pkg / "table4.csv"))
    spec = json.loads((pkg / "cholera.json").read_text())
    design = DesignDescriptor.matching_observed(data, "stratified-srs", "group")
    got = {}
    for name, c in contrasts_from_config(spec):
        sch = RegressionScheme(RegressorSpec.from_config(spec, c), data, name=name)
        bm = analytic_stratified_moments(sch, data, design).refine(data.covariate("cell"))
        res = FixedMomentsProcedure(sch, design, 0.05, bm, constraints=[{"type": "mean_cap", "cap": 0.007}])(data)
        got[name] = res.point * 1000
    elapsed = time.perf_counter() - t0
    target = {"beta1": -1.3, "beta2": -2.2, "beta1+beta2": -3.5}
    ok_vals = all(abs(got[k] - v) <= 0.05 for k, v in target.items())
    vals = ", ".join(f"{k}={got[k]:.3f}" for k in target)
    record(1, "estimates", ok_vals, vals + " per thousand")
    record(1, "runtime", elapsed < 5.0, f"{elapsed:.2f}s incl. intervals")
    assert ok_vals and elapsed < 5.0


# ---------------------------------------------------------------------------
# 2. closed-form difference-in-means interval


def test_c2_tau1_formula():
    n, n1, alpha = 100, 50, 0.025
    x = np.r_[np.ones(n1), np.zeros(n - n1)].astype(int)
    d = ExperimentData(np.zeros(n), x, Network.empty(n))
    z = _nd_z(alpha)
    ref = z * math.sqrt(n / (n - 1) * n / (n1 * (n - n1)) * 0.25)
    ref_cap = z * math.sqrt(n / (n - 1) * n / (n1 * (n - n1)) * 0.007 * (1 - 0.007))
    got = tau1_interval(d, alpha).U
    got_cap = tau1_interval(d, alpha, theta_mean_cap=0.007).U
    ok1 = record(2, "uncapped", abs(got - ref) <= 1e-12 and round(got, 4) == 0.1970,
                 f"{got:.12f} vs {ref:.12f}")
    ok2 = record(2, "cap 0.007", abs(got_cap - ref_cap) <= 1e-12, f"{got_cap:.12f} vs {ref_cap:.12f}")
    assert ok1 and ok2


# ---------------------------------------------------------------------------
# 3. solver exactness


def _solver_instances(count=200, seed=2024):
    rng = np.random.default_rng(seed)
    for i in range(count):
        n = int(rng.integers(2, 15))
        b = rng.uniform(-1, 1, n)
        A = rng.normal(size=(n, int(rng.integers(1, n + 1))))
        Q = A @ A.T / A.shape[1] * rng.uniform(0.01, 1.0)
        z = (0.0, 1.645, 1.96)[i % 3]
        if (i // 3) % 2:
            yield BoundProblem(b, Q, z, G=np.ones((1, n)), k=[int(rng.integers(0, n))])
        else:
            yield BoundProblem(b, Q, z)


def test_c3_solver_exactness():
    t0 = time.perf_counter()
    worst, bad_relax, bad_exact = 0.0, 0, 0
    for p in _solver_instances():
        for sense in ("max", "min"):
            q = p.with_sense(sense)
            exact = brute_force(q).value
            res = solve_bnb(q)
            rel = solve_relaxed(q).value
            err = abs(res.value - exact)
            worst = max(worst, err)
            bad_exact += err > 1e-9 or res.status != "exact"
            bad_relax += (rel < exact - 1e-9) if sense == "max" else (rel > exact + 1e-9)
    elapsed = time.perf_counter() - t0
    record(3, "bnb == brute force", bad_exact == 0, f"200 instances x 2 senses, max |diff| {worst:.1e}")
    record(3, "relaxation side", bad_relax == 0, f"{bad_relax} violations")
    record(3, "runtime", elapsed < 60, f"{elapsed:.1f}s")
    assert bad_exact == 0 and bad_relax == 0 and elapsed < 60


# ---------------------------------------------------------------------------
# 4. split validity


def _split_matrices(count=100, seed=7):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(2, 51))
        A = rng.normal(size=(n, int(rng.integers(1, n + 1))))
        yield A @ A.T / A.shape[1]


def test_c4_split_validity():
    rng = np.random.default_rng(8)
    worst_lam, worst_id = -np.inf, 0.0
    for Q in _split_matrices():
        for m in METHODS:
            cert = compute_split(Q, m)
            worst_lam = max(worst_lam, verify_split(Q, cert.D).lambda_max)
            for _ in range(5):
                x = rng.integers(0, 2, Q.shape[0]).astype(float)
                lhs = x @ (Q - np.diag(cert.D)) @ x + cert.D @ x
                worst_id = max(worst_id, abs(lhs - x @ Q @ x) / max(1.0, abs(x @ Q @ x)))
    ok = record(4, "lambda_max(Q-D) <= 1e-8", worst_lam <= 1e-8, f"worst {worst_lam:.1e}")
    ok &= record(4, "binary identity", worst_id <= 1e-12, f"worst relative {worst_id:.1e}")
    assert ok


def test_c4_split_trace_ordering():
    bad_sdp, bad_eig = 0, 0
    for Q in _split_matrices():
        t = {m: compute_split(Q, m).trace for m in METHODS}
        bad_sdp += t["sdp-lite"] > t["eig-shift"] + 1e-9
        bad_eig += t["eig-shift"] > t["gershgorin"] + 1e-9
    record(4, "sdp-lite <= eig-shift", bad_sdp == 0, f"{bad_sdp}/100 violations")
    record(4, "eig-shift <= gershgorin", bad_eig == 0,
           f"{bad_eig}/100 violations; the two seeds are not ordered in general")
    assert bad_sdp == 0 and bad_eig == 0


# ---------------------------------------------------------------------------
# 5. Monte Carlo moments


def test_c5_mc_convergence_slope():
    n, n1 = 20, 10
    d = ExperimentData(np.zeros(n), np.r_[np.ones(n1), np.zeros(n - n1)].astype(int), Network.empty(n))
    design = DesignDescriptor.srs(n, n1)
    exact = analytic_tau1_moments(design).Q
    Rs = [1_000, 10_000, 100_000]
    errs = np.zeros((4, len(Rs)))
    for s in range(4):
        for j, R in enumerate(Rs):
            mc = mc_weight_moments(Tau1Scheme(), d, design, R=R, seed=100 + s, chunk=2000)
            errs[s, j] = np.linalg.norm(mc.Q - exact)
    mean_err = errs.mean(axis=0)
    slope = np.polyfit(np.log(Rs), np.log(mean_err), 1)[0]
    ok = record(5, "log-log slope", abs(slope + 0.5) <= 0.15, f"{slope:.3f} (4 seeds averaged)")
    assert ok


def test_c5_lemma_variance():
    n, n1 = 30, 12
    rng = np.random.default_rng(55)
    design = DesignDescriptor.srs(n, n1)
    d = ExperimentData(np.zeros(n), np.r_[np.ones(n1), np.zeros(n - n1)].astype(int), Network.empty(n))
    an = analytic_tau1_moments(design)
    mc = mc_weight_moments(Tau1Scheme(), d, design, R=40_000, seed=9, keep_draws=True)
    W = mc.draws
    worst_an, worst_z = 0.0, 0.0
    for _ in range(50):
        theta = rng.integers(0, 2, n).astype(float)
        lemma = srs_difference_variance(theta, n1)
        worst_an = max(worst_an, abs(an.variance(theta) - lemma))
        e = W @ theta
        e2 = (e - e.mean()) ** 2
        se = e2.std() / math.sqrt(e2.size)
        worst_z = max(worst_z, abs(mc.variance(theta) - lemma) / se)
    ok = record(5, "analytic vs lemma", worst_an <= 1e-10, f"max |diff| {worst_an:.1e}")
    ok &= record(5, "MC vs lemma", worst_z <= 3, f"max {worst_z:.2f} SE over 50 theta")
    assert ok


# ---------------------------------------------------------------------------
# 6. coverage


REPS = 2000


def _tau1_exact_coverage(n, n1, k, half_width):
    t = np.arange(0, k + 1)
    err = t / n1 - (k - t) / (n - n1)
    pmf = hypergeom(n, k, n1).pmf(t)
    return float(pmf[np.abs(err) <= half_width + 1e-12].sum())


@pytest.mark.parametrize("n", [200, 300, 500])
def test_c6_coverage_tau1(n):
    level, nominal_floor = 0.90, 0.885
    n1 = n // 2
    pop = generic_population(n, "ring", 2, "half", seed=n)
    design = DesignDescriptor.srs(n, n1)
    proc = Tau1Procedure(0.05)
    wf = lambda d: tau1_weights(d.x)  # noqa: E731
    rep = coverage_study(pop, design, proc, wf, REPS, seed=n, label="tau1")
    # adversarial theta: incumbent of the optimization pipeline's U solve
    data0 = pop.experiment(design.draw(np.random.default_rng(0)))
    general = FixedMomentsProcedure(Tau1Scheme(), design, 0.05, analytic_tau1_moments(design))
    _, adv = adversarial_theta(general, data0, pop, design, wf, REPS, seed=n + 1)
    exact = _tau1_exact_coverage(n, n1, n // 2, tau1_interval(data0, 0.05).U)
    ok = rep.coverage >= nominal_floor and adv.coverage >= nominal_floor
    record(6, f"tau1 N={n}", ok,
           f"worst-case {rep.coverage:.4f}, adversarial {adv.coverage:.4f}, exact {exact:.4f}, "
           f"nominal {level:.2f}")
    assert ok


def test_c6_coverage_beta_adj():
    t0 = time.perf_counter()
    n, n1 = 300, 150
    pop = generic_population(n, "er", 4, "half", seed=11)
    design = DesignDescriptor.srs(n, n1)
    data0 = pop.experiment(design.draw(np.random.default_rng(1)))
    classes = build_propensity_classes(data0, ["out-degree"])
    proc = BetaAdjProcedure(pop.network, classes, n1, 0.10, node_budget=300)
    wf = lambda d: beta_adj_weights(compute_exposure(d.network, d.x), classes)  # noqa: E731
    rep = coverage_study(pop, design, proc, wf, REPS, seed=12, label="beta_adj")
    _, adv = adversarial_theta(proc, data0, pop, design, wf, REPS, seed=13)
    ok = rep.coverage >= 0.885 and adv.coverage >= 0.885
    record(6, "beta_adj N=300", ok, f"worst-case {rep.coverage:.4f}, adversarial {adv.coverage:.4f}, "
           f"nominal 0.90, {time.perf_counter() - t0:.0f}s")
    assert ok


def test_c6_coverage_weighted():
    t0 = time.perf_counter()
    n = 200
    pop = generic_population(n, "er", 3, "half", seed=21)
    design = DesignDescriptor.bernoulli(n, 0.5)
    data0 = pop.experiment(design.draw(np.random.default_rng(2)))
    classes = build_propensity_classes(data0, ["out-degree"])
    sch = WeightedScheme(data0, classes, z_min=1)
    m = mc_weight_moments(sch, data0, design, R=20_000, seed=22)
    proc = FixedMomentsProcedure(sch, design, 0.05, m, node_budget=500)
    wf = lambda d: sch.weights(d.x)  # noqa: E731
    rep = coverage_study(pop, design, proc, wf, REPS, seed=23, label="weighted")
    _, adv_u = adversarial_theta(proc, data0, pop, design, wf, REPS, seed=24, side="U")
    _, adv_l = adversarial_theta(proc, data0, pop, design, wf, REPS, seed=25, side="L")
    ok = min(rep.coverage, adv_u.coverage, adv_l.coverage) >= 0.885
    record(6, "weighted N=200", ok, f"worst-case {rep.coverage:.4f}, adversarial U {adv_u.coverage:.4f}, "
           f"L {adv_l.coverage:.4f}, nominal 0.90, {time.perf_counter() - t0:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 7. estimand oracles


def _normal_equations_contrast(D, c):
    # independent oracle: solve the normal equations for every unit-indicator outcome
    beta = np.linalg.solve(D.T @ D, D.T)
    return np.asarray(c) @ beta


def test_c7_regression_weights():
    rng = np.random.default_rng(77)
    worst = 0.0
    term_pool = [{"type": "exposure"}, {"type": "threshold", "z_min": 1}, {"type": "covariate", "name": "age"},
                 {"type": "interaction", "of": [{"type": "treat"}, {"type": "exposure"}]}]
    done = 0
    while done < 100:
        n = int(rng.integers(8, 25))
        mask = rng.random((n, n)) < 0.3
        np.fill_diagonal(mask, False)
        x = (rng.random(n) < 0.5).astype(int)
        d = ExperimentData(np.zeros(n), x, Network(n, *np.nonzero(mask)), {"age": rng.normal(size=n)})
        extra = [term_pool[i] for i in rng.choice(len(term_pool), int(rng.integers(0, 3)), replace=False)]
        terms = ({"type": "const"}, {"type": "treat"}, *extra)
        c = rng.normal(size=len(terms))
        spec = RegressorSpec(terms, tuple(c))
        from attrpi.estimands import design_matrix

        D = design_matrix(spec, d, x)
        if np.linalg.matrix_rank(D) < D.shape[1] or np.linalg.cond(D.T @ D) > 1e8:
            continue
        worst = max(worst, np.max(np.abs(regression_weights(spec, d, x) - _normal_equations_contrast(D, c))))
        done += 1
    ok = record(7, "OLS contrast weights", worst <= 1e-9, f"100 instances, max |diff| {worst:.1e}")
    assert ok


def test_c7_expected_matched():
    rng = np.random.default_rng(78)
    n = 14
    W = (rng.random(n) < 0.45).astype(int)
    pc = PropensityClasses.from_labels(rng.integers(0, 3, n))
    target = expected_matched_weights(W, pc)
    R = 100_000
    s1 = np.zeros(n)
    s2 = np.zeros(n)
    for seed in range(R):
        w, _ = matched_contrast_weights(W, pc, rng_seed=seed)
        s1 += w
        s2 += w * w
    mean = s1 / R
    se = np.sqrt(np.maximum(s2 / R - mean**2, 0) / R)
    zmax = float(np.max(np.where(se > 0, np.abs(mean - target) / np.where(se > 0, se, 1), 0)))
    exact_zero = bool(np.all(np.abs(mean - target)[se == 0] <= 1e-10))
    ok = record(7, "expected matched vs seed MC", zmax <= 3 and exact_zero, f"max {zmax:.2f} SE, 1e5 seeds")
    assert ok


def test_c7_bias_bound_enumeration():
    rng = np.random.default_rng(79)
    bad = 0
    for n in range(1, 16):
        m = rng.normal(size=n)
        vals = [math.fsum(m[np.array(t, dtype=bool)]) for t in itertools.product((0, 1), repeat=n)]
        lo, hi = bias_bound(m)
        bad += not (lo == min(vals) and hi == max(vals))
    ok = record(7, "bias bound vs enumeration", bad == 0, f"N=1..15, {bad} mismatches")
    assert ok


if __name__ == "__main__":
    import sys

    for name, fn in list(globals().items()):
        if name.startswith("test_c") and callable(fn):
            params = [200, 300, 500] if name == "test_c6_coverage_tau1" else [None]
            for p in params:
                try:
                    fn(p) if p is not None else fn()
                except AssertionError:
                    pass
    print("\n".join(summary_lines()))
    sys.exit(0 if all(ok for parts in RESULTS.values() for _, ok, _ in parts) else 1)
