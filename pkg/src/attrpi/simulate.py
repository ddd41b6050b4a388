"""Synthetic experiments with known counterfactual outcomes, and coverage studies.

A :class:`Population` fixes everything except the treatment: the
network, covariates, the uniformity-trial outcomes ``theta`` and a rule
mapping a treatment vector to observed outcomes. Coverage studies redraw
the treatment from a design and check whether each interval contains
the realized estimand ``w(X)'(Y - theta)``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import expit

from .data import DataError, ExperimentData, Network
from .design import DesignDescriptor, draw_rng
from .estimands import EstimandError
from .exposure import compute_exposure

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Population:
    """Fixed units whose observed outcomes depend on the treatment draw."""

    network: Network
    theta: np.ndarray
    outcome_fn: Callable[[np.ndarray], np.ndarray]
    covariates: dict = field(default_factory=dict)
    name: str = "population"

    @property
    def n_units(self) -> int:
        return self.theta.size

    def outcomes(self, x) -> np.ndarray:
        return self.outcome_fn(np.asarray(x))

    def experiment(self, x) -> ExperimentData:
        x = np.asarray(x).astype(np.int8)
        return ExperimentData(self.outcomes(x), x, self.network, self.covariates, self.theta)

    def with_theta(self, theta, outcome_fn=None) -> "Population":
        """Same units with ``theta`` replaced; outcomes default to ``Y = theta``."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != self.theta.shape:
            raise DataError("theta length does not match the population")
        fn = outcome_fn or (lambda x, t=theta: t.copy())
        return replace(self, theta=theta, outcome_fn=fn)


# ---------------------------------------------------------------------------
# vaccine-trial model


@dataclass(frozen=True)
class VaccineSimParams:
    """Logistic outcome and participation models of a simulated vaccine trial.

    Outcome log-odds: ``intercept + own*a + rate*V + age*age + river*river
    + interaction*a*V`` with ``a`` the unit's treatment and ``V`` the share
    of its neighborhood (participants and non-participants) assigned to
    vaccine. Participation log-odds: ``p_intercept + p_age*age +
    p_river*river + b`` with ``b ~ N(0, re_scale^2)`` per neighborhood.
    """

    intercept: float = 0.5
    own: float = -0.788
    rate: float = -2.953
    age: float = -0.098
    river: float = -0.145
    interaction: float = 0.35
    p_intercept: float = 0.2727
    p_age: float = -0.0387
    p_river: float = 0.2179
    re_scale: float = 1.0
    treat_prob: float = 2.0 / 3.0
    n_neighborhoods: int = 40
    mean_size: float = 25.0
    age_range: tuple = (0.0, 8.0)  # decades, uniform
    river_mean: float = 1.0  # km, exponential

    def __post_init__(self):
        if not 0 < self.treat_prob < 1:
            raise ValueError("treat_prob must be in (0, 1)")
        if self.n_neighborhoods < 1 or self.mean_size < 1:
            raise ValueError("need at least one neighborhood of size >= 1")
        if self.re_scale < 0:
            raise ValueError("re_scale must be nonnegative")


def _complete_within(labels) -> Network:
    labels = np.asarray(labels)
    src, dst = [], []
    for g in np.unique(labels):
        m = np.flatnonzero(labels == g)
        if m.size > 1:
            a, b = np.meshgrid(m, m, indexing="ij")
            off = a != b
            src.append(a[off])
            dst.append(b[off])
    if not src:
        return Network.empty(labels.size)
    return Network(labels.size, np.concatenate(src), np.concatenate(dst))


def vaccinesim_population(params: VaccineSimParams = VaccineSimParams(), seed: int = 0) -> Population:
    """Participants of a simulated trial, coupled to their placebo outcomes.

    Each participant has one latent uniform ``U``; ``Y = 1{U < p(a, V)}``
    and ``theta = 1{U < p(0, 0)}``, so ``Y`` and ``theta`` share randomness
    (common random numbers).
    """
    P = params
    rng = np.random.default_rng(seed)
    sizes = 1 + rng.poisson(P.mean_size - 1, P.n_neighborhoods)
    nb = np.repeat(np.arange(P.n_neighborhoods), sizes)
    age = rng.uniform(*P.age_range, nb.size)
    river = rng.exponential(P.river_mean, nb.size)
    b = rng.normal(0.0, P.re_scale, P.n_neighborhoods) if P.re_scale > 0 else np.zeros(P.n_neighborhoods)
    p_part = expit(P.p_intercept + P.p_age * age + P.p_river * river + b[nb])
    part = rng.random(nb.size) < p_part
    keep = np.flatnonzero(part)
    nb_p, age_p, river_p = nb[keep], age[keep], river[keep]
    total = sizes[nb_p].astype(float)  # neighborhood size including non-participants
    u = rng.random(keep.size)
    base = P.intercept + P.age * age_p + P.river * river_p

    def outcomes(x):
        x = np.asarray(x, dtype=float)
        treated = np.bincount(nb_p, weights=x, minlength=P.n_neighborhoods)
        v = treated[nb_p] / total
        logit = base + P.own * x + P.rate * v + P.interaction * x * v
        return (u < expit(logit)).astype(float)

    theta = (u < expit(base)).astype(float)
    cov = {"neighborhood": nb_p.astype(np.int64), "age": age_p, "river": river_p, "nbhd_total": total}
    return Population(_complete_within(nb_p), theta, outcomes, cov, "vaccinesim")


def vaccinesim_design(pop: Population, params: VaccineSimParams = VaccineSimParams(), seed: int = 0):
    return DesignDescriptor.bernoulli(pop.n_units, params.treat_prob, seed)


def gen_vaccinesim(params: VaccineSimParams = VaccineSimParams(), seed: int = 0) -> ExperimentData:
    """One simulated vaccine trial, with ``theta`` attached."""
    pop = vaccinesim_population(params, seed)
    design = vaccinesim_design(pop, params, seed)
    return pop.experiment(design.draw(draw_rng(seed, 0)))


# ---------------------------------------------------------------------------
# generic populations

EFFECTS = ("none", "cure", "spillover", "cause")


def erdos_renyi(n, mean_degree, rng) -> Network:
    p = min(1.0, mean_degree / max(n - 1, 1))
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    return Network(n, iu[keep], ju[keep], symmetric=True)


def ring(n, k) -> Network:
    """Each unit linked to its ``k`` nearest units on each side."""
    if k < 1 or 2 * k >= n:
        raise DataError("ring needs 1 <= k < n/2")
    i = np.repeat(np.arange(n), k)
    j = (i + np.tile(np.arange(1, k + 1), n)) % n
    return Network(n, i, j, symmetric=True)


def make_theta(n, model="bernoulli", p=0.5, rng=None):
    """``bernoulli``: iid with mean ``p``; ``block``: first ``round(p*n)`` ones; ``half``: alternating."""
    if model == "bernoulli":
        return (rng.random(n) < p).astype(float)
    if model == "block":
        t = np.zeros(n)
        t[: int(round(p * n))] = 1.0
        return t
    if model == "half":
        return (np.arange(n) % 2 == 0).astype(float)
    raise DataError(f"unknown theta model {model!r}")


def _effect_fn(effect, network, theta):
    if effect == "none":
        return lambda x: theta.copy()
    if effect == "cure":
        return lambda x: theta * (1 - np.asarray(x))
    if effect == "spillover":
        return lambda x: theta * (compute_exposure(network, x) == 0)
    if effect == "cause":
        return lambda x: np.maximum(theta, np.asarray(x, dtype=float))
    raise DataError(f"unknown effect model {effect!r}; expected one of {EFFECTS}")


def generic_population(n=200, network="ring", degree=2, theta="bernoulli", p_theta=0.5,
                       effect="none", seed=0) -> Population:
    """Population on an Erdos-Renyi (``er``, mean degree) or ring (``ring``, k per side)
    network with outcomes ``Y = clamp(theta + effect(X, Z))``."""
    rng = np.random.default_rng(seed)
    if network == "er":
        net = erdos_renyi(n, degree, rng)
    elif network == "ring":
        net = ring(n, int(degree))
    else:
        raise DataError(f"unknown network model {network!r}")
    th = make_theta(n, theta, p_theta, rng)
    return Population(net, th, _effect_fn(effect, net, th), {}, f"{network}-{theta}-{effect}")


def gen_generic(n=200, network="ring", degree=2, theta="bernoulli", p_theta=0.5, effect="none",
                design: DesignDescriptor | None = None, seed=0) -> ExperimentData:
    pop = generic_population(n, network, degree, theta, p_theta, effect, seed)
    design = design or DesignDescriptor.srs(n, n // 2, seed)
    return pop.experiment(design.draw(draw_rng(seed, 0)))


# ---------------------------------------------------------------------------
# coverage


@dataclass
class CoverageReport:
    nominal: float
    reps: int
    realized: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    failed: int = 0
    label: str = ""

    @property
    def covered(self) -> np.ndarray:
        ok = ~np.isnan(self.lo)
        return ok & (self.lo <= self.realized) & (self.realized <= self.hi)

    @property
    def n_valid(self) -> int:
        return int(np.sum(~np.isnan(self.lo)))

    @property
    def coverage(self) -> float:
        return float(self.covered.sum()) / max(self.n_valid, 1)

    @property
    def se(self) -> float:
        c, n = self.coverage, max(self.n_valid, 1)
        return math.sqrt(max(c * (1 - c), 1e-300) / n)

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def binomial_pvalue(self) -> float:
        """One-sided p-value for ``coverage >= nominal`` (small values reject)."""
        from scipy.stats import binom

        return float(binom.cdf(int(self.covered.sum()), self.n_valid, self.nominal))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["rep", "realized", "lo", "hi", "covered", "width"])
        cov = self.covered
        for i in range(self.realized.size):
            wr.writerow([i, repr(float(self.realized[i])), repr(float(self.lo[i])),
                         repr(float(self.hi[i])), int(cov[i]), repr(float(self.hi[i] - self.lo[i]))])
        return buf.getvalue()

    def summary(self) -> str:
        return (f"{self.label or 'coverage'}: {self.coverage:.4f} (se {self.se:.4f}) "
                f"nominal {self.nominal:.3f}, reps {self.reps}, failed {self.failed}, "
                f"mean width {np.nanmean(self.widths):.4g}")


def coverage_study(
    population: Population,
    design: DesignDescriptor,
    procedure: Callable,
    weights_fn: Callable[[ExperimentData], np.ndarray],
    reps: int = 2000,
    seed: int = 0,
    nominal: float | None = None,
    label: str = "",
) -> CoverageReport:
    """Fraction of redrawn experiments whose interval contains ``w(X)'(Y - theta)``.

    ``procedure(data)`` returns an interval result; ``weights_fn(data)``
    the weight vector of the estimand at that draw. Procedure failures are
    counted and reported (their rows carry NaN bounds), not dropped.
    """
    if reps < 100:
        raise ValueError("coverage studies need at least 100 replications")
    realized = np.full(reps, np.nan)
    lo = np.full(reps, np.nan)
    hi = np.full(reps, np.nan)
    failed = 0
    level = nominal
    for r in range(reps):
        rng = draw_rng(seed, r)
        data = population.experiment(design.draw(rng, r))
        try:
            w = weights_fn(data)
            res = procedure(data)
        except (EstimandError, DataError) as exc:
            failed += 1
            logger.debug("replication %d failed: %s", r, exc)
            continue
        realized[r] = float(w @ (data.y - data.theta))
        lo[r], hi[r] = res.lo, res.hi
        if level is None:
            level = res.level
    return CoverageReport(level if level is not None else float("nan"), reps, realized, lo, hi, failed, label)


def adversarial_theta(procedure, data: ExperimentData, population: Population, design: DesignDescriptor,
                      weights_fn, reps=2000, seed=0, side="U"):
    """Stress ``theta`` from the bound solve, and coverage with it in place.

    Returns ``(theta, report)``. ``theta`` is the incumbent of the ``U``
    (or ``L``) problem; the population keeps its outcome rule's effect
    structure only through ``theta`` (outcomes are set to ``theta``, which
    leaves the error ``w'theta`` and hence coverage unchanged).
    """
    res = procedure(data)
    theta = res.theta_U if side == "U" else res.theta_L
    if theta is None:
        raise DataError("interval procedure reported no incumbent theta")
    theta = np.asarray(theta, dtype=float)
    stressed = population.with_theta(theta)
    report = coverage_study(stressed, design, procedure, weights_fn, reps, seed,
                            label=f"adversarial-{side}")
    return theta, report
