"""Prediction intervals for attributable-effect estimands.

All intervals have the form ``w'Y - [U, L]``: the estimand is
``w'(Y - theta)`` and ``[L, U]`` bounds the unobservable error
``w'theta`` over binary ``theta`` (optionally constrained).
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .data import DataError, ExperimentData
from .design import DesignDescriptor
from .estimands import (
    EstimandError,
    Tau1Scheme,
    WeightScheme,
    beta_adj_weights,
    point_estimate,
    tau1_weights,
)
from .exposure import PropensityClasses, compute_exposure
from .moments import (
    DEFAULT_R,
    BlockMoments,
    MomentError,
    WeightMoments,
    analytic_stratified_moments,
    analytic_tau1_moments,
    bias_bound,
    cached_mc_moments,
    clip_psd,
)
from .solver import (
    BoundProblem,
    SolveResult,
    collapse_exchangeable,
    detect_exchangeable_groups,
    problem_from_block_moments,
    solve,
)

SCALES = {"raw": 1.0, "percent": 100.0, "per-thousand": 1000.0}


def alpha_from_level(level: float) -> float:
    """``alpha`` for a ``1 - 2*alpha`` interval."""
    if not 0 < level < 1:
        raise ValueError("coverage level must be in (0, 1)")
    return (1.0 - level) / 2.0


def z_value(alpha: float) -> float:
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must be in (0, 0.5)")
    return float(norm.ppf(1.0 - alpha))


@dataclass
class IntervalResult:
    estimand: str
    point: float
    bias: tuple[float, float]
    alpha: float
    level: float
    U: float
    L: float
    lo: float
    hi: float
    status_U: str = "exact"
    status_L: str = "exact"
    constraints: list = field(default_factory=list)
    split_method: str | None = None
    moments: dict = field(default_factory=dict)
    theta_U: np.ndarray | None = field(default=None, repr=False)
    theta_L: np.ndarray | None = field(default=None, repr=False)
    widened_by_bias: bool = False

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)

    def contains(self, value) -> bool:
        return self.lo <= value <= self.hi

    def to_dict(self) -> dict:
        return {
            "estimand": self.estimand, "point_estimate": self.point,
            "bias_lo": self.bias[0], "bias_hi": self.bias[1],
            "alpha": self.alpha, "level": self.level, "U": self.U, "L": self.L,
            "pi_lo": self.lo, "pi_hi": self.hi, "status_U": self.status_U,
            "status_L": self.status_L, "constraints": self.constraints,
            "split_method": self.split_method, "moments": self.moments,
            "widened_by_bias": self.widened_by_bias,
        }


# ---------------------------------------------------------------------------
# difference in means, closed form


def tau1_interval(data: ExperimentData, alpha: float, theta_mean_cap: float | None = None) -> IntervalResult:
    """Closed-form interval for the difference in attributable effects.

    Half-width ``z_{1-alpha} * sqrt(N/(N-1) * N/(N1*N0) * s2)`` with
    ``s2 = 1/4``, or ``cap*(1-cap)`` when the mean of ``theta`` is known
    to be at most ``cap < 1/2``. Level ``1 - 2*alpha``.
    """
    x = np.asarray(data.x)
    n = x.size
    n1 = int(x.sum())
    n0 = n - n1
    w = tau1_weights(x)  # raises for a degenerate arm
    s2 = 0.25
    constraints = []
    if theta_mean_cap is not None:
        if not 0 <= theta_mean_cap <= 1:
            raise ValueError("theta_mean_cap must lie in [0, 1]")
        if theta_mean_cap < 0.5:
            s2 = theta_mean_cap * (1.0 - theta_mean_cap)
        constraints.append({"type": "mean_cap", "cap": theta_mean_cap})
    half = z_value(alpha) * math.sqrt((n / (n - 1)) * (n / (n1 * n0)) * s2)
    est = point_estimate(w, data.y)
    return IntervalResult("tau1", est, (0.0, 0.0), alpha, 1 - 2 * alpha, half, -half,
                          est - half, est + half, "closed-form", "closed-form", constraints,
                          None, {"method": "analytic"})


# ---------------------------------------------------------------------------
# constraints


def mean_cap_constraint(n_units: int, cap: float):
    """``sum(theta) <= floor(cap * N)``; integer sums make the floor exact."""
    return np.ones(n_units), math.floor(cap * n_units + 1e-9)


def resolve_constraints(constraints, n_units: int):
    """Turn constraint configs into per-unit ``(G, k)`` plus a description list.

    Accepted entries: ``{"type": "mean_cap", "cap": c}``,
    ``{"type": "linear", "coef": [...], "bound": b}`` or a ``(coef, bound)`` pair.
    """
    rows, bounds, desc = [], [], []
    for c in constraints or []:
        if isinstance(c, dict):
            kind = c.get("type", "linear")
            if kind == "mean_cap":
                a, b = mean_cap_constraint(n_units, float(c["cap"]))
            elif kind == "linear":
                a, b = np.asarray(c["coef"], dtype=float), float(c["bound"])
            else:
                raise DataError(f"unknown constraint type {kind!r}")
            desc.append(dict(c))
        else:
            a, b = np.asarray(c[0], dtype=float), float(c[1])
            desc.append({"type": "linear", "bound": b})
        if a.size != n_units:
            raise DataError("constraint coefficient length must equal the number of units")
        rows.append(a)
        bounds.append(b)
    if not rows:
        return None, None, desc
    return np.vstack(rows), np.asarray(bounds), desc


def _block_constraints(G, labels, n_blocks):
    if G is None:
        return None
    out = np.zeros((G.shape[0], n_blocks))
    for g in range(n_blocks):
        cols = G[:, labels == g]
        if cols.size and np.ptp(cols, axis=1).max() > 1e-12:
            raise DataError("constraint coefficients must be constant within exchangeable blocks")
        out[:, g] = cols[:, 0]
    return out


# ---------------------------------------------------------------------------
# general pipeline


def default_moments(scheme: WeightScheme, data: ExperimentData, design: DesignDescriptor,
                    R: int = DEFAULT_R, seed: int = 0, threads: int = 1):
    """Closed-form moments when available, otherwise Monte Carlo."""
    if design.kind in ("srs", "stratified-srs"):
        try:
            return analytic_stratified_moments(scheme, data, design, seed=seed)
        except (MomentError, EstimandError):
            pass
        if isinstance(scheme, Tau1Scheme) and design.kind == "srs":
            return analytic_tau1_moments(design)
    return cached_mc_moments(scheme, data, design, R, seed, threads=threads)


def build_problem(moments, z, G=None, k=None, split_method="sdp-lite", collapse="auto") -> BoundProblem:
    """Bound problem for centering weights ``bar_w`` and covariance ``Q``."""
    if isinstance(moments, BlockMoments):
        Gb = _block_constraints(G, moments.labels, len(moments.names))
        return problem_from_block_moments(moments, z, "max", Gb, k, split_method=split_method)
    p = BoundProblem(moments.bar_w, clip_psd(moments.Q), z, "max", G, k, split_method=split_method)
    if collapse in ("auto", True):
        groups = detect_exchangeable_groups(p)
        if groups is not None:
            return collapse_exchangeable(p, groups)
        if collapse is True:
            raise DataError("problem is not exchangeable within any nontrivial grouping")
    return p


def _solve_pair(problem: BoundProblem, solver: str, threads: int, **kw) -> tuple[SolveResult, SolveResult]:
    problem.ensure_split()
    jobs = [problem.with_sense("max"), problem.with_sense("min")]
    if threads > 1:
        with ThreadPoolExecutor(2) as pool:
            up, down = pool.map(lambda p: solve(p, solver, **kw), jobs)
    else:
        up, down = (solve(p, solver, **kw) for p in jobs)
    return up, down


def _block_bias(bm: BlockMoments):
    contrib = bm.sizes * bm.mean
    return float(np.minimum(contrib, 0).sum()), float(np.maximum(contrib, 0).sum())


class FixedMomentsProcedure:
    """Interval ``w'Y - [U, L]`` where ``U, L`` depend only on the moments.

    ``U`` and ``L`` are solved once, on first use, and reused for every
    dataset passed in (e.g. across simulated replications).
    """

    def __init__(self, scheme: WeightScheme, design: DesignDescriptor, alpha: float, moments, *,
                 constraints=None, split_method="sdp-lite", solver="bnb", node_budget=10_000,
                 time_budget=None, widen_by_bias=False, collapse="auto", threads=1, name=None, z=None):
        self.scheme = scheme
        self.design = design
        self.alpha = alpha
        self.moments = moments
        self.constraints = constraints
        self.split_method = split_method
        self.solver = solver
        self.solve_kw = {"node_budget": node_budget, "time_budget": time_budget} if solver == "bnb" else {}
        self.widen_by_bias = widen_by_bias
        self.collapse = collapse
        self.threads = threads
        self.name = name or scheme.name
        self.z = z_value(alpha) if z is None else float(z)
        self._solved = None

    def bounds(self):
        """``(U_result, L_result, problem, constraint descriptions)``, solved once."""
        if self._solved is None:
            n = self.moments.n_units
            G, k, desc = resolve_constraints(self.constraints, n)
            problem = build_problem(self.moments, self.z, G, k, self.split_method, self.collapse)
            up, down = _solve_pair(problem, self.solver, self.threads, **self.solve_kw)
            self._solved = (up, down, problem, desc)
        return self._solved

    def bias(self):
        m = self.moments
        return _block_bias(m) if isinstance(m, BlockMoments) else bias_bound(m.mean_w)

    def __call__(self, data: ExperimentData, rng=None) -> IntervalResult:
        w = self.scheme.weights(np.asarray(data.x), rng if rng is not None else np.random.default_rng(0))
        est = point_estimate(w, data.y)
        up, down, problem, desc = self.bounds()
        bias = self.bias()
        lo, hi = est - up.value, est - down.value
        if self.widen_by_bias:
            lo -= max(bias[1], 0.0)
            hi -= min(bias[0], 0.0)
        expand = problem.expand
        return IntervalResult(
            self.name, est, bias, self.alpha, 1 - 2 * self.alpha, up.value, down.value, lo, hi,
            up.status, down.status, desc, problem.split.method, self.moments.provenance(),
            None if up.incumbent is None else expand(up.incumbent),
            None if down.incumbent is None else expand(down.incumbent),
            self.widen_by_bias,
        )


def general_interval(
    scheme: WeightScheme,
    data: ExperimentData,
    design: DesignDescriptor,
    alpha: float,
    *,
    moments: WeightMoments | BlockMoments | None = None,
    R: int = DEFAULT_R,
    seed: int = 0,
    threads: int = 1,
    **kw,
) -> IntervalResult:
    """``w'Y - [U, L]`` with ``U, L`` the extreme values of
    ``bar_w'theta +/- z*sqrt(theta'Q theta)`` over feasible binary ``theta``.

    Moments default to closed forms where available and Monte Carlo
    otherwise. The bias bound is reported alongside; ``widen_by_bias``
    additionally moves each endpoint outward by it. Remaining keyword
    arguments go to :class:`FixedMomentsProcedure`.
    """
    if moments is None:
        moments = default_moments(scheme, data, design, R, seed, threads)
    proc = FixedMomentsProcedure(scheme, design, alpha, moments, threads=threads, **kw)
    return proc(data, np.random.default_rng(seed))


class Tau1Procedure:
    def __init__(self, alpha, theta_mean_cap=None):
        self.alpha = alpha
        self.theta_mean_cap = theta_mean_cap
        self.name = "tau1"

    def __call__(self, data, rng=None):
        return tau1_interval(data, self.alpha, self.theta_mean_cap)


# ---------------------------------------------------------------------------
# exposure slope under sampling without replacement


@dataclass(eq=False)
class BetaAdjPieces:
    """Design quantities of the alternative exposure-slope interval.

    ``v(X) = (I-P) A X / N``; ``a(X)`` is the reciprocal of
    ``v``-scale within-class exposure variance.
    """

    a_bar: float  # 1 / E[(1/N) sum (Z - zeta)^2]
    mean_v: np.ndarray  # E[v(X)]
    Q_v: np.ndarray  # Cov(v(X))
    class_diagnostics: np.ndarray  # per-class mean of E[(Z_i - zeta_k)^2]


def _srs_second_moment(n, n1):
    p = n1 / n
    off = p * (n1 - 1) / (n - 1)
    M = np.full((n, n), off)
    np.fill_diagonal(M, p)
    return M


def beta_adj_pieces(network, classes: PropensityClasses, n_treated: int) -> BetaAdjPieces:
    """Exact moments of ``v(X)`` and of the denominator under SRS."""
    n = network.n_units
    A = network.adjacency().toarray()
    R = A - classes.projector() @ A  # (I - P) A
    EXX = _srs_second_moment(n, n_treated)
    per_unit = np.einsum("ij,jk,ik->i", R, EXX, R)  # E[(Z_i - zeta_k(i))^2]
    denom = float(per_unit.sum()) / n
    if denom <= 0:
        raise EstimandError("exposure has zero expected within-class variance")
    mean_v = R @ np.full(n, n_treated / n) / n
    cov_x = n_treated * (n - n_treated) / (n * (n - 1)) * (np.eye(n) - 1.0 / n)
    Q_v = R @ cov_x @ R.T / n**2
    diag = np.bincount(classes.class_of, weights=per_unit, minlength=classes.n_classes) / classes.sizes
    return BetaAdjPieces(1.0 / denom, mean_v, 0.5 * (Q_v + Q_v.T), diag)


def observed_a(data: ExperimentData, classes: PropensityClasses) -> float:
    z = compute_exposure(data.network, data.x).astype(float)
    zc = z - classes.projector() @ z
    ss = float(zc @ zc) / data.n_units
    if ss <= 0:
        raise EstimandError("zero within-class exposure variance at the observed assignment")
    return 1.0 / ss


class BetaAdjProcedure:
    """Alternative interval for the class-adjusted exposure slope.

    Level ``1 - alpha`` (two-sided ``z_{1-alpha/2}``). Centering uses
    ``a(X) E[v]``; the spread is ``a_bar * z * max(sd(v'theta), log(N)/N)``,
    so ``U = max(U_var, U_floor)`` where ``U_floor`` is the linear optimum
    plus ``a_bar * z * log(N)/N``. Design pieces and the split are computed
    once; solves are reused whenever ``E[v] = 0``.
    """

    def __init__(self, network, classes: PropensityClasses, n_treated: int, alpha: float, *,
                 constraints=None, split_method="sdp-lite", solver="bnb", node_budget=10_000,
                 time_budget=None, threads=1):
        self.network = network
        self.classes = classes
        self.alpha = alpha
        self.n = network.n_units
        self.pieces = beta_adj_pieces(network, classes, n_treated)
        self.z = float(norm.ppf(1.0 - alpha / 2.0))
        self.G, self.k, self.desc = resolve_constraints(constraints, self.n)
        self.solver = solver
        self.solve_kw = {"node_budget": node_budget, "time_budget": time_budget} if solver == "bnb" else {}
        self.threads = threads
        Qs = clip_psd(self.pieces.a_bar**2 * self.pieces.Q_v)
        self._template = BoundProblem(np.zeros(self.n), Qs, self.z, "max", self.G, self.k,
                                      split_method=split_method)
        self._template.ensure_split()
        self.centered = bool(np.abs(self.pieces.mean_v).max() <= 1e-14)
        self._cache = None
        self.name = "beta_adj"

    def _bounds(self, a_obs):
        if self.centered and self._cache is not None:
            return self._cache
        p = self._template
        b = a_obs * self.pieces.mean_v
        if self.centered:
            b = np.zeros(self.n)
        var_problem = BoundProblem(b, p.Q, p.z, "max", self.G, self.k, split=p.split)
        up, down = _solve_pair(var_problem, self.solver, self.threads, **self.solve_kw)
        lin = BoundProblem(b, np.zeros((self.n, self.n)), 0.0, "max", self.G, self.k,
                           split_method="gershgorin")
        lin_up, lin_down = _solve_pair(lin, "bnb", 1)
        floor = self.pieces.a_bar * self.z * math.log(self.n) / self.n
        if lin_up.value + floor > up.value:
            U = (lin_up.value + floor, lin_up.status, lin_up.incumbent)
        else:
            U = (up.value, up.status, up.incumbent)
        if lin_down.value - floor < down.value:
            L = (lin_down.value - floor, lin_down.status, lin_down.incumbent)
        else:
            L = (down.value, down.status, down.incumbent)
        out = (U, L, bias_bound(b))
        if self.centered:
            self._cache = out
        return out

    def __call__(self, data: ExperimentData, rng=None) -> IntervalResult:
        z_ex = compute_exposure(data.network, data.x)
        w = beta_adj_weights(z_ex, self.classes)
        est = point_estimate(w, data.y)
        a_obs = observed_a(data, self.classes)
        (U, sU, tU), (L, sL, tL), bias = self._bounds(a_obs)
        pc = self.pieces
        return IntervalResult(
            "beta_adj", est, bias, self.alpha, 1 - self.alpha, U, L, est - U, est - L, sU, sL,
            self.desc, self._template.split.method,
            {"method": "analytic", "a_obs": a_obs, "a_bar": pc.a_bar,
             "class_expected_sq_dev": pc.class_diagnostics.tolist()},
            tU, tL,
        )


def beta_adj_interval(data: ExperimentData, classes: PropensityClasses, alpha: float, *,
                      design: DesignDescriptor | None = None, **kw) -> IntervalResult:
    """Alternative exposure-slope interval under sampling without replacement (level ``1 - alpha``)."""
    if design is not None and design.kind != "srs":
        raise DataError("this interval requires sampling without replacement (srs)")
    proc = BetaAdjProcedure(data.network, classes, int(np.sum(data.x)), alpha, **kw)
    return proc(data)


# ---------------------------------------------------------------------------
# output


def _fmt(v, scale, digits):
    return f"{v * scale:.{digits}f}"


def format_table(results, scale: str = "raw", digits: int = 3) -> str:
    """Aligned text table: estimand, point estimate, bias, prediction interval."""
    s = SCALES[scale]
    levels = {r.level for r in results}
    pi_head = f"{round(100 * levels.pop())}% PI" if len(levels) == 1 else "PI"
    head = ["Estimand", "Point Estimate", "Bias", pi_head, "Status"]
    rows = []
    for r in results:
        bias = "0" if max(abs(r.bias[0]), abs(r.bias[1])) <= 1e-12 else f"[{_fmt(r.bias[0], s, digits)}, {_fmt(r.bias[1], s, digits)}]"
        status = r.status_U if r.status_U == r.status_L else f"{r.status_U}/{r.status_L}"
        rows.append([r.estimand, _fmt(r.point, s, digits), bias,
                     f"[{_fmt(r.lo, s, digits)}, {_fmt(r.hi, s, digits)}]", status])
    widths = [max(len(str(x)) for x in col) for col in zip(head, *rows)]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(line, widths)).rstrip() for line in [head] + rows]
    if scale != "raw":
        lines.append(f"(values {scale.replace('-', ' ')})")
    return "\n".join(lines)


CSV_COLUMNS = ["estimand", "point_estimate", "bias_lo", "bias_hi", "pi_lo", "pi_hi", "level",
               "U", "L", "status_U", "status_L", "split_method"]


def results_to_csv(results, scale: str = "raw") -> str:
    s = SCALES[scale]
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_COLUMNS)
    for r in results:
        wr.writerow([r.estimand, repr(r.point * s), repr(r.bias[0] * s), repr(r.bias[1] * s),
                     repr(r.lo * s), repr(r.hi * s), r.level, repr(r.U * s), repr(r.L * s),
                     r.status_U, r.status_L, r.split_method or ""])
    return buf.getvalue()
