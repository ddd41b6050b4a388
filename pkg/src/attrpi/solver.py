"""Worst-case error bounds over unknown binary outcomes.

Solves

    U = max  c'x + z*sqrt(x'Qx + q'x)       (sense "max")
    L = min  c'x - z*sqrt(x'Qx + q'x)       (sense "min")

over integer ``x`` in a box ``[lo, hi]`` with linear constraints
``G x <= k``. For the interval problem ``x`` is the binary vector of
unknown control outcomes, ``c`` the centering weights and ``Q`` the
weight covariance. Boxes wider than one arise after collapsing
exchangeable units into counts.

The minimum is computed as ``-max((-c)'x + z*sqrt(...))``, so everything
below is a concave maximization after the diagonal split.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import kernels
from .split import SplitCertificate, compute_split, verify_split

RADICAND_TOL = 1e-10
GAP_TOL = 1e-9
BRUTE_FORCE_MAX = 22


class SolverError(ValueError):
    pass


class InfeasibleProblemError(SolverError):
    pass


@dataclass(eq=False)
class BoundProblem:
    """``max/min c'x +/- z*sqrt(x'Qx + q'x)`` over integer ``x`` in a box with ``G x <= k``."""

    b: np.ndarray
    Q: np.ndarray
    z: float
    sense: str = "max"
    G: np.ndarray | None = None
    k: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    q: np.ndarray | None = None
    split: SplitCertificate | None = None
    split_method: str = "sdp-lite"
    unit_groups: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float).ravel()
        n = self.b.size
        self.Q = np.asarray(self.Q, dtype=float).reshape(n, n)
        self.z = float(self.z)
        if self.z < 0:
            raise SolverError("z must be nonnegative")
        if self.sense not in ("max", "min"):
            raise SolverError("sense must be 'max' or 'min'")
        if self.G is None or np.size(self.G) == 0:
            self.G, self.k = np.zeros((0, n)), np.zeros(0)
        else:
            self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
            self.k = np.atleast_1d(np.asarray(self.k, dtype=float))
            if self.G.shape != (self.k.size, n):
                raise SolverError("constraint matrix shape mismatch")
        self.lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float)
        self.hi = np.ones(n) if self.hi is None else np.asarray(self.hi, dtype=float)
        if np.any(self.lo > self.hi) or np.any(self.lo != np.round(self.lo)) or np.any(self.hi != np.round(self.hi)):
            raise SolverError("box bounds must be integers with lo <= hi")
        self.q = np.zeros(n) if self.q is None else np.asarray(self.q, dtype=float)

    @property
    def n(self) -> int:
        return self.b.size

    @property
    def binary(self) -> bool:
        return bool(np.all(self.hi - self.lo <= 1))

    @property
    def sign(self) -> float:
        return 1.0 if self.sense == "max" else -1.0

    def ensure_split(self) -> SplitCertificate:
        if self.split is None:
            self.split = compute_split(self.Q, self.split_method)
        if self.split.D.size != self.n:
            raise SolverError("split does not match problem size")
        return self.split

    def with_sense(self, sense) -> "BoundProblem":
        return BoundProblem(self.b, self.Q, self.z, sense, self.G, self.k, self.lo, self.hi,
                            self.q, self.split, self.split_method, self.unit_groups)

    def with_z(self, z) -> "BoundProblem":
        return BoundProblem(self.b, self.Q, z, self.sense, self.G, self.k, self.lo, self.hi,
                            self.q, self.split, self.split_method, self.unit_groups)

    def with_constraint(self, a, bound) -> "BoundProblem":
        G = np.vstack([self.G, np.asarray(a, dtype=float)[None, :]])
        k = np.r_[self.k, float(bound)]
        return BoundProblem(self.b, self.Q, self.z, self.sense, G, k, self.lo, self.hi,
                            self.q, self.split, self.split_method, self.unit_groups)

    def expand(self, x) -> np.ndarray:
        """Per-unit binary vector for a count solution of a collapsed problem."""
        if self.unit_groups is None:
            return np.asarray(x)
        out = np.zeros(self.unit_groups.size, dtype=np.int8)
        for g, t in enumerate(np.round(x).astype(int)):
            out[np.flatnonzero(self.unit_groups == g)[:t]] = 1
        return out

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "format": "attrpi-bound-problem/1",
            "b": self.b.tolist(),
            "Q": self.Q.tolist(),
            "q": self.q.tolist(),
            "z": self.z,
            "sense": self.sense,
            "G": self.G.tolist(),
            "k": self.k.tolist(),
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
            "split_method": self.split_method,
        }
        if self.split is not None:
            d["split"] = self.split.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BoundProblem":
        n = len(d["b"])
        split = SplitCertificate.from_dict(d["split"]) if "split" in d else None
        G = d.get("G") or None
        return cls(
            d["b"], d["Q"], d["z"], d.get("sense", "max"),
            np.asarray(G, dtype=float).reshape(-1, n) if G else None,
            d.get("k") or None, d.get("lo"), d.get("hi"), d.get("q"), split,
            d.get("split_method", "sdp-lite"),
        )

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "BoundProblem":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SolveResult:
    value: float
    incumbent: np.ndarray | None
    status: str  # exact | relaxation-bound | budget-exhausted-bound
    nodes: int = 0
    gap: float = 0.0
    incumbent_value: float | None = None

    def to_dict(self) -> dict:
        return {"value": self.value, "status": self.status, "nodes": self.nodes, "gap": self.gap,
                "incumbent": None if self.incumbent is None else np.asarray(self.incumbent).tolist(),
                "incumbent_value": self.incumbent_value}


# ---------------------------------------------------------------------------
# objective


def _radicand(x, p: BoundProblem) -> float:
    return float(x @ p.Q @ x + p.q @ x)


def objective(x, problem: BoundProblem) -> float:
    """Objective at an integer point, written through the diagonal split.

    For binary boxes the radicand is ``x'(Q-D)x + sum D_i x_i + q'x``,
    equal to ``x'Qx + q'x`` at binary points. Radicands below ``-1e-10``
    mean the split or ``Q`` is invalid and raise.
    """
    x = np.asarray(x, dtype=float)
    p = problem
    if p.binary:
        D = p.ensure_split().D
        rad = float(x @ (p.Q - np.diag(D)) @ x + D @ x + p.q @ x)
    else:
        rad = _radicand(x, p)
    if rad < -RADICAND_TOL:
        raise SolverError(f"negative radicand {rad:.3e}; split certificate violated")
    return float(p.b @ x + p.sign * p.z * math.sqrt(max(rad, 0.0)))


def _value_max(x, c, p: BoundProblem) -> float:
    """``c'x + z*sqrt(x'Qx + q'x)`` with no split (integer points)."""
    rad = _radicand(x, p)
    if rad < -RADICAND_TOL:
        raise SolverError(f"negative radicand {rad:.3e}")
    return float(c @ x + p.z * math.sqrt(max(rad, 0.0)))


# ---------------------------------------------------------------------------
# linear programs over box and halfspaces


def _box_max(d, lo, hi):
    return float(np.sum(np.maximum(d * lo, d * hi)))


def _lp_max(d, lo, hi, G, k) -> float:
    """Certified upper bound on ``max d'y`` over ``lo <= y <= hi, G y <= k``.

    Exact for zero or one constraints; with several, weak duality with
    the multipliers reported by HiGHS. Returns ``-inf`` if infeasible.
    """
    m = G.shape[0]
    if m == 0:
        return _box_max(d, lo, hi)
    if m == 1:
        a, kk = G[0], k[0]
        if _box_max(-a, lo, hi) < -kk - 1e-12 * (1 + abs(kk)):
            return -np.inf
        # dual function is piecewise linear and convex in lambda
        nz = a != 0
        lam = np.r_[0.0, (d[nz] / a[nz])]
        lam = np.unique(lam[lam >= 0])
        red = d[None, :] - lam[:, None] * a[None, :]
        dual = lam * kk + np.sum(np.maximum(red * lo, red * hi), axis=1)
        return float(dual.min())
    res = linprog(-d, A_ub=G, b_ub=k, bounds=np.c_[lo, hi], method="highs")
    if res.status == 2:
        return -np.inf
    if res.status != 0:
        raise SolverError(f"linear program failed: {res.message}")
    lam = np.maximum(-np.asarray(res.ineqlin.marginals), 0.0)
    red = d - G.T @ lam
    return float(lam @ k + _box_max(red, lo, hi))


def _feasible(lo, hi, G, k) -> bool:
    if G.shape[0] == 0:
        return True
    if G.shape[0] == 1:
        return _box_max(-G[0], lo, hi) >= -k[0] - 1e-12 * (1 + abs(k[0]))
    res = linprog(np.zeros(lo.size), A_ub=G, b_ub=k, bounds=np.c_[lo, hi], method="highs")
    return res.status == 0


# ---------------------------------------------------------------------------
# relaxation at a node


@dataclass
class _Relaxation:
    bound: float
    x: np.ndarray
    primal: float
    converged: bool


def _relax(p: BoundProblem, c, D, lo, hi, x0=None, max_iter=5000) -> _Relaxation | None:
    """Concave relaxation on ``[lo, hi]``: secant upper estimate of each ``D_i x_i^2``."""
    if not _feasible(lo, hi, p.G, p.k):
        return None
    M = p.Q - np.diag(D)
    g = D * (lo + hi) + p.q
    h = -float(np.sum(D * lo * hi))
    if x0 is not None:
        x0 = np.clip(x0, lo, hi)
    x, f, _, conv = kernels.pg_maximize(c, M, g, h, p.z, lo, hi, p.G, p.k, x0=x0, max_iter=max_iter)
    Mx = M @ x
    r = float(x @ Mx + g @ x + h)
    grad_r = 2.0 * Mx + g
    # bound 1: concavity of r inside the square root
    r_up = r + _lp_max(grad_r, lo, hi, p.G, p.k) - float(grad_r @ x)
    bound = _lp_max(c, lo, hi, p.G, p.k) + p.z * math.sqrt(max(r_up, 0.0))
    # bound 2: Frank-Wolfe gap of the full objective
    if p.z == 0.0:
        bound = min(bound, _lp_max(c, lo, hi, p.G, p.k))
    elif r > 1e-14:
        grad = c + p.z * grad_r / (2.0 * math.sqrt(r))
        fw = f + _lp_max(grad, lo, hi, p.G, p.k) - float(grad @ x)
        bound = min(bound, fw)
    bound = max(bound, f)
    return _Relaxation(bound + 1e-12 * (1.0 + abs(bound)), x, f, conv)


def solve_relaxed(problem: BoundProblem) -> SolveResult:
    """Certified outer bound from the concave box relaxation.

    For ``sense="max"`` the value is at least the integer optimum, for
    ``"min"`` at most. ``incumbent`` holds the (generally fractional)
    relaxed maximizer.
    """
    p = problem
    D = p.ensure_split().D
    c = p.sign * p.b
    rel = _relax(p, c, D, p.lo, p.hi)
    if rel is None:
        raise InfeasibleProblemError("constraints are infeasible on the box")
    value = p.sign * rel.bound
    return SolveResult(value, rel.x, "relaxation-bound", 1, abs(rel.bound - rel.primal))


# ---------------------------------------------------------------------------
# incumbent heuristics


def _repair(x, p: BoundProblem):
    """Push a rounded point back into ``G x <= k`` by moving toward ``lo``."""
    x = x.copy()
    for _ in range(int(np.sum(x - p.lo)) + 1):
        viol = p.G @ x - p.k
        if p.G.shape[0] == 0 or viol.max() <= 1e-9:
            return x
        r = int(np.argmax(viol))
        a = p.G[r]
        cand = np.flatnonzero((a > 0) & (x > p.lo))
        up = np.flatnonzero((a < 0) & (x < p.hi))
        if cand.size:
            i = cand[np.argmax(a[cand])]
            x[i] -= 1
        elif up.size:
            i = up[np.argmin(a[up])]
            x[i] += 1
        else:
            return None
    return x if p.G.shape[0] == 0 or (p.G @ x - p.k).max() <= 1e-9 else None


def _one_opt(x, c, p: BoundProblem):
    """Best-improvement search over single-coordinate +/-1 moves."""
    Qx = p.Q @ x
    lin = float(c @ x)
    quad = float(x @ Qx + p.q @ x)
    gx = p.G @ x
    diag = np.diag(p.Q)
    val = lin + p.z * math.sqrt(max(quad, 0.0))
    for _ in range(10 * x.size + 100):
        best_gain, best = 0.0, None
        for step in (1.0, -1.0):
            ok = (x + step <= p.hi) & (x + step >= p.lo)
            if p.G.shape[0]:
                ok &= np.all(gx[:, None] + step * p.G <= p.k[:, None] + 1e-9, axis=0)
            if not ok.any():
                continue
            nq = quad + 2 * step * Qx + diag + step * p.q
            nv = lin + step * c + p.z * np.sqrt(np.maximum(nq, 0.0))
            nv = np.where(ok, nv, -np.inf)
            i = int(np.argmax(nv))
            gain = nv[i] - val
            if gain > best_gain + 1e-13 * (1 + abs(val)):
                best_gain, best = gain, (i, step)
        if best is None:
            break
        i, step = best
        x[i] += step
        Qx += step * p.Q[:, i]
        lin += step * c[i]
        quad += 2 * step * (Qx[i] - step * p.Q[i, i]) + p.Q[i, i] + step * p.q[i]
        gx += step * p.G[:, i]
        val = lin + p.z * math.sqrt(max(quad, 0.0))
    return x, _value_max(x, c, p)


def _incumbent(xr, c, p: BoundProblem):
    x = _repair(np.clip(np.round(xr), p.lo, p.hi), p)
    if x is None:
        x = _repair(p.lo.copy(), p)
        if x is None:
            return None, -np.inf
    return _one_opt(x, c, p)


# ---------------------------------------------------------------------------
# branch and bound


def _branch(x, lo, hi, D):
    """Pick a coordinate and integer split point for a node."""
    width = hi - lo
    frac = np.abs(x - np.round(x))
    open_ = width > 0
    if np.any(frac[open_] > 1e-7):
        i = int(np.argmax(np.where(open_, frac, -1.0)))
        return i, math.floor(x[i])
    # integral relaxed point: split where the secant is loosest
    gap = np.where(open_, D * (hi - x) * (x - lo), -1.0)
    if gap.max() > 0:
        i = int(np.argmax(gap))
        return i, int(x[i]) if x[i] < hi[i] else int(x[i]) - 1
    wide = np.flatnonzero(open_)
    if wide.size == 0:
        return None
    i = int(wide[np.argmax(width[wide])])
    return i, int(lo[i] + width[i] // 2) if width[i] > 1 else int(lo[i])


def _leaf_value(x, c, p):
    if p.G.shape[0] and np.max(p.G @ x - p.k) > 1e-9:
        return -np.inf
    return _value_max(x, c, p)


def solve_bnb(problem: BoundProblem, node_budget: int = 100_000, time_budget: float | None = None) -> SolveResult:
    """Best-first branch and bound with the concave relaxation as node bound.

    Returns ``status="exact"`` when the incumbent is within
    ``1e-9*(1+|value|)`` of the best open bound; otherwise the best open
    bound is returned with ``status="budget-exhausted-bound"``, which is
    still a valid outer bound. Nodes are ordered by bound with ties
    broken by creation index, so results are deterministic.
    """
    p = problem
    D = p.ensure_split().D
    c = p.sign * p.b
    t0 = time.monotonic()
    counter = itertools.count()
    root = _relax(p, c, D, p.lo.copy(), p.hi.copy())
    if root is None:
        raise InfeasibleProblemError("constraints are infeasible on the box")
    inc_x, inc_v = _incumbent(root.x, c, p)
    heap = [(-root.bound, next(counter), p.lo.copy(), p.hi.copy(), root)]
    nodes = 1

    def tol(v):
        return GAP_TOL * (1.0 + abs(v))

    while heap:
        top = -heap[0][0]
        if top - inc_v <= tol(inc_v):
            heap.clear()
            break
        if nodes >= node_budget or (time_budget is not None and time.monotonic() - t0 > time_budget):
            break
        neg, _, lo, hi, rel = heapq.heappop(heap)
        choice = _branch(rel.x, lo, hi, D)
        if choice is None:  # single point
            v = _leaf_value(lo, c, p)
            if v > inc_v:
                inc_x, inc_v = lo.copy(), v
            continue
        i, s = choice
        for clo, chi in ((lo[i], s), (s + 1, hi[i])):
            nlo, nhi = lo.copy(), hi.copy()
            nlo[i], nhi[i] = clo, chi
            nodes += 1
            if np.all(nlo == nhi):
                v = _leaf_value(nlo, c, p)
                if v > inc_v:
                    inc_x, inc_v = nlo.copy(), v
                continue
            child = _relax(p, c, D, nlo, nhi, x0=rel.x)
            if child is None:
                continue
            if child.bound - inc_v <= tol(inc_v):
                continue
            cx, cv = _incumbent(child.x, c, p)
            if cv > inc_v:
                inc_x, inc_v = cx, cv
            heapq.heappush(heap, (-child.bound, next(counter), nlo, nhi, child))
    if not heap:
        if inc_x is None:
            raise InfeasibleProblemError("no feasible integer point")
        return SolveResult(p.sign * inc_v, inc_x, "exact", nodes, 0.0, p.sign * inc_v)
    bound = -heap[0][0]
    return SolveResult(p.sign * bound, inc_x, "budget-exhausted-bound", nodes,
                       bound - inc_v, None if inc_x is None else p.sign * inc_v)


def solve(problem: BoundProblem, method: str = "bnb", **kw) -> SolveResult:
    if method == "bnb":
        return solve_bnb(problem, **kw)
    if method == "relaxed":
        return solve_relaxed(problem)
    if method == "brute-force":
        return brute_force(problem)
    raise SolverError(f"unknown solve method {method!r}")


# ---------------------------------------------------------------------------
# enumeration oracle


def brute_force(problem: BoundProblem) -> SolveResult:
    """Exact optimum by enumeration of every feasible integer point (no split used)."""
    p = problem
    c = p.sign * p.b
    if p.binary:
        fixed = p.lo == p.hi
        free = np.flatnonzero(~fixed)
        if free.size > BRUTE_FORCE_MAX:
            raise SolverError(f"brute force limited to {BRUTE_FORCE_MAX} free binary variables")
        base = p.lo.copy()
        # substitute fixed coordinates: x = base + S y over free y
        Qf = p.Q[np.ix_(free, free)]
        cf = c[free]
        qf = p.q[free] + 2.0 * p.Q[np.ix_(free, np.flatnonzero(fixed))] @ base[fixed]
        h = float(base @ p.Q @ base + p.q @ base)
        if h != 0.0:
            return _enumerate_product(p, c)
        G = p.G[:, free]
        k = p.k - p.G @ base
        val, y, n_feas = kernels.gray_enumerate(cf, Qf, qf, p.z, G, k)
        if n_feas == 0:
            raise InfeasibleProblemError("no feasible binary point")
        x = base.copy()
        x[free] += y
        val += float(c @ base)
        return SolveResult(p.sign * val, x, "exact", n_feas, 0.0, p.sign * val)
    return _enumerate_product(p, c)


def _enumerate_product(p: BoundProblem, c) -> SolveResult:
    ranges = [range(int(a), int(b) + 1) for a, b in zip(p.lo, p.hi)]
    total = math.prod(len(r) for r in ranges)
    if total > 1 << BRUTE_FORCE_MAX:
        raise SolverError("too many integer points to enumerate")
    best, best_x, n = -np.inf, None, 0
    for pt in itertools.product(*ranges):
        x = np.asarray(pt, dtype=float)
        if p.G.shape[0] and np.max(p.G @ x - p.k) > 1e-9:
            continue
        n += 1
        v = _value_max(x, c, p)
        if v > best:
            best, best_x = v, x
    if best_x is None:
        raise InfeasibleProblemError("no feasible integer point")
    return SolveResult(p.sign * best, best_x, "exact", n, 0.0, p.sign * best)


# ---------------------------------------------------------------------------
# exchangeable collapse


class ExchangeabilityError(SolverError):
    pass


def collapse_exchangeable(problem: BoundProblem, groups, tol: float = 1e-10) -> BoundProblem:
    """Equivalent problem over per-group counts ``t_g = sum_{i in g} x_i``.

    Requires, within each group, equal ``b_i``, ``q_i``, ``Q_ii`` and
    constraint columns, one common ``Q_ij`` for distinct members and one
    common value between any two groups (checked to ``tol`` relative to
    the largest entry). Then ``x'Qx = t'Ct + e't`` with ``C_gh`` the
    between-unit covariance and ``e_g = Q_ii - C_gg``.
    """
    p = problem
    if not p.binary or np.any(p.lo != 0) or np.any(p.hi != 1):
        raise ExchangeabilityError("collapse needs a 0/1 box")
    groups = np.asarray(groups)
    _, lab = np.unique(groups, return_inverse=True)
    G_ = lab.max() + 1 if lab.size else 0
    scale = max(1.0, float(np.abs(p.Q).max(initial=0.0)), float(np.abs(p.b).max(initial=0.0)))
    eps = tol * scale
    members = [np.flatnonzero(lab == g) for g in range(G_)]
    rep = np.array([m[0] for m in members])

    def same(v):
        return np.ptp(v) <= eps if v.size else True

    C = np.zeros((G_, G_))
    e = np.zeros(G_)
    for g, mg in enumerate(members):
        for name, arr in (("b", p.b[mg]), ("q", p.q[mg]), ("diag", np.diag(p.Q)[mg])):
            if not same(arr):
                raise ExchangeabilityError(f"group {g}: {name} not constant")
        if p.G.shape[0] and not all(same(p.G[r, mg]) for r in range(p.G.shape[0])):
            raise ExchangeabilityError(f"group {g}: constraint coefficients not constant")
        for h, mh in enumerate(members):
            block = p.Q[np.ix_(mg, mh)]
            if g == h:
                off = block[~np.eye(mg.size, dtype=bool)]
                if not same(off):
                    raise ExchangeabilityError(f"group {g}: within-group covariance not constant")
                C[g, g] = off[0] if off.size else p.Q[mg[0], mg[0]]
            else:
                if not same(block.ravel()):
                    raise ExchangeabilityError(f"groups {g},{h}: covariance not constant")
                C[g, h] = block[0, 0]
        e[g] = p.Q[mg[0], mg[0]] - C[g, g]
    sizes = np.array([m.size for m in members], dtype=float)
    return BoundProblem(
        p.b[rep], C, p.z, p.sense, p.G[:, rep] if p.G.shape[0] else None,
        p.k if p.G.shape[0] else None, np.zeros(G_), sizes, p.q[rep] + e,
        split_method=p.split_method, unit_groups=lab,
    )


def detect_exchangeable_groups(problem: BoundProblem, digits: int = 12):
    """Group units with matching ``(b_i, Q_ii, q_i, constraint column)``; ``None`` if the
    grouping does not make the problem exchangeable or collapses nothing."""
    p = problem
    cols = np.column_stack([p.b, np.diag(p.Q), p.q, p.G.T]) if p.n else np.zeros((0, 3))
    keys = [tuple(float(f"{v:.{digits}g}") for v in row) for row in cols]
    index = {}
    labels = np.array([index.setdefault(k, len(index)) for k in keys])
    if len(index) >= p.n:
        return None
    try:
        collapse_exchangeable(p, labels)
    except ExchangeabilityError:
        return None
    return labels


def problem_from_block_moments(bm, z, sense="max", G=None, k=None, bar=None, split_method="sdp-lite") -> BoundProblem:
    """Count problem straight from block moments.

    ``G`` holds per-unit constraint coefficients for each block (one
    column per block); ``bar`` overrides the block centering weights.
    """
    sizes = bm.sizes.astype(float)
    C = bm.cov.copy()
    single = sizes <= 1
    C[single, single] = bm.var[single]
    e = bm.var - np.diag(C)
    b = bm.bar if bar is None else np.asarray(bar, dtype=float)
    return BoundProblem(b, C, z, sense, G, k, np.zeros(sizes.size), sizes, e,
                        split_method=split_method, unit_groups=bm.labels)


def solve_interval_bounds(problem: BoundProblem, method="bnb", verify_split_cert=True, **kw):
    """Return ``(U_result, L_result)`` for a problem (its sense is ignored)."""
    if verify_split_cert and problem.split is not None:
        v = verify_split(problem.Q, problem.split.D)
        if not v.passed:
            raise SolverError(f"split certificate fails verification: lambda_max={v.lambda_max:.3e}")
    up = solve(problem.with_sense("max"), method, **kw)
    down = solve(problem.with_sense("min"), method, **kw)
    return up, down
