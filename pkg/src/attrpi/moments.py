"""Randomization moments of weight vectors.

``mean_w = E[w(X)]``, ``Q = Cov(w(X))`` and the centering weights
``bar_w`` used to locate the error distribution. Moments are computed
analytically where closed forms exist and otherwise by redrawing the
treatment from the design.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import DataError, ExperimentData
from .design import DesignDescriptor, draw_rng
from .estimands import EstimandError, TermContext, WeightScheme, _term_columns

logger = logging.getLogger(__name__)

DEFAULT_R = 20_000


class MomentError(RuntimeError):
    pass


@dataclass(eq=False)
class WeightMoments:
    """Dense moments over all N units."""

    mean_w: np.ndarray
    Q: np.ndarray
    bar_w: np.ndarray
    method: str
    replications: int | None = None
    seed: int | None = None
    se_mean: np.ndarray | None = None
    se_Q: np.ndarray | None = None
    n_failed: int = 0
    draws: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.Q = _symmetrize(self.Q)

    @property
    def n_units(self):
        return self.mean_w.size

    def variance(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return float(theta @ self.Q @ theta)

    def provenance(self) -> dict:
        out = {"method": self.method}
        if self.replications is not None:
            out.update(replications=self.replications, seed=self.seed, failed_draws=self.n_failed)
        return out


def _symmetrize(Q):
    Q = np.asarray(Q, dtype=float)
    return 0.5 * (Q + Q.T)


def clip_psd(Q: np.ndarray) -> np.ndarray:
    """Symmetrize and raise negative eigenvalues to zero."""
    Q = _symmetrize(Q)
    vals, vecs = np.linalg.eigh(Q)
    if vals.min() >= 0:
        return Q
    vals = np.maximum(vals, 0.0)
    return _symmetrize((vecs * vals) @ vecs.T)


# ---------------------------------------------------------------------------
# Monte Carlo


class _Accumulator:
    """Sums over successful draws needed by every moment formula."""

    def __init__(self, n, scheme, keep_draws, dense=True):
        self.n = n
        self.count = 0
        self.failed = 0
        self.s1 = np.zeros(n)
        self.s2 = np.zeros((n, n) if dense else (0, 0))
        self.s4 = np.zeros((n, n) if dense else (0, 0))
        self.rows = [] if keep_draws else None
        kind = scheme.kind
        self.kind = kind
        if kind == "regression":
            self.gram = None
            self.xi = None
        elif kind in ("weighted", "matched", "expected-matched"):
            K = scheme.classes.n_classes
            self.W = np.zeros(n)
            self.n1 = np.zeros(K)
            self.n0 = np.zeros(K)
            self.mk = np.zeros(K)

    def add_batch(self, rows):
        if not rows:
            return
        Wm = np.asarray(rows)
        self.s1 += Wm.sum(axis=0)
        self.s2 += Wm.T @ Wm
        sq = Wm * Wm
        self.s4 += sq.T @ sq
        if self.rows is not None:
            self.rows.append(Wm)

    def merge(self, other):
        self.count += other.count
        self.failed += other.failed
        self.s1 += other.s1
        self.s2 += other.s2
        self.s4 += other.s4
        if self.rows is not None:
            self.rows.extend(other.rows)
        if self.kind == "regression":
            if other.gram is not None:
                self.gram = other.gram.copy() if self.gram is None else self.gram + other.gram
                self.xi = other.xi.copy() if self.xi is None else self.xi + other.xi
        elif hasattr(self, "W"):
            self.W += other.W
            self.n1 += other.n1
            self.n0 += other.n0
            self.mk += other.mk


def _run_chunk(scheme, design, seed, start, stop, n, keep_draws):
    acc = _Accumulator(n, scheme, keep_draws)
    rows = []
    for i in range(start, stop):
        rng = draw_rng(seed, i)
        x = design.draw(rng, i)
        try:
            w = scheme.weights(x, rng)
        except EstimandError:
            acc.failed += 1
            continue
        acc.count += 1
        rows.append(w)
        if acc.kind == "regression":
            D = scheme.design_matrix(x)
            g = D.T @ D
            acc.gram = g if acc.gram is None else acc.gram + g
            acc.xi = D.copy() if acc.xi is None else acc.xi + D
        elif hasattr(acc, "W"):
            W = scheme.exposed(x).astype(float)
            cl = scheme.classes
            n1 = np.bincount(cl.class_of, weights=W, minlength=cl.n_classes)
            n0 = cl.sizes - n1
            acc.W += W
            acc.n1 += n1
            acc.n0 += n0
            acc.mk += np.minimum(n1, n0)
    acc.add_batch(rows)
    return acc


def _exposure_bar_w(scheme, acc: _Accumulator, count: int) -> np.ndarray:
    cl = scheme.classes
    k = cl.class_of
    EW = acc.W / count
    En1 = acc.n1 / count
    En0 = acc.n0 / count
    ok = (En1 > 0) & (En0 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        per = EW / En1[k] - (1.0 - EW) / En0[k]
    if scheme.kind == "weighted":
        sizes = cl.sizes
        scale = sizes[k] / sizes[ok].sum()
    else:
        Emk = acc.mk / count
        scale = Emk[k] / Emk.sum()
    return np.where(ok[k], scale * per, 0.0)


def _bar_w(scheme, acc, mean_w, count):
    if acc.kind == "regression":
        gram = acc.gram / count
        Exi = acc.xi / count
        c = scheme.contrast
        try:
            return Exi @ np.linalg.solve(gram, c)
        except np.linalg.LinAlgError:
            raise MomentError("singular averaged design in centering weights") from None
    if hasattr(acc, "W"):
        return _exposure_bar_w(scheme, acc, count)
    return mean_w.copy()


def mc_weight_moments(
    scheme: WeightScheme,
    data: ExperimentData,
    design: DesignDescriptor,
    R: int = DEFAULT_R,
    seed: int = 0,
    *,
    chunk: int = 500,
    threads: int = 1,
    keep_draws: bool = False,
) -> WeightMoments:
    """Moments of ``w(X)`` from ``R`` independent redraws of the treatment.

    Draw ``i`` uses a generator derived from ``(seed, i)``, and partial
    sums are combined in draw order, so results do not depend on
    ``threads``. Draws for which the estimand is undefined are skipped
    and counted; more than half failing is an error.
    """
    if R < 2:
        raise ValueError("need at least two replications")
    n = data.n_units
    bounds = [(s, min(s + chunk, R)) for s in range(0, R, chunk)]
    job = lambda b: _run_chunk(scheme, design, seed, b[0], b[1], n, keep_draws)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(job, bounds))
    else:
        parts = [job(b) for b in bounds]
    acc = _Accumulator(n, scheme, keep_draws)
    for p in parts:
        acc.merge(p)
    if acc.failed > R / 2:
        raise MomentError(f"weight builder failed on {acc.failed} of {R} draws")
    if acc.failed:
        logger.warning("%d of %d draws skipped (estimand undefined)", acc.failed, R)
    cnt = acc.count
    mean = acc.s1 / cnt
    second = acc.s2 / cnt
    Q = (second - np.outer(mean, mean)) * cnt / (cnt - 1)
    se_mean = np.sqrt(np.maximum(np.diag(Q), 0) / cnt)
    se_Q = np.sqrt(np.maximum(acc.s4 / cnt - second**2, 0) / cnt)
    return WeightMoments(
        mean_w=mean,
        Q=Q,
        bar_w=_bar_w(scheme, acc, mean, cnt),
        method="monte-carlo",
        replications=R,
        seed=seed,
        se_mean=se_mean,
        se_Q=se_Q,
        n_failed=acc.failed,
        draws=np.vstack(acc.rows) if keep_draws and acc.rows else None,
    )


# ---------------------------------------------------------------------------
# closed forms


def analytic_tau1_moments(design: DesignDescriptor) -> WeightMoments:
    """Exact moments of the difference-in-means weights under simple random sampling."""
    if design.kind != "srs":
        raise MomentError("analytic tau1 moments require an srs design")
    n, n1 = design.n_units, design.n_treated
    n0 = n - n1
    var = 1.0 / (n1 * n0)
    cov = -1.0 / ((n - 1) * n1 * n0)
    Q = np.full((n, n), cov)
    np.fill_diagonal(Q, var)
    zero = np.zeros(n)
    return WeightMoments(zero, Q, zero.copy(), method="analytic")


def srs_difference_variance(theta, n_treated) -> float:
    """Variance of the treated-minus-control mean of ``theta`` under SRS.

    ``(1/N1) (N0/(N-1)) (N/N0)^2 sigma^2`` with ``sigma^2`` the population
    variance of ``theta``.
    """
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    n1 = n_treated
    n0 = n - n1
    return (1.0 / n1) * (n0 / (n - 1)) * (n / n0) ** 2 * theta.var()


def bias_bound(mean_w) -> tuple[float, float]:
    """Range of ``E[w]^T theta`` over binary ``theta``."""
    m = np.asarray(mean_w, dtype=float).ravel()
    # correctly rounded sums, independent of summation order
    return math.fsum(m[m < 0]), math.fsum(m[m > 0])


def expectation_controls(design: DesignDescriptor, data: ExperimentData, terms, R=DEFAULT_R, seed=0):
    """Per-unit randomization means of regressor terms.

    Returns ``(columns, standard_errors)``, dicts keyed by term label, for
    use as covariates (e.g. expected neighborhood treatment rates).
    """
    n = data.n_units
    labels = [t.get("label") or json.dumps(t, sort_keys=True) for t in terms]
    s1 = np.zeros((len(terms), n))
    s2 = np.zeros((len(terms), n))
    for i in range(R):
        rng = draw_rng(seed, i)
        ctx = TermContext(data, design.draw(rng, i))
        for j, t in enumerate(terms):
            col = _term_columns({k: v for k, v in t.items() if k != "label"}, ctx)
            if len(col) != 1:
                raise DataError("expectation controls need single-column terms")
            s1[j] += col[0]
            s2[j] += col[0] ** 2
    mean = s1 / R
    se = np.sqrt(np.maximum(s2 / R - mean**2, 0) / R)
    return dict(zip(labels, mean)), dict(zip(labels, se))


# ---------------------------------------------------------------------------
# block-exchangeable moments


@dataclass(eq=False)
class BlockMoments:
    """Moments for units exchangeable within blocks.

    Every unit in block ``g`` has mean ``mean[g]``, variance ``var[g]`` and
    centering weight ``bar[g]``; two distinct units in blocks ``g`` and
    ``h`` have covariance ``cov[g, h]``.
    """

    labels: np.ndarray  # block index per unit
    names: tuple
    mean: np.ndarray
    var: np.ndarray
    cov: np.ndarray
    bar: np.ndarray
    method: str
    replications: int | None = None
    seed: int | None = None

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.names))

    @property
    def n_units(self):
        return int(self.labels.size)

    def unit_mean(self):
        return self.mean[self.labels]

    def unit_bar(self):
        return self.bar[self.labels]

    def to_dense(self) -> WeightMoments:
        lab = self.labels
        Q = self.cov[np.ix_(lab, lab)].copy()
        np.fill_diagonal(Q, self.var[lab])
        return WeightMoments(self.unit_mean(), Q, self.unit_bar(), self.method,
                             self.replications, self.seed)

    def refine(self, labels, names=None) -> "BlockMoments":
        """Same moments over a finer partition (each new block inside one old block)."""
        labels = np.asarray(labels)
        uniq, inv = np.unique(labels, return_inverse=True)
        parent = np.full(uniq.size, -1)
        for new, old in zip(inv, self.labels):
            if parent[new] not in (-1, old):
                raise DataError("new blocks must each lie inside one existing block")
            parent[new] = old
        return BlockMoments(
            inv.astype(np.int64),
            tuple(names or uniq.tolist()),
            self.mean[parent],
            self.var[parent],
            self.cov[np.ix_(parent, parent)],
            self.bar[parent],
            self.method,
            self.replications,
            self.seed,
        )

    def provenance(self) -> dict:
        out = {"method": self.method, "blocks": len(self.names)}
        if self.replications is not None:
            out.update(replications=self.replications, seed=self.seed)
        return out


def _block_index(labels):
    uniq, inv = np.unique(np.asarray(labels).astype(str), return_inverse=True)
    return inv.astype(np.int64), tuple(uniq.tolist())


def analytic_stratified_moments(
    scheme: WeightScheme,
    data: ExperimentData,
    design: DesignDescriptor,
    *,
    check_draws: int = 8,
    seed: int = 0,
) -> BlockMoments:
    """Exact moments for weights that are constant within stratum and arm.

    Applies under ``srs`` / ``stratified-srs`` designs when every draw
    gives treated units of stratum ``s`` the weight ``alpha_s`` and
    control units ``beta_s`` (difference in means, saturated
    stratum-by-treatment regressions). This is checked on the observed
    assignment and ``check_draws`` redraws.
    """
    if design.kind not in ("srs", "stratified-srs"):
        raise MomentError("closed-form block moments need an srs or stratified-srs design")
    labels, names = _block_index(design.stratum_labels())
    G = len(names)
    draws = [np.asarray(data.x)] + [design.draw(draw_rng(seed, i), i) for i in range(check_draws)]
    alpha = np.full(G, np.nan)
    beta = np.full(G, np.nan)
    grams = []
    for x in draws:
        w = scheme.weights(x, np.random.default_rng(seed))
        for g in range(G):
            in_g = labels == g
            for arm, store in ((1, alpha), (0, beta)):
                vals = w[in_g & (x == arm)]
                if vals.size == 0:
                    continue
                ref = store[g] if not np.isnan(store[g]) else vals[0]
                tol = 1e-12 * max(1.0, abs(ref))
                if np.max(np.abs(vals - ref)) > tol:
                    raise MomentError("weights are not constant within stratum and arm")
                store[g] = ref
        if scheme.kind == "regression":
            D = scheme.design_matrix(x)
            grams.append(D.T @ D)
    alpha = np.nan_to_num(alpha)
    beta = np.nan_to_num(beta)
    sizes = np.bincount(labels, minlength=G)
    p = np.array([design.treatment_probability()[labels == g][0] for g in range(G)])
    mean = alpha * p + beta * (1 - p)
    spread = (alpha - beta) ** 2 * p * (1 - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        within = np.where(sizes > 1, -spread / (sizes - 1), 0.0)
    cov = np.diag(within)
    if scheme.kind in ("tau1",):
        bar = mean.copy()
    elif scheme.kind == "regression" and all(np.allclose(g, grams[0], rtol=1e-12, atol=1e-12) for g in grams):
        # constant Gram matrix: c' M^{-1} E[xi_i] equals E[w_i]
        bar = mean.copy()
    else:
        raise MomentError("closed-form centering weights unavailable for this scheme; use Monte Carlo")
    return BlockMoments(labels, names, mean, spread, cov, bar, "analytic")


def block_mc_moments(
    scheme: WeightScheme,
    data: ExperimentData,
    design: DesignDescriptor,
    blocks=None,
    R: int = DEFAULT_R,
    seed: int = 0,
) -> BlockMoments:
    """Monte Carlo moments pooled within exchangeable blocks.

    Uses only per-block sums of ``w`` and ``w**2`` per draw, so memory is
    O(N + G^2) rather than O(N^2). ``blocks`` defaults to the design's
    strata; units in a block must be exchangeable under the design and
    the scheme.
    """
    labels, names = _block_index(design.stratum_labels() if blocks is None else blocks)
    G = len(names)
    sizes = np.bincount(labels, minlength=G).astype(float)
    eS = np.zeros(G)
    eSS = np.zeros(G)
    eSS_cross = np.zeros((G, G))
    acc = _Accumulator(data.n_units, scheme, False, dense=False)
    for i in range(R):
        rng = draw_rng(seed, i)
        x = design.draw(rng, i)
        try:
            w = scheme.weights(x, rng)
        except EstimandError:
            acc.failed += 1
            continue
        acc.count += 1
        S = np.bincount(labels, weights=w, minlength=G)
        eS += S
        eSS += np.bincount(labels, weights=w * w, minlength=G)
        eSS_cross += np.outer(S, S)
        if acc.kind == "regression":
            D = scheme.design_matrix(x)
            acc.gram = D.T @ D if acc.gram is None else acc.gram + D.T @ D
            acc.xi = D.copy() if acc.xi is None else acc.xi + D
        elif hasattr(acc, "W"):
            W = scheme.exposed(x).astype(float)
            cl = scheme.classes
            n1 = np.bincount(cl.class_of, weights=W, minlength=cl.n_classes)
            acc.W += W
            acc.n1 += n1
            acc.n0 += cl.sizes - n1
            acc.mk += np.minimum(n1, cl.sizes - n1)
    if acc.failed > R / 2:
        raise MomentError(f"weight builder failed on {acc.failed} of {R} draws")
    c = acc.count
    eS, eSS, eSS_cross = eS / c, eSS / c, eSS_cross / c
    mean = eS / sizes
    var = eSS / sizes - mean**2
    with np.errstate(divide="ignore", invalid="ignore"):
        pair = np.outer(sizes, sizes) - np.diag(sizes)
        cov = np.where(pair > 0, (eSS_cross - np.diag(eSS)) / pair, 0.0) - np.outer(mean, mean)
    if acc.kind == "tau1":
        bar = mean.copy()
    else:
        unit_bar = _bar_w(scheme, acc, mean[labels], c)
        bar = np.bincount(labels, weights=unit_bar, minlength=G) / sizes
    return BlockMoments(labels, names, mean, var, cov, bar, "monte-carlo", R, seed)


# ---------------------------------------------------------------------------
# disk cache


class MomentCache:
    """npz cache keyed by data digest, scheme config, design, R and seed.

    The directory defaults to ``$ATTRPI_CACHE_DIR``; with neither set the
    cache is disabled.
    """

    def __init__(self, directory=None):
        directory = directory or os.environ.get("ATTRPI_CACHE_DIR")
        self.directory = Path(directory) if directory else None

    @staticmethod
    def key(data: ExperimentData, scheme: WeightScheme, design: DesignDescriptor, R, seed) -> str:
        payload = json.dumps(
            {"data": data.digest(), "scheme": scheme.config(), "design": design.to_config(),
             "R": R, "seed": seed},
            sort_keys=True, default=str,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:32]

    def load(self, key) -> WeightMoments | None:
        if self.directory is None:
            return None
        path = self.directory / f"{key}.npz"
        if not path.exists():
            return None
        z = np.load(path, allow_pickle=False)
        meta = json.loads(str(z["meta"]))
        return WeightMoments(z["mean_w"], z["Q"], z["bar_w"], meta["method"],
                             meta.get("replications"), meta.get("seed"),
                             z["se_mean"] if "se_mean" in z else None, None,
                             meta.get("n_failed", 0))

    def store(self, key, m: WeightMoments) -> None:
        if self.directory is None:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        meta = json.dumps({"method": m.method, "replications": m.replications,
                           "seed": m.seed, "n_failed": m.n_failed})
        arrays = dict(mean_w=m.mean_w, Q=m.Q, bar_w=m.bar_w, meta=np.array(meta))
        if m.se_mean is not None:
            arrays["se_mean"] = m.se_mean
        np.savez(self.directory / f"{key}.npz", **arrays)


def cached_mc_moments(scheme, data, design, R=DEFAULT_R, seed=0, cache: MomentCache | None = None, **kw):
    cache = cache or MomentCache()
    key = cache.key(data, scheme, design, R, seed)
    hit = cache.load(key)
    if hit is not None:
        return hit
    m = mc_weight_moments(scheme, data, design, R, seed, **kw)
    cache.store(key, m)
    return m
