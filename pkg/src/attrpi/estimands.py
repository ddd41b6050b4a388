"""Weight vectors ``w(X)`` for the supported estimands.

Every estimand is a linear functional ``w(X)^T (Y - theta)`` of the
attributable effects; its point estimate is ``w(X)^T Y``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import DataError, ExperimentData
from .exposure import PropensityClasses, compute_exposure, threshold_exposure
from .kernels import matched_mask

COND_LIMIT = 1e12


class EstimandError(ValueError):
    """A weight vector cannot be formed for this treatment draw."""


class SingularDesignError(EstimandError):
    def __init__(self, cond):
        self.cond = cond
        super().__init__(f"singular design (condition number {cond:.3g})")


class ClassExclusionWarning(UserWarning):
    """A propensity class lacked exposed or unexposed units and was dropped."""


# ---------------------------------------------------------------------------
# closed-form weights


def tau1_weights(treatment) -> np.ndarray:
    x = np.asarray(treatment, dtype=float)
    n1 = x.sum()
    n0 = x.size - n1
    if n1 == 0 or n0 == 0:
        raise EstimandError("tau1 needs both treated and control units")
    return x / n1 - (1.0 - x) / n0


def point_estimate(w, outcomes) -> float:
    w = np.asarray(w, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    if w.shape != y.shape:
        raise ValueError("weights and outcomes differ in length")
    return float(w @ y)


def ols_contrast_weights(design: np.ndarray, contrast) -> np.ndarray:
    """``w_i = c^T (sum_j xi_j xi_j^T)^{-1} xi_i`` for an N x d design."""
    design = np.asarray(design, dtype=float)
    c = np.asarray(contrast, dtype=float)
    if design.ndim != 2 or design.shape[1] != c.size:
        raise ValueError("contrast length must equal the number of regressors")
    gram = design.T @ design
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularDesignError(cond)
    return design @ np.linalg.solve(gram, c)


def beta_adj_weights(z, classes: PropensityClasses) -> np.ndarray:
    """Within-class exposure slope: ``(Z_i - zeta_k(i)) / sum_j (Z_j - zeta_k(j))^2``."""
    z = np.asarray(z, dtype=float)
    dev = z - classes.class_means(z)[classes.class_of]
    ss = dev @ dev
    if ss <= 1e-12 * max(1.0, z @ z):
        raise EstimandError("exposure is constant within every propensity class")
    return dev / ss


def effect_curve_design(z, classes: PropensityClasses, levels=None):
    """Level indicators of ``z`` followed by class indicators minus the last class."""
    z = np.asarray(z)
    if levels is None:
        levels = np.unique(z)
    levels = list(levels)
    cols = [(z == lev).astype(float) for lev in levels]
    ind = classes.indicators()[:, :-1]
    return np.column_stack(cols + [ind]) if ind.size else np.column_stack(cols), levels


def effect_curve_weights(z, classes: PropensityClasses, d: int) -> np.ndarray:
    """Weights for ``gamma_d - gamma_0`` in the level-indicator regression."""
    z = np.asarray(z)
    if d == 0:
        if not (z == 0).any():
            raise EstimandError("exposure level 0 is not occupied")
        return np.zeros(z.size)
    for lev in (0, d):
        if not (z == lev).any():
            raise EstimandError(f"exposure level {lev} is not occupied")
    design, levels = effect_curve_design(z, classes)
    c = np.zeros(design.shape[1])
    c[levels.index(d)] = 1.0
    c[levels.index(0)] = -1.0
    return ols_contrast_weights(design, c)


def _arm_counts(w_exposed, classes):
    W = np.asarray(w_exposed).astype(np.int64)
    n1 = np.bincount(classes.class_of, weights=W, minlength=classes.n_classes)
    n0 = classes.sizes - n1
    return W, n1, n0


def weighted_contrast_weights(w_exposed, classes: PropensityClasses, *, warn=True) -> np.ndarray:
    """Class-size-weighted difference between exposed and unexposed means.

    Classes without both exposed and unexposed units are dropped and the
    class-size normalization uses the retained classes only.
    """
    W, n1, n0 = _arm_counts(w_exposed, classes)
    keep = (n1 > 0) & (n0 > 0)
    if not keep.any():
        raise EstimandError("no propensity class has both exposed and unexposed units")
    if warn and not keep.all():
        dropped = [classes.labels[k] for k in np.flatnonzero(~keep)]
        warnings.warn(f"dropped propensity classes {dropped}", ClassExclusionWarning, stacklevel=2)
    sizes = classes.sizes
    n_kept = sizes[keep].sum()
    k = classes.class_of
    with np.errstate(divide="ignore", invalid="ignore"):
        per = W / n1[k] - (1 - W) / n0[k]
    w = np.where(keep[k], sizes[k] / n_kept * per, 0.0)
    return w


def expected_matched_weights(w_exposed, classes: PropensityClasses) -> np.ndarray:
    W, n1, n0 = _arm_counts(w_exposed, classes)
    mk = np.minimum(n1, n0)
    m = mk.sum()
    if m == 0:
        raise EstimandError("no matched pairs can be formed")
    k = classes.class_of
    with np.errstate(divide="ignore", invalid="ignore"):
        per = W / n1[k] - (1 - W) / n0[k]
    return np.where(mk[k] > 0, mk[k] / m * per, 0.0)


@dataclass(frozen=True)
class Matching:
    n_pairs: int
    pairs_by_class: dict
    matched: np.ndarray


def matched_contrast_weights(w_exposed, classes: PropensityClasses, rng_seed=None, *, rng=None):
    """Random within-class matching of exposed to unexposed units.

    Returns ``(w, matching)``; matched exposed units get ``+1/m``, matched
    unexposed ``-1/m``.
    """
    W = np.asarray(w_exposed).astype(np.int8)
    rng = rng if rng is not None else np.random.default_rng(rng_seed)
    keys = rng.random(W.size)
    mask = matched_mask(classes.class_of, W, keys, classes.n_classes).astype(bool)
    m = int(mask.sum()) // 2
    if m == 0:
        raise EstimandError("no matched pairs can be formed")
    w = np.where(mask, np.where(W == 1, 1.0, -1.0) / m, 0.0)
    per_class = np.bincount(classes.class_of[mask], minlength=classes.n_classes) // 2
    desc = Matching(m, {classes.labels[i]: int(v) for i, v in enumerate(per_class) if v}, mask)
    return w, desc


# ---------------------------------------------------------------------------
# regressor specifications


TERM_TYPES = (
    "const", "treat", "treat_centered", "exposure", "threshold", "covariate",
    "indicator", "class_indicators", "level_indicators", "interaction",
)


@dataclass(frozen=True)
class RegressorSpec:
    """Regressor terms ``xi_i(X)`` and the contrast reported from ``beta``.

    ``terms`` is a list of dicts with a ``type`` key, e.g.
    ``{"type": "treat"}``, ``{"type": "threshold", "z_min": 2}``,
    ``{"type": "indicator", "name": "group", "value": "1"}`` or
    ``{"type": "interaction", "of": [term_a, term_b]}``.
    """

    terms: tuple
    contrast: tuple

    def __post_init__(self):
        terms = tuple(dict(t) for t in self.terms)
        for t in terms:
            _check_term(t)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "contrast", tuple(float(v) for v in self.contrast))

    @classmethod
    def from_config(cls, cfg: dict, contrast=None) -> "RegressorSpec":
        c = contrast if contrast is not None else cfg["contrast"]
        return cls(tuple(cfg["terms"]), tuple(c))

    def to_config(self) -> dict:
        return {"terms": [dict(t) for t in self.terms], "contrast": list(self.contrast)}

    def to_json(self) -> str:
        return json.dumps(self.to_config(), sort_keys=True)

    def with_contrast(self, contrast) -> "RegressorSpec":
        return RegressorSpec(self.terms, tuple(contrast))


def _check_term(t):
    kind = t.get("type")
    if kind not in TERM_TYPES:
        raise DataError(f"unknown regressor term type {kind!r}")
    if kind == "interaction":
        if len(t.get("of", ())) != 2:
            raise DataError("interaction needs exactly two terms")
        for sub in t["of"]:
            _check_term(sub)


@dataclass
class TermContext:
    """Per-draw quantities shared by regressor terms."""

    data: ExperimentData
    x: np.ndarray
    classes: PropensityClasses | None = None
    _z: np.ndarray | None = field(default=None, repr=False)

    @property
    def z(self):
        if self._z is None:
            self._z = compute_exposure(self.data.network, self.x)
        return self._z


def _term_columns(t: dict, ctx: TermContext) -> list[np.ndarray]:
    kind = t["type"]
    x = ctx.x.astype(float)
    n = x.size
    if kind == "const":
        return [np.ones(n)]
    if kind == "treat":
        return [x]
    if kind == "treat_centered":
        return [x - x.mean()]
    if kind == "exposure":
        z = ctx.z.astype(float)
        if t.get("include_self"):
            z = z + x
        if t.get("scale"):
            z = z / ctx.data.covariate(t["scale"]).astype(float)
        return [z]
    if kind == "threshold":
        return [threshold_exposure(ctx.z, int(t["z_min"])).astype(float)]
    if kind == "covariate":
        return [ctx.data.covariate(t["name"]).astype(float)]
    if kind == "indicator":
        col = ctx.data.covariate(t["name"])
        return [(col.astype(str) == str(t["value"])).astype(float)]
    if kind == "class_indicators":
        if ctx.classes is None:
            raise DataError("class_indicators term needs propensity classes")
        ind = ctx.classes.indicators()
        if t.get("drop_last", False):
            ind = ind[:, :-1]
        return list(ind.T)
    if kind == "level_indicators":
        return [(ctx.z == lev).astype(float) for lev in t["levels"]]
    # interaction
    a = _term_columns(t["of"][0], ctx)
    b = _term_columns(t["of"][1], ctx)
    if len(a) != 1 or len(b) != 1:
        raise DataError("interaction terms must each produce one column")
    return [a[0] * b[0]]


def design_matrix(spec: RegressorSpec, data: ExperimentData, treatment, classes=None) -> np.ndarray:
    ctx = TermContext(data, np.asarray(treatment), classes)
    cols = []
    for t in spec.terms:
        cols.extend(_term_columns(t, ctx))
    return np.column_stack(cols)


def regression_weights(spec: RegressorSpec, data: ExperimentData, treatment, classes=None) -> np.ndarray:
    """Weights reproducing ``c^T beta_hat`` from OLS on the spec's regressors."""
    D = design_matrix(spec, data, treatment, classes)
    if D.shape[1] != len(spec.contrast):
        raise DataError(
            f"contrast has {len(spec.contrast)} entries but design has {D.shape[1]} columns"
        )
    return ols_contrast_weights(D, spec.contrast)


# ---------------------------------------------------------------------------
# schemes: builders mapping a treatment draw to a weight vector


class WeightScheme:
    """Maps a treatment vector to the estimand's weight vector.

    ``kind`` selects how centering weights are formed: ``tau1``,
    ``regression``, ``weighted``, ``matched`` or ``expected-matched``.
    """

    name = "scheme"
    kind = "tau1"
    needs_rng = False

    def weights(self, x, rng=None) -> np.ndarray:
        raise NotImplementedError

    def config(self) -> dict:
        return {"name": self.name, "kind": self.kind}


class Tau1Scheme(WeightScheme):
    name = "tau1"
    kind = "tau1"

    def weights(self, x, rng=None):
        return tau1_weights(x)


class RegressionScheme(WeightScheme):
    kind = "regression"

    def __init__(self, spec: RegressorSpec, data: ExperimentData, classes=None, name="regression"):
        self.spec = spec
        self.data = data
        self.classes = classes
        self.name = name

    @property
    def contrast(self):
        return np.asarray(self.spec.contrast)

    def design_matrix(self, x):
        return design_matrix(self.spec, self.data, x, self.classes)

    def weights(self, x, rng=None):
        return regression_weights(self.spec, self.data, x, self.classes)

    def config(self):
        return {"name": self.name, "kind": self.kind, **self.spec.to_config()}


class BetaAdjScheme(RegressionScheme):
    """Exposure slope adjusted for propensity-class indicators."""

    def __init__(self, data: ExperimentData, classes: PropensityClasses, name="beta_adj"):
        spec = RegressorSpec(
            ({"type": "exposure"}, {"type": "class_indicators"}),
            (1.0,) + (0.0,) * classes.n_classes,
        )
        super().__init__(spec, data, classes, name)

    def weights(self, x, rng=None):
        return beta_adj_weights(compute_exposure(self.data.network, x), self.classes)


class EffectCurveScheme(RegressionScheme):
    """``gamma_d - gamma_0`` over a fixed list of exposure levels."""

    def __init__(self, data, classes, d, levels, name=None):
        levels = [int(v) for v in levels]
        if 0 not in levels or d not in levels:
            raise DataError("levels must include 0 and d")
        c = np.zeros(len(levels) + classes.n_classes - 1)
        if d != 0:
            c[levels.index(d)] = 1.0
            c[levels.index(0)] = -1.0
        terms = ({"type": "level_indicators", "levels": levels},
                 {"type": "class_indicators", "drop_last": True})
        super().__init__(RegressorSpec(terms, tuple(c)), data, classes,
                         name or f"gamma{d}-gamma0")
        self.d = d

    def weights(self, x, rng=None):
        z = compute_exposure(self.data.network, x)
        for lev in self.spec.terms[0]["levels"]:
            if not (z == lev).any():
                raise EstimandError(f"exposure level {lev} is not occupied")
        return super().weights(x)


class _ExposureContrast(WeightScheme):
    def __init__(self, data, classes, z_min=1, exposure="threshold", name=None):
        if exposure not in ("threshold", "treatment"):
            raise DataError("exposure must be 'threshold' or 'treatment'")
        self.data = data
        self.classes = classes
        self.z_min = int(z_min)
        self.exposure = exposure
        if name:
            self.name = name

    def exposed(self, x):
        if self.exposure == "treatment":
            return np.asarray(x).astype(np.int8)
        return threshold_exposure(compute_exposure(self.data.network, x), self.z_min)

    def config(self):
        return {"name": self.name, "kind": self.kind, "z_min": self.z_min,
                "exposure": self.exposure, "classes": self.classes.description}


class WeightedScheme(_ExposureContrast):
    name = "tau_weighted"
    kind = "weighted"

    def weights(self, x, rng=None):
        return weighted_contrast_weights(self.exposed(x), self.classes, warn=False)


class ExpectedMatchedScheme(_ExposureContrast):
    name = "E_tau_matched"
    kind = "expected-matched"

    def weights(self, x, rng=None):
        return expected_matched_weights(self.exposed(x), self.classes)


class MatchedScheme(_ExposureContrast):
    name = "tau_matched"
    kind = "matched"
    needs_rng = True

    def __init__(self, data, classes, z_min=1, exposure="threshold", seed=0, name=None):
        super().__init__(data, classes, z_min, exposure, name)
        self.seed = seed

    def weights(self, x, rng=None):
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        return matched_contrast_weights(self.exposed(x), self.classes, rng=rng)[0]

    def config(self):
        return {**super().config(), "seed": self.seed}


def build_scheme(cfg: dict, data: ExperimentData, classes: PropensityClasses | None = None) -> WeightScheme:
    """Scheme from a JSON-style config with a ``scheme`` key."""
    kind = cfg.get("scheme", "tau1")
    if kind == "tau1":
        return Tau1Scheme()
    if kind == "regression":
        return RegressionScheme(RegressorSpec.from_config(cfg), data, classes, cfg.get("name", "regression"))
    if classes is None:
        raise DataError(f"scheme {kind!r} needs propensity classes")
    if kind == "beta_adj":
        return BetaAdjScheme(data, classes)
    if kind == "effect_curve":
        return EffectCurveScheme(data, classes, int(cfg["d"]), cfg["levels"])
    opts = dict(z_min=cfg.get("z_min", 1), exposure=cfg.get("exposure", "threshold"))
    if kind == "weighted":
        return WeightedScheme(data, classes, **opts)
    if kind == "expected_matched":
        return ExpectedMatchedScheme(data, classes, **opts)
    if kind == "matched":
        return MatchedScheme(data, classes, seed=cfg.get("seed", 0), **opts)
    raise DataError(f"unknown scheme {kind!r}")


def contrasts_from_config(cfg: dict) -> list[tuple[str, Sequence[float]]]:
    """Named contrasts of a regression config (``contrasts`` or ``contrast``)."""
    if "contrasts" in cfg:
        return [(k, v) for k, v in cfg["contrasts"].items()]
    return [(cfg.get("name", "estimate"), cfg["contrast"])]
