"""Randomization designs: how treatment vectors are redrawn."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DataError, ExperimentData

KINDS = ("bernoulli", "srs", "stratified-srs", "external")


@dataclass(frozen=True, eq=False)
class DesignDescriptor:
    """Treatment assignment mechanism over ``n_units`` units.

    kind
        ``bernoulli`` (independent with probability ``rho``), ``srs``
        (``n_treated`` sampled without replacement), ``stratified-srs``
        (``n_treated_by_stratum[s]`` sampled within each stratum) or
        ``external`` (rows of ``replications`` are used in order).
    """

    kind: str
    n_units: int
    rho: float | None = None
    n_treated: int | None = None
    strata: np.ndarray | None = None
    n_treated_by_stratum: dict | None = None
    replications: np.ndarray | None = None
    seed: int = 0
    _stratum_index: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        n = self.n_units
        if self.kind not in KINDS:
            raise DataError(f"unknown design kind {self.kind!r}")
        if self.kind == "bernoulli":
            if self.rho is None or not 0 < self.rho < 1:
                raise DataError("bernoulli design requires rho in (0, 1)")
        elif self.kind == "srs":
            if self.n_treated is None or not 0 < self.n_treated < n:
                raise DataError("srs design requires 0 < n_treated < n_units")
        elif self.kind == "stratified-srs":
            if self.strata is None or self.n_treated_by_stratum is None:
                raise DataError("stratified-srs requires strata and per-stratum counts")
            strata = np.asarray(self.strata)
            if strata.shape != (n,):
                raise DataError("strata labels must have one entry per unit")
            labels = list(dict.fromkeys(strata.tolist()))
            counts = {str(k): int(v) for k, v in self.n_treated_by_stratum.items()}
            idx = []
            for lab in labels:
                members = np.flatnonzero(strata == lab)
                k = counts.get(str(lab))
                if k is None or not 0 <= k <= members.size:
                    raise DataError(f"invalid treated count for stratum {lab!r}")
                idx.append((lab, members, k))
            object.__setattr__(self, "strata", strata)
            object.__setattr__(self, "n_treated_by_stratum", counts)
            object.__setattr__(self, "_stratum_index", idx)
        else:
            reps = np.asarray(self.replications)
            if reps.ndim != 2 or reps.shape[1] != n or not np.isin(reps, (0, 1)).all():
                raise DataError("external replications must be an R x n_units binary matrix")
            object.__setattr__(self, "replications", reps.astype(np.int8))

    # constructors ---------------------------------------------------------

    @classmethod
    def bernoulli(cls, n_units, rho, seed=0):
        return cls("bernoulli", n_units, rho=rho, seed=seed)

    @classmethod
    def srs(cls, n_units, n_treated, seed=0):
        return cls("srs", n_units, n_treated=int(n_treated), seed=seed)

    @classmethod
    def stratified(cls, strata, n_treated_by_stratum, seed=0):
        strata = np.asarray(strata)
        return cls("stratified-srs", strata.size, strata=strata,
                   n_treated_by_stratum=dict(n_treated_by_stratum), seed=seed)

    @classmethod
    def external(cls, replications, seed=0):
        reps = np.asarray(replications)
        return cls("external", reps.shape[1], replications=reps, seed=seed)

    @classmethod
    def matching_observed(cls, data: ExperimentData, kind="srs", strata_column=None, seed=0):
        """Design whose treated counts equal those observed in ``data``."""
        if kind == "srs":
            return cls.srs(data.n_units, data.n_treated, seed)
        if kind == "stratified-srs":
            strata = data.covariate(strata_column)
            counts = {}
            for lab in dict.fromkeys(strata.tolist()):
                counts[str(lab)] = int(data.x[strata == lab].sum())
            return cls.stratified(strata, counts, seed)
        if kind == "bernoulli":
            return cls.bernoulli(data.n_units, data.n_treated / data.n_units, seed)
        raise DataError(f"cannot infer a {kind!r} design from data")

    # sampling ---------------------------------------------------------------

    def draw(self, rng: np.random.Generator, index: int = 0) -> np.ndarray:
        n = self.n_units
        if self.kind == "bernoulli":
            return (rng.random(n) < self.rho).astype(np.int8)
        x = np.zeros(n, dtype=np.int8)
        if self.kind == "srs":
            x[rng.choice(n, self.n_treated, replace=False)] = 1
        elif self.kind == "stratified-srs":
            for _, members, k in self._stratum_index:
                if k:
                    x[rng.choice(members, k, replace=False)] = 1
        else:
            x = self.replications[index % self.replications.shape[0]].copy()
        return x

    def treatment_probability(self) -> np.ndarray:
        n = self.n_units
        if self.kind == "bernoulli":
            return np.full(n, self.rho)
        if self.kind == "srs":
            return np.full(n, self.n_treated / n)
        if self.kind == "stratified-srs":
            p = np.empty(n)
            for _, members, k in self._stratum_index:
                p[members] = k / members.size
            return p
        return self.replications.mean(axis=0)

    def stratum_labels(self) -> np.ndarray:
        """Labels of blocks within which units are exchangeable under the design."""
        if self.kind == "stratified-srs":
            return self.strata
        if self.kind == "external":
            raise DataError("external designs carry no exchangeable blocks")
        return np.zeros(self.n_units, dtype=np.int64)

    def to_config(self) -> dict:
        cfg = {"kind": self.kind, "seed": self.seed}
        if self.kind == "bernoulli":
            cfg["rho"] = self.rho
        elif self.kind == "srs":
            cfg["n_treated"] = self.n_treated
        elif self.kind == "stratified-srs":
            cfg["n_treated_by_stratum"] = dict(self.n_treated_by_stratum)
        else:
            cfg["replications"] = int(self.replications.shape[0])
        return cfg


def draw_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for draw ``index`` of a run seeded by ``seed``.

    Derived from both values so results do not depend on how draws are
    split across workers.
    """
    return np.random.default_rng([int(seed), int(index)])
