"""Experiment data model, CSV ingestion and aggregate-table expansion."""

from __future__ import annotations

import csv
import hashlib
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Raised when input data violates the experiment data model."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Network:
    """Directed adjacency over unit indices.

    An edge ``i -> j`` means unit ``i`` is exposed to the treatment of ``j``.
    Edges are stored sorted by (src, dst) without duplicates or self-loops.
    """

    def __init__(self, n_units: int, src, dst, *, symmetric: bool = False):
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if src.shape != dst.shape:
            raise DataError("edge endpoint arrays differ in length")
        if symmetric:
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
        if src.size:
            bad = (src < 0) | (dst < 0) | (src >= n_units) | (dst >= n_units)
            if bad.any():
                k = int(np.flatnonzero(bad)[0])
                raise DataError(
                    f"dangling endpoint: edge ({src[k]}, {dst[k]}) with n_units={n_units}"
                )
            if (src == dst).any():
                raise DataError("self-loop in network")
        key = src * max(n_units, 1) + dst
        uniq, idx = np.unique(key, return_index=True)
        n_dup = key.size - uniq.size
        if n_dup and not symmetric:
            warnings.warn(f"{n_dup} duplicate edge(s) removed", stacklevel=2)
        self.n_units = int(n_units)
        self.src = _frozen(src[idx])
        self.dst = _frozen(dst[idx])

    @classmethod
    def empty(cls, n_units: int) -> "Network":
        return cls(n_units, [], [])

    @property
    def n_edges(self) -> int:
        return int(self.src.size)

    def adjacency(self) -> sp.csr_matrix:
        """Sparse ``A`` with ``A[i, j] = 1`` for each edge ``i -> j``."""
        n = self.n_units
        return sp.csr_matrix(
            (np.ones(self.n_edges), (self.src, self.dst)), shape=(n, n)
        )

    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n_units)

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.n_units)

    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.src.tolist(), self.dst.tolist()))

    def __eq__(self, other):
        return (
            isinstance(other, Network)
            and self.n_units == other.n_units
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
        )

    def __repr__(self):
        return f"Network(n_units={self.n_units}, n_edges={self.n_edges})"


@dataclass(frozen=True, eq=False)
class ExperimentData:
    """Outcomes, treatment, network and covariates for one experiment.

    ``theta`` is the counterfactual outcome vector and is only known for
    simulated data.
    """

    y: np.ndarray
    x: np.ndarray
    network: Network
    covariates: Mapping[str, np.ndarray] = field(default_factory=dict)
    theta: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x)
        n = y.shape[0]
        if y.ndim != 1 or x.shape != (n,):
            raise DataError("outcomes and treatment must be vectors of equal length")
        if not np.isin(x, (0, 1)).all():
            raise DataError("non-binary treatment")
        if ((y < 0) | (y > 1)).any() or np.isnan(y).any():
            raise DataError("outcomes must lie in [0, 1]")
        if self.network.n_units != n:
            raise DataError("network size does not match number of units")
        covs = {}
        for name, col in self.covariates.items():
            col = np.asarray(col)
            if col.shape != (n,):
                raise DataError(f"covariate {name!r} has wrong length")
            covs[name] = _frozen(col)
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x", _frozen(x.astype(np.int8)))
        object.__setattr__(self, "covariates", covs)
        if self.theta is not None:
            th = np.asarray(self.theta)
            if th.shape != (n,) or not np.isin(th, (0, 1)).all():
                raise DataError("counterfactual theta must be a binary vector")
            object.__setattr__(self, "theta", _frozen(th.astype(float)))

    @property
    def n_units(self) -> int:
        return int(self.y.shape[0])

    @property
    def n_treated(self) -> int:
        return int(self.x.sum())

    def covariate(self, name: str) -> np.ndarray:
        try:
            return self.covariates[name]
        except KeyError:
            raise DataError(f"unknown covariate {name!r}") from None

    def with_treatment(self, x) -> "ExperimentData":
        return ExperimentData(self.y, x, self.network, self.covariates, self.theta)

    def canonical_bytes(self) -> bytes:
        """Stable serialization used for hashing and determinism checks."""
        h = [b"y", self.y.astype("<f8").tobytes(), b"x", self.x.astype("<i1").tobytes()]
        h += [b"src", self.network.src.astype("<i8").tobytes()]
        h += [b"dst", self.network.dst.astype("<i8").tobytes()]
        for name in sorted(self.covariates):
            col = self.covariates[name]
            h += [b"cov", name.encode(), str(col.dtype).encode()]
            h.append(col.astype(str).tobytes() if col.dtype.kind in "OU" else col.tobytes())
        if self.theta is not None:
            h += [b"theta", self.theta.astype("<f8").tobytes()]
        return b"\x00".join(h)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()


@dataclass(frozen=True)
class Schema:
    outcome: str = "y"
    treatment: str = "x"
    theta: str | None = "theta"
    covariates: Sequence[str] | None = None
    undirected: bool = False


def _parse_column(values: list[str]) -> np.ndarray:
    try:
        arr = np.array([float(v) for v in values])
    except ValueError:
        return np.array(values, dtype=str)
    if np.all(arr == np.round(arr)):
        return arr.astype(np.int64)
    return arr


def load_experiment(unit_csv_path, edge_csv_path=None, schema: Schema | None = None) -> ExperimentData:
    """Read unit rows and an edge list into :class:`ExperimentData`.

    Row order of the unit file defines unit indices. The edge file has
    columns ``src,dst`` with zero-based indices.
    """
    schema = schema or Schema()
    unit_csv_path = Path(unit_csv_path)
    with unit_csv_path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    for col in (schema.outcome, schema.treatment):
        if col not in header:
            raise DataError(f"missing column {col!r} in {unit_csv_path}")
    cols = {name: [r[name] for r in rows] for name in header}

    y = _parse_column(cols[schema.outcome]).astype(float)
    x_raw = _parse_column(cols[schema.treatment])
    if x_raw.dtype.kind not in "if" or not np.isin(x_raw, (0, 1)).all():
        raise DataError("non-binary treatment")
    theta = None
    if schema.theta and schema.theta in header:
        theta = _parse_column(cols[schema.theta])
    reserved = {schema.outcome, schema.treatment, schema.theta}
    cov_names = schema.covariates
    if cov_names is None:
        cov_names = [h for h in header if h not in reserved]
    missing = [c for c in cov_names if c not in header]
    if missing:
        raise DataError(f"missing column {missing[0]!r} in {unit_csv_path}")
    covs = {c: _parse_column(cols[c]) for c in cov_names}

    n = len(rows)
    if edge_csv_path is None:
        net = Network.empty(n)
    else:
        src, dst = [], []
        with Path(edge_csv_path).open(newline="") as fh:
            reader = csv.DictReader(fh)
            if not {"src", "dst"} <= set(reader.fieldnames or []):
                raise DataError(f"edge file {edge_csv_path} needs columns src,dst")
            for r in reader:
                src.append(int(r["src"]))
                dst.append(int(r["dst"]))
        net = Network(n, src, dst, symmetric=schema.undirected)
    return ExperimentData(y, x_raw, net, covs, theta)


def write_experiment(data: ExperimentData, unit_csv_path, edge_csv_path=None) -> None:
    names = sorted(data.covariates)
    with Path(unit_csv_path).open("w", newline="") as fh:
        w = csv.writer(fh)
        header = ["y", "x"] + (["theta"] if data.theta is not None else []) + names
        w.writerow(header)
        for i in range(data.n_units):
            row = [repr(float(data.y[i])), int(data.x[i])]
            if data.theta is not None:
                row.append(int(data.theta[i]))
            row += [data.covariates[c][i].item() if hasattr(data.covariates[c][i], "item")
                    else data.covariates[c][i] for c in names]
            w.writerow(row)
    if edge_csv_path is not None:
        with Path(edge_csv_path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["src", "dst"])
            w.writerows(data.network.edges())


# ---------------------------------------------------------------------------
# aggregate tables


ARMS = ("treated", "control")


@dataclass(frozen=True)
class AggregateRow:
    group: str
    arm: str
    events: int
    size: int


@dataclass(frozen=True)
class AggregateTable:
    rows: tuple[AggregateRow, ...]

    def __post_init__(self):
        seen = set()
        for r in self.rows:
            if r.arm not in ARMS:
                raise DataError(f"arm must be one of {ARMS}, got {r.arm!r}")
            if r.size <= 0:
                raise DataError(f"group {r.group} {r.arm}: size must be positive")
            if not 0 <= r.events <= r.size:
                raise DataError(f"group {r.group} {r.arm}: count > size")
            if (r.group, r.arm) in seen:
                raise DataError(f"duplicate row for ({r.group}, {r.arm})")
            seen.add((r.group, r.arm))

    @classmethod
    def from_records(cls, records) -> "AggregateTable":
        return cls(tuple(AggregateRow(str(g), a, int(e), int(s)) for g, a, e, s in records))

    @classmethod
    def read_csv(cls, path) -> "AggregateTable":
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            need = {"group", "arm", "events", "size"}
            if not need <= set(reader.fieldnames or []):
                raise DataError(f"aggregate file {path} needs columns group,arm,events,size")
            recs = [(r["group"], r["arm"].strip(), r["events"], r["size"]) for r in reader]
        return cls.from_records(recs)

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["group", "arm", "events", "size"])
            for r in self.rows:
                w.writerow([r.group, r.arm, r.events, r.size])

    def groups(self) -> list[str]:
        out = []
        for r in self.rows:
            if r.group not in out:
                out.append(r.group)
        return out


def _group_order(table: AggregateTable):
    arm_rank = {a: i for i, a in enumerate(ARMS)}
    groups = table.groups()
    return sorted(table.rows, key=lambda r: (groups.index(r.group), arm_rank[r.arm]))


def expand_aggregate(table: AggregateTable) -> ExperimentData:
    """Unit-level data reproducing each (group, arm) row of ``table``.

    Units are ordered group-major, then treated before control, and within
    each block the units with an event come first. The group label is
    stored in covariate ``group`` and the block label in ``cell``.
    """
    ys, xs, gs, cells = [], [], [], []
    for r in _group_order(table):
        y = np.zeros(r.size)
        y[: r.events] = 1.0
        ys.append(y)
        xs.append(np.full(r.size, 1 if r.arm == "treated" else 0, dtype=np.int8))
        gs.append(np.full(r.size, r.group))
        cells.append(np.full(r.size, f"{r.group}:{r.arm}"))
    y = np.concatenate(ys)
    return ExperimentData(
        y,
        np.concatenate(xs),
        Network.empty(y.size),
        {"group": np.concatenate(gs), "cell": np.concatenate(cells)},
    )


def reaggregate(data: ExperimentData, group_column: str = "group") -> AggregateTable:
    """Inverse of :func:`expand_aggregate` over (group, arm) blocks."""
    g = data.covariate(group_column)
    order = []
    for v in g.tolist():
        if v not in order:
            order.append(v)
    recs = []
    for label in order:
        in_g = g == label
        for arm, xv in (("treated", 1), ("control", 0)):
            m = in_g & (data.x == xv)
            if m.any():
                recs.append((label, arm, int(data.y[m].sum()), int(m.sum())))
    return AggregateTable.from_records(recs)
