"""Indirect exposure to treatment through the network, and propensity classes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import DataError, ExperimentData, Network


def compute_exposure(network: Network, treatment) -> np.ndarray:
    """Number of treated out-neighbors of each unit."""
    x = np.asarray(treatment)
    if x.shape[-1] != network.n_units:
        raise DataError("treatment length does not match network size")
    if network.n_edges == 0:
        return np.zeros(x.shape, dtype=np.int64)
    A = network.adjacency()
    if x.ndim == 1:
        return np.rint(A @ x.astype(float)).astype(np.int64)
    # batch of draws, one per row
    return np.rint((A @ x.T.astype(float)).T).astype(np.int64)


def threshold_exposure(z, z_min: int) -> np.ndarray:
    if z_min < 0:
        raise ValueError("z_min must be nonnegative")
    return (np.asarray(z) >= z_min).astype(np.int8)


@dataclass(frozen=True, eq=False)
class PropensityClasses:
    class_of: np.ndarray  # 0-based class index per unit
    labels: tuple  # key tuple for each class
    description: str

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.class_of, minlength=self.n_classes)

    @property
    def n_units(self) -> int:
        return int(self.class_of.size)

    def indicators(self) -> np.ndarray:
        """N x K membership matrix."""
        out = np.zeros((self.n_units, self.n_classes))
        out[np.arange(self.n_units), self.class_of] = 1.0
        return out

    def class_means(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.bincount(self.class_of, weights=v, minlength=self.n_classes) / self.sizes

    def projector(self) -> np.ndarray:
        """Dense projection onto class-constant vectors."""
        same = self.class_of[:, None] == self.class_of[None, :]
        return same / self.sizes[self.class_of][:, None]

    @classmethod
    def from_labels(cls, labels, description="labels") -> "PropensityClasses":
        labels = np.asarray(labels)
        uniq, inv = np.unique(labels, return_inverse=True)
        return cls(inv.astype(np.int64), tuple(uniq.tolist()), description)

    @classmethod
    def single(cls, n_units) -> "PropensityClasses":
        return cls(np.zeros(n_units, dtype=np.int64), ((),), "all units")


def _resolve_key(data: ExperimentData, key: str, network: Network | None) -> np.ndarray:
    net = network if network is not None else data.network
    if key in ("out-degree", "degree", "outdeg"):
        return net.out_degree()
    if key in ("in-degree", "indeg"):
        return net.in_degree()
    return data.covariate(key)


def build_propensity_classes(data: ExperimentData, keys: Sequence[str], network=None) -> PropensityClasses:
    """Classes formed by distinct tuples of the given per-unit keys.

    Keys name covariates or ``out-degree`` / ``in-degree`` of ``network``
    (the data's network by default).
    """
    if not keys:
        raise DataError("at least one propensity key is required")
    cols = [np.asarray(_resolve_key(data, k, network)).astype(str) for k in keys]
    tuples = list(zip(*[c.tolist() for c in cols]))
    index: dict = {}
    class_of = np.empty(len(tuples), dtype=np.int64)
    for i, t in enumerate(tuples):
        class_of[i] = index.setdefault(t, len(index))
    # relabel so class order follows sorted key tuples
    order = sorted(index, key=lambda t: [_sort_key(v) for v in t])
    remap = np.empty(len(order), dtype=np.int64)
    for new, t in enumerate(order):
        remap[index[t]] = new
    return PropensityClasses(remap[class_of], tuple(order), " x ".join(keys))


def _sort_key(v: str):
    try:
        return (0, float(v), "")
    except ValueError:
        return (1, 0.0, v)


def cap_degree(network: Network, d_max: int) -> Network:
    """Subnetwork with in- and out-degree at most ``d_max``.

    Each unit keeps its ``d_max`` lowest-index out-edges; afterwards each
    unit keeps the ``d_max`` lowest-index in-edges among those remaining.
    """
    if d_max < 0:
        raise ValueError("d_max must be nonnegative")
    src, dst = network.src, network.dst  # sorted by (src, dst)
    keep = _rank_within(src) < d_max
    src, dst = src[keep], dst[keep]
    order = np.lexsort((src, dst))
    src, dst = src[order], dst[order]
    keep = _rank_within(dst) < d_max
    return Network(network.n_units, src[keep], dst[keep])


def _rank_within(sorted_keys: np.ndarray) -> np.ndarray:
    """Position of each element within its run of equal keys."""
    if sorted_keys.size == 0:
        return np.zeros(0, dtype=np.int64)
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_keys)) + 1]
    run_start = np.repeat(starts, np.diff(np.r_[starts, sorted_keys.size]))
    return np.arange(sorted_keys.size) - run_start
