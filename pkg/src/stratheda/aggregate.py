"""Pool basic-strata statistics into per-stratum statistics.

A stratification is a 1-D integer array of length L whose entry ``l`` is the
stratum label (1..H) of basic stratum ``l``. After :func:`normalize_labels`
labels are contiguous and numbered by first occurrence, which makes the
encoding canonical: two arrays describe the same partition iff they are
equal after normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, StrathedaError


def normalize_labels(labels) -> np.ndarray:
    """Relabel to 1..H in order of first occurrence.

    >>> normalize_labels([3, 2, 4, 3, 2, 1, 1, 4]).tolist()
    [1, 2, 3, 1, 2, 4, 4, 3]
    """
    lab = np.asarray(labels).reshape(-1)
    if lab.size == 0:
        return lab.astype(np.int64)
    _, first, inverse = np.unique(lab, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(1, order.size + 1)
    return rank[inverse].astype(np.int64)


def n_strata(labels) -> int:
    return int(np.unique(np.asarray(labels)).size)


@dataclass(frozen=True)
class StratumStats:
    """Per-stratum count, means and population standard deviations.

    Rows are ordered by stratum label; ``means`` and ``stddevs`` have shape
    (H, G).
    """

    counts: np.ndarray
    means: np.ndarray
    stddevs: np.ndarray

    def __len__(self):
        return self.counts.size

    @property
    def H(self) -> int:
        return self.counts.size

    @property
    def variances(self) -> np.ndarray:
        return self.stddevs**2


def pool(counts, means, stddevs, labels) -> StratumStats:
    """Pool (N, M, S) rows sharing a label. ``labels`` must be 1..H contiguous."""
    counts = np.asarray(counts, dtype=float)
    means = np.atleast_2d(np.asarray(means, dtype=float))
    stddevs = np.atleast_2d(np.asarray(stddevs, dtype=float))
    idx = np.asarray(labels, dtype=np.intp) - 1
    H = int(idx.max()) + 1
    G = means.shape[1]
    N_h = np.bincount(idx, counts, H)
    if np.any(N_h <= 0):
        raise StrathedaError("stratification has empty strata; normalize labels first")
    M_h = np.empty((H, G))
    var = np.empty((H, G))
    for g in range(G):
        M_h[:, g] = np.bincount(idx, counts * means[:, g], H) / N_h
        # within + between, centred on the pooled mean to avoid cancellation
        dev = means[:, g] - M_h[idx, g]
        var[:, g] = np.bincount(idx, counts * (stddevs[:, g] ** 2 + dev**2), H) / N_h
    return StratumStats(N_h, M_h, np.sqrt(np.maximum(var, 0.0)))


def aggregate(instance, labels) -> StratumStats:
    """Pool the instance's basic strata according to ``labels``."""
    lab = np.asarray(labels).reshape(-1)
    if lab.size != instance.L:
        raise DimensionError(f"stratification has length {lab.size}, instance has L={instance.L}")
    return pool(instance.counts, instance.means, instance.stddevs, normalize_labels(lab))
