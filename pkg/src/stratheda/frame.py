"""Sampling-frame ingestion and reduction to basic strata.

A basic stratum is the smallest unit the optimizer may move between strata.
In *atomic* mode it is one observed cell of the cross product of categorical
auxiliary variables; in *continuous* mode every frame record is its own basic
stratum.

Standard deviations throughout the package use the population convention
(divide by N, not N - 1). The pooling algebra in :mod:`stratheda.aggregate`
relies on it, so fixtures written by hand must follow the same convention.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.cluster.vq import kmeans2

from .errors import (
    ColumnError,
    EmptyInputError,
    ModeError,
    ParseError,
    ValidationError,
)


@dataclass(frozen=True)
class PrecisionConstraints:
    """Upper CV bound for the estimated total of each target."""

    epsilons: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        eps = np.asarray(self.epsilons, dtype=float).reshape(-1)
        if eps.size == 0:
            raise ValidationError("at least one precision constraint is required")
        if not np.all(np.isfinite(eps)) or np.any(eps <= 0) or np.any(eps >= 1):
            raise ValidationError(f"CV bounds must lie in (0, 1), got {eps.tolist()}")
        names = tuple(self.names) or tuple(f"Y{g + 1}" for g in range(eps.size))
        if len(names) != eps.size:
            raise ValidationError("one constraint name per CV bound is required")
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "names", names)

    def __len__(self):
        return self.epsilons.size


@dataclass(frozen=True)
class BasicStratum:
    id: str
    count: int
    means: tuple[float, ...]
    stddevs: tuple[float, ...]


@dataclass(frozen=True)
class Frame:
    """Column store of a complete sampling frame.

    Target columns are float arrays; auxiliary columns keep their raw string
    values until they are binned or used as categories.
    """

    targets: dict[str, np.ndarray]
    aux: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.targets:
            raise ValidationError("a frame needs at least one target column")
        lengths = {len(v) for v in self.targets.values()} | {len(v) for v in self.aux.values()}
        if len(lengths) != 1:
            raise ValidationError("all frame columns must have the same length")
        for name, col in self.targets.items():
            if not np.all(np.isfinite(col)):
                raise ValidationError(f"target column {name!r} has non-finite values")

    @property
    def target_names(self) -> list[str]:
        return list(self.targets)

    @property
    def aux_names(self) -> list[str]:
        return list(self.aux)

    @property
    def n_records(self) -> int:
        return len(next(iter(self.targets.values())))

    def target_matrix(self) -> np.ndarray:
        return np.column_stack([self.targets[n] for n in self.targets])

    def with_aux(self, name: str, values) -> "Frame":
        aux = dict(self.aux)
        aux[name] = np.asarray(values).astype(str)
        return Frame(self.targets, aux)

    def bin(self, name: str, k: int, seed: int = 0) -> "Frame":
        """Replace a numeric auxiliary column by its k-means bin labels."""
        try:
            values = self.aux[name].astype(float)
        except KeyError:
            raise ColumnError(name) from None
        except ValueError:
            raise ParseError(f"auxiliary column {name!r} is not numeric") from None
        return self.with_aux(name, kmeans_bin(values, k, seed))


@dataclass(frozen=True)
class ProblemInstance:
    """Basic strata plus (optionally) the precision constraints to meet.

    ``counts`` has shape (L,), ``means`` and ``stddevs`` shape (L, G).
    """

    ids: tuple[str, ...]
    counts: np.ndarray
    means: np.ndarray
    stddevs: np.ndarray
    target_names: tuple[str, ...] = ()
    constraints: PrecisionConstraints | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float).reshape(-1)
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        stddevs = np.atleast_2d(np.asarray(self.stddevs, dtype=float))
        L = counts.size
        if means.shape != stddevs.shape or means.shape[0] != L:
            raise ValidationError(
                f"shape mismatch: counts {counts.shape}, means {means.shape}, stddevs {stddevs.shape}"
            )
        if len(self.ids) != L:
            raise ValidationError("one id per basic stratum is required")
        if L < 2:
            raise ValidationError(f"at least two basic strata are required, got L={L}")
        for l in range(L):
            if counts[l] < 1 or counts[l] != math.floor(counts[l]):
                raise ValidationError(f"N must be a positive integer, got {counts[l]}", row=self.ids[l])
            if np.any(stddevs[l] < 0):
                raise ValidationError("standard deviations must be >= 0", row=self.ids[l])
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(stddevs))):
            raise ValidationError("basic-strata statistics must be finite")
        G = means.shape[1]
        names = tuple(self.target_names) or tuple(f"Y{g + 1}" for g in range(G))
        if len(names) != G:
            raise ValidationError("one target name per column of means is required")
        totals = counts @ means
        if np.any(totals <= 0):
            bad = [names[g] for g in np.flatnonzero(totals <= 0)]
            raise ValidationError(f"population totals must be positive (targets {bad})")
        if self.constraints is not None and len(self.constraints) != G:
            raise ValidationError(f"expected {G} CV bounds, got {len(self.constraints)}")
        for arr in (counts, means, stddevs):
            arr.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stddevs", stddevs)
        object.__setattr__(self, "target_names", names)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))

    @property
    def L(self) -> int:
        return self.counts.size

    @property
    def G(self) -> int:
        return self.means.shape[1]

    @property
    def totals(self) -> np.ndarray:
        return self.counts @ self.means

    @property
    def basic_strata(self) -> list[BasicStratum]:
        return [
            BasicStratum(i, int(n), tuple(m), tuple(s))
            for i, n, m, s in zip(self.ids, self.counts, self.means, self.stddevs)
        ]

    def with_constraints(self, epsilons, names=None) -> "ProblemInstance":
        if not isinstance(epsilons, PrecisionConstraints):
            epsilons = PrecisionConstraints(np.asarray(epsilons, dtype=float), tuple(names or self.target_names))
        return ProblemInstance(self.ids, self.counts, self.means, self.stddevs, self.target_names, epsilons)


def _sniff_delimiter(first_line: str) -> str:
    if "\t" in first_line and "," not in first_line:
        return "\t"
    return ","


def _read_table(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise EmptyInputError(f"{path} is empty")
    reader = csv.reader(lines, delimiter=_sniff_delimiter(lines[0]))
    header = [h.strip() for h in next(reader)]
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    return header, rows


def load_frame(path, target_names: Sequence[str], aux_names: Sequence[str] = ()) -> Frame:
    """Read a delimited file into a :class:`Frame`.

    Missing values are rejected; row indices in errors are 1-based data rows.
    """
    header, rows = _read_table(path)
    if not rows:
        raise EmptyInputError(f"{path} has a header but no records")
    index = {name: i for i, name in enumerate(header)}
    for name in list(target_names) + list(aux_names):
        if name not in index:
            raise ColumnError(name, path)
    targets = {}
    for name in target_names:
        col = np.empty(len(rows))
        j = index[name]
        for r, row in enumerate(rows, start=1):
            if j >= len(row) or not row[j].strip():
                raise ParseError(f"missing value in column {name!r}", row=r)
            try:
                col[r - 1] = float(row[j])
            except ValueError:
                raise ParseError(f"non-numeric value {row[j]!r} in column {name!r}", row=r) from None
            if not math.isfinite(col[r - 1]):
                raise ParseError(f"non-finite value in column {name!r}", row=r)
        targets[name] = col
    aux = {}
    for name in aux_names:
        j = index[name]
        vals = []
        for r, row in enumerate(rows, start=1):
            if j >= len(row) or not row[j].strip():
                raise ParseError(f"missing value in column {name!r}", row=r)
            vals.append(row[j].strip())
        aux[name] = np.array(vals, dtype=str)
    return Frame(targets, aux)


def kmeans_bin(column, k: int, seed: int = 0, n_init: int = 10) -> np.ndarray:
    """Bin a numeric vector into ``k`` classes with 1-D k-means.

    Labels are 1..k ordered by ascending cluster centre, so they are
    non-decreasing in the input value. The best of ``n_init`` seeded
    k-means++ restarts (lowest within-cluster sum of squares) is kept.
    """
    x = np.asarray(column, dtype=float).reshape(-1)
    if k < 1:
        raise ValueError("k must be >= 1")
    n_distinct = np.unique(x).size
    if k > n_distinct:
        raise ValueError(f"infeasible k={k}: only {n_distinct} distinct values")
    if k == 1:
        return np.ones(x.size, dtype=int)
    rng = np.random.default_rng(seed)
    best = None
    data = x.reshape(-1, 1)
    for _ in range(n_init):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            centres, labels = kmeans2(data, k, minit="++", seed=rng, iter=100)
        if np.unique(labels).size < k:
            continue
        sse = float(((x - centres[labels, 0]) ** 2).sum())
        if best is None or sse < best[0]:
            best = (sse, centres[:, 0], labels)
    if best is None:
        raise ValueError(f"k-means failed to produce {k} non-empty clusters")
    _, centres, labels = best
    rank = np.empty(k, dtype=int)
    rank[np.argsort(centres, kind="stable")] = np.arange(1, k + 1)
    return rank[labels]


def _cell_stats(y: np.ndarray, inverse: np.ndarray, n_cells: int):
    counts = np.bincount(inverse, minlength=n_cells).astype(float)
    sums = np.stack([np.bincount(inverse, y[:, g], n_cells) for g in range(y.shape[1])], axis=1)
    means = sums / counts[:, None]
    dev = y - means[inverse]
    ss = np.stack([np.bincount(inverse, dev[:, g] ** 2, n_cells) for g in range(y.shape[1])], axis=1)
    return counts, means, np.sqrt(ss / counts[:, None])


def build_atomic_strata(frame: Frame, constraints=None) -> ProblemInstance:
    """One basic stratum per observed combination of auxiliary categories.

    Strata are ordered by the first appearance of their combination in the
    frame; ids join the category values with ``|``.
    """
    if not frame.aux:
        raise ModeError("atomic strata need auxiliary columns; use build_continuous_strata instead")
    keys = list(zip(*(frame.aux[n].astype(str) for n in frame.aux)))
    first = {}
    inverse = np.empty(len(keys), dtype=np.intp)
    for i, key in enumerate(keys):
        inverse[i] = first.setdefault(key, len(first))
    counts, means, stddevs = _cell_stats(frame.target_matrix(), inverse, len(first))
    ids = tuple("|".join(key) for key in first)
    return _instance(ids, counts, means, stddevs, frame.target_names, constraints)


def build_continuous_strata(frame: Frame, constraints=None) -> ProblemInstance:
    if frame.n_records == 0:
        raise ModeError("cannot build strata from an empty frame")
    y = frame.target_matrix()
    L = y.shape[0]
    ids = tuple(str(i + 1) for i in range(L))
    return _instance(ids, np.ones(L), y, np.zeros_like(y), frame.target_names, constraints)


def _instance(ids, counts, means, stddevs, names, constraints) -> ProblemInstance:
    if constraints is not None and not isinstance(constraints, PrecisionConstraints):
        constraints = PrecisionConstraints(np.asarray(constraints, dtype=float), tuple(names))
    return ProblemInstance(ids, counts, means, stddevs, tuple(names), constraints)


def load_constraints(path, target_names: Sequence[str] | None = None) -> PrecisionConstraints:
    """Read a ``target_name,epsilon`` sidecar (header row optional)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise EmptyInputError(f"{path} is empty")
    rows = list(csv.reader(lines, delimiter=_sniff_delimiter(lines[0])))
    try:
        float(rows[0][1])
    except (ValueError, IndexError):
        rows = rows[1:]
    names, eps = [], []
    for r, row in enumerate(rows, start=1):
        if len(row) < 2:
            raise ParseError("expected target_name,epsilon", row=r)
        try:
            eps.append(float(row[1]))
        except ValueError:
            raise ParseError(f"non-numeric epsilon {row[1]!r}", row=r) from None
        names.append(row[0].strip())
    if target_names is not None and len(target_names) != len(eps):
        raise ValidationError(f"expected {len(target_names)} CV bounds, got {len(eps)}")
    return PrecisionConstraints(np.array(eps), tuple(names))


def load_basic_strata(path, constraints_path=None) -> ProblemInstance:
    """Read an ``id,N,M1..MG,S1..SG`` fixture into a :class:`ProblemInstance`."""
    header, rows = _read_table(path)
    if not rows:
        raise EmptyInputError(f"{path} has a header but no rows")
    for name in ("id", "N"):
        if name not in header:
            raise ColumnError(name, path)
    m_cols = [h for h in header if h.startswith("M") and h[1:].isdigit()]
    s_cols = [h for h in header if h.startswith("S") and h[1:].isdigit()]
    G = len(m_cols)
    if G == 0 or sorted(m_cols) != sorted(f"M{g}" for g in range(1, G + 1)):
        raise ValidationError("fixture needs columns M1..MG")
    if sorted(s_cols) != sorted(f"S{g}" for g in range(1, G + 1)):
        raise ValidationError(f"fixture has {G} mean columns but S columns {s_cols}")
    index = {h: i for i, h in enumerate(header)}
    ids, counts, means, stddevs = [], [], [], []
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise ValidationError(f"expected {len(header)} fields, got {len(row)}", row=r)
        rid = row[index["id"]].strip()
        try:
            n = float(row[index["N"]])
            m = [float(row[index[f"M{g}"]]) for g in range(1, G + 1)]
            s = [float(row[index[f"S{g}"]]) for g in range(1, G + 1)]
        except ValueError as exc:
            raise ParseError(str(exc), row=r) from None
        if n < 1 or n != math.floor(n):
            raise ValidationError(f"N must be a positive integer, got {n}", row=rid)
        if any(v < 0 for v in s):
            raise ValidationError("standard deviations must be >= 0", row=rid)
        ids.append(rid)
        counts.append(n)
        means.append(m)
        stddevs.append(s)
    constraints = None
    names = tuple(f"Y{g}" for g in range(1, G + 1))
    if constraints_path is not None:
        constraints = load_constraints(constraints_path, names)
        names = constraints.names
    return ProblemInstance(tuple(ids), np.array(counts), np.array(means), np.array(stddevs), names, constraints)


def write_basic_strata(path, ids, counts, means, stddevs) -> None:
    means = np.atleast_2d(means)
    stddevs = np.atleast_2d(stddevs)
    G = means.shape[1]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "N", *(f"M{g}" for g in range(1, G + 1)), *(f"S{g}" for g in range(1, G + 1))])
        for i, n, m, s in zip(ids, counts, means, stddevs):
            w.writerow([i, _fmt_count(n), *(repr(float(v)) for v in m), *(repr(float(v)) for v in s)])


def write_instance(path, instance: ProblemInstance) -> None:
    write_basic_strata(path, instance.ids, instance.counts, instance.means, instance.stddevs)


def write_constraints(path, constraints: PrecisionConstraints) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["target", "epsilon"])
        for name, eps in zip(constraints.names, constraints.epsilons):
            w.writerow([name, repr(float(eps))])


def _fmt_count(n) -> str:
    return str(int(n)) if float(n).is_integer() else repr(float(n))
