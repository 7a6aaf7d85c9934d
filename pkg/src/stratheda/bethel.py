"""Multivariate optimal allocation (Bethel-Chromy) and the fitness function.

For a fixed stratification with counts N_h and standard deviations S_gh we
look for real-valued sample sizes n_h minimizing sum(n_h) subject to

    Var(T_g) = sum_h N_h^2 (1/n_h - 1/N_h) S_gh^2 <= (eps_g T_g)^2   for every g.

Moving the finite-population term to the right-hand side and dividing gives
the normalized form ``sum_h a_gh / n_h <= 1`` with

    a_gh = N_h^2 S_gh^2 / ((eps_g T_g)^2 + sum_h N_h S_gh^2),

which Chromy's fixed point on the Lagrange multipliers solves. Box bounds
min(2, N_h) <= n_h <= N_h are handled by fixing violators and re-solving the
remaining strata against the residual variance budget.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .aggregate import StratumStats, aggregate, normalize_labels
from .errors import DimensionError, InfeasibleError, StrathedaError

CLAMP_MODES = ("post", "in_loop")


@dataclass(frozen=True)
class BethelOptions:
    """Solver settings.

    ``clamp="post"`` solves without the lower bound and raises small strata to
    min(min_n, N_h) afterwards; strata exceeding N_h are always taken as
    census and the rest re-solved. ``clamp="in_loop"`` enforces both bounds
    inside the active-set loop.
    """

    tol: float = 1e-11
    maxiter: int = 200
    clamp: str = "post"
    min_n: float = 2.0

    def __post_init__(self):
        if self.clamp not in CLAMP_MODES:
            raise ValueError(f"clamp must be one of {CLAMP_MODES}, got {self.clamp!r}")
        if self.tol <= 0 or self.maxiter < 1:
            raise ValueError("tol must be > 0 and maxiter >= 1")


@dataclass(frozen=True)
class Allocation:
    n: np.ndarray
    n_unclamped: np.ndarray
    clamped: np.ndarray
    converged: bool
    iterations: int
    multipliers: np.ndarray = field(repr=False)

    @property
    def total(self) -> float:
        return float(self.n.sum())

    @property
    def total_unclamped(self) -> float:
        return float(self.n_unclamped.sum())


@dataclass(frozen=True)
class CvReport:
    cv: np.ndarray
    satisfied: np.ndarray

    @property
    def all_satisfied(self) -> bool:
        return bool(np.all(self.satisfied))


@njit(cache=True)
def _multipliers(a, tol, maxiter):
    H, G = a.shape
    alpha = np.full(G, 1.0 / G)
    root = np.empty(H)
    inv = np.empty(H)
    contrib = np.empty(G)
    it = 0
    while it < maxiter:
        it += 1
        scale = 0.0
        for h in range(H):
            s = 0.0
            for g in range(G):
                s += a[h, g] * alpha[g]
            root[h] = np.sqrt(s)
            scale += root[h]
        if scale == 0.0:
            return alpha, True, it
        for h in range(H):
            n = root[h] * scale
            inv[h] = 1.0 / n if n > 0.0 else 0.0
        total = 0.0
        for g in range(G):
            s = 0.0
            for h in range(H):
                s += a[h, g] * inv[h]
            contrib[g] = alpha[g] * s
            total += contrib[g]
        diff = 0.0
        for g in range(G):
            v = contrib[g] / total
            diff = max(diff, abs(v - alpha[g]))
            alpha[g] = v
        if diff < tol:
            return alpha, True, it
    return alpha, False, it


def _chromy(a: np.ndarray, tol: float, maxiter: int):
    """Fixed point for min sum(n) s.t. sum_h a[h, g] / n_h <= 1 for all g."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    alpha, converged, it = _multipliers(a, tol, maxiter)
    root = np.sqrt(a @ alpha)
    n = root * root.sum()
    # constraints are homogeneous in 1/n: rescaling restores feasibility after an early stop
    inv = np.divide(1.0, n, out=np.zeros(n.size), where=n > 0)
    worst = float((a.T @ inv).max()) if a.shape[1] else 0.0
    if worst > 1.0:
        n = n * worst
    return n, alpha, bool(converged), int(it)


def _normalized_loads(N, S2, budget):
    den = budget + (N[:, None] * S2).sum(axis=0)
    return (N[:, None] ** 2 * S2) / den


def allocate(stats: StratumStats, epsilons, totals, options: BethelOptions | None = None) -> Allocation:
    """Optimal real-valued allocation for one stratification."""
    opts = options or BethelOptions()
    N = np.asarray(stats.counts, dtype=float)
    S2 = np.asarray(stats.stddevs, dtype=float) ** 2
    eps = np.asarray(epsilons, dtype=float).reshape(-1)
    T = np.asarray(totals, dtype=float).reshape(-1)
    if N.size == 0:
        raise StrathedaError("at least one stratum is required")
    if S2.shape != (N.size, eps.size) or T.size != eps.size:
        raise DimensionError(f"stats have shape {S2.shape}, got {eps.size} CV bounds and {T.size} totals")
    if np.any(eps <= 0) or np.any(T <= 0):
        raise StrathedaError("CV bounds and population totals must be positive")

    budget = (eps * T) ** 2
    census_cv = compute_cv(stats, N, T, eps)
    if not census_cv.all_satisfied:
        raise InfeasibleError(np.flatnonzero(~census_cv.satisfied).tolist(), census_cv.cv)

    raw, alpha, converged, iterations = _chromy(_normalized_loads(N, S2, budget), opts.tol, opts.maxiter)

    lower = np.minimum(opts.min_n, N)
    enforce_lower = opts.clamp == "in_loop"
    fixed = np.full(N.size, np.nan)
    n = raw.copy()
    for _ in range(2 * N.size + 1):
        violators = n > N
        if enforce_lower:
            violators |= n < lower
        violators &= np.isnan(fixed)
        if not violators.any():
            break
        fixed[violators] = np.clip(n[violators], lower[violators], N[violators])
        free = np.isnan(fixed)
        n = fixed.copy()
        if not free.any():
            break
        fx = ~free
        used = (N[fx, None] ** 2 * S2[fx] * (1.0 / fixed[fx, None] - 1.0 / N[fx, None])).sum(axis=0)
        residual = budget - used
        if np.any(residual <= 0):
            n[free] = N[free]
            break
        n_free, _, ok, it = _chromy(_normalized_loads(N[free], S2[free], residual), opts.tol, opts.maxiter)
        n[free] = n_free
        converged &= ok
        iterations += it

    final = np.clip(n, lower, N)
    clamped = ~np.isclose(final, raw, rtol=0, atol=1e-12)
    return Allocation(final, raw, clamped, bool(converged), int(iterations), alpha)


def compute_cv(stats: StratumStats, n, totals, epsilons=None) -> CvReport:
    N = np.asarray(stats.counts, dtype=float)
    n = np.asarray(n, dtype=float).reshape(-1)
    if n.size != N.size:
        raise DimensionError(f"allocation has {n.size} strata, stats have {N.size}")
    if np.any(n <= 0):
        raise ZeroDivisionError("every stratum needs n_h > 0 to compute a CV")
    S2 = np.asarray(stats.stddevs, dtype=float) ** 2
    var = (N[:, None] ** 2 * (1.0 / n[:, None] - 1.0 / N[:, None]) * S2).sum(axis=0)
    cv = np.sqrt(np.maximum(var, 0.0)) / np.asarray(totals, dtype=float)
    if epsilons is None:
        satisfied = np.ones(cv.size, dtype=bool)
    else:
        satisfied = cv <= np.asarray(epsilons, dtype=float) + 1e-8
    return CvReport(cv, satisfied)


def _epsilons(instance, epsilons):
    if epsilons is not None:
        return np.asarray(epsilons, dtype=float)
    if instance.constraints is None:
        raise StrathedaError("instance has no precision constraints")
    return instance.constraints.epsilons


def evaluate(instance, labels, epsilons=None, options: BethelOptions | None = None) -> float:
    """Minimal total sample size of a stratification; lower is better."""
    stats = aggregate(instance, labels)
    return allocate(stats, _epsilons(instance, epsilons), instance.totals, options).total


def solve(instance, labels, epsilons=None, options: BethelOptions | None = None):
    """Aggregate, allocate and report CVs in one go."""
    eps = _epsilons(instance, epsilons)
    stats = aggregate(instance, labels)
    alloc = allocate(stats, eps, instance.totals, options)
    return stats, alloc, compute_cv(stats, alloc.n, instance.totals, eps)


class Evaluator:
    """Memoizing, countable fitness function shared by the search routines.

    ``calls`` counts every requested evaluation including cache hits, so it
    measures search effort rather than solver work.
    """

    def __init__(self, instance, epsilons=None, options: BethelOptions | None = None, cache_size: int = 200_000):
        self.instance = instance
        self.epsilons = _epsilons(instance, epsilons)
        self.options = options or BethelOptions()
        self.cache_size = cache_size
        self.calls = 0
        self.cache_hits = 0
        self._cache: dict[bytes, float] = {}
        self._lock = threading.Lock()

    def _compute(self, labels: np.ndarray) -> float:
        return evaluate(self.instance, labels, self.epsilons, self.options)

    def _store(self, key, value):
        if self.cache_size <= 0:
            return
        if len(self._cache) >= self.cache_size:
            self._cache.clear()
        self._cache[key] = value

    def __call__(self, labels) -> float:
        lab = normalize_labels(labels)
        key = lab.tobytes()
        with self._lock:
            self.calls += 1
            hit = self._cache.get(key)
            if hit is not None:
                self.cache_hits += 1
                return hit
        value = self._compute(lab)
        with self._lock:
            self._store(key, value)
        return value

    def map(self, batch, threads: int | None = 1) -> list[float]:
        """Evaluate a batch; results are in input order whatever ``threads`` is."""
        labs = [normalize_labels(b) for b in batch]
        keys = [lab.tobytes() for lab in labs]
        with self._lock:
            self.calls += len(labs)
            known = {}
            todo = {}
            for key, lab in zip(keys, labs):
                if key in known or key in todo:
                    self.cache_hits += 1
                elif key in self._cache:
                    self.cache_hits += 1
                    known[key] = self._cache[key]
                else:
                    todo[key] = lab
        if todo:
            if threads and threads > 1 and len(todo) > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    values = list(pool.map(self._compute, todo.values()))
            else:
                values = [self._compute(lab) for lab in todo.values()]
            fresh = dict(zip(todo, values))
            known.update(fresh)
            with self._lock:
                for k, v in fresh.items():
                    self._store(k, v)
        return [known[k] for k in keys]


def single_stratum_size(N: float, S: float, total: float, eps: float) -> float:
    """Closed-form n for one stratum and one target (no bounds)."""
    return N**2 * S**2 / ((eps * total) ** 2 + N * S**2)
