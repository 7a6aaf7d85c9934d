"""Hybrid estimation-of-distribution search over stratifications.

Each generation keeps an elite, fits a univariate marginal model (one
categorical distribution per basic stratum) to the elite, samples offspring
from it, perturbs them with mutation / add-strata moves, and every
``saa_frequency`` generations polishes the best member with simulated
annealing.

Randomness comes from one master seed split into independent streams for
initialization, model sampling, mutation and annealing. All draws happen in
the calling thread before any parallel evaluation, so results do not depend
on the number of worker threads.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from .aggregate import normalize_labels
from .bethel import BethelOptions, Evaluator
from .errors import DimensionError


@dataclass
class HedaConfig:
    iterations: int = 100
    saa_frequency: int = 10
    mutation_chance: float = 0.01
    elitism_rate: float = 0.2
    add_strata_factor: float = 0.0
    temperature: float = 0.01
    decrement_constant: float = 0.9
    maxit: int = 5
    sequence_length: int = 100
    lmax_fraction: float = 0.1
    p_new_stratum: float = 0.05
    population_size: int = 20
    seed: int = 0
    # knobs that have no counterpart in the published hyperparameter tables
    initial_strata: int = 3
    sa_members: int = 1
    model_source: str = "elite"
    cap_probabilities: bool = False
    relative_delta: bool = True
    q_per_sequence: bool = False

    def __post_init__(self):
        for name in ("mutation_chance", "elitism_rate", "add_strata_factor", "p_new_stratum"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.elitism_rate <= 0:
            raise ValueError("elitism_rate must be > 0")
        if not 0.0 < self.decrement_constant < 1.0:
            raise ValueError("decrement_constant must lie in (0, 1)")
        if not 0.0 < self.lmax_fraction <= 1.0:
            raise ValueError("lmax_fraction must lie in (0, 1]")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        for name in ("maxit", "sequence_length", "population_size", "initial_strata"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.iterations < 0 or self.saa_frequency < 0 or self.sa_members < 0:
            raise ValueError("iterations, saa_frequency and sa_members must be >= 0")
        if self.model_source not in ("elite", "best"):
            raise ValueError("model_source must be 'elite' or 'best'")

    @classmethod
    def from_mapping(cls, values: dict) -> "HedaConfig":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, raw in values.items():
            default = getattr(cls, key)
            if isinstance(default, bool):
                kwargs[key] = raw if isinstance(raw, bool) else str(raw).strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                kwargs[key] = int(float(raw)) if isinstance(raw, str) else int(raw)
            elif isinstance(default, float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = str(raw)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Member:
    labels: np.ndarray
    quality: float


def _rank_key(m: Member):
    return (m.quality, tuple(m.labels.tolist()))


def sort_members(members: list[Member]) -> list[Member]:
    """Ascending quality; equal qualities by lexicographic label vector."""
    return sorted(members, key=_rank_key)


@dataclass
class ProbabilityModel:
    """``probs[k, l]`` is the probability that basic stratum l gets label k + 1."""

    probs: np.ndarray

    @property
    def n_labels(self) -> int:
        return self.probs.shape[0]

    @property
    def L(self) -> int:
        return self.probs.shape[1]

    def probability(self, labels) -> float:
        """Probability of drawing exactly ``labels`` (product of marginals)."""
        lab = np.asarray(labels, dtype=np.intp).reshape(-1)
        if lab.size != self.L:
            raise DimensionError("label vector length does not match the model")
        if lab.min() < 1 or lab.max() > self.n_labels:
            return 0.0
        return float(np.prod(self.probs[lab - 1, np.arange(self.L)]))


def _streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("init", "model", "mutation", "sa")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def reassign_existing(labels: np.ndarray, positions: np.ndarray, H: int, rng) -> None:
    """Move each position to a uniformly chosen *other* existing label, in place."""
    if H < 2 or positions.size == 0:
        return
    draw = rng.integers(1, H, size=positions.size)
    cur = labels[positions]
    labels[positions] = np.where(draw >= cur, draw + 1, draw)


def mutate(labels, config: HedaConfig, rng, *, add_strata: bool = True) -> np.ndarray:
    """Per-position reassignment to another existing stratum (``mutation_chance``)
    or to a brand-new stratum (``add_strata_factor``); the result is normalized.

    Every add-strata move opens its own new stratum.
    """
    lab = np.array(labels, dtype=np.int64).reshape(-1)
    L = lab.size
    H = int(lab.max()) if L else 0
    if config.mutation_chance > 0:
        moved = np.flatnonzero(rng.random(L) < config.mutation_chance)
        reassign_existing(lab, moved, H, rng)
    if add_strata and config.add_strata_factor > 0:
        fresh = np.flatnonzero(rng.random(L) < config.add_strata_factor)
        lab[fresh] = H + 1 + np.arange(fresh.size)
    return normalize_labels(lab)


def init_population(instance, config: HedaConfig, evaluator: Evaluator, starting=None, rng=None, threads=1) -> list[Member]:
    rng = rng if rng is not None else _streams(config.seed)["init"]
    L = instance.L
    if starting is not None:
        start = normalize_labels(starting)
        if start.size != L:
            raise DimensionError(f"starting solution has length {start.size}, instance has L={L}")
        labels = [start] + [mutate(start, config, rng, add_strata=False) for _ in range(config.population_size - 1)]
    else:
        labels = [normalize_labels(rng.integers(1, config.initial_strata + 1, size=L)) for _ in range(config.population_size)]
    qualities = evaluator.map(labels, threads)
    return sort_members([Member(l, q) for l, q in zip(labels, qualities)])


def elite_size(population_size: int, rate: float) -> int:
    return min(population_size, max(1, int(math.floor(rate * population_size + 0.5))))


def select_elite(population: list[Member], rate: float) -> list[Member]:
    if not 0.0 < rate <= 1.0:
        raise ValueError("elitism rate must lie in (0, 1]")
    return list(population[: elite_size(len(population), rate)])


def build_model(elite, cap: bool = False) -> ProbabilityModel:
    """Marginal label frequencies over the elite.

    Labels are used as given: rows cover 1..max label across the elite.
    With ``cap`` every entry is clipped to [1/L, 1 - 1/L] and the column
    renormalized.
    """
    vectors = [np.asarray(e.labels if isinstance(e, Member) else e, dtype=np.intp).reshape(-1) for e in elite]
    if not vectors:
        raise ValueError("elite must be non-empty")
    L = vectors[0].size
    if any(v.size != L for v in vectors):
        raise DimensionError("elite solutions differ in length")
    K = int(max(v.max() for v in vectors))
    probs = np.zeros((K, L))
    cols = np.arange(L)
    for v in vectors:
        probs[v - 1, cols] += 1.0
    probs /= len(vectors)
    if cap and L > 1 and K > 1:
        probs = np.clip(probs, 1.0 / L, 1.0 - 1.0 / L)
        probs /= probs.sum(axis=0, keepdims=True)
    return ProbabilityModel(probs)


def sample_model(model: ProbabilityModel, count: int, rng) -> list[np.ndarray]:
    """Draw each position independently from its column; results are normalized."""
    cdf = np.cumsum(model.probs, axis=0)
    cdf[-1] = 1.0
    out = []
    for _ in range(count):
        u = rng.random(model.L)
        idx = (cdf <= u).sum(axis=0)
        out.append(normalize_labels(np.minimum(idx, model.n_labels - 1) + 1))
    return out


def acceptance_probability(delta: float, temperature: float) -> float:
    if delta <= 0:
        return 1.0
    if temperature <= 0:
        return 0.0
    return math.exp(-delta / temperature)


def sa_run(labels, quality: float, evaluator: Evaluator, config: HedaConfig, rng) -> Member:
    """Simulated annealing from ``labels``; returns the best solution visited.

    A move picks q distinct basic strata (q uniform in 1..qmax) and sends
    them all to one new stratum with probability ``p_new_stratum``, otherwise
    each to a uniformly chosen other existing stratum. Temperature is
    multiplied by ``decrement_constant`` after each sequence.
    """
    cur = normalize_labels(labels)
    cur_q = float(quality)
    best = Member(cur, cur_q)
    L = cur.size
    qmax = max(1, int(math.floor(config.lmax_fraction * L + 0.5)))
    temp = config.temperature
    for _ in range(config.maxit):
        q_seq = int(rng.integers(1, qmax + 1))
        for _ in range(config.sequence_length):
            q = q_seq if config.q_per_sequence else int(rng.integers(1, qmax + 1))
            positions = rng.choice(L, size=q, replace=False)
            cand = cur.copy()
            H = int(cand.max())
            if rng.random() < config.p_new_stratum:
                cand[positions] = H + 1
            else:
                reassign_existing(cand, positions, H, rng)
            cand = normalize_labels(cand)
            cand_q = evaluator(cand)
            delta = cand_q - cur_q
            if config.relative_delta:
                delta = delta / cur_q if cur_q > 0 else delta
            if delta <= 0 or rng.random() < acceptance_probability(delta, temp):
                cur, cur_q = cand, cand_q
                if cur_q < best.quality:
                    best = Member(cur, cur_q)
        temp *= config.decrement_constant
    return best


@dataclass
class RunReport:
    best: Member
    history: list[float]
    evaluation_count: int
    wall_time: float
    trace: list[tuple[int, float]]
    config: HedaConfig

    def evaluations_to(self, target: float) -> int | None:
        """Evaluation count at which the best quality first reached ``target``."""
        for count, q in self.trace:
            if q <= target:
                return count
        return None


def run_heda(
    instance,
    config: HedaConfig,
    starting=None,
    evaluator: Evaluator | None = None,
    options: BethelOptions | None = None,
    threads: int | None = 1,
    epsilons=None,
) -> RunReport:
    if instance.L < 2:
        raise DimensionError("need at least two basic strata")
    t0 = time.perf_counter()
    ev = evaluator or Evaluator(instance, epsilons, options)
    base_calls = ev.calls
    rng = _streams(config.seed)

    pop = init_population(instance, config, ev, starting, rng["init"], threads)
    best = pop[0]
    history = [best.quality]
    trace = [(ev.calls - base_calls, best.quality)]

    def note(member: Member):
        nonlocal best
        if member.quality < best.quality:
            best = member
            trace.append((ev.calls - base_calls, best.quality))

    n_elite = elite_size(config.population_size, config.elitism_rate)
    for i in range(1, config.iterations + 1):
        if config.saa_frequency and i % config.saa_frequency == 0:
            for k in range(min(config.sa_members, len(pop))):
                improved = sa_run(pop[k].labels, pop[k].quality, ev, config, rng["sa"])
                if improved.quality < pop[k].quality:
                    pop[k] = improved
                    note(improved)
            pop = sort_members(pop)
        elite = pop[:n_elite]
        model = build_model(elite if config.model_source == "elite" else elite[:1], config.cap_probabilities)
        offspring = sample_model(model, config.population_size - n_elite, rng["model"])
        offspring = [mutate(o, config, rng["mutation"]) for o in offspring]
        qualities = ev.map(offspring, threads)
        pop = sort_members(elite + [Member(o, q) for o, q in zip(offspring, qualities)])
        note(pop[0])
        history.append(best.quality)

    return RunReport(best, history, ev.calls - base_calls, time.perf_counter() - t0, trace, config)
