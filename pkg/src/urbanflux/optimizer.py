"""Constrained genetic algorithm over the 16 category counts.

Individuals are integer count vectors constrained to a fixed total, fixed
indices (transport hub by default), per-index bounds around the current
environment, and non-negativity. Fitness comes from the hybrid predictor;
the default objective minimizes the variance of absolute hourly VHT, which
targets the paper-motivated goal of flattening demand peaks.

A grouped variant searches only four deltas (eating, housing, work, public
transport) and decodes them onto the full count vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import Infeasible, NegativeCount, ShapeError
from .features import N_CATEGORIES, env_from_counts
from .nets import HybridPrediction, predict_hybrid

DEFAULT_GROUP_MAPPING = ((1,), (8,), (9,), (13,))  # eating, housing, work, transit


@dataclass(frozen=True)
class ConstraintSet:
    base_counts: np.ndarray
    fixed_total: bool = True
    fixed_indices: frozenset[int] = frozenset({12})
    delta_bound: int = 50

    def __post_init__(self):
        base = np.asarray(self.base_counts, dtype=np.int64)
        if base.shape != (N_CATEGORIES,):
            raise ShapeError(f"base_counts must have shape (16,), got {base.shape}")
        if (base < 0).any():
            raise Infeasible("base counts must be non-negative")
        if self.delta_bound < 0:
            raise Infeasible("delta_bound must be >= 0")
        if any(not 0 <= i < N_CATEGORIES for i in self.fixed_indices):
            raise Infeasible("fixed index outside 0..15")
        object.__setattr__(self, "base_counts", base)
        object.__setattr__(self, "fixed_indices", frozenset(int(i) for i in self.fixed_indices))

    @property
    def free_indices(self) -> np.ndarray:
        return np.array([j for j in range(N_CATEGORIES) if j not in self.fixed_indices])

    def lower(self) -> np.ndarray:
        lo = np.maximum(0, self.base_counts - self.delta_bound)
        lo[list(self.fixed_indices)] = self.base_counts[list(self.fixed_indices)]
        return lo

    def upper(self) -> np.ndarray:
        hi = self.base_counts + self.delta_bound
        hi[list(self.fixed_indices)] = self.base_counts[list(self.fixed_indices)]
        return hi

    def satisfied_by(self, counts: np.ndarray) -> bool:
        """The feasibility predicate itself, used by tests instead of trusting repair."""
        counts = np.asarray(counts)
        if counts.shape != (N_CATEGORIES,):
            return False
        if (counts < 0).any():
            return False
        if not (counts >= self.lower()).all() or not (counts <= self.upper()).all():
            return False
        if self.fixed_total and counts.sum() != self.base_counts.sum():
            return False
        return True


@dataclass(frozen=True)
class Individual:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (N_CATEGORIES,):
            raise ShapeError("an individual is a 16-count vector")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def checked(cls, counts: np.ndarray, cs: ConstraintSet) -> "Individual":
        ind = cls(counts)
        if not cs.satisfied_by(ind.counts):
            raise Infeasible(f"counts {ind.counts.tolist()} violate the constraint set")
        return ind


@dataclass(frozen=True)
class GaConfig:
    population: int = 64
    generations: int = 200
    tournament_k: int = 3
    crossover_rate: float = 0.9
    mutation_rate: float = 0.2
    elitism: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.population < 1 or self.generations < 0:
            raise ValueError("population must be >= 1 and generations >= 0")
        if not (1 <= self.elitism <= self.population):
            raise ValueError("elitism must be in 1..population")
        if self.tournament_k < 1:
            raise ValueError("tournament_k must be >= 1")


@dataclass(frozen=True)
class Objective:
    """Scalar demand metric derived from a hybrid prediction; lower is better."""

    kind: str = "variance"  # variance | variance_proportions | peak | custom
    weights: tuple[float, ...] | None = None

    def __call__(self, pred: HybridPrediction) -> float:
        if self.kind == "variance":
            return float(np.var(pred.hourly_vht))
        if self.kind == "variance_proportions":
            return float(np.var(pred.proportions))
        if self.kind == "peak":
            return float(np.max(pred.hourly_vht))
        if self.kind == "custom":
            if self.weights is None or len(self.weights) != 24:
                raise ValueError("custom objective needs 24 weights")
            return float(np.dot(self.weights, pred.hourly_vht))
        raise ValueError(f"unknown objective {self.kind!r}")


def make_fitness(model_t, model_d, objective: Objective):
    """Fitness function over count vectors via the hybrid predictor.

    Evaluation is pure, so repeated compositions (elites, duplicates) hit a
    small memo cache instead of re-running the networks.
    """
    info = model_t.norm_info_
    cache: dict[tuple, float] = {}

    def fitness(counts: np.ndarray) -> float:
        key = tuple(int(v) for v in counts)
        if key not in cache:
            env = env_from_counts(counts, info).as_vector()
            cache[key] = objective(predict_hybrid(model_t, model_d, env))
        return cache[key]

    return fitness


def repair(counts: np.ndarray, cs: ConstraintSet, rng: np.random.Generator) -> Individual:
    """Project an arbitrary count vector onto the feasible set.

    Clamp to per-index bounds (fixed indices back to base), then walk the
    free indices in a seeded round-robin order, stepping counts by one where
    slack remains, until the total matches. Idempotent on feasible input.
    """
    c = np.asarray(counts, dtype=np.int64).copy()
    if c.shape != (N_CATEGORIES,):
        raise ShapeError("repair expects a 16-count vector")
    lo, hi = cs.lower(), cs.upper()
    c = np.clip(c, lo, hi)
    if cs.fixed_total:
        diff = int(c.sum() - cs.base_counts.sum())
        if diff != 0:
            order = rng.permutation(cs.free_indices)
            guard = 0
            while diff != 0:
                moved = False
                for j in order:
                    if diff == 0:
                        break
                    if diff > 0 and c[j] > lo[j]:
                        c[j] -= 1
                        diff -= 1
                        moved = True
                    elif diff < 0 and c[j] < hi[j]:
                        c[j] += 1
                        diff += 1
                        moved = True
                if not moved:
                    raise Infeasible("no slack left to restore the fixed total")
                guard += 1
                if guard > 10_000:
                    raise Infeasible("repair failed to converge")
    return Individual.checked(c, cs)


def _mutate(counts: np.ndarray, cs: ConstraintSet, rng: np.random.Generator) -> np.ndarray:
    """Move a small seeded amount between two free indices, conserving the total."""
    free = cs.free_indices
    if free.size < 2:
        return counts
    c = counts.copy()
    lo, hi = cs.lower(), cs.upper()
    src, dst = rng.choice(free, size=2, replace=False)
    delta = int(rng.integers(1, 6))
    delta = min(delta, int(c[src] - lo[src]), int(hi[dst] - c[dst]))
    if delta > 0:
        c[src] -= delta
        c[dst] += delta
    return c


def _tournament(fitnesses: np.ndarray, k: int, rng: np.random.Generator) -> int:
    contenders = rng.integers(0, fitnesses.size, k)
    return int(contenders[np.argmin(fitnesses[contenders])])


def step(population: list[Individual], cs: ConstraintSet, cfg: GaConfig,
         fitness_fn, rng: np.random.Generator,
         fits: np.ndarray | None = None) -> list[Individual]:
    """One generation: elitism, tournament selection, uniform crossover, mutation."""
    if fits is None:
        fits = np.array([fitness_fn(ind.counts) for ind in population])
    elite_idx = np.argsort(fits, kind="stable")[: cfg.elitism]
    new_pop = [population[i] for i in elite_idx]
    while len(new_pop) < cfg.population:
        a = population[_tournament(fits, cfg.tournament_k, rng)].counts
        b = population[_tournament(fits, cfg.tournament_k, rng)].counts
        if rng.random() < cfg.crossover_rate:
            mask = rng.random(N_CATEGORIES) < 0.5
            child = np.where(mask, a, b)
        else:
            child = a.copy()
        child = repair(child, cs, rng).counts
        if rng.random() < cfg.mutation_rate:
            child = _mutate(child, cs, rng)
            child = repair(child, cs, rng).counts
        new_pop.append(Individual(child))
    return new_pop


def _initial_population(cs: ConstraintSet, cfg: GaConfig,
                        rng: np.random.Generator) -> list[Individual]:
    """Base environment first, then repaired random perturbations of it."""
    pop = [Individual.checked(cs.base_counts.copy(), cs)]
    while len(pop) < cfg.population:
        noise = rng.integers(-cs.delta_bound, cs.delta_bound + 1, N_CATEGORIES)
        pop.append(repair(cs.base_counts + noise, cs, rng))
    return pop


@dataclass
class GaResult:
    best: Individual
    best_fitness: float
    history: list[float]  # best fitness after each generation, gen 0 included
    base_fitness: float


def run_ga(cs: ConstraintSet, cfg: GaConfig, fitness_fn) -> GaResult:
    """Evolve count vectors; never returns anything worse than the base environment."""
    rng = np.random.default_rng(cfg.seed)
    population = _initial_population(cs, cfg, rng)
    base_fitness = float(fitness_fn(cs.base_counts))
    fits = np.array([fitness_fn(ind.counts) for ind in population])
    i = int(np.argmin(fits))
    best, best_fit = population[i], float(fits[i])
    history = [best_fit]
    for _ in range(cfg.generations):
        population = step(population, cs, cfg, fitness_fn, rng, fits=fits)
        fits = np.array([fitness_fn(ind.counts) for ind in population])
        i = int(np.argmin(fits))
        if float(fits[i]) < best_fit:
            best, best_fit = population[i], float(fits[i])
        history.append(best_fit)
    return GaResult(best=best, best_fitness=best_fit, history=history,
                    base_fitness=base_fitness)


# ---------------------------------------------------------------------------
# Grouped 4-parameter variant
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupedParams:
    deltas: tuple[int, int, int, int]
    mapping: tuple[tuple[int, ...], ...] = DEFAULT_GROUP_MAPPING


def decode_grouped(deltas: np.ndarray, cs: ConstraintSet,
                   mapping: tuple[tuple[int, ...], ...],
                   rng: np.random.Generator) -> Individual:
    """Apply the four group deltas to the base counts and restore feasibility.

    Any total discrepancy is absorbed by the remaining free (non-group)
    indices first, keeping the gene semantics sharp; general repair is the
    fallback.
    """
    c = cs.base_counts.copy()
    lo, hi = cs.lower(), cs.upper()
    group_idx = set()
    for g, idxs in enumerate(mapping):
        for j in idxs:
            group_idx.add(j)
            c[j] = int(np.clip(c[j] + int(deltas[g]), lo[j], hi[j]))
    if cs.fixed_total:
        free = [j for j in range(N_CATEGORIES)
                if j not in group_idx and j not in cs.fixed_indices]
        diff = int(c.sum() - cs.base_counts.sum())
        order = rng.permutation(free) if free else []
        while diff != 0 and len(order):
            moved = False
            for j in order:
                if diff == 0:
                    break
                if diff > 0 and c[j] > lo[j]:
                    c[j] -= 1
                    diff -= 1
                    moved = True
                elif diff < 0 and c[j] < hi[j]:
                    c[j] += 1
                    diff += 1
                    moved = True
            if not moved:
                break
    return repair(c, cs, rng)


def run_grouped_ga(cs: ConstraintSet, cfg: GaConfig, fitness_fn,
                   mapping: tuple[tuple[int, ...], ...] = DEFAULT_GROUP_MAPPING) -> GaResult:
    """The GA over 4 group deltas instead of 16 counts; scoring is identical."""
    rng = np.random.default_rng(cfg.seed)
    bound = cs.delta_bound

    def decode(d: np.ndarray) -> Individual:
        # fresh generator with a fixed seed: decoding is a pure function of the genome
        return decode_grouped(d, cs, mapping, np.random.default_rng(cfg.seed))

    genomes = [np.zeros(4, dtype=np.int64)]
    while len(genomes) < cfg.population:
        genomes.append(rng.integers(-bound, bound + 1, 4))
    base_fitness = float(fitness_fn(cs.base_counts))

    def genome_fitness(g: np.ndarray) -> float:
        return float(fitness_fn(decode(g).counts))

    best_g, best_fit = _best_genome(genomes, genome_fitness)
    history = [best_fit]
    for _ in range(cfg.generations):
        fits = np.array([genome_fitness(g) for g in genomes])
        elite_idx = np.argsort(fits, kind="stable")[: cfg.elitism]
        new = [genomes[i].copy() for i in elite_idx]
        while len(new) < cfg.population:
            a = genomes[_tournament(fits, cfg.tournament_k, rng)]
            b = genomes[_tournament(fits, cfg.tournament_k, rng)]
            child = np.where(rng.random(4) < 0.5, a, b) if rng.random() < cfg.crossover_rate \
                else a.copy()
            if rng.random() < cfg.mutation_rate:
                g = int(rng.integers(0, 4))
                child = child.copy()
                child[g] = int(np.clip(child[g] + rng.integers(-5, 6), -bound, bound))
            new.append(child)
        genomes = new
        cand_g, cand_fit = _best_genome(genomes, genome_fitness)
        if cand_fit < best_fit:
            best_g, best_fit = cand_g, cand_fit
        history.append(best_fit)
    return GaResult(best=decode(best_g), best_fitness=best_fit, history=history,
                    base_fitness=base_fitness)


def _best_genome(genomes, genome_fitness):
    fits = [genome_fitness(g) for g in genomes]
    i = int(np.argmin(fits))
    return genomes[i].copy(), float(fits[i])


# ---------------------------------------------------------------------------
# What-if edits
# ---------------------------------------------------------------------------


def apply_edits(base_counts: np.ndarray, edits) -> np.ndarray:
    """Resolve a what-if edit into a concrete count vector.

    Supported forms: a {index: new_count} mapping, the string "equalize"
    (all categories equal, preserving the total, remainder spread from index
    0), or ("scale", new_total) keeping proportions via largest-remainder
    rounding.
    """
    base = np.asarray(base_counts, dtype=np.int64)
    if base.shape != (N_CATEGORIES,):
        raise ShapeError("base_counts must be a 16-vector")
    if isinstance(edits, dict):
        c = base.copy()
        for idx, val in edits.items():
            idx = int(idx)
            if not 0 <= idx < N_CATEGORIES:
                raise ShapeError(f"edit index {idx} outside 0..15")
            if int(val) < 0:
                raise NegativeCount(f"edit sets category {idx} to {val}")
            c[idx] = int(val)
        return c
    if edits == "equalize":
        total = int(base.sum())
        q, r = divmod(total, N_CATEGORIES)
        c = np.full(N_CATEGORIES, q, dtype=np.int64)
        c[:r] += 1
        return c
    if isinstance(edits, tuple) and len(edits) == 2 and edits[0] == "scale":
        new_total = int(edits[1])
        if new_total < 0:
            raise NegativeCount("scaled total must be non-negative")
        total = int(base.sum())
        if total == 0:
            raise ShapeError("cannot scale an all-zero composition")
        exact = base * (new_total / total)
        floors = np.floor(exact).astype(np.int64)
        remainder = new_total - int(floors.sum())
        order = np.argsort(-(exact - floors), kind="stable")
        floors[order[:remainder]] += 1
        return floors
    raise ShapeError(f"unsupported edit form: {edits!r}")


@dataclass
class WhatIfResult:
    base_counts: np.ndarray
    edited_counts: np.ndarray
    base: HybridPrediction
    edited: HybridPrediction
    l1_divergence: float  # sum |base proportion - edited proportion|


def what_if(base_counts: np.ndarray, edits, model_t, model_d) -> WhatIfResult:
    """Hybrid predictions for the current and edited compositions."""
    edited = apply_edits(base_counts, edits)
    if (edited < 0).any():
        raise NegativeCount("edited counts must be non-negative")
    info = model_t.norm_info_
    base_pred = predict_hybrid(model_t, model_d, env_from_counts(base_counts, info).as_vector())
    edit_pred = predict_hybrid(model_t, model_d, env_from_counts(edited, info).as_vector())
    l1 = float(np.abs(base_pred.proportions - edit_pred.proportions).sum())
    return WhatIfResult(np.asarray(base_counts, dtype=np.int64), edited,
                        base_pred, edit_pred, l1)


# ---------------------------------------------------------------------------
# Scenario / result files
# ---------------------------------------------------------------------------


def parse_scenario(doc: dict) -> tuple[ConstraintSet, GaConfig, Objective, dict]:
    """Validate and unpack a scenario document; raises Infeasible/ShapeError."""
    try:
        cs = ConstraintSet(
            base_counts=np.asarray(doc["base_counts"], dtype=np.int64),
            fixed_total=bool(doc.get("fixed_total", True)),
            fixed_indices=frozenset(doc.get("fixed_indices", [12])),
            delta_bound=int(doc.get("delta_bound", 50)),
        )
    except KeyError as e:
        raise ShapeError(f"scenario missing field {e}") from None
    ga = doc.get("ga", {})
    cfg = GaConfig(
        population=int(ga.get("population", 64)),
        generations=int(ga.get("generations", 200)),
        tournament_k=int(ga.get("tournament_k", 3)),
        crossover_rate=float(ga.get("crossover_rate", 0.9)),
        mutation_rate=float(ga.get("mutation_rate", 0.2)),
        elitism=int(ga.get("elitism", 2)),
        seed=int(ga.get("seed", 0)),
    )
    obj = doc.get("objective", {})
    objective = Objective(kind=obj.get("kind", "variance"),
                          weights=tuple(obj["weights"]) if "weights" in obj else None)
    grouped = doc.get("grouped", False)
    options = {"grouped": bool(grouped)}
    if isinstance(grouped, dict):
        options["grouped"] = True
        options["mapping"] = tuple(tuple(g) for g in grouped.get("mapping",
                                                                 DEFAULT_GROUP_MAPPING))
    else:
        options["mapping"] = DEFAULT_GROUP_MAPPING
    return cs, cfg, objective, options


def run_scenario(doc: dict, model_t, model_d) -> dict:
    """Execute a scenario document end to end; returns the result document."""
    cs, cfg, objective, options = parse_scenario(doc)
    fitness = make_fitness(model_t, model_d, objective)
    if options["grouped"]:
        result = run_grouped_ga(cs, cfg, fitness, options["mapping"])
    else:
        result = run_ga(cs, cfg, fitness)
    info = model_t.norm_info_
    base_pred = predict_hybrid(model_t, model_d,
                               env_from_counts(cs.base_counts, info).as_vector())
    best_pred = predict_hybrid(model_t, model_d,
                               env_from_counts(result.best.counts, info).as_vector())
    return {
        "best_counts": result.best.counts.tolist(),
        "base_counts": cs.base_counts.tolist(),
        "base_fitness": result.base_fitness,
        "best_fitness": result.best_fitness,
        "history": result.history,
        "base_prediction": base_pred.to_dict(),
        "best_prediction": best_pred.to_dict(),
    }


def load_scenario(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def save_result(result: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(result, sort_keys=True, indent=2) + "\n", encoding="utf-8")
