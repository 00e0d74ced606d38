"""Adaptive differential evolution (DE/rand/1/bin with success-history F/CR).

Genomes live in the unit cube and are mapped onto named hyperparameter values
by :func:`decode`. The optimizer maximizes; wrap a loss with a negation to
minimize it.

Each generation, every member ``j`` draws its own scale factor ``F_j`` from a
Cauchy distribution around ``mu_f`` and crossover rate ``CR_j`` from a normal
around ``mu_cr``. Trials that replace their target record their ``F_j`` and
``CR_j``; at the end of the generation the means move toward the Lehmer mean
of the successful F values and the arithmetic mean of the successful CR
values, at rate ``c_adapt``.

All trials of a generation are built from the generation-start population and
replacements are applied together afterwards, so evaluation order (or a
parallel ``map``) cannot change the outcome.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ObjectiveError

__all__ = [
    "Dim",
    "SearchSpace",
    "Candidate",
    "Population",
    "AdaptState",
    "AdeConfig",
    "OptimizationResult",
    "decode",
    "encode",
    "init_population",
    "draw_donors",
    "mutate",
    "crossover",
    "select",
    "sample_parameters",
    "adapt",
    "optimize",
    "write_history_csv",
]

F_MIN, F_MAX = 0.1, 1.0


@dataclass(frozen=True)
class Dim:
    name: str
    lower: float
    upper: float
    scale: str = "linear"  # "linear" | "log"
    kind: str = "continuous"  # "continuous" | "integer"

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"dim {self.name!r}: lower {self.lower} must be < upper {self.upper}")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"dim {self.name!r}: unknown scale {self.scale!r}")
        if self.kind not in ("continuous", "integer"):
            raise ValueError(f"dim {self.name!r}: unknown kind {self.kind!r}")
        if self.scale == "log" and self.lower <= 0:
            raise ValueError(f"dim {self.name!r}: log scale needs lower > 0")


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dim, ...]

    def __post_init__(self):
        dims = tuple(self.dims)
        object.__setattr__(self, "dims", dims)
        if not dims:
            raise ValueError("search space has no dimensions")
        names = [d.name for d in dims]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate dimension names in {names}")

    def __len__(self):
        return len(self.dims)

    @property
    def names(self):
        return tuple(d.name for d in self.dims)


@dataclass
class Candidate:
    genome: np.ndarray
    fitness: float | None = None


@dataclass
class Population:
    genomes: np.ndarray
    fitness: np.ndarray
    generation: int = 0

    def __len__(self):
        return self.genomes.shape[0]

    @property
    def members(self) -> list[Candidate]:
        return [
            Candidate(g.copy(), None if math.isnan(f) else float(f))
            for g, f in zip(self.genomes, self.fitness)
        ]


@dataclass(frozen=True)
class AdaptState:
    mu_f: float = 0.5
    mu_cr: float = 0.5
    success_f: tuple = ()
    success_cr: tuple = ()

    @property
    def success_count(self):
        return len(self.success_f)

    def record(self, f, cr):
        return replace(self, success_f=self.success_f + (f,), success_cr=self.success_cr + (cr,))


@dataclass(frozen=True)
class AdeConfig:
    pop_size: int = 20
    max_generations: int = 50
    c_adapt: float = 0.1
    init_mu_f: float = 0.5
    init_mu_cr: float = 0.5
    f_scale: float = 0.1
    cr_sigma: float = 0.1
    stagnation_generations: int = 0  # 0 disables
    seed: int = 0

    def __post_init__(self):
        if self.pop_size < 4:
            raise ValueError(f"pop_size must be >= 4, got {self.pop_size}")
        if self.max_generations < 1:
            raise ValueError(f"max_generations must be >= 1, got {self.max_generations}")
        # 0 is allowed: it freezes adaptation (classic DE)
        if not 0 <= self.c_adapt <= 1:
            raise ValueError(f"c_adapt must be in [0, 1], got {self.c_adapt}")
        if not F_MIN <= self.init_mu_f <= F_MAX:
            raise ValueError(f"init_mu_f must be in [{F_MIN}, {F_MAX}], got {self.init_mu_f}")
        if not 0 <= self.init_mu_cr <= 1:
            raise ValueError(f"init_mu_cr must be in [0, 1], got {self.init_mu_cr}")
        if self.f_scale < 0 or self.cr_sigma < 0:
            raise ValueError("f_scale and cr_sigma must be >= 0")
        if self.stagnation_generations < 0:
            raise ValueError("stagnation_generations must be >= 0")


@dataclass
class OptimizationResult:
    best_genome: np.ndarray
    best_decoded: dict
    best_fitness: float
    history: list = field(default_factory=list)
    population: Population | None = None
    evaluations: int = 0


def decode(genome, space: SearchSpace) -> dict:
    """Map a unit-cube genome to named values (log, linear and integer dims)."""
    g = np.asarray(genome, dtype=np.float64)
    if g.shape != (len(space),):
        raise ValueError(f"genome length {g.size} != {len(space)} dimensions")
    if np.any(g < 0) or np.any(g > 1):
        raise ValueError("genes must lie in [0, 1]")
    out = {}
    for gene, dim in zip(g, space.dims):
        if gene in (0.0, 1.0):  # exact bounds, free of exp/log rounding
            value = dim.upper if gene == 1.0 else dim.lower
        elif dim.scale == "log":
            lo, hi = math.log(dim.lower), math.log(dim.upper)
            value = math.exp(lo + gene * (hi - lo))
        else:
            value = dim.lower + gene * (dim.upper - dim.lower)
        if dim.kind == "integer":
            value = int(min(max(math.floor(value + 0.5), math.ceil(dim.lower)), math.floor(dim.upper)))
        else:
            value = min(max(value, dim.lower), dim.upper)
        out[dim.name] = value
    return out


def encode(values: dict, space: SearchSpace) -> np.ndarray:
    """Inverse of :func:`decode` up to integer rounding; values are clamped into bounds."""
    genes = []
    for dim in space.dims:
        v = min(max(float(values[dim.name]), dim.lower), dim.upper)
        if dim.scale == "log":
            lo, hi = math.log(dim.lower), math.log(dim.upper)
            genes.append((math.log(v) - lo) / (hi - lo))
        else:
            genes.append((v - dim.lower) / (dim.upper - dim.lower))
    return np.clip(np.array(genes), 0.0, 1.0)


def init_population(space: SearchSpace, config: AdeConfig, rng=None) -> Population:
    if config.pop_size < 4:
        raise ValueError(f"pop_size must be >= 4, got {config.pop_size}")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    genomes = rng.random((config.pop_size, len(space)))
    return Population(genomes, np.full(config.pop_size, np.nan), 0)


def draw_donors(n, j, rng):
    """Three distinct member indices, none equal to ``j``."""
    pool = [i for i in range(n) if i != j]
    s1, s2, s3 = rng.choice(pool, 3, replace=False)
    return int(s1), int(s2), int(s3)


def mutate(population, j, F, rng):
    """x_j = Y_s1 + F * (Y_s2 - Y_s3), clamped back into the unit cube."""
    genomes = population.genomes if isinstance(population, Population) else np.asarray(population)
    if genomes.shape[0] < 4:
        raise ValueError("mutation needs at least 4 members")
    if not F > 0:
        raise ValueError(f"scale factor must be > 0, got {F}")
    s1, s2, s3 = draw_donors(genomes.shape[0], j, rng)
    return np.clip(genomes[s1] + F * (genomes[s2] - genomes[s3]), 0.0, 1.0)


def crossover(target, mutant, CR, rng):
    """Binomial crossover with one forced mutant gene.

    Gene i comes from the mutant when its uniform draw is <= CR. One index,
    drawn after the per-gene draws, always takes the mutant gene.
    """
    target = np.asarray(target, dtype=np.float64)
    mutant = np.asarray(mutant, dtype=np.float64)
    if target.shape != mutant.shape:
        raise ValueError("target and mutant differ in length")
    if not 0 <= CR <= 1:
        raise ValueError(f"CR must be in [0, 1], got {CR}")
    take = rng.random(target.size) <= CR
    take[rng.integers(target.size)] = True
    return np.where(take, mutant, target)


def select(trial_fitness, target_fitness) -> bool:
    """Greedy replacement; ties go to the trial."""
    if not (math.isfinite(trial_fitness) and math.isfinite(target_fitness)):
        raise ValueError(f"non-finite fitness in selection: {trial_fitness!r} vs {target_fitness!r}")
    return trial_fitness >= target_fitness


def sample_parameters(state: AdaptState, config: AdeConfig, rng):
    """Per-member (F, CR). A zero spread returns the mean without touching ``rng``."""
    if config.f_scale > 0:
        F = state.mu_f + config.f_scale * rng.standard_cauchy()
        while F <= 0:
            F = state.mu_f + config.f_scale * rng.standard_cauchy()
        F = min(F, 1.0)
    else:
        F = state.mu_f
    if config.cr_sigma > 0:
        CR = float(np.clip(rng.normal(state.mu_cr, config.cr_sigma), 0.0, 1.0))
    else:
        CR = state.mu_cr
    return float(F), float(CR)


def adapt(state: AdaptState, config: AdeConfig) -> AdaptState:
    """Move mu_f / mu_cr toward this generation's successful values, then clear them."""
    mu_f, mu_cr = state.mu_f, state.mu_cr
    if state.success_f:
        sf = np.asarray(state.success_f, dtype=np.float64)
        scr = np.asarray(state.success_cr, dtype=np.float64)
        c = config.c_adapt
        # sum(f^2)/sum(f), written as a weighted mean so a single success is reproduced exactly
        lehmer = float(np.sum(sf * (sf / np.sum(sf))))
        mu_f = (1 - c) * mu_f + c * lehmer
        mu_cr = (1 - c) * mu_cr + c * float(np.mean(scr))
    mu_f = min(max(mu_f, F_MIN), F_MAX)
    mu_cr = min(max(mu_cr, 0.0), 1.0)
    return AdaptState(mu_f, mu_cr)


def _evaluate(objective, genomes, generation, map_fn):
    values = list(map_fn(objective, list(genomes)))
    out = np.empty(len(values))
    for j, v in enumerate(values):
        v = float(v)
        if not math.isfinite(v):
            raise ObjectiveError(generation, j, v)
        out[j] = v
    return out


def optimize(
    objective: Callable[[np.ndarray], float],
    space: SearchSpace,
    config: AdeConfig = AdeConfig(),
    map_fn: Callable = map,
    callback: Callable | None = None,
) -> OptimizationResult:
    """Maximize ``objective`` over unit-cube genomes decoded by ``space``.

    ``map_fn`` evaluates a list of genomes (pass an executor's ``map`` to run
    them in parallel; results are consumed in member order). ``callback`` is
    called with ``(generation, population, state)`` after each generation.
    """
    rng = np.random.default_rng(config.seed)
    pop = init_population(space, config, rng)
    pop.fitness = _evaluate(objective, pop.genomes, 0, map_fn)
    evaluations = len(pop)
    state = AdaptState(config.init_mu_f, config.init_mu_cr)
    best = float(pop.fitness.max())
    history = []
    stale = 0
    for gen in range(1, config.max_generations + 1):
        params, trials = [], []
        for j in range(len(pop)):
            F, CR = sample_parameters(state, config, rng)
            mutant = mutate(pop, j, F, rng)
            trials.append(crossover(pop.genomes[j], mutant, CR, rng))
            params.append((F, CR))
        trial_fit = _evaluate(objective, trials, gen, map_fn)
        evaluations += len(trials)
        genomes, fitness = pop.genomes.copy(), pop.fitness.copy()
        for j, (trial, tf) in enumerate(zip(trials, trial_fit)):
            if select(tf, fitness[j]):
                genomes[j], fitness[j] = trial, tf
                state = state.record(*params[j])
        successes = state.success_count
        state = adapt(state, config)
        pop = Population(genomes, fitness, gen)
        gen_best = float(fitness.max())
        stale = 0 if gen_best > best else stale + 1
        best = max(best, gen_best)
        history.append({
            "generation": gen,
            "best_fitness": best,
            "mu_f": state.mu_f,
            "mu_cr": state.mu_cr,
            "success_count": successes,
        })
        if callback is not None:
            callback(gen, pop, state)
        if config.stagnation_generations and stale >= config.stagnation_generations:
            break
    k = int(np.argmax(pop.fitness))
    return OptimizationResult(
        best_genome=pop.genomes[k].copy(),
        best_decoded=decode(pop.genomes[k], space),
        best_fitness=float(pop.fitness[k]),
        history=history,
        population=pop,
        evaluations=evaluations,
    )


HISTORY_COLUMNS = ("generation", "best_fitness", "mu_f", "mu_cr", "success_count")


def write_history_csv(history: Sequence[dict], path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([row["generation"], repr(float(row["best_fitness"])), repr(float(row["mu_f"])),
                        repr(float(row["mu_cr"])), row["success_count"]])
