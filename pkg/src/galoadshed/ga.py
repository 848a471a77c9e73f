"""Generational genetic algorithm: init, truncation selection, single-point
crossover, per-gene Gaussian mutation, elitism.

The loop is parameterized over an evaluation provider so fitness computation
can run locally or be distributed to workers.  All randomness comes from one
generator owned by the loop, consumed in a fixed program order (initial
genomes, then per generation: parent draws, crossover cuts, mutation draws,
in offspring order).  Providers never consume this generator, which is what
makes a distributed run reproduce a sequential run bit for bit.
"""

from __future__ import annotations

import math
import random
import statistics
from dataclasses import dataclass, replace
from typing import Protocol, Sequence

from .errors import (
    DimensionMismatchError,
    InvalidConfigError,
    UnevaluatedPopulationError,
)
from .moo import (
    DecisionVector,
    FITNESS_STRATEGIES,
    ObjectiveVector,
    Problem,
    WeightVector,
    check_feasibility,
    evaluate_objectives,
    fitness_value,
    validate_weights,
)

Rng = random.Random

_MAX_SEED = 2**64


@dataclass(frozen=True)
class GaConfig:
    """Tunable parameters of one GA run.

    ``mutation_sigma=None`` means "5% of the mean bound width", resolved
    against the problem at run time; ``weights=None`` means uniform weights
    of 1.0 per objective.
    """

    population_size: int = 50
    generations: int = 100
    selection_fraction: float = 0.5
    mutation_rate: float = 0.1
    mutation_sigma: float | None = None
    elitism_count: int = 1
    seed: int = 0
    weights: WeightVector | None = None

    def validate(self, problem: Problem) -> None:
        """Raise InvalidConfigError unless every parameter is usable."""
        if self.population_size < 2:
            raise InvalidConfigError("population_size must be >= 2")
        if self.generations < 1:
            raise InvalidConfigError("generations must be >= 1")
        if not 0.0 < self.selection_fraction <= 1.0:
            raise InvalidConfigError("selection_fraction must be in (0, 1]")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise InvalidConfigError("mutation_rate must be in [0, 1]")
        if self.mutation_sigma is not None and not self.mutation_sigma > 0:
            raise InvalidConfigError("mutation_sigma must be > 0")
        if self.elitism_count < 0 or self.elitism_count >= self.population_size:
            raise InvalidConfigError("elitism_count must be in [0, population_size)")
        if not 0 <= self.seed < _MAX_SEED:
            raise InvalidConfigError("seed must be an unsigned 64-bit integer")
        weights = effective_weights(problem, self)
        try:
            validate_weights(weights)
        except ValueError as exc:
            raise InvalidConfigError(str(exc)) from exc
        if len(weights) != problem.num_objectives:
            raise InvalidConfigError(
                f"{len(weights)} weights for {problem.num_objectives} objectives"
            )


def effective_sigma(problem: Problem, config: GaConfig) -> float:
    """Mutation step scale: explicit value, or 5% of the mean bound width."""
    if config.mutation_sigma is not None:
        return config.mutation_sigma
    mean_width = math.fsum(hi - lo for lo, hi in problem.bounds) / problem.n_vars
    return 0.05 * mean_width if mean_width > 0 else 1.0


def effective_weights(problem: Problem, config: GaConfig) -> WeightVector:
    """Configured weights, or 1.0 per objective when unset."""
    if config.weights is not None:
        return tuple(config.weights)
    return (1.0,) * problem.num_objectives


@dataclass(frozen=True)
class Individual:
    """One candidate solution and, once evaluated, its results.

    ``violation`` is the summed magnitude of all constraint and bound
    violations; 0.0 for feasible individuals.
    """

    genome: DecisionVector
    objectives: ObjectiveVector | None = None
    fitness: float | None = None
    feasible: bool | None = None
    violation: float = 0.0
    birth_generation: int = 0

    @property
    def evaluated(self) -> bool:
        return self.fitness is not None


@dataclass(frozen=True)
class Population:
    members: tuple[Individual, ...]
    generation: int = 0


@dataclass(frozen=True)
class Evaluation:
    """Per-genome result produced by an evaluation provider."""

    objectives: ObjectiveVector
    fitness: float
    feasible: bool
    violation: float


class EvaluationProvider(Protocol):
    """Batch fitness evaluation behind the generation barrier.

    ``evaluate`` must return one Evaluation per input genome, aligned with
    the input order regardless of how or where the work was scheduled, and
    must be pure: equal genomes always yield equal results.
    """

    def evaluate(
        self, genomes: Sequence[DecisionVector], generation: int
    ) -> list[Evaluation]: ...


class LocalEvaluator:
    """Trivial in-process provider: evaluates the batch sequentially."""

    def __init__(self, problem: Problem, weights: WeightVector, fitness_id: str = "weighted-sum"):
        if fitness_id not in FITNESS_STRATEGIES:
            raise ValueError(f"unknown fitness strategy {fitness_id!r}")
        self.problem = problem
        self.weights = tuple(weights)
        self.fitness_id = fitness_id

    def evaluate(
        self, genomes: Sequence[DecisionVector], generation: int
    ) -> list[Evaluation]:
        results = []
        for genome in genomes:
            objectives = evaluate_objectives(self.problem, genome)
            fitness = fitness_value(self.fitness_id, self.weights, objectives)
            report = check_feasibility(self.problem, genome)
            results.append(
                Evaluation(objectives, fitness, report.feasible, report.total_violation)
            )
        return results


def random_population(problem: Problem, config: GaConfig, rng: Rng) -> Population:
    """Draw an unevaluated generation-0 population uniformly within bounds."""
    config.validate(problem)
    members = []
    for _ in range(config.population_size):
        genome = tuple(rng.uniform(lo, hi) for lo, hi in problem.bounds)
        members.append(Individual(genome=genome, birth_generation=0))
    return Population(members=tuple(members), generation=0)


def _ranked_indices(population: Population) -> list[int]:
    """Member indices sorted by (fitness, original index)."""
    for i, member in enumerate(population.members):
        if not member.evaluated:
            raise UnevaluatedPopulationError(f"member {i} has no fitness")
    return sorted(
        range(len(population.members)),
        key=lambda i: (population.members[i].fitness, i),
    )


def select_parents(population: Population, config: GaConfig) -> tuple[Individual, ...]:
    """Truncation selection: the best max(2, floor(fraction * size)) members.

    Output is ordered by (fitness, original index); ties keep the earlier
    member first.
    """
    ranked = _ranked_indices(population)
    count = max(2, int(config.selection_fraction * len(population.members)))
    return tuple(population.members[i] for i in ranked[:count])


def crossover(a: Individual, b: Individual, rng: Rng) -> DecisionVector:
    """Single-point crossover: child takes a's prefix and b's suffix.

    The cut is drawn uniformly from {1, ..., n-1}; a length-1 genome copies
    parent ``a`` without consuming randomness.
    """
    if len(a.genome) != len(b.genome):
        raise DimensionMismatchError(
            f"parent genomes of length {len(a.genome)} and {len(b.genome)}"
        )
    n = len(a.genome)
    if n == 1:
        return a.genome
    cut = rng.randrange(1, n)
    return a.genome[:cut] + b.genome[cut:]


def mutate(
    genome: DecisionVector, problem: Problem, config: GaConfig, rng: Rng
) -> DecisionVector:
    """Per-gene Gaussian mutation, clamped to the variable's bounds.

    Each gene independently mutates with probability ``mutation_rate``;
    unselected genes are returned bit-identical.  One uniform draw is
    consumed per gene regardless of the rate so the draw sequence does not
    depend on outcomes.
    """
    sigma = effective_sigma(problem, config)
    out = []
    for value, (lo, hi) in zip(genome, problem.bounds):
        if rng.random() < config.mutation_rate:
            value = value + rng.gauss(0.0, sigma)
            value = min(max(value, lo), hi)
        out.append(value)
    return tuple(out)


def _evaluated_individuals(
    genomes: Sequence[DecisionVector],
    evaluations: Sequence[Evaluation],
    birth_generations: Sequence[int],
) -> tuple[Individual, ...]:
    return tuple(
        Individual(
            genome=genome,
            objectives=ev.objectives,
            fitness=ev.fitness,
            feasible=ev.feasible,
            violation=ev.violation,
            birth_generation=birth,
        )
        for genome, ev, birth in zip(genomes, evaluations, birth_generations)
    )


def step_generation(
    population: Population,
    problem: Problem,
    config: GaConfig,
    rng: Rng,
    evaluator: EvaluationProvider,
) -> Population:
    """Produce and evaluate the next generation.

    Elites are the best ``elitism_count`` members (ties to the earlier
    index); the rest are offspring of parents drawn uniformly with
    replacement from the truncation pool (a pair draw matching its first
    parent is redrawn once, then allowed).  The full next population,
    elites included, is submitted to the evaluator as one batch, so every
    generation evaluates exactly ``population_size`` genomes.
    """
    ranked = _ranked_indices(population)
    elites = [population.members[i] for i in ranked[: config.elitism_count]]
    pool = select_parents(population, config)

    offspring: list[DecisionVector] = []
    while len(elites) + len(offspring) < config.population_size:
        first = rng.randrange(len(pool))
        second = rng.randrange(len(pool))
        if second == first and len(pool) > 1:
            second = rng.randrange(len(pool))
        child = crossover(pool[first], pool[second], rng)
        child = mutate(child, problem, config, rng)
        offspring.append(child)

    next_generation = population.generation + 1
    genomes = [e.genome for e in elites] + offspring
    births = [e.birth_generation for e in elites] + [next_generation] * len(offspring)
    evaluations = evaluator.evaluate(genomes, generation=next_generation)
    members = _evaluated_individuals(genomes, evaluations, births)
    return Population(members=members, generation=next_generation)


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    feasible_count: int


@dataclass(frozen=True)
class RunResult:
    best: Individual
    history: tuple[GenerationStats, ...]


def _solution_key(member: Individual) -> tuple[int, float]:
    """Feasible solutions first (by fitness), then infeasible by violation."""
    if member.feasible is False:
        return (1, member.violation)
    return (0, member.fitness)


def _stats(population: Population) -> GenerationStats:
    fitnesses = [m.fitness for m in population.members]
    feasible = sum(1 for m in population.members if m.feasible is not False)
    return GenerationStats(
        generation=population.generation,
        best_fitness=min(fitnesses),
        mean_fitness=statistics.fmean(fitnesses),
        feasible_count=feasible,
    )


def run(problem: Problem, config: GaConfig, evaluator: EvaluationProvider) -> RunResult:
    """Run the full GA: initialize, evaluate, then ``generations`` steps.

    Returns the best individual ever observed (feasible-first; among
    feasible by lowest fitness, otherwise by lowest total violation, ties
    to the earliest generation and member index) and one stats row per
    generation including generation 0.
    """
    config.validate(problem)
    rng = random.Random(config.seed)
    population = random_population(problem, config, rng)
    genomes = [m.genome for m in population.members]
    evaluations = evaluator.evaluate(genomes, generation=0)
    population = Population(
        members=_evaluated_individuals(genomes, evaluations, [0] * len(genomes)),
        generation=0,
    )

    best = None
    history = []

    def track(pop: Population) -> None:
        nonlocal best
        for member in pop.members:
            if best is None or _solution_key(member) < _solution_key(best):
                best = member

    track(population)
    history.append(_stats(population))
    for _ in range(config.generations):
        population = step_generation(population, problem, config, rng, evaluator)
        track(population)
        history.append(_stats(population))
    return RunResult(best=best, history=tuple(history))
