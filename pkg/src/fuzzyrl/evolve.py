"""Generational GP engine over fuzzy policy trees with Pareto archiving.

Each generation is assembled from crossover offspring, reproductions,
Gaussian mutants and fresh random trees in configured proportions, with
tournament selection providing parents.  On top of that, the best
individuals of each occupied complexity level are copied, their terminals
jittered, and the best copy admitted when it beats its original — a cheap
local search that cannot lose ground.  Every evaluated individual updates
an archive of the best fitness seen per complexity level, from which the
nondominated complexity/fitness front is read off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fitness import FitnessEvaluator
from .fuzzy import DEFAULT_BOXES, PolicyBoxes
from .gp import (PolicyTree, crossover, gaussian_mutate, random_tree,
                 to_policy, tree_correction)
from .util import rng_for


@dataclass
class GpConfig:
    population: int = 200
    generations: int = 50
    tournament_size: int = 4
    crossover_frac: float = 0.45
    reproduction_frac: float = 0.05
    mutation_frac: float = 0.10
    random_frac: float = 0.40
    elite_frac: float = 0.05
    elite_cap: int = 20
    elite_copies: int = 5
    max_rules: int = 4
    max_dims: int | None = None
    complexity_cap: int = 400
    seed: int = 0

    def __post_init__(self):
        fracs = (self.crossover_frac, self.reproduction_frac,
                 self.mutation_frac, self.random_frac)
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"generation ratios must sum to 1, got {fracs}")
        if self.population < max(2, self.tournament_size):
            raise ValueError("population must cover the tournament size")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")

    def counts(self) -> tuple[int, int, int, int]:
        """(crossover, reproduction, mutation, random) sizes for one generation.

        Rounded to integers, crossover forced even so offspring come in
        pairs; any remainder goes to random individuals.
        """
        n = self.population
        n_cross = int(np.floor(self.crossover_frac * n + 0.5))
        if n_cross % 2:
            n_cross -= 1
        n_rep = int(np.floor(self.reproduction_frac * n + 0.5))
        n_mut = int(np.floor(self.mutation_frac * n + 0.5))
        n_rand = n - n_cross - n_rep - n_mut
        if n_rand < 0:
            raise ValueError("rounded ratios exceed the population size")
        return n_cross, n_rep, n_mut, n_rand


@dataclass
class ArchiveEntry:
    tree: PolicyTree
    complexity: int
    fitness: float
    generation_found: int


class ParetoArchive:
    """Best individual per complexity level, with nondominated-front readout."""

    def __init__(self):
        self._levels: dict[int, ArchiveEntry] = {}

    def __len__(self) -> int:
        return len(self._levels)

    @property
    def levels(self) -> dict[int, ArchiveEntry]:
        return dict(self._levels)

    def update(self, tree: PolicyTree, fitness: float, generation: int) -> bool:
        """Admit `tree` if it strictly improves its complexity level."""
        c = tree.complexity
        cur = self._levels.get(c)
        if cur is None or fitness > cur.fitness:
            self._levels[c] = ArchiveEntry(tree.copy(keep_fitness=True), c,
                                           float(fitness), generation)
            return True
        return False

    def snapshot(self) -> dict[int, float]:
        return {c: e.fitness for c, e in self._levels.items()}

    def best_fitness(self) -> float:
        return max((e.fitness for e in self._levels.values()), default=-np.inf)

    def front(self) -> list[ArchiveEntry]:
        """Nondominated entries: strictly increasing complexity and fitness.

        Walking levels in complexity order, an entry survives only if it
        strictly beats everything simpler; equal fitness at higher complexity
        is dominated.
        """
        out: list[ArchiveEntry] = []
        best = -np.inf
        for c in sorted(self._levels):
            e = self._levels[c]
            if e.fitness > best:
                out.append(e)
                best = e.fitness
        return out


@dataclass
class GenerationStats:
    generation: int
    evaluations: int          # cumulative engine-audited evaluations
    best_fitness: float
    archive_levels: dict[int, float]


@dataclass
class EvolveResult:
    archive: ParetoArchive
    history: list[GenerationStats]
    evaluations: int
    population: list[PolicyTree] = field(repr=False, default_factory=list)


def evolve(evaluator: FitnessEvaluator, state_dim: int,
           action_low, action_high, config: GpConfig,
           boxes: PolicyBoxes = DEFAULT_BOXES) -> EvolveResult:
    """Run the GP engine and return the Pareto archive plus audit trail.

    The returned evaluation count is the engine's own tally of fitness calls
    (initial population, all new individuals, elite copies); it must agree
    exactly with the evaluator's atomic counter.
    """
    rng = rng_for(config.seed, "gp")
    max_dims = state_dim if config.max_dims is None else config.max_dims
    archive = ParetoArchive()
    audited = 0

    def fresh() -> PolicyTree:
        return random_tree(rng, state_dim, action_low, action_high,
                           config.max_rules, max_dims, boxes)

    def admit(trees: list[PolicyTree]) -> list[PolicyTree]:
        """Correct, cap, and evaluate new individuals; archive them."""
        nonlocal audited
        ready = []
        for t in trees:
            t = tree_correction(t)
            if t.complexity > config.complexity_cap:
                t = tree_correction(fresh())
            ready.append(t)
        policies = [to_policy(t, boxes) for t in ready]
        fits = evaluator.fitness_batch(policies)
        audited += len(ready)
        for t, f in zip(ready, fits):
            t.fitness = float(f)
        return ready

    def tournament(pop: list[PolicyTree]) -> PolicyTree:
        picks = rng.integers(len(pop), size=config.tournament_size)
        best = picks[0]
        for i in picks[1:]:
            if pop[i].fitness > pop[best].fitness:
                best = i
        return pop[best]

    population = admit([fresh() for _ in range(config.population)])
    generation = 0
    for t in population:
        archive.update(t, t.fitness, generation)
    history = [GenerationStats(0, audited, archive.best_fitness(), archive.snapshot())]

    for generation in range(1, config.generations + 1):
        n_cross, n_rep, n_mut, n_rand = config.counts()

        offspring: list[PolicyTree] = []
        for _ in range(n_cross // 2):
            a, b = crossover(tournament(population), tournament(population), rng)
            offspring.extend((a, b))
        mutants = [gaussian_mutate(tournament(population), rng) for _ in range(n_mut)]
        randoms = [fresh() for _ in range(n_rand)]
        new = admit(offspring + mutants + randoms)
        reproduced = [tournament(population).copy(keep_fitness=True) for _ in range(n_rep)]

        # per-complexity-level elites: jitter copies, keep a copy only if it
        # strictly beats its original
        by_level: dict[int, list[PolicyTree]] = {}
        for t in population:
            by_level.setdefault(t.complexity, []).append(t)
        elites: list[PolicyTree] = []
        for level in sorted(by_level):
            members = sorted(by_level[level], key=lambda t: -t.fitness)
            take = max(1, int(np.floor(config.elite_frac * len(members) + 0.5)))
            elites.extend(members[:take])
        elites.sort(key=lambda t: -t.fitness)
        elites = elites[:config.elite_cap]
        admitted: list[PolicyTree] = []
        if elites:
            all_copies = admit([gaussian_mutate(elite, rng)
                                for elite in elites
                                for _ in range(config.elite_copies)])
            for i, elite in enumerate(elites):
                copies = all_copies[i * config.elite_copies:(i + 1) * config.elite_copies]
                best_copy = max(copies, key=lambda t: t.fitness)
                if best_copy.fitness > elite.fitness:
                    admitted.append(best_copy)

        population = new + reproduced + admitted
        for t in new + admitted:
            archive.update(t, t.fitness, generation)
        history.append(GenerationStats(generation, audited,
                                       archive.best_fitness(), archive.snapshot()))

    return EvolveResult(archive, history, audited, population)
