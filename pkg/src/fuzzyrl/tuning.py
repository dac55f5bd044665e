"""Post-evolution parameter tuning: swarm search over a genome's float
terminals with the structure frozen.

One swarm particle is seeded at the current terminal values, and the tuned
tree replaces the original only on strict improvement, so tuning can never
lose fitness and never changes complexity.  Applied to a whole Pareto front
it returns at most the same number of members (tuning can make a simpler
policy dominate a richer one).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evolve import ArchiveEntry, ParetoArchive
from .fitness import FitnessEvaluator
from .fuzzy import DEFAULT_BOXES, PolicyBoxes
from .gp import PolicyTree, substitute_terminals, terminal_values, to_policy
from .pso import SwarmConfig, pso_maximize
from .util import parallel_map, rng_for


@dataclass
class TuneResult:
    tree: PolicyTree
    fitness: float
    evaluations: int
    improved: bool


def tune_terminals(tree: PolicyTree, evaluator: FitnessEvaluator,
                   swarm_size: int = 30, iterations: int = 50, seed: int = 0,
                   boxes: PolicyBoxes = DEFAULT_BOXES) -> TuneResult:
    """Swarm-tune all float terminals of one genome, keeping improvements.

    With iterations == 0 the input is returned untouched (zero-budget
    idempotence).  The original's fitness is taken from its cache when
    present, else evaluated once.
    """
    values, roles = terminal_values(tree)
    if iterations == 0 or len(values) == 0:
        return TuneResult(tree.copy(keep_fitness=True),
                          tree.fitness if tree.fitness is not None else np.nan,
                          0, False)
    used_before = evaluator.evaluations
    if tree.fitness is not None:
        base_fitness = tree.fitness
    else:
        base_fitness = evaluator.fitness(to_policy(tree, boxes))

    lower = np.array([boxes.range_for(r)[0] for r in roles])
    upper = np.array([boxes.range_for(r)[1] for r in roles])

    def objective(x: np.ndarray) -> np.ndarray:
        policies = [to_policy(substitute_terminals(tree, row), boxes) for row in x]
        return evaluator.fitness_batch(policies)

    config = SwarmConfig(swarm_size=swarm_size, iterations=iterations, seed=seed)
    result = pso_maximize(objective, lower, upper, config,
                          init_positions=np.clip(values, lower, upper)[None, :])
    used = evaluator.evaluations - used_before
    if result.best_fitness > base_fitness:
        tuned = substitute_terminals(tree, result.best_position)
        tuned.fitness = result.best_fitness
        return TuneResult(tuned, result.best_fitness, used, True)
    kept = tree.copy(keep_fitness=True)
    kept.fitness = base_fitness
    return TuneResult(kept, base_fitness, used, False)


def _tune_one(args):
    (tree, model, config, normalizer, swarm_size, iterations, seed, boxes) = args
    evaluator = FitnessEvaluator(model, config, normalizer)
    result = tune_terminals(tree, evaluator, swarm_size, iterations, seed, boxes)
    return result


def tune_front(entries: list[ArchiveEntry], evaluator: FitnessEvaluator,
               swarm_size: int = 30, iterations: int = 50, seed: int = 0,
               boxes: PolicyBoxes = DEFAULT_BOXES, workers: int = 1) -> list[ArchiveEntry]:
    """Tune every front member independently and re-extract the front.

    Per-member failures leave that member untuned.  Results are identical
    for any worker count; worker evaluation counts are folded back into the
    shared evaluator so budget audits stay exact.
    """
    if not entries:
        raise ValueError("cannot tune an empty front")
    seeds = [int(rng_for(seed, "tune", i).integers(2 ** 31)) for i in range(len(entries))]
    if workers <= 1:
        results = []
        for entry, s in zip(entries, seeds):
            try:
                results.append(tune_terminals(entry.tree, evaluator,
                                              swarm_size, iterations, s, boxes))
            except Exception:
                results.append(TuneResult(entry.tree.copy(keep_fitness=True),
                                          entry.fitness, 0, False))
    else:
        jobs = [(e.tree, evaluator.model, evaluator.config, evaluator.normalizer,
                 swarm_size, iterations, s, boxes) for e, s in zip(entries, seeds)]
        results = parallel_map(_tune_one, jobs, workers=workers)
        evaluator.add_external_evaluations(sum(r.evaluations for r in results))

    rebuilt = ParetoArchive()
    for entry, result in zip(entries, results):
        if result.tree.complexity != entry.complexity:
            raise RuntimeError("terminal tuning must not change complexity")
        rebuilt.update(result.tree, result.fitness, entry.generation_found)
    return rebuilt.front()
