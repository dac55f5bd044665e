"""Particle swarm optimization over bounded real vectors, plus the
fixed-structure fuzzy policy trainer built on it.

The swarm follows the standard inertia-weight update with constriction-style
constants and a ring neighborhood.  Personal bests replace only on strict
improvement; the returned optimum is the best personal best ever seen.
`iterations` counts evaluation rounds including the initial one, so a run
performs exactly swarm_size * iterations objective evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fitness import FitnessEvaluator
from .fuzzy import (DEFAULT_BOXES, FpsrlStructure, FuzzyPolicy, PolicyBatch,
                    PolicyBoxes, decode)
from .util import rng_for


@dataclass
class SwarmConfig:
    swarm_size: int = 50
    iterations: int = 100
    inertia: float = 0.7298
    cognitive: float = 1.49618
    social: float = 1.49618
    topology: str = "ring"   # "ring" | "global"
    ring_radius: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be >= 2")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.topology not in ("ring", "global"):
            raise ValueError(f"unknown topology {self.topology!r}")


@dataclass
class IterationStats:
    evaluations: int
    global_best: float
    personal_best: np.ndarray  # snapshot of per-particle best fitness


@dataclass
class PsoResult:
    best_position: np.ndarray
    best_fitness: float
    history: list[IterationStats]
    evaluations: int


def _sanitize(values: np.ndarray) -> np.ndarray:
    # non-finite objective values can never win a comparison
    return np.where(np.isfinite(values), values, -np.inf)


def pso_maximize(objective: Callable[[np.ndarray], np.ndarray],
                 lower: np.ndarray, upper: np.ndarray,
                 config: SwarmConfig,
                 init_positions: np.ndarray | None = None) -> PsoResult:
    """Maximize a batched objective over the box [lower, upper].

    `objective` maps a (swarm_size, dim) position matrix to a (swarm_size,)
    fitness vector.  `init_positions` optionally pins the first rows of the
    initial swarm (used to seed local search at a known-good point).  The
    trajectory is fully determined by `config.seed`; objective evaluation may
    be parallel internally since the random draws all happen in the
    sequential update phase.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or lower.ndim != 1:
        raise ValueError("bounds must be 1-D arrays of equal length")
    if not (np.isfinite(lower).all() and np.isfinite(upper).all() and (lower < upper).all()):
        raise ValueError("bounds must be finite with lower < upper")
    n, dim = config.swarm_size, len(lower)
    rng = rng_for(config.seed, "pso")
    span = upper - lower

    x = lower + rng.uniform(size=(n, dim)) * span
    if init_positions is not None:
        seeds = np.atleast_2d(np.asarray(init_positions, dtype=float))
        m = min(len(seeds), n)
        x[:m] = np.clip(seeds[:m], lower, upper)
    v = np.zeros((n, dim))
    v_max = 0.5 * span

    if config.topology == "ring":
        r = config.ring_radius
        neighborhood = (np.arange(n)[:, None] + np.arange(-r, r + 1)[None, :]) % n
    else:
        neighborhood = None

    fit = _sanitize(np.asarray(objective(x), dtype=float))
    pbest = x.copy()
    pbest_fit = fit.copy()
    evaluations = n
    history = [IterationStats(evaluations, float(pbest_fit.max()), pbest_fit.copy())]

    for _ in range(config.iterations - 1):
        if neighborhood is None:
            nbest = pbest[int(np.argmax(pbest_fit))][None, :]
        else:
            window = pbest_fit[neighborhood]                 # (n, 2r+1)
            pick = neighborhood[np.arange(n), window.argmax(axis=1)]
            nbest = pbest[pick]
        r1 = rng.uniform(size=(n, dim))
        r2 = rng.uniform(size=(n, dim))
        v = (config.inertia * v
             + config.cognitive * r1 * (pbest - x)
             + config.social * r2 * (nbest - x))
        np.clip(v, -v_max, v_max, out=v)
        x = x + v
        out_of_box = (x < lower) | (x > upper)
        v[out_of_box] = 0.0
        np.clip(x, lower, upper, out=x)

        fit = _sanitize(np.asarray(objective(x), dtype=float))
        improved = fit > pbest_fit
        pbest[improved] = x[improved]
        pbest_fit = np.where(improved, fit, pbest_fit)
        evaluations += n
        history.append(IterationStats(evaluations, float(pbest_fit.max()), pbest_fit.copy()))

    best = int(np.argmax(pbest_fit))
    return PsoResult(pbest[best].copy(), float(pbest_fit[best]), history, evaluations)


# ---------------------------------------------------------------------------
# fixed-structure policy training


@dataclass
class FpsrlResult:
    policy: FuzzyPolicy
    fitness: float
    vector: np.ndarray
    structure: FpsrlStructure
    history: list[IterationStats]
    evaluations: int


def fpsrl_train(structure: FpsrlStructure, evaluator: FitnessEvaluator,
                action_low: Sequence[float], action_high: Sequence[float],
                config: SwarmConfig, boxes: PolicyBoxes = DEFAULT_BOXES) -> FpsrlResult:
    """Tune all parameters of a fixed fuzzy rule structure by swarm search."""
    state_dim = evaluator.config.start_states.shape[1]
    for feats in structure.features:
        for f in feats:
            if not (0 <= f < state_dim):
                raise ValueError(f"feature index {f} outside state dimension {state_dim}")

    lower, upper = structure.search_box(boxes)

    def objective(x: np.ndarray) -> np.ndarray:
        batch = PolicyBatch.from_param_matrix(x, structure, action_low, action_high, boxes)
        return evaluator.fitness_batch(batch)

    result = pso_maximize(objective, lower, upper, config)
    policy = decode(result.best_position, structure, action_low, action_high, boxes)
    return FpsrlResult(policy, result.best_fitness, result.best_position,
                       structure, result.history, result.evaluations)
