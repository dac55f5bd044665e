"""Monte Carlo policy evaluation through a system model.

The return of a policy from one start state is the discounted sum of the
first T rewards along the model rollout; fitness averages the return over a
fixed set of start states.  Both swarm and GP engines maximize this one
number, and every call is tallied so runs can report exact evaluation
budgets.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import StateNormalizer
from .envs import Environment
from .fuzzy import FuzzyPolicy, PolicyBatch
from .models import SystemModel
from .util import rng_for


class EvaluationError(RuntimeError):
    """Model produced a non-finite prediction during a rollout."""

    def __init__(self, message: str, step: int, start_state=None):
        super().__init__(f"{message} at step {step}")
        self.step = step
        self.start_state = start_state


@dataclass
class FitnessConfig:
    horizon: int
    gamma: float
    start_states: np.ndarray  # (S, state_dim)

    def __post_init__(self):
        if self.horizon <= 1:
            raise ValueError("horizon must be > 1")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1]")
        self.start_states = np.atleast_2d(np.asarray(self.start_states, dtype=float))
        if len(self.start_states) < 1:
            raise ValueError("need at least one start state")

    def min_return(self) -> float:
        """Lower bound of the return when rewards live in [-1, 0]."""
        if self.gamma == 1.0:
            return -float(self.horizon)
        return -(1.0 - self.gamma ** self.horizon) / (1.0 - self.gamma)


def sample_start_states(env: Environment, count: int, seed: int,
                        region: np.ndarray | None = None,
                        stream: str = "starts") -> np.ndarray:
    region = region if region is not None else getattr(env, "start_region")
    rng = rng_for(seed, stream)
    return np.array([env.sample_initial(region, rng) for _ in range(count)])


def rollout_return(policy: Callable, model: SystemModel, s0: np.ndarray,
                   horizon: int, gamma: float) -> float:
    """Discounted T-step return of a raw-state policy callable from `s0`."""
    if horizon <= 1:
        raise ValueError("horizon must be > 1")
    s = np.asarray(s0, dtype=float)
    total = 0.0
    weight = 1.0
    for step in range(horizon):
        a = policy(s)
        ns, r = model.predict(s, a)
        if not (np.isfinite(ns).all() and math.isfinite(r)):
            raise EvaluationError("non-finite model prediction", step, s0)
        total += weight * r
        weight *= gamma
        s = ns
    return total


class FitnessEvaluator:
    """Counted fitness function bound to one (model, config, normalizer).

    Fuzzy policies are evaluated through the vectorized batch path; generic
    callables take the plain per-step path.  The evaluation counter is an
    exact atomic tally: engines report budgets straight from it.
    """

    def __init__(self, model: SystemModel, config: FitnessConfig,
                 normalizer: StateNormalizer | None = None):
        self.model = model
        self.config = config
        self.normalizer = normalizer
        self._count = 0
        self._lock = threading.Lock()

    @property
    def evaluations(self) -> int:
        return self._count

    def _bump(self, n: int) -> None:
        with self._lock:
            self._count += n

    def add_external_evaluations(self, n: int) -> None:
        """Fold in evaluations performed by worker processes."""
        self._bump(n)

    # -- core rollout machinery ------------------------------------------

    def batch_returns(self, batch: PolicyBatch) -> np.ndarray:
        """Per-start returns, shape (batch, n_starts).  Uncounted.

        Rollouts that hit a non-finite prediction are scored -inf instead of
        raising, so one bad candidate cannot abort a whole generation.
        """
        cfg = self.config
        starts = cfg.start_states
        b, (s_count, dim) = batch.size, starts.shape
        states = np.broadcast_to(starts, (b, s_count, dim)).reshape(b * s_count, dim).copy()
        returns = np.zeros(b * s_count)
        dead = np.zeros(b * s_count, dtype=bool)
        weight = 1.0
        for _ in range(cfg.horizon):
            if self.normalizer is not None:
                snorm = self.normalizer.transform(states)
            else:
                snorm = states
            actions = batch.act(snorm.reshape(b, s_count, dim)).reshape(b * s_count, -1)
            states, rewards = self.model.predict_many(states, actions)
            bad = ~(np.isfinite(states).all(axis=1) & np.isfinite(rewards))
            if bad.any():
                dead |= bad
                states[bad] = 0.0
                rewards = np.where(bad, 0.0, rewards)
            returns += weight * rewards
            weight *= cfg.gamma
        returns[dead] = -np.inf
        return returns.reshape(b, s_count)

    # -- counted entry points --------------------------------------------

    def fitness(self, policy) -> float:
        """Mean return over the start-state set; counts as one evaluation."""
        if isinstance(policy, FuzzyPolicy):
            value = self._fitness_of_batch(PolicyBatch.compile(
                [policy], self.config.start_states.shape[1]))[0]
        else:
            rets = [rollout_return(policy, self.model, s0,
                                   self.config.horizon, self.config.gamma)
                    for s0 in self.config.start_states]
            value = math.fsum(rets) / len(rets)
        self._bump(1)
        return float(value)

    def fitness_batch(self, policies) -> np.ndarray:
        """Fitness of many policies at once; counts one evaluation each."""
        if isinstance(policies, PolicyBatch):
            batch = policies
        else:
            batch = PolicyBatch.compile(list(policies), self.config.start_states.shape[1])
        values = self._fitness_of_batch(batch)
        self._bump(batch.size)
        return values

    def _fitness_of_batch(self, batch: PolicyBatch) -> np.ndarray:
        per_start = self.batch_returns(batch)
        # fsum is order-insensitive, so fitness is invariant to permuting
        # the start-state set, exactly
        return np.array([math.fsum(row) / len(row) for row in per_start])
