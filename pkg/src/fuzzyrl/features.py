"""Feature selection front end for fixed-structure policy training.

Two steps: (1) a receding-horizon controller searches, per start state, an
open-loop action sequence on the system model and keeps the first action,
producing (state, near-optimal action) pairs without any explicit policy;
(2) features are ranked per action dimension by greedy forward selection on
histogram mutual information, penalizing redundancy against already-selected
features (each redundancy term normalized by the selected feature's
entropy).  The estimator uses equal-frequency bins over order statistics, so
rankings are invariant under strictly monotone rescaling of any feature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import SystemModel
from .pso import SwarmConfig, pso_maximize
from .util import parallel_map, rng_for


@dataclass
class OptimalPairSet:
    states: np.ndarray   # (N, state_dim)
    actions: np.ndarray  # (N, action_dim)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.states)


def square_wave_sequences(horizon: int, action_low, action_high,
                          periods=(8, 12, 18, 26, 38, 54)) -> np.ndarray:
    """Bang-bang and constant action primitives for seeding sequence search.

    Alternating full-force pushes at several periods and phases, plus the
    constant extremes and zero: the natural energy-pumping shapes that a
    uniformly initialized swarm is unlikely to hit on a desk budget.
    """
    action_low = np.asarray(action_low, dtype=float)
    action_high = np.asarray(action_high, dtype=float)
    t = np.arange(horizon)
    waves = [np.zeros(horizon), np.ones(horizon), -np.ones(horizon)]
    for period in periods:
        for phase in (0, period // 2):
            waves.append(np.sign(np.sin(2.0 * np.pi * (t + phase) / period) + 1e-12))
            waves.append(-waves[-1])
    mid = (action_high + action_low) / 2.0
    half = (action_high - action_low) / 2.0
    out = np.stack(waves)[:, :, None] * half + mid  # (K, horizon, a_dim)
    return out.reshape(len(waves), horizon * len(action_low))


def psop_action(model: SystemModel, state: np.ndarray,
                action_low: np.ndarray, action_high: np.ndarray,
                horizon: int, gamma: float, config: SwarmConfig,
                init_sequences: np.ndarray | None = None) -> np.ndarray:
    """First action of the best open-loop sequence found from `state`.

    The swarm searches sequences of `horizon` actions (search dimension
    horizon * action_dim, boxed by the action bounds); the objective is the
    discounted model return of executing the sequence open-loop.
    `init_sequences` rows (flattened sequences) seed the initial swarm.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    state = np.asarray(state, dtype=float)
    action_low = np.asarray(action_low, dtype=float)
    action_high = np.asarray(action_high, dtype=float)
    a_dim = len(action_low)
    lower = np.tile(action_low, horizon)
    upper = np.tile(action_high, horizon)

    def objective(x: np.ndarray) -> np.ndarray:
        n = len(x)
        states = np.broadcast_to(state, (n, len(state))).copy()
        returns = np.zeros(n)
        dead = np.zeros(n, dtype=bool)
        weight = 1.0
        for t in range(horizon):
            actions = x[:, t * a_dim:(t + 1) * a_dim]
            states, rewards = model.predict_many(states, actions)
            bad = ~(np.isfinite(states).all(axis=1) & np.isfinite(rewards))
            if bad.any():
                dead |= bad
                states[bad] = 0.0
                rewards = np.where(bad, 0.0, rewards)
            returns += weight * rewards
            weight *= gamma
        returns[dead] = -np.inf
        return returns

    result = pso_maximize(objective, lower, upper, config, init_positions=init_sequences)
    return result.best_position[:a_dim].copy()


def psop_actions_lockstep(model: SystemModel, states: np.ndarray,
                          action_low, action_high, horizon: int, gamma: float,
                          config: SwarmConfig,
                          init_sequences: np.ndarray | None = None) -> np.ndarray:
    """`psop_action` for many start states at once, sharing one swarm seed.

    Every state sees the identical initial swarm and random update draws (the
    scalar solver's stream), so state-by-state results match `psop_action`
    with the same config while the rollouts run vectorized across states.
    Sharing the candidate stream also makes the returned action a
    deterministic function of the state, which is what the downstream mutual
    information estimate needs.
    """
    states = np.asarray(states, dtype=float)
    action_low = np.asarray(action_low, dtype=float)
    action_high = np.asarray(action_high, dtype=float)
    a_dim = len(action_low)
    s_count, s_dim = states.shape
    n, dim = config.swarm_size, horizon * a_dim
    lower = np.tile(action_low, horizon)
    upper = np.tile(action_high, horizon)
    span = upper - lower
    rng = rng_for(config.seed, "pso")

    def objective(x: np.ndarray) -> np.ndarray:
        # x: (s_count, n, dim) -> returns (s_count, n)
        flat = x.reshape(s_count * n, dim)
        cur = np.repeat(states, n, axis=0)
        returns = np.zeros(s_count * n)
        dead = np.zeros(s_count * n, dtype=bool)
        weight = 1.0
        for t in range(horizon):
            cur, rewards = model.predict_many(cur, flat[:, t * a_dim:(t + 1) * a_dim])
            bad = ~(np.isfinite(cur).all(axis=1) & np.isfinite(rewards))
            if bad.any():
                dead |= bad
                cur[bad] = 0.0
                rewards = np.where(bad, 0.0, rewards)
            returns += weight * rewards
            weight *= gamma
        returns[dead] = -np.inf
        return returns.reshape(s_count, n)

    x0 = lower + rng.uniform(size=(n, dim)) * span
    if init_sequences is not None:
        seeds = np.atleast_2d(np.asarray(init_sequences, dtype=float))
        m = min(len(seeds), n)
        x0[:m] = np.clip(seeds[:m], lower, upper)
    x = np.broadcast_to(x0, (s_count, n, dim)).copy()
    v = np.zeros((s_count, n, dim))
    v_max = 0.5 * span
    if config.topology == "ring":
        r = config.ring_radius
        ring = (np.arange(n)[:, None] + np.arange(-r, r + 1)[None, :]) % n
    else:
        ring = None
    fit = objective(x)
    fit = np.where(np.isfinite(fit), fit, -np.inf)
    pbest = x.copy()
    pbest_fit = fit.copy()
    rows = np.arange(s_count)[:, None]
    for _ in range(config.iterations - 1):
        if ring is None:
            pick = pbest_fit.argmax(axis=1)[:, None]
        else:
            window = pbest_fit[:, ring]                        # (s, n, 2r+1)
            pick = ring[np.arange(n), window.argmax(axis=2)]   # (s, n)
        nbest = pbest[rows, pick]
        r1 = rng.uniform(size=(n, dim))
        r2 = rng.uniform(size=(n, dim))
        v = (config.inertia * v + config.cognitive * r1 * (pbest - x)
             + config.social * r2 * (nbest - x))
        np.clip(v, -v_max, v_max, out=v)
        x = x + v
        out_of_box = (x < lower) | (x > upper)
        v[out_of_box] = 0.0
        np.clip(x, lower, upper, out=x)
        fit = objective(x)
        fit = np.where(np.isfinite(fit), fit, -np.inf)
        improved = fit > pbest_fit
        pbest[improved] = x[improved]
        pbest_fit = np.where(improved, fit, pbest_fit)
    best = pbest_fit.argmax(axis=1)
    return pbest[np.arange(s_count), best][:, :a_dim].copy()


def _psop_chunk(args):
    model, states, lo, hi, horizon, gamma, cfg, init = args
    return psop_actions_lockstep(model, states, lo, hi, horizon, gamma, cfg, init)


def collect_optimal_pairs(model: SystemModel, states: np.ndarray,
                          action_low, action_high, horizon: int, gamma: float,
                          swarm_size: int = 50, iterations: int = 50,
                          seed: int = 0, max_states: int | None = 2000,
                          workers: int = 1, seed_primitives: bool = True) -> OptimalPairSet:
    """Solve the receding-horizon problem for a batch of dataset states.

    States beyond `max_states` are dropped by deterministic subsampling
    (pass None to solve every state).  Solves run in lockstep with a shared
    swarm stream; chunking across workers cannot change the result because
    the per-state problems are independent.
    """
    states = np.asarray(states, dtype=float)
    if max_states is not None and len(states) > max_states:
        keep = rng_for(seed, "psop-subsample").choice(len(states), size=max_states,
                                                      replace=False)
        states = states[np.sort(keep)]
    cfg = SwarmConfig(swarm_size=swarm_size, iterations=iterations,
                      seed=int(rng_for(seed, "psop").integers(2 ** 31)))
    init = square_wave_sequences(horizon, action_low, action_high) \
        if seed_primitives else None
    if workers <= 1 or len(states) < 2 * workers:
        actions = psop_actions_lockstep(model, states, action_low, action_high,
                                        horizon, gamma, cfg, init)
    else:
        chunks = np.array_split(states, workers)
        jobs = [(model, chunk, action_low, action_high, horizon, gamma, cfg, init)
                for chunk in chunks if len(chunk)]
        actions = np.vstack(parallel_map(_psop_chunk, jobs, workers=workers))
    budget = len(states) * swarm_size * iterations
    return OptimalPairSet(states, np.asarray(actions), meta={
        "horizon": horizon, "swarm_size": swarm_size, "iterations": iterations,
        "states_solved": len(states), "sequence_evaluations": budget, "seed": seed})


# ---------------------------------------------------------------------------
# histogram mutual information


def equal_frequency_ids(x: np.ndarray, bins: int) -> np.ndarray:
    """Bin ids from equal-frequency edges taken at order statistics.

    Using actual data values as edges keeps the binning exactly invariant
    under strictly monotone transforms (up to ties).  Constant features
    collapse to a single bin.
    """
    edges = np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1], method="lower")
    return np.searchsorted(np.unique(edges), x, side="right")


def entropy_nats(ids: np.ndarray) -> float:
    counts = np.bincount(ids)
    p = counts[counts > 0] / len(ids)
    return float(-(p * np.log(p)).sum())


def mutual_information_nats(ids_x: np.ndarray, ids_y: np.ndarray) -> float:
    nx = int(ids_x.max()) + 1
    ny = int(ids_y.max()) + 1
    joint = np.bincount(ids_x * ny + ids_y, minlength=nx * ny).reshape(nx, ny)
    n = len(ids_x)
    px = joint.sum(axis=1) / n
    py = joint.sum(axis=0) / n
    nz = joint > 0
    pj = joint[nz] / n
    denom = np.outer(px, py)[nz]
    return float((pj * np.log(pj / denom)).sum())


def debiased_mi_nats(ids_x: np.ndarray, ids_y: np.ndarray,
                     shuffles: int = 24, seed: int = 0x5EED) -> float:
    """Histogram MI minus its permutation baseline, floored at zero.

    Finite-sample histogram MI is biased upward by roughly
    (bins_x - 1)(bins_y - 1) / (2 n) nats even for independent variables;
    subtracting the mean MI under seeded shuffles of one side removes that
    floor so genuinely uninformative features score ~0.  Deterministic for
    given inputs.
    """
    raw = mutual_information_nats(ids_x, ids_y)
    rng = np.random.default_rng(np.random.SeedSequence([seed, len(ids_x)]))
    baseline = np.mean([mutual_information_nats(ids_x, rng.permutation(ids_y))
                        for _ in range(shuffles)])
    return max(0.0, raw - float(baseline))


@dataclass
class FeatureRanking:
    """Per action dimension: feature indices with selection-time scores,
    best first."""

    per_action: list[list[tuple[int, float]]]

    def features(self, action: int, top: int | None = None) -> list[int]:
        order = [f for f, _ in self.per_action[action]]
        return order if top is None else order[:top]

    def to_json(self) -> dict:
        return {str(a): [{"feature": f, "score": s} for f, s in ranked]
                for a, ranked in enumerate(self.per_action)}

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureRanking":
        per_action = []
        for a in range(len(doc)):
            per_action.append([(int(e["feature"]), float(e["score"]))
                               for e in doc[str(a)]])
        return cls(per_action)


def rank_features(pairs: OptimalPairSet, n_select: int | None = None,
                  bins: int = 16, debias_shuffles: int = 24) -> FeatureRanking:
    """Greedy forward feature ranking per action dimension.

    The first pick maximizes mutual information with the action; later picks
    maximize relevance minus the mean entropy-normalized redundancy against
    everything already selected.  All MI terms are permutation-debiased
    (`debias_shuffles`; 0 disables), so constant or independent features
    carry zero relevance and can never precede an informative one.
    """
    if len(pairs) < 100:
        raise ValueError(f"need at least 100 pairs to rank features, got {len(pairs)}")
    states, actions = pairs.states, pairs.actions
    n_features = states.shape[1]
    if n_select is None:
        n_select = n_features
    if not (1 <= n_select <= n_features):
        raise ValueError(f"n_select={n_select} outside 1..{n_features}")

    if debias_shuffles > 0:
        def mi(x, y):
            return debiased_mi_nats(x, y, shuffles=debias_shuffles)
    else:
        mi = mutual_information_nats

    feat_ids = [equal_frequency_ids(states[:, f], bins) for f in range(n_features)]
    feat_entropy = [entropy_nats(ids) for ids in feat_ids]

    per_action = []
    for a in range(actions.shape[1]):
        act_ids = equal_frequency_ids(actions[:, a], bins)
        relevance = np.array([mi(ids, act_ids) for ids in feat_ids])
        selected: list[tuple[int, float]] = []
        remaining = list(range(n_features))
        cross: dict[tuple[int, int], float] = {}
        while len(selected) < n_select:
            best_f, best_score = -1, -math.inf
            for f in remaining:
                penalty = 0.0
                for g, _ in selected:
                    key = (min(f, g), max(f, g))
                    if key not in cross:
                        cross[key] = mi(feat_ids[f], feat_ids[g])
                    penalty += cross[key] / max(feat_entropy[g], 1e-12)
                score = relevance[f] - (penalty / len(selected) if selected else 0.0)
                if score > best_score:
                    best_f, best_score = f, score
            selected.append((best_f, float(best_score)))
            remaining.remove(best_f)
        per_action.append(selected)
    return FeatureRanking(per_action)
