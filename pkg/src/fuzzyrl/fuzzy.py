"""Gaussian fuzzy rule policies and their flat parameter-vector encoding.

A policy holds, per action dimension, a set of rules.  Each rule is a
conjunction of Gaussian membership clauses over individual state features
plus a scalar consequent.  The action is the activation-weighted average of
the consequents, squashed by tanh (scaled by a per-action slope alpha) and
affinely mapped onto the action bounds.  Activations are strictly positive,
so the defuzzifier denominator never vanishes.

Policies are immutable after construction and evaluation is pure, so they
are safe to share across workers.  `PolicyBatch` packs many policies into
padded arrays for vectorized rollouts; `policy_output` is the readable
single-policy reference the batch path is tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class StructureError(ValueError):
    """Raised when a parameter vector or rule set violates its declared shape."""


@dataclass(frozen=True)
class MembershipClause:
    """One Gaussian factor exp(-(center - s[state_index])^2 / (2 sigma^2))."""

    state_index: int
    center: float
    sigma: float

    def __post_init__(self):
        if self.state_index < 0:
            raise StructureError(f"state_index must be >= 0, got {self.state_index}")
        if not (self.sigma > 0.0):
            raise StructureError(f"sigma must be > 0, got {self.sigma}")


@dataclass(frozen=True)
class FuzzyRule:
    """Conjunction of clauses with a real consequent (pre-squash units).

    An empty clause list gives constant activation 1.  No two clauses may
    address the same state feature; duplicate elimination happens upstream
    (tree correction) before rules are built.
    """

    clauses: tuple[MembershipClause, ...]
    consequent: float

    def __post_init__(self):
        seen = [c.state_index for c in self.clauses]
        if len(set(seen)) != len(seen):
            raise StructureError(f"duplicate state_index in rule clauses: {seen}")


@dataclass(frozen=True)
class FuzzyPolicy:
    """Per-action rule sets with slopes and action bounds.

    Evaluation expects states in the same units the clause centers were
    expressed in (normalized units along the learning pipeline).
    """

    rule_sets: tuple[tuple[FuzzyRule, ...], ...]
    alphas: tuple[float, ...]
    action_low: tuple[float, ...]
    action_high: tuple[float, ...]

    def __post_init__(self):
        n = len(self.rule_sets)
        if not (len(self.alphas) == len(self.action_low) == len(self.action_high) == n):
            raise StructureError("per-action field lengths disagree")
        for rules in self.rule_sets:
            if len(rules) < 1:
                raise StructureError("every action dimension needs at least one rule")
        for a in self.alphas:
            if not (a > 0.0):
                raise StructureError(f"alpha must be > 0, got {a}")
        for lo, hi in zip(self.action_low, self.action_high):
            if not (lo < hi):
                raise StructureError(f"action bounds must satisfy lo < hi, got [{lo}, {hi}]")

    @property
    def n_actions(self) -> int:
        return len(self.rule_sets)

    def __call__(self, s: np.ndarray) -> np.ndarray:
        return policy_output(self, s)

    def max_state_index(self) -> int:
        idx = [c.state_index for rules in self.rule_sets for r in rules for c in r.clauses]
        return max(idx) if idx else -1


def membership(clause: MembershipClause, s: np.ndarray) -> float:
    """Gaussian degree of membership of state `s` in one clause, in (0, 1]."""
    d = clause.center - float(s[clause.state_index])
    return math.exp(-(d * d) / (2.0 * clause.sigma * clause.sigma))


def rule_activation(rule: FuzzyRule, s: np.ndarray) -> float:
    """Product of clause memberships; 1.0 for the empty conjunction."""
    act = 1.0
    for clause in rule.clauses:
        act *= membership(clause, s)
    return act


def policy_output(policy: FuzzyPolicy, s: np.ndarray) -> np.ndarray:
    """Evaluate the policy at state `s`, returning one action per dimension.

    Per dimension: tanh(alpha * weighted mean of consequents), mapped from
    (-1, 1) onto [low, high].  Activations are rescaled by the largest one
    before the weighted mean (an algebraic no-op) so extreme exponents
    cannot underflow the denominator to zero.
    """
    s = np.asarray(s, dtype=float)
    out = np.empty(policy.n_actions)
    for a, rules in enumerate(policy.rule_sets):
        zs = []
        for rule in rules:
            z = 0.0
            for clause in rule.clauses:
                d = clause.center - float(s[clause.state_index])
                z += (d * d) / (2.0 * clause.sigma * clause.sigma)
            zs.append(z)
        zmin = min(zs)
        num = 0.0
        den = 0.0
        for z, rule in zip(zs, rules):
            act = math.exp(zmin - z)
            num += act * rule.consequent
            den += act
        u = math.tanh(policy.alphas[a] * num / den)
        lo, hi = policy.action_low[a], policy.action_high[a]
        out[a] = lo + 0.5 * (u + 1.0) * (hi - lo)
    return out


def complexity_of_policy(policy: FuzzyPolicy) -> int:
    """Weighted structural size: 11 per rule + 5 per clause + 1 per action slope."""
    total = 0
    for rules in policy.rule_sets:
        total += 1
        for rule in rules:
            total += 11 + 5 * len(rule.clauses)
    return total


# ---------------------------------------------------------------------------
# value ranges shared by swarm search, vector decoding and tree interpretation


@dataclass(frozen=True)
class PolicyBoxes:
    """Search ranges per parameter role, plus the width clamp used when
    interpreting free-floating genomes.  Centers live in normalized state
    units, consequents in pre-squash action units.
    """

    center: tuple[float, float] = (-1.0, 1.0)
    width: tuple[float, float] = (1e-3, 2.0)
    consequent: tuple[float, float] = (-3.0, 3.0)
    alpha: tuple[float, float] = (0.1, 10.0)
    width_clamp: tuple[float, float] = (1e-3, 10.0)

    def range_for(self, role: str) -> tuple[float, float]:
        return {"center": self.center, "width": self.width,
                "consequent": self.consequent, "alpha": self.alpha}[role]

    def clamp_width(self, v: float) -> float:
        # widths act through their square, so the magnitude carries the meaning
        return float(min(max(abs(v), self.width_clamp[0]), self.width_clamp[1]))

    def clamp_alpha(self, v: float) -> float:
        return float(min(max(abs(v), self.alpha[0]), self.alpha[1]))


DEFAULT_BOXES = PolicyBoxes()


# ---------------------------------------------------------------------------
# fixed-structure encoding: per action, per rule [centers.. widths.. consequent],
# then the action's alpha; actions concatenated in order


@dataclass(frozen=True)
class FpsrlStructure:
    """Shared rule shape for swarm-tuned policies.

    `features[a]` lists the state indices every rule of action `a` reads, in
    clause order; `n_rules[a]` is that action's rule count.
    """

    features: tuple[tuple[int, ...], ...]
    n_rules: tuple[int, ...]

    def __post_init__(self):
        if len(self.features) != len(self.n_rules):
            raise StructureError("features and n_rules must align per action")
        for feats in self.features:
            if len(set(feats)) != len(feats):
                raise StructureError(f"repeated feature index in {feats}")
        for c in self.n_rules:
            if c < 1:
                raise StructureError("need at least one rule per action")

    @property
    def n_actions(self) -> int:
        return len(self.n_rules)

    def action_vector_length(self, a: int) -> int:
        return (2 * len(self.features[a]) + 1) * self.n_rules[a] + 1

    @property
    def vector_length(self) -> int:
        return sum(self.action_vector_length(a) for a in range(self.n_actions))

    @property
    def complexity(self) -> int:
        return sum(1 + self.n_rules[a] * (11 + 5 * len(self.features[a]))
                   for a in range(self.n_actions))

    def roles(self) -> list[str]:
        """Role of each vector slot, for box construction."""
        out: list[str] = []
        for a in range(self.n_actions):
            d = len(self.features[a])
            for _ in range(self.n_rules[a]):
                out.extend(["center"] * d)
                out.extend(["width"] * d)
                out.append("consequent")
            out.append("alpha")
        return out

    def search_box(self, boxes: PolicyBoxes = DEFAULT_BOXES) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = [], []
        for role in self.roles():
            a, b = boxes.range_for(role)
            lo.append(a)
            hi.append(b)
        return np.array(lo), np.array(hi)


@dataclass(frozen=True)
class ParameterVector:
    values: tuple[float, ...]
    structure: FpsrlStructure

    def __post_init__(self):
        want = self.structure.vector_length
        if len(self.values) != want:
            raise StructureError(
                f"vector length {len(self.values)} != {want} required by structure")


def encode(policy: FuzzyPolicy) -> ParameterVector:
    """Flatten a fixed-structure policy into its parameter vector.

    Every rule of an action must read the same state indices in the same
    order; policies produced by `decode` always satisfy this.
    """
    features = []
    n_rules = []
    values: list[float] = []
    for a, rules in enumerate(policy.rule_sets):
        idx = tuple(c.state_index for c in rules[0].clauses)
        for rule in rules:
            got = tuple(c.state_index for c in rule.clauses)
            if got != idx:
                raise StructureError(
                    f"action {a}: rule reads {got}, expected shared layout {idx}")
            values.extend(c.center for c in rule.clauses)
            values.extend(c.sigma for c in rule.clauses)
            values.append(rule.consequent)
        values.append(policy.alphas[a])
        features.append(idx)
        n_rules.append(len(rules))
    structure = FpsrlStructure(tuple(features), tuple(n_rules))
    return ParameterVector(tuple(values), structure)


def decode(values: Sequence[float], structure: FpsrlStructure,
           action_low: Sequence[float], action_high: Sequence[float],
           boxes: PolicyBoxes = DEFAULT_BOXES) -> FuzzyPolicy:
    """Rebuild a policy from a flat vector; widths and alpha are clamped."""
    values = np.asarray(values, dtype=float)
    if values.shape != (structure.vector_length,):
        raise StructureError(
            f"vector length {values.shape} != ({structure.vector_length},)")
    rule_sets = []
    alphas = []
    off = 0
    for a in range(structure.n_actions):
        idx = structure.features[a]
        d = len(idx)
        rules = []
        for _ in range(structure.n_rules[a]):
            centers = values[off:off + d]
            widths = values[off + d:off + 2 * d]
            consequent = float(values[off + 2 * d])
            off += 2 * d + 1
            clauses = tuple(
                MembershipClause(idx[j], float(centers[j]), boxes.clamp_width(widths[j]))
                for j in range(d))
            rules.append(FuzzyRule(clauses, consequent))
        alphas.append(boxes.clamp_alpha(values[off]))
        off += 1
        rule_sets.append(tuple(rules))
    return FuzzyPolicy(tuple(rule_sets), tuple(alphas),
                       tuple(float(v) for v in action_low),
                       tuple(float(v) for v in action_high))


# ---------------------------------------------------------------------------
# JSON serialization (round-trips exactly for finite doubles)


def policy_to_json(policy: FuzzyPolicy, meta: dict | None = None) -> dict:
    actions = []
    for a, rules in enumerate(policy.rule_sets):
        actions.append({
            "alpha": policy.alphas[a],
            "bounds": [policy.action_low[a], policy.action_high[a]],
            "rules": [
                {"clauses": [{"state_index": c.state_index,
                              "center": c.center,
                              "sigma": c.sigma} for c in rule.clauses],
                 "consequent": rule.consequent}
                for rule in rules],
        })
    doc = {"format": "fuzzy-policy-v1", "actions": actions,
           "meta": {"complexity": complexity_of_policy(policy)}}
    if meta:
        doc["meta"].update(meta)
    return doc


def policy_from_json(doc: dict) -> FuzzyPolicy:
    if doc.get("format") != "fuzzy-policy-v1":
        raise StructureError(f"unrecognized policy document: {doc.get('format')!r}")
    rule_sets = []
    alphas = []
    lo = []
    hi = []
    for action in doc["actions"]:
        rules = tuple(
            FuzzyRule(tuple(MembershipClause(c["state_index"], c["center"], c["sigma"])
                            for c in rule["clauses"]),
                      rule["consequent"])
            for rule in action["rules"])
        rule_sets.append(rules)
        alphas.append(action["alpha"])
        lo.append(action["bounds"][0])
        hi.append(action["bounds"][1])
    return FuzzyPolicy(tuple(rule_sets), tuple(alphas), tuple(lo), tuple(hi))


# ---------------------------------------------------------------------------
# vectorized evaluation of many policies at once


@dataclass
class PolicyBatch:
    """Padded array form of a set of policies for batched rollouts.

    Shapes: B policies, A action dims, C rule slots, L clause slots.  Padded
    clauses carry zero inverse-width so they add nothing to the exponent;
    padded rules are excluded through `rule_mask`.
    """

    idx: np.ndarray            # (B, A, C, L) intp
    centers: np.ndarray        # (B, A, C, L)
    inv_two_sigma_sq: np.ndarray  # (B, A, C, L)
    rule_mask: np.ndarray      # (B, A, C) bool
    consequents: np.ndarray    # (B, A, C)
    alphas: np.ndarray         # (B, A)
    action_low: np.ndarray     # (A,)
    action_high: np.ndarray    # (A,)
    _flat_idx: np.ndarray = field(init=False, repr=False)
    _pad_inf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        b = self.idx.shape[0]
        self._flat_idx = self.idx.reshape(b, 1, -1)
        # additive exponent mask: padded rule slots get +inf, so they drop out
        # of both the min-shift and (via exp(-inf) = 0) the weighted sums
        self._pad_inf = np.where(self.rule_mask, 0.0, np.inf)[:, None]

    @property
    def size(self) -> int:
        return self.idx.shape[0]

    @classmethod
    def compile(cls, policies: Sequence[FuzzyPolicy], state_dim: int) -> "PolicyBatch":
        b = len(policies)
        if b == 0:
            raise StructureError("cannot compile an empty policy batch")
        n_actions = policies[0].n_actions
        lo = policies[0].action_low
        hi = policies[0].action_high
        for p in policies:
            if p.n_actions != n_actions or p.action_low != lo or p.action_high != hi:
                raise StructureError("batched policies must share action space")
            if p.max_state_index() >= state_dim:
                raise StructureError(
                    f"policy reads state index {p.max_state_index()}, state_dim={state_dim}")
        c_max = max(len(rules) for p in policies for rules in p.rule_sets)
        l_max = max((len(r.clauses) for p in policies for rules in p.rule_sets for r in rules),
                    default=0)
        l_max = max(l_max, 1)  # keep the gather axis nonempty
        idx = np.zeros((b, n_actions, c_max, l_max), dtype=np.intp)
        centers = np.zeros((b, n_actions, c_max, l_max))
        inv2s2 = np.zeros((b, n_actions, c_max, l_max))
        mask = np.zeros((b, n_actions, c_max), dtype=bool)
        cons = np.zeros((b, n_actions, c_max))
        alphas = np.zeros((b, n_actions))
        for i, p in enumerate(policies):
            for a, rules in enumerate(p.rule_sets):
                alphas[i, a] = p.alphas[a]
                for r, rule in enumerate(rules):
                    mask[i, a, r] = True
                    cons[i, a, r] = rule.consequent
                    for l, clause in enumerate(rule.clauses):
                        idx[i, a, r, l] = clause.state_index
                        centers[i, a, r, l] = clause.center
                        inv2s2[i, a, r, l] = 1.0 / (2.0 * clause.sigma * clause.sigma)
        return cls(idx, centers, inv2s2, mask, cons, alphas,
                   np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))

    @classmethod
    def from_param_matrix(cls, x: np.ndarray, structure: FpsrlStructure,
                          action_low: Sequence[float], action_high: Sequence[float],
                          boxes: PolicyBoxes = DEFAULT_BOXES) -> "PolicyBatch":
        """Decode a (B, vector_length) swarm position matrix without building
        per-policy objects; layout matches `decode` exactly."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != structure.vector_length:
            raise StructureError(
                f"param matrix shape {x.shape} incompatible with length "
                f"{structure.vector_length}")
        b = x.shape[0]
        n_actions = structure.n_actions
        c_max = max(structure.n_rules)
        l_max = max(1, max(len(f) for f in structure.features))
        idx = np.zeros((b, n_actions, c_max, l_max), dtype=np.intp)
        centers = np.zeros((b, n_actions, c_max, l_max))
        inv2s2 = np.zeros((b, n_actions, c_max, l_max))
        mask = np.zeros((b, n_actions, c_max), dtype=bool)
        cons = np.zeros((b, n_actions, c_max))
        alphas = np.zeros((b, n_actions))
        off = 0
        w_lo, w_hi = boxes.width_clamp
        a_lo, a_hi = boxes.alpha
        for a in range(n_actions):
            feats = structure.features[a]
            d = len(feats)
            c = structure.n_rules[a]
            block = x[:, off:off + (2 * d + 1) * c].reshape(b, c, 2 * d + 1)
            off += (2 * d + 1) * c
            if d:
                idx[:, a, :c, :d] = np.asarray(feats, dtype=np.intp)
                centers[:, a, :c, :d] = block[:, :, :d]
                widths = np.clip(np.abs(block[:, :, d:2 * d]), w_lo, w_hi)
                inv2s2[:, a, :c, :d] = 1.0 / (2.0 * widths * widths)
            cons[:, a, :c] = block[:, :, 2 * d]
            mask[:, a, :c] = True
            alphas[:, a] = np.clip(np.abs(x[:, off]), a_lo, a_hi)
            off += 1
        return cls(idx, centers, inv2s2, mask, cons, alphas,
                   np.asarray(action_low, dtype=float), np.asarray(action_high, dtype=float))

    def act(self, states: np.ndarray) -> np.ndarray:
        """Actions for states of shape (B, S, state_dim) -> (B, S, A).

        States must already be in the policies' (normalized) input units.
        In-place arithmetic on the (B, S, A, C, L) workspace keeps the hot
        rollout path allocation-lean.
        """
        b, s, _ = states.shape
        a, c, l = self.idx.shape[1:]
        feats = np.take_along_axis(states, self._flat_idx, axis=2)
        work = feats.reshape(b, s, a, c, l)
        work -= self.centers[:, None]
        work *= work
        work *= self.inv_two_sigma_sq[:, None]
        z = work.sum(axis=4)
        z += self._pad_inf
        zmin = z.min(axis=3, keepdims=True)
        np.subtract(zmin, z, out=z)
        act = np.exp(z, out=z)
        num = (act * self.consequents[:, None]).sum(axis=3)
        den = act.sum(axis=3)
        u = np.tanh(self.alphas[:, None] * num / den)
        return self.action_low + 0.5 * (u + 1.0) * (self.action_high - self.action_low)
