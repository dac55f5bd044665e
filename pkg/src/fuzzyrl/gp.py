"""Strongly-typed tree genomes for fuzzy policies.

A genome is one policy root per action dimension.  Each policy node owns a
chain of rule nodes (terminated by a rule-end) and a slope constant; each
rule owns a chain of dimension nodes (terminated by a dimension-end), a
consequent constant, and the next link of its rule chain.  A dimension node
bundles a state-variable leaf with center and width constants.

Five node types exist for crossover compatibility: policy, rule, dimension,
variable, and float.  Rule/dimension terminators share their chain's type,
which is what lets crossover grow and shrink chains while every offspring
stays well-formed.  Structural complexity is a weighted node count:
chain terminators and policy roots are free, variables and floats cost 1,
dimension nodes 2, rule nodes 10.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .fuzzy import (DEFAULT_BOXES, FuzzyPolicy, FuzzyRule, MembershipClause,
                    PolicyBoxes)

POLICY, RULE, RULE_END, DIM, DIM_END, VAR, CONST = (
    "policy", "rule", "rule_end", "dim", "dim_end", "var", "const")

# node kind -> crossover type tag
TYPE_OF = {POLICY: "policy", RULE: "rule", RULE_END: "rule",
           DIM: "dim", DIM_END: "dim", VAR: "var", CONST: "float"}

# node kind -> complexity weight
COMPLEXITY_WEIGHT = {POLICY: 0, RULE_END: 0, DIM_END: 0, VAR: 1, CONST: 1,
                     DIM: 2, RULE: 10}

# node kind -> required child type tags, in slot order
SLOT_TYPES = {POLICY: ("rule", "float"),
              RULE: ("dim", "float", "rule"),
              DIM: ("var", "float", "float", "dim"),
              RULE_END: (), DIM_END: (), VAR: (), CONST: ()}

# (parent kind, slot) -> role of a float child, for value ranges
FLOAT_ROLE = {(POLICY, 1): "alpha", (RULE, 1): "consequent",
              (DIM, 1): "center", (DIM, 2): "width"}


class TypeViolation(ValueError):
    """A tree failed the strong-typing check."""


@dataclass
class Node:
    kind: str
    children: list = field(default_factory=list)
    value: float | int | None = None

    def copy(self) -> "Node":
        return Node(self.kind, [c.copy() for c in self.children], self.value)


def _const(v: float) -> Node:
    return Node(CONST, value=float(v))


@dataclass
class PolicyTree:
    """Forest genome: one policy root per action dimension, plus bounds.

    Trees are treated as immutable once built; every operator returns a new
    tree.  `fitness` is an engine-managed cache.
    """

    roots: list[Node]
    action_low: tuple[float, ...]
    action_high: tuple[float, ...]
    fitness: float | None = None
    _complexity: int | None = field(default=None, repr=False, compare=False)

    def copy(self, keep_fitness: bool = False) -> "PolicyTree":
        return PolicyTree([r.copy() for r in self.roots], self.action_low,
                          self.action_high,
                          self.fitness if keep_fitness else None,
                          self._complexity)

    @property
    def n_actions(self) -> int:
        return len(self.roots)

    @property
    def complexity(self) -> int:
        if self._complexity is None:
            total = 0
            for _, _, node in iter_nodes(self):
                total += COMPLEXITY_WEIGHT[node.kind]
            self._complexity = total
        return self._complexity


def iter_nodes(tree: PolicyTree) -> Iterator[tuple[Node | None, int, Node]]:
    """Preorder (parent, slot, node) triples; roots get parent None."""
    stack = [(None, i, root) for i, root in reversed(list(enumerate(tree.roots)))]
    while stack:
        parent, slot, node = stack.pop()
        yield parent, slot, node
        for i in reversed(range(len(node.children))):
            stack.append((node, i, node.children[i]))


def validate_tree(tree: PolicyTree, state_dim: int) -> None:
    """Raise TypeViolation unless the tree satisfies the grammar."""
    if len(tree.roots) < 1:
        raise TypeViolation("tree needs at least one policy root")
    for parent, slot, node in iter_nodes(tree):
        if node.kind not in SLOT_TYPES:
            raise TypeViolation(f"unknown node kind {node.kind!r}")
        if parent is None:
            if node.kind != POLICY:
                raise TypeViolation(f"root must be a policy node, got {node.kind}")
        else:
            want = SLOT_TYPES[parent.kind][slot]
            if TYPE_OF[node.kind] != want:
                raise TypeViolation(
                    f"{parent.kind} slot {slot} wants type {want}, got {node.kind}")
        if len(node.children) != len(SLOT_TYPES[node.kind]):
            raise TypeViolation(f"{node.kind} has {len(node.children)} children, "
                                f"wants {len(SLOT_TYPES[node.kind])}")
        if node.kind == VAR:
            if not isinstance(node.value, (int, np.integer)) or not (0 <= node.value < state_dim):
                raise TypeViolation(f"variable index {node.value!r} out of range")
        if node.kind == CONST:
            if node.value is None or not np.isfinite(node.value):
                raise TypeViolation(f"non-finite constant {node.value!r}")


def duplicate_variable_rules(tree: PolicyTree) -> int:
    """Number of rules whose clause chain reads some state variable twice."""
    count = 0
    for _, _, node in iter_nodes(tree):
        if node.kind == RULE:
            seen = set()
            link = node.children[0]
            dup = False
            while link.kind == DIM:
                v = link.children[0].value
                if v in seen:
                    dup = True
                seen.add(v)
                link = link.children[3]
            count += dup
    return count


# ---------------------------------------------------------------------------
# generation


def random_tree(rng: np.random.Generator, state_dim: int,
                action_low: Sequence[float], action_high: Sequence[float],
                max_rules: int = 4, max_dims: int | None = None,
                boxes: PolicyBoxes = DEFAULT_BOXES) -> PolicyTree:
    """Well-typed random genome within the given size limits.

    Rule counts are uniform on 1..max_rules and clause counts uniform on
    0..max_dims per rule; clause variables are drawn without replacement, so
    fresh trees never need duplicate correction.  Constants come from the
    same value boxes the swarm searches.
    """
    if max_rules < 1:
        raise ValueError("max_rules must be >= 1")
    limit = state_dim if max_dims is None else min(max_dims, state_dim)
    roots = []
    for _ in range(len(action_low)):
        n_rules = int(rng.integers(1, max_rules + 1))
        rule_chain = Node(RULE_END)
        for _ in range(n_rules):
            n_dims = int(rng.integers(0, limit + 1))
            indices = rng.choice(state_dim, size=n_dims, replace=False)
            dim_chain = Node(DIM_END)
            for idx in reversed(indices):
                dim_chain = Node(DIM, [Node(VAR, value=int(idx)),
                                       _const(rng.uniform(*boxes.center)),
                                       _const(rng.uniform(*boxes.width)),
                                       dim_chain])
            rule_chain = Node(RULE, [dim_chain,
                                     _const(rng.uniform(*boxes.consequent)),
                                     rule_chain])
        roots.append(Node(POLICY, [rule_chain, _const(rng.uniform(*boxes.alpha))]))
    return PolicyTree(roots, tuple(float(v) for v in action_low),
                      tuple(float(v) for v in action_high))


# ---------------------------------------------------------------------------
# variation operators


def crossover(parent_a: PolicyTree, parent_b: PolicyTree,
              rng: np.random.Generator) -> tuple[PolicyTree, PolicyTree]:
    """Swap two uniformly chosen subtrees of equal type.

    Falls back to plain reproduction when the second parent has no node of
    the chosen type (only possible for variable leaves).
    """
    child_a = parent_a.copy()
    child_b = parent_b.copy()
    nodes_a = list(iter_nodes(child_a))
    pa, sa, sub_a = nodes_a[int(rng.integers(len(nodes_a)))]
    want = TYPE_OF[sub_a.kind]
    candidates = [(p, s, n) for p, s, n in iter_nodes(child_b) if TYPE_OF[n.kind] == want]
    if not candidates:
        return parent_a.copy(keep_fitness=True), parent_b.copy(keep_fitness=True)
    pb, sb, sub_b = candidates[int(rng.integers(len(candidates)))]
    if pa is None:
        child_a.roots[sa] = sub_b
    else:
        pa.children[sa] = sub_b
    if pb is None:
        child_b.roots[sb] = sub_a
    else:
        pb.children[sb] = sub_a
    child_a._complexity = None
    child_b._complexity = None
    return child_a, child_b


def gaussian_mutate(tree: PolicyTree, rng: np.random.Generator,
                    relative_sigma: float = 0.1, sigma_floor: float = 1e-3) -> PolicyTree:
    """Resample every float terminal around its current value.

    Each value z is replaced by a draw from Normal(z, relative_sigma * |z|),
    with the deviation floored so zero-valued terminals still move.  The
    genotype structure is untouched.
    """
    out = tree.copy()
    for _, _, node in iter_nodes(out):
        if node.kind == CONST:
            sd = max(relative_sigma * abs(node.value), sigma_floor)
            node.value = float(rng.normal(node.value, sd))
    return out


def tree_correction(tree: PolicyTree) -> PolicyTree:
    """Drop repeat reads of a state variable within each rule.

    Only the first (leftmost) clause on a variable survives; later clauses on
    the same variable are spliced out of the chain, leaving the remaining
    clauses' structure untouched.  Idempotent.
    """
    out = tree.copy(keep_fitness=True)
    rules = [node for _, _, node in iter_nodes(out) if node.kind == RULE]
    for rule in rules:
        seen = set()
        holder, slot = rule, 0  # holder.children[slot] is the current chain link
        link = holder.children[slot]
        while link.kind == DIM:
            v = link.children[0].value
            if v in seen:
                holder.children[slot] = link.children[3]
            else:
                seen.add(v)
                holder, slot = link, 3
            link = holder.children[slot]
    out._complexity = None
    return out


# ---------------------------------------------------------------------------
# conversion and direct interpretation


def to_policy(tree: PolicyTree, boxes: PolicyBoxes = DEFAULT_BOXES) -> FuzzyPolicy:
    """Flatten chains into a FuzzyPolicy; widths and slopes are clamped.

    A rule chain that terminates immediately becomes one empty rule with
    consequent 0, which evaluates to the identical neutral output.
    """
    rule_sets = []
    alphas = []
    for root in tree.roots:
        rules = []
        link = root.children[0]
        while link.kind == RULE:
            clauses = []
            dim = link.children[0]
            while dim.kind == DIM:
                clauses.append(MembershipClause(int(dim.children[0].value),
                                                float(dim.children[1].value),
                                                boxes.clamp_width(dim.children[2].value)))
                dim = dim.children[3]
            rules.append(FuzzyRule(tuple(clauses), float(link.children[1].value)))
            link = link.children[2]
        if not rules:
            rules = [FuzzyRule((), 0.0)]
        rule_sets.append(tuple(rules))
        alphas.append(boxes.clamp_alpha(root.children[1].value))
    return FuzzyPolicy(tuple(rule_sets), tuple(alphas), tree.action_low, tree.action_high)


def from_policy(policy: FuzzyPolicy) -> PolicyTree:
    """Inverse of `to_policy` for already-flat policies."""
    roots = []
    for a, rules in enumerate(policy.rule_sets):
        rule_chain = Node(RULE_END)
        for rule in reversed(rules):
            dim_chain = Node(DIM_END)
            for clause in reversed(rule.clauses):
                dim_chain = Node(DIM, [Node(VAR, value=clause.state_index),
                                       _const(clause.center), _const(clause.sigma),
                                       dim_chain])
            rule_chain = Node(RULE, [dim_chain, _const(rule.consequent), rule_chain])
        roots.append(Node(POLICY, [rule_chain, _const(policy.alphas[a])]))
    return PolicyTree(roots, policy.action_low, policy.action_high)


def interpret_tree(tree: PolicyTree, s: np.ndarray,
                   boxes: PolicyBoxes = DEFAULT_BOXES) -> np.ndarray:
    """Evaluate the genome by walking its chains directly.

    Reference route for conversion-consistency checks; applies the same
    width/slope clamping conventions as `to_policy`.
    """
    import math
    s = np.asarray(s, dtype=float)
    out = np.empty(len(tree.roots))
    for a, root in enumerate(tree.roots):
        exponents = []
        consequents = []
        link = root.children[0]
        while link.kind == RULE:
            z = 0.0
            dim = link.children[0]
            while dim.kind == DIM:
                width = boxes.clamp_width(dim.children[2].value)
                d = float(dim.children[1].value) - float(s[int(dim.children[0].value)])
                z += (d * d) / (2.0 * width * width)
                dim = dim.children[3]
            exponents.append(z)
            consequents.append(float(link.children[1].value))
            link = link.children[2]
        if not exponents:
            exponents, consequents = [0.0], [0.0]
        zmin = min(exponents)
        num = 0.0
        den = 0.0
        for z, o in zip(exponents, consequents):
            w = math.exp(zmin - z)
            num += w * o
            den += w
        alpha = boxes.clamp_alpha(root.children[1].value)
        u = math.tanh(alpha * num / den)
        lo, hi = tree.action_low[a], tree.action_high[a]
        out[a] = lo + 0.5 * (u + 1.0) * (hi - lo)
    return out


# ---------------------------------------------------------------------------
# terminals, fingerprints, serialization


def iter_terminals(tree: PolicyTree) -> Iterator[tuple[Node, str]]:
    """Float terminals with their roles, in deterministic preorder."""
    for parent, slot, node in iter_nodes(tree):
        if node.kind == CONST:
            yield node, FLOAT_ROLE[(parent.kind, slot)]


def terminal_values(tree: PolicyTree) -> tuple[np.ndarray, list[str]]:
    nodes_roles = list(iter_terminals(tree))
    values = np.array([n.value for n, _ in nodes_roles], dtype=float)
    roles = [r for _, r in nodes_roles]
    return values, roles


def substitute_terminals(tree: PolicyTree, values: Sequence[float]) -> PolicyTree:
    """New tree with float terminals replaced in preorder."""
    out = tree.copy()
    nodes = [n for n, _ in iter_terminals(out)]
    if len(nodes) != len(values):
        raise ValueError(f"expected {len(nodes)} terminal values, got {len(values)}")
    for node, v in zip(nodes, values):
        node.value = float(v)
    return out


def structure_key(tree: PolicyTree) -> tuple:
    """Genotype fingerprint that ignores float terminal values."""
    parts = []
    for _, _, node in iter_nodes(tree):
        if node.kind == VAR:
            parts.append((VAR, int(node.value)))
        elif node.kind == CONST:
            parts.append((CONST,))
        else:
            parts.append((node.kind,))
    return tuple(parts)


def _node_to_json(node: Node) -> dict:
    doc: dict = {"kind": node.kind}
    if node.value is not None:
        doc["value"] = node.value
    if node.children:
        doc["children"] = [_node_to_json(c) for c in node.children]
    return doc


def _node_from_json(doc: dict) -> Node:
    return Node(doc["kind"], [_node_from_json(c) for c in doc.get("children", [])],
                doc.get("value"))


def tree_to_json(tree: PolicyTree) -> dict:
    return {"format": "policy-tree-v1",
            "roots": [_node_to_json(r) for r in tree.roots],
            "action_low": list(tree.action_low),
            "action_high": list(tree.action_high)}


def tree_from_json(doc: dict) -> PolicyTree:
    if doc.get("format") != "policy-tree-v1":
        raise ValueError(f"unrecognized tree document {doc.get('format')!r}")
    return PolicyTree([_node_from_json(r) for r in doc["roots"]],
                      tuple(doc["action_low"]), tuple(doc["action_high"]))
