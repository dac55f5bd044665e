"""Benchmark environments: deterministic transition + reward generators.

The cart-pole swing-up task: a pole hinged to a cart on an unbounded track,
four state variables (pole angle, angular velocity, cart position, cart
velocity), one bounded force action.  Reward is 0 inside the goal region
(successor |angle| < 0.5 rad and |position| < 0.5 m) and -1 outside, so the
pole must be swung through and stabilized from arbitrary initial angles.

`DistractorEnvironment` appends irrelevant and redundant channels to any
base environment for exercising feature selection; all extra channels evolve
deterministically so the step contract stays a pure function of (s, a).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .util import rng_for


class DomainError(ValueError):
    """Raised for states outside an environment's domain (e.g. non-finite)."""


class Environment:
    """Deterministic environment contract.

    Subclasses provide `step_many`; the scalar `step` is a one-row batch so
    both paths share the same arithmetic.
    """

    name: str = "base"
    state_dim: int = 0
    action_dim: int = 0
    action_low: np.ndarray
    action_high: np.ndarray
    reward_range: tuple[float, float] = (-1.0, 0.0)

    def step(self, s: np.ndarray, a) -> tuple[np.ndarray, float]:
        s = np.asarray(s, dtype=float)
        a = np.atleast_1d(np.asarray(a, dtype=float))
        ns, r = self.step_many(s[None, :], a[None, :])
        return ns[0], float(r[0])

    def step_many(self, s: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def sample_initial(self, region: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Uniform sample from a per-dimension [lo, hi] box over the base state."""
        region = np.asarray(region, dtype=float)
        return rng.uniform(region[:, 0], region[:, 1])

    def describe(self) -> dict:
        return {"name": self.name, "state_dim": self.state_dim,
                "action_dim": self.action_dim,
                "action_low": self.action_low.tolist(),
                "action_high": self.action_high.tolist()}


@dataclass(frozen=True)
class CartPoleParams:
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_half_length: float = 0.5
    gravity: float = 9.8
    dt: float = 0.02
    force_limit: float = 30.0


class CartPoleSwingUp(Environment):
    """Frictionless cart-pole swing-up, angle measured from upright.

    One RK4 step per control interval; the angle is wrapped to [-pi, pi]
    after each step so the pole can swing through.  There are no track or
    angle limits and no terminal states.
    """

    name = "cartpole"
    state_dim = 4
    action_dim = 1

    # initial-state boxes: datasets start from rest at a random angle;
    # training/test rollouts also randomize the cart position
    data_region = np.array([[-np.pi, np.pi], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
    start_region = np.array([[-np.pi, np.pi], [0.0, 0.0], [-0.5, 0.5], [0.0, 0.0]])
    goal_angle = 0.5
    goal_position = 0.5

    def __init__(self, params: CartPoleParams = CartPoleParams()):
        self.params = params
        self.action_low = np.array([-params.force_limit])
        self.action_high = np.array([params.force_limit])

    def _derivatives(self, th, om, v, force):
        p = self.params
        total = p.cart_mass + p.pole_mass
        sin_th = np.sin(th)
        cos_th = np.cos(th)
        tmp = (force + p.pole_mass * p.pole_half_length * om * om * sin_th) / total
        dom = (p.gravity * sin_th - cos_th * tmp) / (
            p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos_th * cos_th / total))
        dv = tmp - p.pole_mass * p.pole_half_length * dom * cos_th / total
        return om, dom, v, dv

    def step_many(self, s: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=float)
        a = np.asarray(a, dtype=float)
        if not np.isfinite(s).all():
            raise DomainError("non-finite cart-pole state")
        force = np.clip(a[..., 0], self.action_low[0], self.action_high[0])
        dt = self.params.dt
        th, om, rho, v = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
        k1 = self._derivatives(th, om, v, force)
        k2 = self._derivatives(th + 0.5 * dt * k1[0], om + 0.5 * dt * k1[1],
                               v + 0.5 * dt * k1[3], force)
        k3 = self._derivatives(th + 0.5 * dt * k2[0], om + 0.5 * dt * k2[1],
                               v + 0.5 * dt * k2[3], force)
        k4 = self._derivatives(th + dt * k3[0], om + dt * k3[1], v + dt * k3[3], force)
        ns = np.empty_like(s)
        c = dt / 6.0
        ns[..., 0] = th + c * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        ns[..., 1] = om + c * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        ns[..., 2] = rho + c * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        ns[..., 3] = v + c * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        ns[..., 0] = (ns[..., 0] + np.pi) % (2.0 * np.pi) - np.pi
        reward = self.reward_many(ns)
        return ns, reward

    def reward_many(self, ns: np.ndarray) -> np.ndarray:
        """Goal-region indicator on the successor state: 0 inside, -1 outside."""
        inside = (np.abs(ns[..., 0]) < self.goal_angle) & \
                 (np.abs(ns[..., 2]) < self.goal_position)
        return inside.astype(float) - 1.0

    def mechanical_energy(self, s: np.ndarray) -> float:
        """Kinetic + potential energy, zero at rest hanging straight down."""
        p = self.params
        th, om, _, v = (float(x) for x in np.asarray(s, dtype=float))
        total = p.cart_mass + p.pole_mass
        ml = p.pole_mass * p.pole_half_length
        kinetic = (0.5 * total * v * v + ml * om * v * np.cos(th)
                   + (2.0 / 3.0) * ml * p.pole_half_length * om * om)
        potential = ml * p.gravity * (1.0 + np.cos(th))
        return float(kinetic + potential)


@dataclass
class DistractorSpec:
    """Fixed parameters of one appended channel (drawn once at wrap time)."""

    kind: str                    # "irrelevant" | "redundant"
    source: int = -1             # copied base feature, for redundant channels
    order: int = 3               # Chebyshev order driving irrelevant channels
    scale: float = 1.0
    offset: float = 0.0
    dither_amp: float = 0.0
    dither_freq: float = 0.0
    dither_phase: float = 0.0


class DistractorEnvironment(Environment):
    """Base environment plus deterministic nuisance state channels.

    Irrelevant channels evolve by a chaotic Chebyshev recurrence on [-1, 1]:
    bounded, noise-like, and independent of the task.  Redundant channels are
    noisy affine copies of a base feature, with a deterministic
    high-frequency dither standing in for observation noise so that
    `step` remains a pure function of (state, action).  The channel layout
    is recorded as ground truth for feature-selection tests.
    """

    def __init__(self, base: Environment, n_irrelevant: int, n_redundant: int, seed: int = 0):
        if n_irrelevant < 0 or n_redundant < 0:
            raise ValueError("distractor counts must be >= 0")
        self.base = base
        self.name = f"{base.name}+distractors"
        self.state_dim = base.state_dim + n_irrelevant + n_redundant
        self.action_dim = base.action_dim
        self.action_low = base.action_low
        self.action_high = base.action_high
        self.reward_range = base.reward_range
        self.true_indices = tuple(range(base.state_dim))
        self.irrelevant_indices = tuple(range(base.state_dim, base.state_dim + n_irrelevant))
        self.redundant_indices = tuple(range(base.state_dim + n_irrelevant, self.state_dim))
        # initial-state regions describe the base state; extra channels are
        # initialized by sample_initial itself
        for attr in ("data_region", "start_region"):
            if hasattr(base, attr):
                setattr(self, attr, getattr(base, attr))
        rng = rng_for(seed, "distractors")
        self.specs: list[DistractorSpec] = []
        for i in range(n_irrelevant):
            self.specs.append(DistractorSpec(kind="irrelevant", order=3 + 2 * (i % 5)))
        for _ in range(n_redundant):
            self.specs.append(DistractorSpec(
                kind="redundant",
                source=int(rng.integers(base.state_dim)),
                scale=float(rng.uniform(0.6, 1.4) * rng.choice([-1.0, 1.0])),
                offset=float(rng.uniform(-0.3, 0.3)),
                dither_amp=0.0,  # set below from scale
                dither_freq=float(rng.uniform(5.0, 15.0)),
                dither_phase=float(rng.uniform(0.0, 2.0 * np.pi)),
            ))
        for spec in self.specs:
            if spec.kind == "redundant":
                spec.dither_amp = 0.1 * abs(spec.scale)
        # channel parameters as arrays so stepping stays vectorized
        self._irr = np.array([i for i, s in enumerate(self.specs) if s.kind == "irrelevant"],
                             dtype=np.intp)
        self._red = np.array([i for i, s in enumerate(self.specs) if s.kind == "redundant"],
                             dtype=np.intp)
        self._orders = np.array([self.specs[i].order for i in self._irr], dtype=float)
        self._src = np.array([self.specs[i].source for i in self._red], dtype=np.intp)
        self._scale = np.array([self.specs[i].scale for i in self._red])
        self._offset = np.array([self.specs[i].offset for i in self._red])
        self._amp = np.array([self.specs[i].dither_amp for i in self._red])
        self._freq = np.array([self.specs[i].dither_freq for i in self._red])
        self._phase = np.array([self.specs[i].dither_phase for i in self._red])

    @property
    def redundant_source(self) -> dict[int, int]:
        out = {}
        for idx, spec in zip(self.irrelevant_indices + self.redundant_indices, self.specs):
            if spec.kind == "redundant":
                out[idx] = spec.source
        return out

    def _extra_from_true(self, extra_prev: np.ndarray, true_next: np.ndarray) -> np.ndarray:
        out = np.empty(extra_prev.shape)
        if len(self._irr):
            x = np.clip(extra_prev[..., self._irr], -1.0, 1.0)
            out[..., self._irr] = np.cos(self._orders * np.arccos(x))
        if len(self._red):
            src = true_next[..., self._src]
            out[..., self._red] = (self._scale * src + self._offset
                                   + self._amp * np.sin(self._freq * src + self._phase))
        return out

    def step_many(self, s: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=float)
        nb = self.base.state_dim
        true_next, reward = self.base.step_many(s[..., :nb], a)
        extra = self._extra_from_true(s[..., nb:], true_next)
        return np.concatenate([true_next, extra], axis=-1), reward

    def sample_initial(self, region: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        true0 = self.base.sample_initial(region, rng)
        n_extra = len(self.specs)
        extra = rng.uniform(-1.0, 1.0, n_extra)
        # redundant channels start consistent with the sampled base state
        full = self._extra_from_true(extra, true0)
        for j, spec in enumerate(self.specs):
            if spec.kind == "irrelevant":
                full[j] = extra[j]
        return np.concatenate([true0, full])


def with_distractors(env: Environment, n_irrelevant: int, n_redundant: int,
                     seed: int = 0) -> Environment:
    """Wrap `env` with nuisance channels; (0, 0) returns the base unchanged."""
    if n_irrelevant == 0 and n_redundant == 0:
        return env
    return DistractorEnvironment(env, n_irrelevant, n_redundant, seed)


def make_env(spec: dict) -> Environment:
    """Build an environment from its config-file description."""
    name = spec.get("name", "cartpole")
    if name != "cartpole":
        raise ValueError(f"unknown environment {name!r}")
    env: Environment = CartPoleSwingUp()
    distractors = spec.get("distractors")
    if distractors:
        env = with_distractors(env,
                               int(distractors.get("n_irrelevant", 0)),
                               int(distractors.get("n_redundant", 0)),
                               int(distractors.get("seed", 0)))
    return env
