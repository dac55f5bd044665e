"""Batch transition datasets: generation, JSON-lines persistence, scaling."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .envs import Environment
from .util import rng_for


@dataclass
class TransitionDataset:
    """Flat batch of (s, a, s_next, r) tuples with trajectory bookkeeping."""

    states: np.ndarray       # (N, state_dim)
    actions: np.ndarray      # (N, action_dim)
    next_states: np.ndarray  # (N, state_dim)
    rewards: np.ndarray      # (N,)
    traj_ids: np.ndarray     # (N,) int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.states)
        if not (len(self.actions) == len(self.next_states) == len(self.rewards)
                == len(self.traj_ids) == n):
            raise ValueError("dataset columns have inconsistent lengths")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.states, self.actions, self.next_states, self.rewards, self.traj_ids):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    def save_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            header = {"kind": "header", "state_dim": self.state_dim,
                      "action_dim": self.action_dim, "n": len(self)}
            header.update(self.meta)
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for i in range(len(self)):
                row = {"s": self.states[i].tolist(), "a": self.actions[i].tolist(),
                       "s_next": self.next_states[i].tolist(),
                       "r": float(self.rewards[i]), "traj_id": int(self.traj_ids[i])}
                fh.write(json.dumps(row) + "\n")

    @classmethod
    def load_jsonl(cls, path) -> "TransitionDataset":
        with open(path) as fh:
            header = json.loads(fh.readline())
            if header.get("kind") != "header":
                raise ValueError(f"{path}: missing dataset header line")
            s, a, ns, r, tid = [], [], [], [], []
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                s.append(row["s"])
                a.append(row["a"])
                ns.append(row["s_next"])
                r.append(row["r"])
                tid.append(row["traj_id"])
        meta = {k: v for k, v in header.items()
                if k not in ("kind", "state_dim", "action_dim", "n")}
        return cls(np.array(s, dtype=float), np.array(a, dtype=float),
                   np.array(ns, dtype=float), np.array(r, dtype=float),
                   np.array(tid, dtype=int), meta)

    def normalizer(self) -> "StateNormalizer":
        return StateNormalizer.fit(np.vstack([self.states, self.next_states]))


@dataclass(frozen=True)
class StateNormalizer:
    """Affine map taking each raw state feature's [min, max] onto [-1, 1]."""

    offset: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, states: np.ndarray) -> "StateNormalizer":
        lo = states.min(axis=0)
        hi = states.max(axis=0)
        span = hi - lo
        # constant features map to 0 rather than blowing up the scale
        scale = np.where(span > 0, 2.0 / np.where(span > 0, span, 1.0), 0.0)
        return cls(offset=(lo + hi) / 2.0, scale=scale)

    @classmethod
    def identity(cls, dim: int) -> "StateNormalizer":
        return cls(offset=np.zeros(dim), scale=np.ones(dim))

    def transform(self, s: np.ndarray) -> np.ndarray:
        return (np.asarray(s, dtype=float) - self.offset) * self.scale

    def to_json(self) -> dict:
        return {"offset": self.offset.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "StateNormalizer":
        return cls(np.asarray(doc["offset"], dtype=float),
                   np.asarray(doc["scale"], dtype=float))


def generate_dataset(env: Environment, n_traj: int, traj_len: int, seed: int,
                     policy: Callable | None = None,
                     init_region: np.ndarray | None = None) -> TransitionDataset:
    """Roll out `n_traj` trajectories of `traj_len` steps and record every tuple.

    With no policy, actions are drawn uniformly from the action box (random
    exploration).  Identical (env, seed, sizes) yield bit-identical datasets.
    """
    if n_traj < 1 or traj_len < 1:
        raise ValueError("n_traj and traj_len must be >= 1")
    region = init_region if init_region is not None else getattr(env, "data_region")
    rng = rng_for(seed, "dataset")
    n = n_traj * traj_len
    states = np.empty((n, env.state_dim))
    actions = np.empty((n, env.action_dim))
    next_states = np.empty((n, env.state_dim))
    rewards = np.empty(n)
    traj_ids = np.empty(n, dtype=int)
    row = 0
    for traj in range(n_traj):
        s = env.sample_initial(region, rng)
        for _ in range(traj_len):
            if policy is None:
                a = rng.uniform(env.action_low, env.action_high)
            else:
                a = np.atleast_1d(np.asarray(policy(s), dtype=float))
            ns, r = env.step(s, a)
            states[row] = s
            actions[row] = a
            next_states[row] = ns
            rewards[row] = r
            traj_ids[row] = traj
            row += 1
            s = ns
    meta = {"env": env.name, "seed": seed, "n_traj": n_traj, "traj_len": traj_len,
            "policy": "random" if policy is None else "given"}
    return TransitionDataset(states, actions, next_states, rewards, traj_ids, meta)
