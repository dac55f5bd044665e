"""Surrogate system models: the predict(s, a) -> (s', r) contract.

Rollout-based policy evaluation never touches an environment directly; it
goes through a model.  `ExactModel` wraps true dynamics (the "real system"
evaluation path and the zero-error baseline), `KnnModel` is the data-driven
stand-in learned from a transition batch.
"""

from __future__ import annotations

import numpy as np

from .data import TransitionDataset
from .envs import Environment


class SystemModel:
    """Deterministic one-step predictor."""

    def predict(self, s: np.ndarray, a) -> tuple[np.ndarray, float]:
        s = np.asarray(s, dtype=float)
        a = np.atleast_1d(np.asarray(a, dtype=float))
        ns, r = self.predict_many(s[None, :], a[None, :])
        return ns[0], float(r[0])

    def predict_many(self, s: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def metadata(self) -> dict:
        raise NotImplementedError


class ExactModel(SystemModel):
    """Model that delegates to the true environment dynamics."""

    def __init__(self, env: Environment):
        self.env = env

    def predict_many(self, s, a):
        return self.env.step_many(s, a)

    def metadata(self) -> dict:
        return {"kind": "exact", "env_name": self.env.name}


class KnnModel(SystemModel):
    """k-nearest-neighbor regressor over normalized (state, action) inputs.

    Targets are state deltas (added back onto the query state) and rewards,
    averaged over the k nearest training tuples by Euclidean distance in
    min-max normalized input space.  Distance ties at the k-th neighbor are
    averaged inclusively, which makes predictions independent of training-set
    order.
    """

    def __init__(self, inputs_raw: np.ndarray, delta_targets: np.ndarray,
                 reward_targets: np.ndarray, k: int, fingerprint: str):
        if len(inputs_raw) == 0:
            raise ValueError("cannot fit a k-NN model on an empty dataset")
        if not (1 <= k <= len(inputs_raw)):
            raise ValueError(f"k={k} out of range for {len(inputs_raw)} tuples")
        self.k = k
        self._fingerprint = fingerprint
        lo = inputs_raw.min(axis=0)
        hi = inputs_raw.max(axis=0)
        span = hi - lo
        self._in_offset = lo
        self._in_scale = np.where(span > 0, 1.0 / np.where(span > 0, span, 1.0), 0.0)
        self._inputs = (inputs_raw - self._in_offset) * self._in_scale
        self._deltas = delta_targets
        self._rewards = reward_targets

    @classmethod
    def fit(cls, data: TransitionDataset, k: int = 5) -> "KnnModel":
        inputs = np.hstack([data.states, data.actions])
        deltas = data.next_states - data.states
        return cls(inputs, deltas, data.rewards, k, data.fingerprint())

    def predict_many(self, s, a, chunk: int = 512):
        s = np.asarray(s, dtype=float)
        a = np.asarray(a, dtype=float)
        q = (np.hstack([s, a]) - self._in_offset) * self._in_scale
        ns = np.empty_like(s)
        r = np.empty(len(q))
        for start in range(0, len(q), chunk):
            block = q[start:start + chunk]
            d2 = ((block[:, None, :] - self._inputs[None, :, :]) ** 2).sum(axis=2)
            kth = np.partition(d2, self.k - 1, axis=1)[:, self.k - 1]
            mask = d2 <= kth[:, None]
            counts = mask.sum(axis=1).astype(float)
            ns[start:start + chunk] = s[start:start + chunk] + \
                (mask @ self._deltas) / counts[:, None]
            r[start:start + chunk] = (mask @ self._rewards) / counts
        return ns, r

    def metadata(self) -> dict:
        return {"kind": "knn", "k": self.k, "dataset_fingerprint": self._fingerprint,
                "n_train": len(self._inputs)}


def holdout_rmse(model: SystemModel, data: TransitionDataset) -> dict:
    """One-step state RMSE of `model` vs the persistence predictor (s' = s)."""
    pred, _ = model.predict_many(data.states, data.actions)
    err = pred - data.next_states
    persist = data.states - data.next_states
    return {"model_rmse": float(np.sqrt(np.mean(err ** 2))),
            "persistence_rmse": float(np.sqrt(np.mean(persist ** 2)))}
