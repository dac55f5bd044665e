"""Shared helpers: seeded RNG streams, canonical JSON, hashing, parallel map."""

from __future__ import annotations

import hashlib
import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, Sequence

import numpy as np


def rng_for(seed: int, *stream: int | str) -> np.random.Generator:
    """Independent generator for a named substream of a master seed.

    Streams are identified by ints or short strings; strings are crc32-hashed
    so the derivation is stable across runs and platforms.
    """
    words = [int(seed) & 0xFFFFFFFF]
    for part in stream:
        if isinstance(part, str):
            words.append(zlib.crc32(part.encode("utf8")))
        else:
            words.append(int(part) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(words))


def canonical_json(obj: Any) -> str:
    """Deterministic JSON encoding (sorted keys, exact float repr)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf8")).hexdigest()[:16]


def dump_json(path, obj: Any) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path) -> Any:
    with open(path) as fh:
        return json.load(fh)


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")


def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Order-preserving map, optionally fanned out over processes.

    `fn` must be picklable (module-level) when workers > 1.  Results are
    identical for any worker count because `fn` is required to be pure.
    """
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
