"""Optimizer options and seeded random substreams."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class OptimizerOptions:
    """Knobs shared by the nonconvex searches.

    ``restarts=None`` lets each operation pick its own default (32 for the
    injective search, 8 for Auerbach bases and exact fits).
    """

    restarts: int | None = None
    max_sweeps: int = 500
    seed: int = 0
    tol: float = 1e-13

    def __post_init__(self):
        if self.restarts is not None and self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def n_restarts(self, default: int) -> int:
        return default if self.restarts is None else self.restarts

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizerOptions":
        unknown = set(data) - {"restarts", "max_sweeps", "seed", "tol"}
        if unknown:
            raise ValueError(f"unknown optimizer option(s): {sorted(unknown)}")
        return cls(**data)


def _tag(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("substream keys must be non-negative")
        return int(key)
    # stable across interpreter runs, unlike hash()
    return int.from_bytes(hashlib.blake2b(str(key).encode(), digest_size=8).digest(), "little")


def substream(seed: int, *keys) -> np.random.Generator:
    """Counter-based generator for ``(seed, *keys)``.

    Independent of call order, so trials can be evaluated in any order or
    in parallel and still see the same random numbers.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(_tag(k) for k in keys)]))
