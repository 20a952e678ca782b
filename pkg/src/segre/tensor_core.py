"""Order-n tensors over products of normed spaces.

Coordinates are row-major with mode 0 slowest, i.e. ``coords.ravel()`` of a
C-ordered array of shape ``dims``.  Modes are indexed from 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .normed_space import SpaceSpec, norm


def _dims(modes) -> tuple[int, ...]:
    return tuple(m.dim for m in modes)


@dataclass(frozen=True)
class DenseTensor:
    modes: tuple[SpaceSpec, ...]
    coords: np.ndarray

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise ValueError("a tensor needs at least one mode")
        c = np.array(self.coords, dtype=float)
        if c.size != math.prod(_dims(modes)):
            raise ValueError(f"{c.size} coordinates do not fit modes of dims {_dims(modes)}")
        c = c.reshape(_dims(modes))
        c.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "coords", c)

    @property
    def order(self) -> int:
        return len(self.modes)

    @property
    def dims(self) -> tuple[int, ...]:
        return _dims(self.modes)

    @property
    def flat(self) -> np.ndarray:
        return self.coords.ravel()

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.coords))

    def is_zero(self) -> bool:
        return not np.any(self.coords)

    def __add__(self, other: "DenseTensor") -> "DenseTensor":
        _same_modes(self.modes, other.modes)
        return DenseTensor(self.modes, self.coords + other.coords)

    def __sub__(self, other: "DenseTensor") -> "DenseTensor":
        _same_modes(self.modes, other.modes)
        return DenseTensor(self.modes, self.coords - other.coords)

    def __mul__(self, c: float) -> "DenseTensor":
        return DenseTensor(self.modes, float(c) * self.coords)

    __rmul__ = __mul__

    def __neg__(self) -> "DenseTensor":
        return DenseTensor(self.modes, -self.coords)


def _same_modes(a, b):
    if tuple(a) != tuple(b):
        raise ValueError("tensors live on different mode spaces")


@dataclass(frozen=True)
class PureTensor:
    modes: tuple[SpaceSpec, ...]
    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        modes = tuple(self.modes)
        factors = tuple(np.array(f, dtype=float) for f in self.factors)
        if len(factors) != len(modes):
            raise ValueError("one factor per mode required")
        for j, (m, f) in enumerate(zip(modes, factors)):
            if f.shape != (m.dim,):
                raise ValueError(f"factor {j} has shape {f.shape}, mode dim is {m.dim}")
            f.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "factors", factors)

    def dense(self) -> DenseTensor:
        return DenseTensor(self.modes, outer(self.factors))

    def norm_product(self) -> float:
        return math.prod(norm(m, f) for m, f in zip(self.modes, self.factors))

    def scaled(self, c: float) -> "PureTensor":
        return PureTensor(self.modes, (c * self.factors[0],) + self.factors[1:])


@dataclass(frozen=True)
class Decomposition:
    """A finite sum of pure tensors; no terms means the zero tensor."""

    modes: tuple[SpaceSpec, ...]
    terms: tuple[PureTensor, ...] = ()

    def __post_init__(self):
        modes = tuple(self.modes)
        terms = tuple(
            t if isinstance(t, PureTensor) else PureTensor(modes, tuple(t)) for t in self.terms
        )
        for t in terms:
            _same_modes(t.modes, modes)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_factors(cls, modes, factors) -> "Decomposition":
        """Build from factor matrices ``F_j`` of shape ``(d_j, m)``."""
        m = factors[0].shape[1]
        return cls(modes, tuple(tuple(F[:, i] for F in factors) for i in range(m)))

    def factor_matrices(self) -> list[np.ndarray]:
        if not self.terms:
            return [np.zeros((m.dim, 0)) for m in self.modes]
        return [np.column_stack([t.factors[j] for t in self.terms]) for j in range(len(self.modes))]

    def __len__(self) -> int:
        return len(self.terms)

    def __add__(self, other: "Decomposition") -> "Decomposition":
        _same_modes(self.modes, other.modes)
        return Decomposition(self.modes, self.terms + other.terms)


def outer(vectors) -> np.ndarray:
    out = np.asarray(vectors[0], dtype=float)
    for v in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(v, dtype=float))
    return out


def _pairwise_sum(arrays: list[np.ndarray]) -> np.ndarray:
    if len(arrays) == 1:
        return arrays[0]
    mid = len(arrays) // 2
    return _pairwise_sum(arrays[:mid]) + _pairwise_sum(arrays[mid:])


def materialize(d: Decomposition) -> DenseTensor:
    """Coordinates of the sum, accumulated by pairwise summation in term order."""
    if not d.terms:
        return DenseTensor(d.modes, np.zeros(_dims(d.modes)))
    return DenseTensor(d.modes, _pairwise_sum([outer(t.factors) for t in d.terms]))


def decomposition_cost(d: Decomposition) -> float:
    """Sum over terms of the product of factor norms (the projective objective)."""
    return math.fsum(t.norm_product() for t in d.terms)


def _check_mode(z: DenseTensor, mode: int):
    if not 0 <= mode < z.order:
        raise IndexError(f"mode {mode} out of range for an order-{z.order} tensor")


def contract(z: DenseTensor, mode: int, f) -> DenseTensor:
    """Apply the functional ``f`` to mode ``mode``: ``(Id (x) ... f ... (x) Id)(z)``."""
    _check_mode(z, mode)
    if z.order < 2:
        raise ValueError("contracting an order-1 tensor leaves a scalar; use apply_functionals")
    f = np.asarray(getattr(f, "coords", f), dtype=float)
    if f.shape != (z.dims[mode],):
        raise ValueError("functional does not match the mode dimension")
    coords = np.tensordot(z.coords, f, axes=([mode], [0]))
    return DenseTensor(z.modes[:mode] + z.modes[mode + 1 :], coords)


def apply_functionals(z: DenseTensor, fs) -> float:
    """``(f_1 (x) ... (x) f_n)(z)``."""
    if len(fs) != z.order:
        raise ValueError("one functional per mode required")
    out = z.coords
    for f in reversed(fs):
        out = out @ np.asarray(getattr(f, "coords", f), dtype=float)
    return float(out)


def flatten(z: DenseTensor, mode: int) -> np.ndarray:
    """Matrix with row k the mode-``mode`` slice at index k (others row-major)."""
    _check_mode(z, mode)
    return np.moveaxis(z.coords, mode, 0).reshape(z.dims[mode], -1)


def pure(modes, factors) -> PureTensor:
    return PureTensor(tuple(modes), tuple(factors))


def w_tensor(n: int = 3, modes=None) -> DenseTensor:
    """``sum_j e_1 (x) ... e_2 (at j) ... (x) e_1``; the n = 3 case is the W state."""
    modes = tuple(modes) if modes is not None else (SpaceSpec.lp(2, 2.0),) * n
    c = np.zeros(_dims(modes))
    for j in range(len(modes)):
        idx = [0] * len(modes)
        idx[j] = 1
        c[tuple(idx)] = 1.0
    return DenseTensor(modes, c)
