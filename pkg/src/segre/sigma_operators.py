"""Multilinear maps, their restriction to the Segre cone, and norm estimates.

A map ``T: X_1 x ... x X_n -> Y`` is stored by its coefficient array indexed
``(output, i_1, ..., i_n)``.  The same array defines the linearisation on the
tensor product and, restricted to pure tensors, the Segre-cone map ``f_T``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .cross_norms import (
    NormCertificate,
    _apply,
    form_norm_upper,
    injective_norm,
    projective_norm,
)
from .normed_space import SpaceSpec, Vector, dual_norm, norm, norming_functional, random_unit_vectors
from .options import OptimizerOptions, substream
from .tensor_core import DenseTensor, PureTensor, outer


@dataclass(frozen=True)
class MultilinearMap:
    codomain: SpaceSpec
    modes: tuple[SpaceSpec, ...]
    coeffs: np.ndarray

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise ValueError("need at least one domain mode")
        coeffs = np.array(self.coeffs, dtype=float)
        expected = (self.codomain.dim,) + tuple(m.dim for m in modes)
        if coeffs.shape != expected:
            raise ValueError(f"coefficient shape {coeffs.shape} does not match {expected}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def order(self) -> int:
        return len(self.modes)

    @classmethod
    def form(cls, modes, coeffs) -> "MultilinearMap":
        """A scalar-valued multilinear form."""
        return cls(SpaceSpec.lp(1, 2.0), tuple(modes), np.asarray(coeffs, dtype=float)[None])


@dataclass(frozen=True)
class SigmaPoint:
    """An element of the Segre cone, stored as a pure tensor with its dense coordinates."""

    pure: PureTensor
    coords: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c = outer(self.pure.factors)
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def modes(self):
        return self.pure.modes

    @classmethod
    def of(cls, modes, factors) -> "SigmaPoint":
        return cls(PureTensor(tuple(modes), tuple(np.asarray(getattr(f, "coords", f), dtype=float) for f in factors)))

    def scaled(self, c: float) -> "SigmaPoint":
        return SigmaPoint(self.pure.scaled(c))


def _check_args(T: MultilinearMap, args):
    if len(args) != T.order:
        raise ValueError(f"expected {T.order} arguments, got {len(args)}")
    out = []
    for a, m in zip(args, T.modes):
        if isinstance(a, Vector) and a.space != m:
            raise ValueError("argument space does not match the domain mode")
        v = np.asarray(getattr(a, "coords", a), dtype=float)
        if v.shape != (m.dim,):
            raise ValueError(f"argument of shape {v.shape} for a mode of dim {m.dim}")
        out.append(v)
    return out


def evaluate(T: MultilinearMap, args) -> Vector:
    return Vector(_apply(T.coeffs, _check_args(T, args)), T.codomain)


def evaluate_sigma(T: MultilinearMap, u: SigmaPoint) -> Vector:
    if tuple(u.modes) != T.modes:
        raise ValueError("point does not live on the domain modes")
    return Vector(_linearisation(T, u.coords), T.codomain)


def _linearisation(T: MultilinearMap, z: np.ndarray) -> np.ndarray:
    axes = list(range(1, T.order + 1))
    return np.tensordot(T.coeffs, z, axes=(axes, list(range(T.order))))


def _as_dense_tensor(T: MultilinearMap) -> DenseTensor:
    # <y*, T(x_1, ..., x_n)> pairs the coefficients with Y* x X_1 x ... x X_n, so the
    # operator norm is their injective norm in Y (x) X_1* (x) ... (x) X_n*
    return DenseTensor((T.codomain,) + tuple(m.dual() for m in T.modes), np.array(T.coeffs))


def operator_norm(T: MultilinearMap, opts: OptimizerOptions | None = None, *, budget=50_000) -> NormCertificate:
    """``sup ||T(x_1, ..., x_n)||`` over unit vectors, as a certified bracket.

    The lower witness lists a unit functional on Y followed by unit vectors
    ``x_j`` attaining the lower bound.
    """
    return injective_norm(_as_dense_tensor(T), opts, budget=budget)


def operator_norm_witness(cert: NormCertificate) -> list[np.ndarray]:
    """The unit arguments ``x_1, ..., x_n`` behind an operator-norm lower bound."""
    return [np.asarray(f) for f in cert.lower_witness[1:]]


# -- Lipschitz constant of f_T ---------------------------------------------------------


@dataclass(frozen=True)
class LipschitzEstimate:
    value: float
    pairs: int
    best_pair: tuple[SigmaPoint, SigmaPoint] | None
    denominator_method: str


def _zero_point(modes) -> SigmaPoint:
    return SigmaPoint.of(modes, [np.zeros(m.dim) for m in modes])


def _random_point(modes, rng) -> SigmaPoint:
    factors = [random_unit_vectors(m, 1, rng)[0] for m in modes]
    factors[0] = factors[0] * math.exp(rng.uniform(math.log(0.1), math.log(10.0)))
    return SigmaPoint.of(modes, factors)


def _pi_upper_difference(u: SigmaPoint, v: SigmaPoint) -> tuple[float, str]:
    modes = u.modes
    if len(modes) == 2 and all(m.is_euclidean for m in modes):
        cert = projective_norm(DenseTensor(modes, u.coords - v.coords))
        return cert.upper, "nuclear"
    return u.pure.norm_product() + v.pure.norm_product(), "two_term"


def lipschitz_estimate(T: MultilinearMap, num_pairs: int, opts: OptimizerOptions | None = None,
                       include_zero_pairs: bool = True, operator_cert: NormCertificate | None = None
                       ) -> LipschitzEstimate:
    """Best ratio ``||f_T(u) - f_T(v)|| / pi_upper(u - v)`` over sampled Segre points.

    Every ratio is a certified lower bound on the Lipschitz constant.  With
    ``include_zero_pairs`` each sampled u is also paired with 0, and so is the
    maximiser behind the operator-norm lower bound.
    """
    if num_pairs < 1:
        raise ValueError("num_pairs must be >= 1")
    opts = opts or OptimizerOptions()
    modes = T.modes
    zero = _zero_point(modes)
    pairs = []
    for i in range(num_pairs):
        rng = substream(opts.seed, "lipschitz", i)
        u, v = _random_point(modes, rng), _random_point(modes, rng)
        pairs.append((u, v))
        if include_zero_pairs:
            pairs.append((u, zero))
    if include_zero_pairs:
        cert = operator_cert or operator_norm(T, opts)
        if cert.lower_witness is not None:
            pairs.append((SigmaPoint.of(modes, operator_norm_witness(cert)), zero))
    best = (0.0, None, "none")
    for u, v in pairs:
        diff = u.coords - v.coords
        if not np.any(diff):
            continue  # u == v: nothing to measure
        den, method = _pi_upper_difference(u, v)
        if den <= 0:
            continue
        num = norm(T.codomain, _linearisation(T, diff))
        if num / den > best[0]:
            best = (num / den, (u, v), method)
    return LipschitzEstimate(best[0], len(pairs), best[1], best[2])


# -- p-summing ratio -------------------------------------------------------------------


@dataclass(frozen=True)
class PSummingEstimate:
    """Both sides of the p-summing inequality for a finite family.

    ``rhs_lower`` comes from explicit unit multilinear forms (``rhs_method``
    names the best one); ``rhs_upper`` is a certified bound on the supremum
    over the whole unit ball.  ``ratio_lower = lhs / rhs_upper`` is therefore
    a certified lower bound on any admissible constant, while
    ``ratio_estimate = lhs / rhs_lower`` is only an estimate.
    """

    p: float
    lhs: float
    rhs_lower: float
    rhs_upper: float
    rhs_method: str
    ratio_lower: float
    ratio_estimate: float
    certified: bool = True


def _p_sum(values, p):
    values = np.abs(np.asarray(values, dtype=float))
    if math.isinf(p):
        return float(values.max(initial=0.0))
    return float(np.sum(values**p) ** (1.0 / p))


def _family(T, tuples):
    return [outer(_check_args(T, t)) for t in tuples]


def p_summing_ratio(T: MultilinearMap, us, vs, p: float, opts: OptimizerOptions | None = None,
                    n_random: int = 16, max_sign_pairs: int = 10) -> PSummingEstimate:
    if p < 1:
        raise ValueError("p must be >= 1")
    if len(us) != len(vs) or not us:
        raise ValueError("us and vs must be non-empty and of equal length")
    opts = opts or OptimizerOptions()
    modes = T.modes
    diffs = [a - b for a, b in zip(_family(T, us), _family(T, vs))]
    lhs = _p_sum([norm(T.codomain, _linearisation(T, d)) for d in diffs], p)
    live = [d for d in diffs if np.any(d)]
    if not live:
        return PSummingEstimate(p, lhs, 0.0, 0.0, "empty", 0.0, 0.0)

    def rhs_of(B, nb):
        return _p_sum([float(np.vdot(B, d)) for d in live], p) / nb

    # explicit candidates, each divided by a certified bound on its norm
    cands = []
    for idx in itertools.product(*(range(m.dim) for m in modes)):
        fs = [np.eye(m.dim)[i] for m, i in zip(modes, idx)]
        cands.append(("coordinate", outer(fs), math.prod(dual_norm(m, f) for m, f in zip(modes, fs))))
    directions = [norming_functional(T.codomain, _linearisation(T, d)) for d in live
                  if np.any(_linearisation(T, d))]
    for y in directions:
        B = np.tensordot(y, T.coeffs, axes=([0], [0]))
        if np.any(B):
            cands.append(("composed_with_codomain", B, None))
    for k, d in enumerate(live):
        cert = injective_norm(DenseTensor(modes, d), OptimizerOptions(seed=opts.seed, restarts=8))
        fs = cert.lower_witness
        if fs is not None:
            cands.append(("elementary_witness", outer(fs), math.prod(dual_norm(m, f) for m, f in zip(modes, fs))))
    for i in range(n_random):
        rng = substream(opts.seed, "psum_form", i)
        cands.append(("random", rng.standard_normal(tuple(m.dim for m in modes)), None))
    rhs_lower, method = 0.0, "none"
    for name, B, nb in cands:
        if nb is None:
            nb, _ = form_norm_upper(B, modes, budget=5_000)
        if nb > 0 and rhs_of(B, nb) > rhs_lower:
            rhs_lower, method = rhs_of(B, nb), name

    # certified upper bound on the supremum over the unit ball of forms
    pis = [projective_norm(DenseTensor(modes, d), opts).upper for d in live]
    rhs_upper = _p_sum(pis, p)
    if p == 1 and len(live) <= max_sign_pairs:
        # sup of sum |phi(d_i)| = max over signs s of ||sum s_i d_i||_pi
        best = 0.0
        for signs in itertools.product((1.0, -1.0), repeat=len(live) - 1):
            combo = live[0] + sum(s * d for s, d in zip(signs, live[1:]))
            best = max(best, projective_norm(DenseTensor(modes, combo), opts).upper if np.any(combo) else 0.0)
        rhs_upper = min(rhs_upper, best)
    rhs_upper = max(rhs_upper, rhs_lower)
    return PSummingEstimate(p, lhs, rhs_lower, rhs_upper, method,
                            lhs / rhs_upper if rhs_upper > 0 else 0.0,
                            lhs / rhs_lower if rhs_lower > 0 else math.inf)


__all__ = [
    "LipschitzEstimate",
    "MultilinearMap",
    "PSummingEstimate",
    "SigmaPoint",
    "evaluate",
    "evaluate_sigma",
    "lipschitz_estimate",
    "operator_norm",
    "operator_norm_witness",
    "p_summing_ratio",
]
