"""Tensor rank bounds, Segre-cone membership, border-rank sequences and ruled subspaces."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .cp_fit import fit_rank
from .normed_space import Vector, norm
from .options import OptimizerOptions, substream
from .tensor_core import Decomposition, DenseTensor, PureTensor, decomposition_cost, flatten, outer

RANK_TOL = 1e-8
FIT_TOL = 1e-9


class StructureError(RuntimeError):
    """Every sampled element is decomposable but no common ruling was found."""


def matrix_rank_tol(M, tol: float = RANK_TOL) -> int:
    """Number of singular values above ``tol * sigma_max``; 0 for the zero matrix."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    s = np.linalg.svd(np.atleast_2d(np.asarray(M, dtype=float)), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def flattening_rank_lower_bound(z: DenseTensor, tol: float = RANK_TOL) -> int:
    return max(matrix_rank_tol(flatten(z, j), tol) for j in range(z.order))


def _column_basis(M, tol):
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    r = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return U[:, :r]


def pencil_exceeds(z: DenseTensor, r: int, rng, tol: float = RANK_TOL, draws: int = 3) -> bool:
    """True when an order-3 tensor is certified (numerically) to have rank > r.

    Needs two modes whose flattenings have rank exactly r.  A rank-r tensor
    compresses to slices ``G_k = A diag(c_k) B^T`` with A, B invertible, so
    ``M_k = G_k S^{-1}`` (S a generic slice combination) are simultaneously
    diagonalisable with real eigenvalues.  A singular pencil, complex
    eigenvalues, a defective combination or non-commuting ``M_k`` rule that out.
    """
    if z.order != 3 or r < 1:
        return False
    ranks = [matrix_rank_tol(flatten(z, j), tol) for j in range(3)]
    modes = [j for j in range(3) if ranks[j] == r]
    if len(modes) < 2:
        return False
    a, b = modes[:2]
    c = 3 - a - b
    T = np.transpose(z.coords, (a, b, c))
    Ua = _column_basis(flatten(z, a), tol)
    Ub = _column_basis(flatten(z, b), tol)
    Uc = _column_basis(flatten(z, c), tol)
    G = np.einsum("ijk,ia,jb,kc->abc", T, Ua, Ub, Uc)
    slices = [G[:, :, k] for k in range(G.shape[2])]
    votes = 0
    for _ in range(draws):
        w = rng.standard_normal(len(slices))
        S0 = sum(wk * Sk for wk, Sk in zip(w, slices))
        if np.linalg.cond(S0) > 1e10:
            votes += 1
            continue
        S0inv = np.linalg.inv(S0)
        Ms = [Sk @ S0inv for Sk in slices]
        mscale = max(1.0, max(np.linalg.norm(M, 2) for M in Ms))
        comm = max((np.linalg.norm(P @ Q - Q @ P, 2) for P, Q in itertools.combinations(Ms, 2)), default=0.0)
        u = rng.standard_normal(len(Ms))
        M = sum(uk * Mk for uk, Mk in zip(u, Ms))
        vals, vecs = np.linalg.eig(M)
        complex_eigs = np.max(np.abs(vals.imag)) > 1e-6 * max(1.0, np.max(np.abs(vals)))
        defective = np.linalg.cond(vecs) > 1e8
        if comm > 1e-6 * mscale**2 or complex_eigs or defective:
            votes += 1
    return votes == draws


@dataclass
class RankEstimate:
    lower: int
    upper: int | None
    tol: float
    border_suspected: list[int] = field(default_factory=list)
    residuals: dict[int, float] = field(default_factory=dict)
    witness: Decomposition | None = None
    lower_method: str = "flattening"

    def __post_init__(self):
        if self.lower < 0:
            raise ValueError("lower bound must be nonnegative")
        if self.upper is not None and self.upper < self.lower:
            raise ValueError("upper bound below lower bound")

    @property
    def status(self) -> str:
        if self.upper is None:
            return "LowerOnly"
        return "Exact" if self.upper == self.lower else "Bracketed"


def rank_lower_bound(z: DenseTensor, tol: float = RANK_TOL, refine: bool = False, seed: int = 0):
    """Flattening bound, optionally raised by one through the pencil test."""
    r = flattening_rank_lower_bound(z, tol)
    if refine and pencil_exceeds(z, r, substream(seed, "pencil"), tol):
        return r + 1, "pencil"
    return r, "flattening"


def rank_upper_bound(z: DenseTensor, r_max: int, opts: OptimizerOptions | None = None,
                     tol: float = FIT_TOL, refine_lower: bool = False) -> RankEstimate:
    """Smallest m in [lower, r_max] with an exact m-term fit.

    m values whose fits fail while showing diverging factors are recorded in
    ``border_suspected``.
    """
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    opts = opts or OptimizerOptions()
    if z.is_zero():
        return RankEstimate(0, 0, tol, witness=Decomposition(z.modes))
    lower, method = rank_lower_bound(z, RANK_TOL, refine_lower, opts.seed)
    est = RankEstimate(lower, None, tol, lower_method=method)
    T = z.coords
    if z.order == 1:
        est.upper = 1
        est.witness = Decomposition(z.modes, ((T,),))
        return est
    if z.order == 2:
        # matrix rank is the flattening rank; the truncated SVD is the witness
        U, s, Vt = np.linalg.svd(T, full_matrices=False)
        terms = tuple((s[i] * U[:, i], Vt[i]) for i in range(lower))
        dec = Decomposition(z.modes, terms)
        est.residuals[lower] = float(np.linalg.norm(sum((outer(t) for t in terms), np.zeros_like(T)) - T))
        if lower <= r_max:
            est.upper, est.witness = lower, dec
        return est
    for m in range(max(lower, 1), r_max + 1):
        fit = fit_rank(T, m, substream(opts.seed, "rank", m), restarts=opts.n_restarts(8),
                       max_iters=4 * opts.max_sweeps, tol=tol)
        est.residuals[m] = fit.residual
        if fit.converged:
            est.upper = m
            est.witness = Decomposition.from_factors(z.modes, fit.factors)
            break
        if fit.border_suspected:
            est.border_suspected.append(m)
    return est


def is_segre(z: DenseTensor, tol: float = RANK_TOL) -> bool:
    """Rank at most one: every flattening has numerical rank <= 1 (zero included)."""
    return all(matrix_rank_tol(flatten(z, j), tol) <= 1 for j in range(z.order))


# -- the degenerating sequence ------------------------------------------------------------


@dataclass(frozen=True)
class BorderSequencePoint:
    k: int
    x_k: Decomposition
    limit: DenseTensor
    distance_pi_upper: float
    difference: Decomposition

    def __post_init__(self):
        if len(self.x_k) != 2:
            raise ValueError("x_k must have exactly two terms")


def _unit(v: Vector) -> np.ndarray:
    nv = norm(v.space, v.coords)
    if nv == 0:
        raise ValueError("zero vector")
    return v.coords / nv


def border_sequence(z_vecs, w_vecs, k: int) -> BorderSequencePoint:
    """``x_k = k (z_1 + w_1/k) (x) ... (x) (z_n + w_n/k) - k z_1 (x) ... (x) z_n``.

    The limit is ``sum_j z_1 (x) ... w_j ... (x) z_n``; the difference
    ``x_k - x`` expands into the terms with two or more w factors, the term
    with s of them weighted by ``k^(1 - s)``.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    if len(z_vecs) != len(w_vecs) or not z_vecs:
        raise ValueError("need one (z, w) pair per mode")
    modes = tuple(v.space for v in z_vecs)
    zs, ws = [], []
    for zv, wv in zip(z_vecs, w_vecs):
        if zv.space != wv.space:
            raise ValueError("z_j and w_j must live in the same space")
        z, w = _unit(zv), _unit(wv)
        if matrix_rank_tol(np.column_stack([z, w]), 1e-12) < 2:
            raise ValueError("each pair (z_j, w_j) must be linearly independent")
        zs.append(z)
        ws.append(w)
    n = len(zs)
    first = [zj + wj / k for zj, wj in zip(zs, ws)]
    x_k = Decomposition(modes, (
        PureTensor(modes, tuple([k * first[0]] + first[1:])),
        PureTensor(modes, tuple([-k * zs[0]] + zs[1:])),
    ))
    limit = sum(
        (outer([ws[j] if i == j else zs[i] for i in range(n)]) for j in range(n)), np.zeros([len(z) for z in zs])
    )
    terms = []
    for s in range(2, n + 1):
        for S in itertools.combinations(range(n), s):
            f = [ws[i] if i in S else zs[i] for i in range(n)]
            f[0] = f[0] * float(k) ** (1 - s)
            terms.append(PureTensor(modes, tuple(f)))
    diff = Decomposition(modes, tuple(terms))
    return BorderSequencePoint(k, x_k, DenseTensor(modes, limit), decomposition_cost(diff), diff)


def border_distance_formula(n: int, k: int) -> float:
    """Cost of the expanded difference for unit factors: sum_{s>=2} C(n, s) k^(1-s)."""
    return math.fsum(math.comb(n, s) * float(k) ** (1 - s) for s in range(2, n + 1))


# -- additivity and ruled subspaces --------------------------------------------------------


@dataclass
class AdditivityReport:
    y_estimate: RankEstimate
    x_estimate: RankEstimate
    conclusive: bool
    holds: bool | None


def rank_additivity_check(y: DenseTensor, z0_vecs, opts: OptimizerOptions | None = None,
                          r_max: int | None = None) -> AdditivityReport:
    """Compare rank(y + z0_1 (x) ... (x) z0_n) with rank(y) + 1.

    Each z0_j must lie outside the span of the mode-j slices of y.  The result
    is conclusive only when both ranks are pinned down exactly.
    """
    if len(z0_vecs) != y.order:
        raise ValueError("need one z0 vector per mode")
    for j, v in enumerate(z0_vecs):
        Fy = flatten(y, j)
        base = matrix_rank_tol(Fy) if np.any(Fy) else 0
        if matrix_rank_tol(np.column_stack([Fy, v.coords])) != base + 1:
            raise ValueError(f"z0 in mode {j} lies in the span of y's mode-{j} slices")
    x = y + DenseTensor(y.modes, outer([v.coords for v in z0_vecs]))
    ly = flattening_rank_lower_bound(y)
    r_max = r_max if r_max is not None else ly + 3
    ey = rank_upper_bound(y, r_max, opts, refine_lower=True)
    ex = rank_upper_bound(x, r_max + 1, opts, refine_lower=True)
    conclusive = ey.status == "Exact" and ex.status == "Exact"
    return AdditivityReport(ey, ex, conclusive, (ex.upper == ey.upper + 1) if conclusive else None)


@dataclass(frozen=True)
class NotContained:
    witness: DenseTensor


@dataclass(frozen=True)
class Ruling:
    mode: int
    fixed_factors: tuple[Vector | None, ...]  # None at the free mode
    line_space: tuple[Vector, ...]


def _rank_one_factors(z: DenseTensor):
    """Leading left singular vector of each flattening, scaled so the outer product is z."""
    fs = []
    for j in range(z.order):
        U = np.linalg.svd(flatten(z, j), full_matrices=False)[0][:, 0]
        i = int(np.argmax(np.abs(U)))
        fs.append(U * np.sign(U[i]))
    lam = float(np.vdot(outer(fs), z.coords))
    return fs, lam


def segre_subspace_structure(basis, tol: float = RANK_TOL, seed: int = 0, samples: int = 100):
    """Either a non-decomposable element of span(basis) or a ruling containing it."""
    basis = list(basis)
    if not basis:
        raise ValueError("need at least one basis element")
    modes = basis[0].modes
    if any(b.modes != modes for b in basis):
        raise ValueError("basis elements live on different spaces")
    if matrix_rank_tol(np.column_stack([b.flat for b in basis]), 1e-10) != len(basis):
        raise ValueError("basis is not linearly independent")
    candidates = list(basis)
    candidates += [a + b for a, b in itertools.combinations(basis, 2)]
    rng = substream(seed, "ruling")
    for _ in range(samples):
        c = rng.standard_normal(len(basis))
        candidates.append(DenseTensor(modes, sum(ci * b.coords for ci, b in zip(c, basis))))
    for cand in candidates:
        if not is_segre(cand, tol):
            return NotContained(cand)

    factors = [_rank_one_factors(b) for b in basis]
    n = len(modes)
    for i0 in range(n):
        if all(matrix_rank_tol(np.column_stack([f[0][j] for f in factors]), tol) <= 1
               for j in range(n) if j != i0):
            fixed = [factors[0][0][j] for j in range(n)]
            free = np.column_stack([f[1] * f[0][i0] for f in factors])
            line = _column_basis(free, tol)
            # verification: every basis element is fixed factors (x) (something in line_space)
            for b in basis:
                fs = [f / (f @ f) if j != i0 else None for j, f in enumerate(fixed)]
                v = b.coords
                for j in reversed(range(n)):
                    if j != i0:
                        v = np.tensordot(v, fs[j], axes=([j], [0]))
                recon = outer([v if j == i0 else fixed[j] for j in range(n)])
                in_span = np.linalg.norm(v - line @ (line.T @ v)) <= 1e-8 * max(1.0, np.linalg.norm(v))
                if np.linalg.norm(recon - b.coords) > 1e-8 * np.linalg.norm(b.coords) or not in_span:
                    raise StructureError("extracted ruling does not reproduce the basis")
            fixed_vecs = tuple(
                None if j == i0 else Vector(fixed[j] / norm(modes[j], fixed[j]), modes[j]) for j in range(n)
            )
            return Ruling(i0, fixed_vecs, tuple(Vector(line[:, k], modes[i0]) for k in range(line.shape[1])))
    raise StructureError("all sampled elements are decomposable but no single free mode exists; tol too loose?")


__all__ = [
    "AdditivityReport",
    "BorderSequencePoint",
    "NotContained",
    "RankEstimate",
    "Ruling",
    "StructureError",
    "border_distance_formula",
    "border_sequence",
    "flattening_rank_lower_bound",
    "is_segre",
    "matrix_rank_tol",
    "pencil_exceeds",
    "rank_additivity_check",
    "rank_lower_bound",
    "rank_upper_bound",
    "segre_subspace_structure",
]
