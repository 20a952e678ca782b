"""Finite-dimensional real normed spaces, their duals, and Auerbach bases.

Every supported norm has the form ``||x|| = ||M x||_p`` for an invertible
``M`` (the *whitener*): plain l_p has ``M = I``, a transformed l_p carries an
explicit ``M``, and ``Ellipsoid(A)`` is ``p = 2`` with ``M = L^T`` where
``A = L L^T``.  The rest of the package works in these "plain" coordinates
and maps witnesses back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .options import OptimizerOptions, substream


class DegenerateInputError(ValueError):
    """Raised for inputs where an operation is undefined (e.g. a zero vector)."""


class ConvergenceError(RuntimeError):
    """An iterative search ran out of budget; ``best`` holds the best iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


def conjugate_exponent(p: float) -> float:
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def _as_matrix(a) -> tuple[tuple[float, ...], ...]:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError("expected a square matrix")
    return tuple(tuple(float(x) for x in row) for row in arr)


@dataclass(frozen=True)
class SpaceSpec:
    """A norm on R^dim.

    kind is ``"lp"`` (optionally with an invertible ``transform``) or
    ``"ellipsoid"`` (``||x|| = sqrt(x^T A x)``).  Matrices are stored as
    nested tuples so specs stay hashable.
    """

    dim: int
    kind: str = "lp"
    p: float = 2.0
    A: tuple | None = None
    transform: tuple | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if self.kind == "lp":
            p = float(self.p)
            if not (p >= 1 or math.isinf(p)) or math.isnan(p):
                raise ValueError(f"l_p needs p >= 1 or p = inf, got {self.p!r}")
            object.__setattr__(self, "p", p)
            if self.A is not None:
                raise ValueError("l_p spaces take no ellipsoid matrix")
            if self.transform is not None:
                object.__setattr__(self, "transform", _as_matrix(self.transform))
                M = np.array(self.transform)
                if M.shape != (self.dim, self.dim):
                    raise ValueError("transform shape does not match dim")
                if np.linalg.matrix_rank(M) < self.dim:
                    raise ValueError("transform must be invertible")
        elif self.kind == "ellipsoid":
            if self.A is None:
                raise ValueError("ellipsoid needs a matrix A")
            object.__setattr__(self, "A", _as_matrix(self.A))
            object.__setattr__(self, "p", 2.0)
            A = np.array(self.A)
            if A.shape != (self.dim, self.dim):
                raise ValueError("A shape does not match dim")
            if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
                raise ValueError("ellipsoid matrix must be symmetric")
            if np.linalg.eigvalsh(A).min() <= 0:
                raise ValueError("ellipsoid matrix must be positive definite")
            if self.transform is not None:
                raise ValueError("ellipsoid spaces take no transform")
        else:
            raise ValueError(f"unknown norm kind {self.kind!r}")

    @classmethod
    def lp(cls, dim: int, p: float = 2.0, transform=None) -> "SpaceSpec":
        return cls(dim=dim, kind="lp", p=p, transform=transform)

    @classmethod
    def ellipsoid(cls, A) -> "SpaceSpec":
        A = np.asarray(A, dtype=float)
        return cls(dim=A.shape[0], kind="ellipsoid", A=A)

    @property
    def base_p(self) -> float:
        return self.p

    @property
    def is_euclidean(self) -> bool:
        return self.p == 2.0

    @property
    def is_canonical_lp(self) -> bool:
        return self.kind == "lp" and self.transform is None

    @property
    def whitener(self) -> np.ndarray:
        """``M`` with ``||x|| = ||M x||_p``."""
        if "M" not in self._cache:
            if self.kind == "ellipsoid":
                M = np.linalg.cholesky(np.array(self.A)).T
            elif self.transform is not None:
                M = np.array(self.transform)
            else:
                M = np.eye(self.dim)
            M.setflags(write=False)
            self._cache["M"] = M
        return self._cache["M"]

    @property
    def whitener_inv(self) -> np.ndarray:
        if "Minv" not in self._cache:
            if self.is_canonical_lp:
                Minv = np.eye(self.dim)
            else:
                Minv = np.linalg.inv(self.whitener)
            Minv.setflags(write=False)
            self._cache["Minv"] = Minv
        return self._cache["Minv"]

    def dual(self) -> "SpaceSpec":
        """The dual space, with functionals acting by the dot product."""
        if self.kind == "ellipsoid":
            return SpaceSpec.ellipsoid(np.linalg.inv(np.array(self.A)))
        q = conjugate_exponent(self.p)
        if self.transform is None:
            return SpaceSpec.lp(self.dim, q)
        return SpaceSpec.lp(self.dim, q, transform=self.whitener_inv.T)

    def describe(self) -> str:
        p = "inf" if math.isinf(self.p) else f"{self.p:g}"
        if self.kind == "ellipsoid":
            return f"ellipsoid({self.dim})"
        if self.transform is not None:
            return f"M*l_{p}^{self.dim}"
        return f"l_{p}^{self.dim}"


@dataclass(frozen=True)
class Vector:
    coords: np.ndarray
    space: SpaceSpec

    def __post_init__(self):
        object.__setattr__(self, "coords", _check_coords(self.space, self.coords))


@dataclass(frozen=True)
class Functional:
    """A functional on ``space``; acts on vectors by the dot product."""

    coords: np.ndarray
    space: SpaceSpec

    def __post_init__(self):
        object.__setattr__(self, "coords", _check_coords(self.space, self.coords))

    def __call__(self, v) -> float:
        return float(self.coords @ _check_coords(self.space, v))


def _check_coords(space: SpaceSpec, v) -> np.ndarray:
    v = np.asarray(getattr(v, "coords", v), dtype=float)
    if v.shape != (space.dim,):
        raise ValueError(f"expected a vector of length {space.dim}, got shape {v.shape}")
    return v


# -- plain l_p helpers (vectorised over leading axes) ---------------------------------


def lp_norm(y: np.ndarray, p: float) -> np.ndarray:
    y = np.abs(y)
    if math.isinf(p):
        return y.max(axis=-1)
    if p == 1:
        return y.sum(axis=-1)
    if p == 2:
        return np.sqrt((y * y).sum(axis=-1))
    scale = y.max(axis=-1, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    return (safe[..., 0]) * ((y / safe) ** p).sum(axis=-1) ** (1.0 / p)


def lp_norming(y: np.ndarray, p: float) -> np.ndarray:
    """Unit-l_q vectors ``g`` with ``<g, y> = ||y||_p`` (rows of ``y`` nonzero).

    Tie-breaks: for p = inf all mass on the first maximising coordinate, for
    p = 1 the sign vector with sign(0) = +1.
    """
    y = np.asarray(y, dtype=float)
    if math.isinf(p):
        k = np.argmax(np.abs(y), axis=-1)
        g = np.zeros_like(y)
        picked = np.take_along_axis(y, k[..., None], axis=-1)
        np.put_along_axis(g, k[..., None], np.where(picked >= 0, 1.0, -1.0), axis=-1)
        return g
    if p == 1:
        return np.where(y >= 0, 1.0, -1.0)
    if p == 2:
        return y / np.sqrt((y * y).sum(axis=-1, keepdims=True))
    scale = np.abs(y).max(axis=-1, keepdims=True)
    u = y / scale
    g = np.sign(u) * np.abs(u) ** (p - 1)
    q = conjugate_exponent(p)
    return g / lp_norm(g, q)[..., None]


# -- public operations ---------------------------------------------------------------


def norm(space: SpaceSpec, v) -> float:
    v = _check_coords(space, v)
    if space.is_canonical_lp:
        return float(lp_norm(v, space.p))
    return float(lp_norm(space.whitener @ v, space.p))


def dual_norm(space: SpaceSpec, f) -> float:
    """sup |f(x)| over the unit ball of ``space``, in closed form."""
    f = _check_coords(space, f)
    q = conjugate_exponent(space.p)
    if space.is_canonical_lp:
        return float(lp_norm(f, q))
    return float(lp_norm(space.whitener_inv.T @ f, q))


def norming_functional(space: SpaceSpec, v) -> np.ndarray:
    """Coordinates of ``f`` with ``dual_norm(f) = 1`` and ``f(v) = ||v||``."""
    v = _check_coords(space, v)
    if not np.any(v):
        raise DegenerateInputError("the zero vector has no norming functional")
    if space.is_canonical_lp:
        return lp_norming(v, space.p)
    g = lp_norming(space.whitener @ v, space.p)
    return space.whitener.T @ g


def dual_map(space: SpaceSpec, f) -> np.ndarray:
    """A unit vector ``x`` of ``space`` with ``f(x) = dual_norm(space, f)``."""
    f = _check_coords(space, f)
    if not np.any(f):
        raise DegenerateInputError("the zero functional attains its norm everywhere")
    q = conjugate_exponent(space.p)
    if space.is_canonical_lp:
        return lp_norming(f, q)
    h = lp_norming(space.whitener_inv.T @ f, q)
    return space.whitener_inv @ h


def random_unit_vectors(space: SpaceSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` Gaussian directions normalised in ``space`` (rows)."""
    X = rng.standard_normal((count, space.dim))
    nrm = lp_norm(X @ space.whitener.T, space.p)
    return X / nrm[:, None]


# -- Auerbach bases ------------------------------------------------------------------


@dataclass(frozen=True)
class AuerbachBasis:
    """Rows of ``vectors`` are unit vectors, rows of ``duals`` their biorthogonal
    functionals of dual norm one."""

    space: SpaceSpec
    vectors: np.ndarray
    duals: np.ndarray
    determinant: float = float("nan")
    sweeps: int = 0

    def defects(self) -> dict[str, float]:
        d = self.space.dim
        norms = np.array([norm(self.space, x) for x in self.vectors])
        dnorms = np.array([dual_norm(self.space, f) for f in self.duals])
        gram = self.duals @ self.vectors.T
        return {
            "norm": float(np.abs(norms - 1).max()),
            "dual_norm_excess": float(max(0.0, (dnorms - 1).max())),
            "biorthogonality": float(np.abs(gram - np.eye(d)).max()),
        }

    def is_valid(self, tol: float = 1e-8) -> bool:
        return all(v <= tol for v in self.defects().values())


def _cofactor(X: np.ndarray, i: int) -> np.ndarray:
    """Gradient of det(X) with respect to column i."""
    d = X.shape[0]
    if d == 1:
        return np.ones(1)
    c = np.empty(d)
    cols = [j for j in range(d) if j != i]
    for k in range(d):
        rows = [r for r in range(d) if r != k]
        c[k] = (-1) ** (i + k) * np.linalg.det(X[np.ix_(rows, cols)])
    return c


def _ascend(space: SpaceSpec, X: np.ndarray, max_sweeps: int, tol: float) -> tuple[np.ndarray, float, int]:
    det = abs(np.linalg.det(X))
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        prev = det
        for i in range(space.dim):
            c = _cofactor(X, i)
            if not np.any(c):
                # singular start: any direction outside the span of the others
                c = np.linalg.svd(np.delete(X, i, axis=1).T)[2][-1]
            X[:, i] = dual_map(space, c)
        det = abs(np.linalg.det(X))
        if det <= prev * (1 + tol) and sweeps > 1:
            break
    return X, det, sweeps


def auerbach_basis(space: SpaceSpec, opts: OptimizerOptions | None = None) -> AuerbachBasis:
    """Auerbach basis by determinant maximisation over the unit sphere.

    Each cyclic step fixes all vectors but one; the determinant is then a
    linear functional (the cofactor vector) of the free vector, maximised
    exactly by ``dual_map``.  At a point where every vector is such a
    maximiser, the cofactor functionals divided by the determinant have dual
    norm one and are biorthogonal to the vectors.  Plain l_p spaces return the
    canonical basis, which is always Auerbach there.
    """
    opts = opts or OptimizerOptions()
    d = space.dim
    if space.is_canonical_lp:
        I = np.eye(d)
        return AuerbachBasis(space, I.copy(), I.copy(), 1.0, 0)

    rng = substream(opts.seed, "auerbach", d)
    restarts = opts.n_restarts(8)
    tol = max(opts.tol, 1e-15)
    best = None
    for r in range(restarts):
        if r == 0:
            X = np.eye(d)
            X /= np.array([norm(space, X[:, i]) for i in range(d)])
        else:
            X = random_unit_vectors(space, d, rng).T
        X, det, sweeps = _ascend(space, X, opts.max_sweeps, tol)
        # prefer the earliest restart among numerically tied determinants
        if best is None or det > best[1] * (1 + 1e-12):
            best = (X.copy(), det, sweeps)

    X, det, sweeps = best
    duals = np.linalg.inv(X)
    basis = AuerbachBasis(space, X.T.copy(), duals, float(det), sweeps)
    if not basis.is_valid(1e-8):
        raise ConvergenceError(
            f"determinant ascent did not reach an Auerbach point: {basis.defects()}", best=basis
        )
    return basis


@dataclass(frozen=True)
class TensorAuerbach:
    """Elementary tensors of per-mode Auerbach bases and their dual functionals.

    ``vectors[k]`` and ``duals[k]`` are dense coordinate arrays of shape
    ``dims``; ``index[k]`` is the multi-index ``(k_1, ..., k_n)``.
    """

    modes: tuple[SpaceSpec, ...]
    alpha: str
    index: list[tuple[int, ...]]
    vectors: np.ndarray
    duals: np.ndarray
    norms: np.ndarray
    dual_norms: np.ndarray

    def biorthogonality_defect(self) -> float:
        N = len(self.index)
        G = self.duals.reshape(N, -1) @ self.vectors.reshape(N, -1).T
        return float(np.abs(G - np.eye(N)).max())


def tensor_auerbach(bases: list[AuerbachBasis], alpha="injective") -> TensorAuerbach:
    """Elementary tensors ``x^1_{k_1} (x) ... (x) x^n_{k_n}`` with their duals.

    Norms are the products of factor norms, which is what any reasonable
    cross norm assigns to elementary tensors and elementary functionals.
    """
    from .cross_norms import NormKind

    kind = NormKind.parse(alpha)
    modes = tuple(b.space for b in bases)
    if not bases:
        raise ValueError("need at least one basis")
    if kind is NormKind.HILBERT and not all(m.is_euclidean for m in modes):
        raise ValueError("the Hilbert cross norm needs Euclidean modes")
    dims = [m.dim for m in modes]
    index = [tuple(int(i) for i in k) for k in np.ndindex(*dims)]
    vecs, duals, norms, dnorms = [], [], [], []
    for k in index:
        xs = [b.vectors[i] for b, i in zip(bases, k)]
        fs = [b.duals[i] for b, i in zip(bases, k)]
        vecs.append(_outer(xs))
        duals.append(_outer(fs))
        norms.append(math.prod(norm(m, x) for m, x in zip(modes, xs)))
        dnorms.append(math.prod(dual_norm(m, f) for m, f in zip(modes, fs)))
    return TensorAuerbach(
        modes, kind.value, index, np.array(vecs), np.array(duals), np.array(norms), np.array(dnorms)
    )


def _outer(vs) -> np.ndarray:
    out = np.asarray(vs[0], dtype=float)
    for v in vs[1:]:
        out = np.multiply.outer(out, v)
    return out


__all__ = [
    "AuerbachBasis",
    "ConvergenceError",
    "DegenerateInputError",
    "Functional",
    "SpaceSpec",
    "TensorAuerbach",
    "Vector",
    "auerbach_basis",
    "conjugate_exponent",
    "dual_map",
    "dual_norm",
    "lp_norm",
    "lp_norming",
    "norm",
    "norming_functional",
    "random_unit_vectors",
    "tensor_auerbach",
]
