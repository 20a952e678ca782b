"""Exact-fit search for m-term decompositions (CP fits) in plain coordinates.

Used by the rank search and as one source of cheap projective-norm upper
bounds.  Fits are alternating least squares, optionally finished with a
Levenberg-Marquardt polish, then rebalanced so that every term spreads its
norm evenly over the factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .normed_space import lp_norm


@dataclass
class FitResult:
    factors: list[np.ndarray]  # F_j of shape (d_j, m)
    residual: float
    iterations: int
    converged: bool
    max_factor_norm: float
    blew_up: bool = False
    diverging: bool = False
    restart: int = 0
    history: list[tuple[int, float, float]] = field(default_factory=list)  # (iter, residual, max term norm)

    @property
    def terms(self) -> int:
        return self.factors[0].shape[1]

    @property
    def border_suspected(self) -> bool:
        return not self.converged and (self.blew_up or self.diverging)


def cp_to_tensor(factors: list[np.ndarray]) -> np.ndarray:
    """``sum_r F_1[:, r] (x) ... (x) F_n[:, r]``."""
    dims = tuple(F.shape[0] for F in factors)
    m = factors[0].shape[1]
    if m == 0:
        return np.zeros(dims)
    out = factors[0]
    for F in factors[1:]:
        out = np.einsum("ar,br->abr", out.reshape(-1, m), F).reshape(-1, m)
    return out.sum(axis=1).reshape(dims)


def _khatri_rao(mats: list[np.ndarray]) -> np.ndarray:
    m = mats[0].shape[1]
    out = mats[0]
    for M in mats[1:]:
        out = np.einsum("ar,br->abr", out, M).reshape(-1, m)
    return out


def _unfold(T: np.ndarray, j: int) -> np.ndarray:
    return np.moveaxis(T, j, 0).reshape(T.shape[j], -1)


def _als_step(T, factors, j):
    others = [factors[k] for k in range(T.ndim) if k != j]
    G = np.ones((factors[0].shape[1],) * 2)
    for F in others:
        G = G * (F.T @ F)
    rhs = _unfold(T, j) @ _khatri_rao(others)
    factors[j] = np.linalg.lstsq(G, rhs.T, rcond=1e-13)[0].T


def _jennrich_init(T, m, rng):
    """Simultaneous-diagonalisation start for order-3 tensors with m <= two largest dims."""
    if T.ndim != 3:
        return None
    a, b, c = np.argsort(T.shape, kind="stable")[::-1]
    if m > T.shape[b]:
        return None
    Tm = np.transpose(T, (a, b, c))
    w1, w2 = rng.standard_normal((2, Tm.shape[2]))
    M1, M2 = Tm @ w1, Tm @ w2
    Ua = np.linalg.svd(_unfold(Tm, 0), full_matrices=False)[0][:, :m]
    Ub = np.linalg.svd(_unfold(Tm, 1), full_matrices=False)[0][:, :m]
    C1, C2 = Ua.T @ M1 @ Ub, Ua.T @ M2 @ Ub
    try:
        la, va = np.linalg.eig(C1 @ np.linalg.pinv(C2))
        lb, vb = np.linalg.eig(C1.T @ np.linalg.pinv(C2.T))
    except np.linalg.LinAlgError:
        return None
    # both eigenproblems share the eigenvalues c_r.w1 / c_r.w2; pair columns by them
    ia = np.lexsort((la.imag, la.real))
    ib = np.lexsort((lb.imag, lb.real))
    A = (Ua @ va[:, ia]).real
    B = (Ub @ vb[:, ib]).real
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        return None
    C = np.linalg.lstsq(_khatri_rao([A, B]), _unfold(Tm, 2).T, rcond=1e-13)[0].T
    factors = [None] * 3
    factors[a], factors[b], factors[c] = A, B, C
    return factors


def _polish(T, factors, max_nfev):
    dims = T.shape
    m = factors[0].shape[1]
    sizes = [d * m for d in dims]
    target = T.ravel()

    def unpack(x):
        out, off = [], 0
        for d, s in zip(dims, sizes):
            out.append(x[off : off + s].reshape(d, m))
            off += s
        return out

    def resid(x):
        return cp_to_tensor(unpack(x)).ravel() - target

    def jac(x):
        Fs = unpack(x)
        blocks = []
        for j in range(len(dims)):
            others = [Fs[k] for k in range(len(dims)) if k != j]
            K = _khatri_rao(others)  # (prod others, m)
            # derivative of vec(T) wrt F_j[i, r] is e_i (x) (others' column r) placed at mode j
            J = np.einsum("ia,br->ibar", np.eye(dims[j]), K).reshape(dims[j], -1, dims[j] * m)
            J = J.reshape((dims[j],) + tuple(d for k, d in enumerate(dims) if k != j) + (-1,))
            J = np.moveaxis(J, 0, j).reshape(-1, dims[j] * m)
            blocks.append(J)
        return np.hstack(blocks)

    x0 = np.concatenate([F.ravel() for F in factors])
    if len(target) < len(x0):
        method = "trf"
    else:
        method = "lm"
    sol = optimize.least_squares(
        resid, x0, jac=jac, method=method, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev
    )
    return unpack(sol.x)


def rebalance(factors: list[np.ndarray], ps=None) -> list[np.ndarray]:
    """Rescale each term so all its factors carry the same norm; the product is unchanged."""
    n = len(factors)
    ps = ps or [2.0] * n
    norms = np.array([lp_norm(F.T, p) for F, p in zip(factors, ps)])  # (n, m)
    out = [F.copy() for F in factors]
    for r in range(factors[0].shape[1]):
        if np.any(norms[:, r] == 0):
            for F in out:
                F[:, r] = 0.0
            continue
        target = math.exp(np.log(norms[:, r]).mean())
        for j in range(n):
            out[j][:, r] *= target / norms[j, r]
    return out


def _max_factor_norm(factors) -> float:
    return float(max(np.sqrt((F * F).sum(axis=0)).max(initial=0.0) for F in factors))


def _max_term_norm(factors) -> float:
    norms = np.prod([np.sqrt((F * F).sum(axis=0)) for F in factors], axis=0)
    return float(norms.max(initial=0.0))


def fit_once(T, m, factors, max_iters=2000, tol=1e-9, blowup_cap=None, polish=True, restart=0):
    """ALS from the given start, then an optional least-squares polish."""
    scale = float(np.linalg.norm(T))
    target = tol * scale
    cap = blowup_cap if blowup_cap is not None else 1e6 * scale ** (1.0 / T.ndim)
    factors = [np.array(F, dtype=float) for F in factors]
    history = []
    res = float(np.linalg.norm(cp_to_tensor(factors) - T))
    blew_up = False
    it = 0
    for it in range(1, max_iters + 1):
        for j in range(T.ndim):
            _als_step(T, factors, j)
        if it % 10 == 0 or it == max_iters:
            res = float(np.linalg.norm(cp_to_tensor(factors) - T))
            history.append((it, res, _max_term_norm(factors)))
            if not np.isfinite(res) or _max_factor_norm(factors) > cap:
                blew_up = True
                break
            if res <= target:
                break
            if len(history) > 10 and history[-11][1] - res <= 1e-9 * res:
                break  # stationary: a genuine local minimum, not a swamp
    if not blew_up and res > target and polish and res <= 1e-3 * scale:
        polished = _polish(T, factors, max_nfev=200 * (1 + sum(T.shape) * m))
        pres = float(np.linalg.norm(cp_to_tensor(polished) - T))
        if pres < res:
            factors, res = polished, pres
    big = _max_factor_norm(factors) if not blew_up else float("inf")
    converged = res <= target and np.isfinite(res)
    diverging = False
    if not converged and len(history) >= 4:
        mid = history[len(history) // 2]
        end = history[-1]
        # residual still creeping down while terms keep growing past the tensor
        # itself: the border-rank signature
        diverging = end[1] <= 0.95 * mid[1] and end[2] >= 1.05 * mid[2] and end[2] >= 2 * scale
    if blew_up:
        diverging = True
    return FitResult(factors, res, it, converged, big, blew_up, diverging, restart, history)


def fit_rank(T, m, rng, restarts=8, max_iters=2000, tol=1e-9, blowup_cap=None, ps=None):
    """Best of several restarts of an exact m-term fit; stops at the first exact one.

    Restart 0 uses a simultaneous-diagonalisation start when available.
    Among failures the smallest residual wins, ties to the earliest restart.
    A fit that never converges is flagged ``diverging`` when any restart showed
    the border-rank signature.
    """
    T = np.asarray(T, dtype=float)
    dims = T.shape
    if m == 0:
        return FitResult([np.zeros((d, 0)) for d in dims], float(np.linalg.norm(T)), 0,
                         not np.any(T), 0.0)
    best = None
    suspicious = False
    for r in range(restarts):
        start = _jennrich_init(T, m, rng) if r == 0 else None
        if start is None:
            start = [rng.standard_normal((d, m)) for d in dims]
        out = fit_once(T, m, start, max_iters, tol, blowup_cap, restart=r)
        suspicious |= out.diverging
        if best is None or out.residual < best.residual:
            best = out
        if out.converged:
            best = out
            break
    best.factors = rebalance(best.factors, ps) if best.converged else best.factors
    if not best.converged:
        best.diverging = suspicious
    return best
