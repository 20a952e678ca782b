"""Projective-norm search in plain coordinates.

Column generation over unit pure tensors: a linear program picks the cheapest
signed combination of the current dictionary, its dual ``Y`` is priced by
alternating maximisation, and violating atoms join the dictionary.  Every few
rounds the support is refined continuously ("sliding") by an equality
constrained local solve, whose Lagrange multipliers give a second, usually
much better, dual form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import _injective as inj
from .cp_fit import _khatri_rao, cp_to_tensor
from .normed_space import conjugate_exponent, lp_norm, lp_norming
from .tensor_core import outer

PRICE_TOL = 1e-9


@dataclass
class SearchResult:
    atoms: list
    A: np.ndarray
    coeffs: np.ndarray
    value: float
    duals: list = field(default_factory=list)  # (name, Y)
    rounds: int = 0
    converged: bool = False


def _unit_atom(xs, ps):
    return tuple(x / lp_norm(x, p) for x, p in zip(xs, ps))


def _cp_jacobian(Fs):
    dims = [F.shape[0] for F in Fs]
    m = Fs[0].shape[1]
    n = len(Fs)
    blocks = []
    for j in range(n):
        K = _khatri_rao([Fs[k] for k in range(n) if k != j])
        J = np.einsum("ia,br->ibar", np.eye(dims[j]), K)
        J = J.reshape((dims[j],) + tuple(d for k, d in enumerate(dims) if k != j) + (dims[j] * m,))
        blocks.append(np.moveaxis(J, 0, j).reshape(-1, dims[j] * m))
    return np.hstack(blocks)


def slide(T, ps, Fs, maxiter=500):
    """Locally minimise the decomposition cost of ``Fs`` keeping the sum equal to T.

    Minimises the balanced surrogate sum_k sum_j ||x_kj||^n / n, whose
    minimisers coincide with those of sum_k prod_j ||x_kj|| (AM-GM with free
    rescaling within a term).  Returns ``(Fs, cost, Y)`` where ``Y`` solves
    the stationarity condition ``J^T Y = grad`` in the least-squares sense.
    """
    dims = T.shape
    n = T.ndim
    m = Fs[0].shape[1]
    sizes = [d * m for d in dims]
    target = T.ravel()

    def unpack(x):
        out, off = [], 0
        for d, s in zip(dims, sizes):
            out.append(x[off : off + s].reshape(d, m))
            off += s
        return out

    def objective(x):
        val = 0.0
        grads = []
        for F, p in zip(unpack(x), ps):
            nr = lp_norm(F.T, p)
            val += float(np.sum(nr**n)) / n
            g = np.zeros_like(F)
            live = nr > 0
            if np.any(live):
                g[:, live] = (lp_norming(F.T[live], p) * (nr[live] ** (n - 1))[:, None]).T
            grads.append(g.ravel())
        return val, np.concatenate(grads)

    x0 = np.concatenate([F.ravel() for F in Fs])
    sol = optimize.minimize(
        objective, x0, jac=True, method="SLSQP",
        constraints=[{"type": "eq", "fun": lambda x: cp_to_tensor(unpack(x)).ravel() - target,
                      "jac": lambda x: _cp_jacobian(unpack(x))}],
        options={"ftol": 1e-15, "maxiter": maxiter},
    )
    Fs = unpack(sol.x)
    cost = float(np.sum(np.prod([lp_norm(F.T, p) for F, p in zip(Fs, ps)], axis=0)))
    _, grad = objective(sol.x)
    Y = np.linalg.lstsq(_cp_jacobian(Fs).T, grad, rcond=None)[0].reshape(dims)
    return Fs, cost, Y


class _Dictionary:
    def __init__(self, T, ps):
        self.T = T
        self.ps = ps
        self.qs = [conjugate_exponent(p) for p in ps]
        self.atoms = []
        self.cols = []
        self.seen = set()

    def add(self, atoms) -> int:
        added = 0
        for a in atoms:
            key = tuple(np.round(np.concatenate(a), 9))
            if key in self.seen:
                continue
            self.seen.add(key)
            self.atoms.append(tuple(a))
            self.cols.append(outer(a).ravel())
            added += 1
        return added

    def drop_last(self, count):
        for a in self.atoms[-count:]:
            self.seen.discard(tuple(np.round(np.concatenate(a), 9)))
        del self.atoms[-count:]
        del self.cols[-count:]

    def solve(self):
        """Cheapest signed combination of the dictionary, or None if HiGHS gives up."""
        A = np.column_stack(self.cols)
        K = A.shape[1]
        for options in ({"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
                        {"presolve": False}):
            res = optimize.linprog(
                np.ones(2 * K), A_eq=np.hstack([A, -A]), b_eq=self.T.ravel(), bounds=(0, None),
                method="highs", options=options,
            )
            if res.status == 0:
                c = res.x[:K] - res.x[K:]
                return A, c, float(res.fun), np.asarray(res.eqlin.marginals).reshape(self.T.shape)
        return None

    def price(self, Y, rng, warm=(), max_sweeps=200):
        """Unit pure tensors maximising ``|<Y, x_1 (x) ... (x) x_n>|``, best first."""
        starts = inj.default_starts(Y, self.qs, 8, 8, rng)
        for j in range(Y.ndim):
            starts[j] = np.vstack([starts[j]] + [w[j][None] for w in warm])
        values, xs, _ = inj.alternating_max(Y, self.qs, starts, max_sweeps, 1e-12)
        order = np.argsort(-values, kind="stable")
        return float(values[order[0]]), [tuple(x[i] for x in xs) for i in order if values[i] > 1 + PRICE_TOL]


def column_generation(T, ps, seed_atoms, rng, max_rounds=200, per_round=8, slide_every=3):
    dims = T.shape
    n = T.ndim
    D = _Dictionary(T, ps)
    D.add([tuple(np.eye(d)[i] for d, i in zip(dims, idx)) for idx in np.ndindex(*dims)])
    D.add(seed_atoms)
    smooth = all(1 < p < np.inf or d == 1 for p, d in zip(ps, dims))
    A, c, value, Y = D.solve()  # coordinate atoms alone always give a feasible, well-posed LP
    duals = []
    converged = False
    rounds = 0
    warm = []

    def extend(atoms):
        nonlocal A, c, value, Y
        added = D.add(atoms)
        if not added:
            return False
        sol = D.solve()
        if sol is None:  # numerically troublesome atoms: forget them
            D.drop_last(added)
            return False
        A, c, value, Y = sol
        return True

    while rounds < max_rounds and not converged:
        rounds += 1
        vmax, violators = D.price(Y, rng, warm)
        if vmax <= 1 + PRICE_TOL or not extend(violators[:per_round]):
            converged = vmax <= 1 + PRICE_TOL
            break
        warm = violators[:4]
        if smooth and rounds % slide_every == 0:
            S = np.flatnonzero(np.abs(c) > 1e-12 * np.abs(c).max())
            S = S[np.argsort(-np.abs(c[S]), kind="stable")][: 2 * max(dims) + 4]
            scale = np.abs(c[S]) ** (1.0 / n)
            Fs = [np.column_stack([D.atoms[k][j] for k in S]) * scale for j in range(n)]
            Fs[0] = Fs[0] * np.sign(c[S])
            Fs, _, Yk = slide(T, ps, Fs)
            norms = np.array([lp_norm(F.T, p) for F, p in zip(Fs, ps)])
            extend([_unit_atom([F[:, r] for F in Fs], ps) for r in np.flatnonzero(np.all(norms > 0, axis=0))])
            kmax, kviol = D.price(Yk, rng)
            duals.append(("kkt_multipliers", Yk))
            if kmax <= 1 + PRICE_TOL:
                converged = True
            else:
                extend(kviol[:per_round])
    duals.append(("lp_dual", Y))
    return SearchResult(D.atoms, A, c, value, duals, rounds, converged)


def polish_support(A, c, b):
    """Re-solve on the support for an exact fit; keep it only if it is not costlier."""
    S = np.flatnonzero(np.abs(c) > 1e-13 * max(1.0, np.abs(c).max()))
    if len(S) == 0:
        return c
    cs = np.linalg.lstsq(A[:, S], b, rcond=None)[0]
    out = np.zeros_like(c)
    out[S] = cs
    if np.linalg.norm(A @ out - b) <= np.linalg.norm(A @ c - b) and np.abs(out).sum() <= np.abs(c).sum() * (1 + 1e-12):
        return out
    return c
