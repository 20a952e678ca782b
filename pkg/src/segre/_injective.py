"""Lower and upper bounds for sup |<T, phi_1 (x) ... (x) phi_n>| over dual unit balls.

Everything here works in plain coordinates: mode j carries the l_{p_j} norm
and the functionals range over the l_{q_j} unit ball, 1/p + 1/q = 1.  The
same routines compute operator norms of multilinear forms by passing the
conjugate exponents.
"""

from __future__ import annotations

import itertools
import math
import string

import numpy as np

from .normed_space import conjugate_exponent, lp_norm, lp_norming

_LETTERS = string.ascii_lowercase


def _contract_all_but(T: np.ndarray, phis: list[np.ndarray], j: int) -> np.ndarray:
    """Batched contraction of T with phis[k][r] for k != j; returns (R, d_j)."""
    n = T.ndim
    idx = _LETTERS[:n]
    operands = [T]
    subs = [idx]
    for k in range(n):
        if k != j:
            operands.append(phis[k])
            subs.append("Z" + idx[k])
    spec = ",".join(subs) + "->Z" + idx[j]
    return np.einsum(spec, *operands, optimize=False)


def evaluate_forms(T: np.ndarray, phis: list[np.ndarray]) -> np.ndarray:
    """``<T, phi_1[r] (x) ... (x) phi_n[r]>`` for every row r."""
    g = _contract_all_but(T, phis, 0)
    return np.einsum("Za,Za->Z", g, phis[0])


def alternating_max(T, ps, starts, max_sweeps=500, tol=1e-13):
    """Block-coordinate ascent over the product of dual unit balls.

    Each step replaces phi_j by the norming functional of the contraction of T
    with the other blocks, which is the exact maximiser of that block.  The
    objective is therefore non-decreasing; this is asserted at every step.
    Returns ``(values, phis, sweeps)`` with one row per start.
    """
    n = T.ndim
    phis = [np.array(s, dtype=float) for s in starts]
    values = np.abs(evaluate_forms(T, phis))
    scale = max(float(np.abs(T).max()), 1e-300)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        before = values.copy()
        for j in range(n):
            g = _contract_all_but(T, phis, j)
            new = lp_norm(g, ps[j])
            live = new > 1e-300 * scale
            if np.any(live):
                phis[j][live] = lp_norming(g[live], ps[j])
            # |<g, phi_old>| <= ||g||_p ||phi_old||_q = ||g||_p
            assert np.all(new >= values * (1 - 1e-10) - 1e-14 * scale), "ascent step decreased"
            values = np.where(live, new, values)
        gain = (values - before) / np.maximum(values, 1e-300)
        if sweeps > 1 and gain.max() <= tol:
            break
    return values, phis, sweeps


def default_starts(T, ps, n_random, n_flat, rng):
    """Random dual-unit starts plus starts built from flattening singular vectors."""
    n = T.ndim
    qs = [conjugate_exponent(p) for p in ps]
    starts = []
    for j in range(n):
        G = rng.standard_normal((n_random, T.shape[j]))
        starts.append(G / lp_norm(G, qs[j])[:, None])
    if n_flat > 0:
        lefts = []
        for k in range(n):
            U = np.linalg.svd(np.moveaxis(T, k, 0).reshape(T.shape[k], -1), full_matrices=False)[0]
            lefts.append(U)
        for i in range(n_flat):
            j = i % n
            t = (i // n) % lefts[j].shape[1]
            sign = -1.0 if (i // (n * lefts[j].shape[1])) % 2 else 1.0
            for k in range(n):
                u = lefts[k][:, t if k == j else 0] * (sign if k == j else 1.0)
                starts[k] = np.vstack([starts[k], lp_norming(u[None, :], ps[k])])
    return starts


# -- certified upper bounds ----------------------------------------------------------


def _vertices(p: float, d: int) -> np.ndarray | None:
    """Vertices (up to sign) of the dual unit ball of l_p^d when it is a polytope."""
    if d == 1:
        return np.ones((1, 1))
    if p == 1:
        signs = np.array(list(itertools.product([1.0, -1.0], repeat=d - 1)))
        return np.hstack([np.ones((len(signs), 1)), signs])
    if math.isinf(p):
        return np.eye(d)
    return None


def _l2_comparison(p: float, d: int) -> float:
    """sup of ||phi||_2 over the l_q unit ball (q conjugate to p)."""
    q = conjugate_exponent(p)
    if math.isinf(q):
        return math.sqrt(d)
    return d ** max(0.0, 0.5 - 1.0 / q)


def spectral_norms(M: np.ndarray) -> np.ndarray:
    """Largest singular value of each matrix in a stack (..., a, b)."""
    if M.shape[-1] == 1 or M.shape[-2] == 1:
        return np.sqrt((M * M).sum(axis=(-2, -1)))
    return np.linalg.svd(M, compute_uv=False)[..., 0]


def flattening_bound(T: np.ndarray) -> float:
    """min over modes of the spectral norm of the flattening (Euclidean modes)."""
    return float(
        min(spectral_norms(np.moveaxis(T, k, 0).reshape(T.shape[k], -1)) for k in range(T.ndim))
    )


def _box_radius(H, slices):
    rho = np.zeros(len(H))
    for sl in slices:
        rho += np.sqrt((H[:, sl] ** 2).sum(axis=1))
    return rho


def branch_and_bound(T, ps, lower, upper0, rtol=1e-9, budget=200_000):
    """Branch and bound for the injective norm of T over l_{p_j} modes, n >= 2.

    Two Euclidean modes (the largest) are kept and handled exactly by a
    spectral norm; without two Euclidean modes the largest mode is kept and
    handled by the closed form ``||.||_p``.  The other modes are swept over the
    unit spheres of their dual norms, parametrised by boxes on the faces of
    the cube (up to sign, which the objective ignores).

    Two bounds are kept per box and the smaller one is used:

    * Convexity: on the face plane, ``v -> g(v_1, ..., v_k)`` (a norm of a
      multi-affine expression) is convex in each block and multi-affine across
      blocks, hence at most its largest value over box vertices.  Rescaling to
      the sphere costs at most ``max_k ||v_k|| / <v_k, psi>`` per block, with
      ``psi`` the norming functional of the box centre; this is second order
      in the box size for smooth norms.
    * Lipschitz (all swept modes Euclidean): radial projection from the cube
      surface is 1-Lipschitz and the objective is Lipschitz with constant
      ``eps(T)`` in the sum of block distances, so ``g(centre) + U sum rho_j``
      for any certified bound U.

    Returns ``(upper, best_lower, evaluations, finished)``; the upper bound is
    valid even when the budget runs out.
    """
    n = T.ndim
    dims = T.shape
    eucl = [j for j in range(n) if ps[j] == 2.0]
    if len(eucl) >= 2:
        kept = sorted(sorted(eucl, key=lambda j: (dims[j], j))[-2:])
    else:
        kept = [max(range(n), key=lambda j: (dims[j], j))]
    swept = [j for j in range(n) if j not in kept]
    Tm = np.transpose(T, swept + kept)
    sdims = [dims[j] for j in swept]
    sqs = [conjugate_exponent(ps[j]) for j in swept]
    kept_p = ps[kept[0]]
    lipschitz = all(q == 2.0 for q in sqs)
    slices = []
    off = 0
    for d in sdims:
        slices.append(slice(off, off + d - 1))
        off += d - 1
    D = off
    signs = np.array(list(itertools.product([-1.0, 1.0], repeat=D))).reshape(-1, D)
    nv = len(signs)

    def lift(P, F, normalise=True):
        vs = []
        for s, (d, sl) in enumerate(zip(sdims, slices)):
            u = P[:, sl]
            v = np.empty((len(P), d))
            for f in range(d):
                mask = F[:, s] == f
                if np.any(mask):
                    v[mask] = np.insert(u[mask], f, 1.0, axis=1)
            vs.append(v / lp_norm(v, sqs[s])[:, None] if normalise else v)
        return vs

    def g_of(xs):
        M = Tm
        for s, x in enumerate(xs):
            M = np.tensordot(x, M, axes=([1], [0])) if s == 0 else np.einsum("Zi,Zi...->Z...", x, M)
        if len(kept) == 2:
            return spectral_norms(M)
        return lp_norm(M, kept_p)

    def evaluate(C, H, F):
        xc = lift(C, F)
        gc = g_of(xc)
        if D == 0:
            return gc, gc, gc
        P = (C[:, None, :] + H[:, None, :] * signs[None]).reshape(-1, D)
        vv = lift(P, np.repeat(F, nv, axis=0), normalise=False)
        xv = [v / lp_norm(v, q)[:, None] for v, q in zip(vv, sqs)]
        gv = g_of(xv).reshape(-1, nv).max(axis=1)
        factor = np.ones(len(C))
        for v, x_c, q, d in zip(vv, xc, sqs, sdims):
            psi = lp_norming(x_c, q)
            v = v.reshape(len(C), nv, d)
            dots = np.einsum("Zvi,Zi->Zv", v, psi)
            ratio = np.where(dots > 0, lp_norm(v.reshape(-1, d), q).reshape(len(C), nv) / np.where(dots > 0, dots, 1.0), np.inf)
            factor *= ratio.max(axis=1)
        return gc, gv, gv * factor

    faces = np.array(list(itertools.product(*[range(d) for d in sdims])), dtype=int).reshape(-1, len(sdims))
    C = np.zeros((len(faces), D))
    H = np.ones((len(faces), D))
    F = faces
    g, gv, conv = evaluate(C, H, F)
    evals = len(C) * (1 + nv)
    best = max(float(lower), float(g.max()), float(gv.max()))
    L = float(upper0)
    pruned = 0.0
    finished = False
    rho = _box_radius(H, slices)
    while True:
        bounds = np.minimum(g + L * rho, conv) if lipschitz else conv
        top = float(bounds.max()) if len(bounds) else 0.0
        L = min(L, max(pruned, top, best))
        keep = bounds > best * (1 + rtol) + 1e-300
        if np.any(~keep):
            pruned = max(pruned, float(bounds[~keep].max()))
        C, H, F, g, conv, rho, bounds = (a[keep] for a in (C, H, F, g, conv, rho, bounds))
        if len(C) == 0:
            finished = True
            break
        # best first, in batches: split only the boxes in the upper half of the gap
        split = bounds >= best + 0.5 * (float(bounds.max()) - best)
        ns = int(split.sum())
        if D == 0 or evals + 2 * ns * (1 + nv) > budget:
            pruned = max(pruned, float(bounds.max()))
            break
        Cs, Hs, Fs = C[split], H[split].copy(), F[split]
        k = np.argmax(Hs, axis=1)
        rows = np.arange(ns)
        Hs[rows, k] /= 2
        CL = Cs.copy()
        CR = Cs.copy()
        CL[rows, k] -= Hs[rows, k]
        CR[rows, k] += Hs[rows, k]
        Cn = np.vstack([CL, CR])
        Hn = np.vstack([Hs, Hs])
        Fn = np.vstack([Fs, Fs])
        gn, gvn, convn = evaluate(Cn, Hn, Fn)
        evals += len(Cn) * (1 + nv)
        best = max(best, float(gn.max()), float(gvn.max()))
        stay = ~split
        C = np.vstack([C[stay], Cn])
        H = np.vstack([H[stay], Hn])
        F = np.vstack([F[stay], Fn])
        g = np.concatenate([g[stay], gn])
        conv = np.concatenate([conv[stay], convn])
        rho = np.concatenate([rho[stay], _box_radius(Hn, slices)])
    upper = min(float(upper0), max(pruned, best))
    return upper, best, evals, finished


def injective_upper(T, ps, lower=0.0, rtol=1e-9, budget=200_000, vertex_budget=4096):
    """Certified upper bound on the injective norm of T (plain coordinates).

    Polyhedral dual balls (p = 1, p = inf, dim 1) are enumerated vertex by
    vertex.  What remains is exact in closed form for one mode or two
    Euclidean modes, and goes to branch and bound otherwise.  With no budget
    for that, smooth modes are compared to l_2 instead (factor sup ||phi||_2
    over the dual ball) and the Euclidean flattening bound is used.
    Returns ``(upper, info)``.
    """
    T = np.asarray(T, dtype=float)
    n = T.ndim
    coord = float(np.abs(T).sum())  # cost of the coordinate decomposition
    if coord == 0:
        return 0.0, {"method": "zero", "exact": True}
    if n == 1:
        return float(lp_norm(T, ps[0])), {"method": "closed_form", "exact": True}

    poly = [j for j in range(n) if _vertices(ps[j], T.shape[j]) is not None]
    counts = {j: len(_vertices(ps[j], T.shape[j])) for j in poly}
    # never enumerate every mode: the last polyhedral one is solved in closed form
    if len(poly) == n:
        poly = sorted(poly, key=lambda j: (counts[j], j))[:-1]
    while poly and math.prod(counts[j] for j in poly) > vertex_budget:
        poly.remove(max(poly, key=lambda j: (counts[j], j)))
    rest = [j for j in range(n) if j not in poly]
    rps = [ps[j] for j in rest]

    # contract the enumerated modes with every vertex combination
    R = np.transpose(T, poly + rest)
    combos = 1
    for k, j in enumerate(poly):
        V = _vertices(ps[j], T.shape[j])
        if k == 0:
            R = np.tensordot(V, R, axes=([1], [0]))
        else:
            R = np.einsum("vi,Zi...->Zv...", V, R).reshape((-1,) + R.shape[2:])
        combos *= len(V)
    if not poly:
        R = R[None]

    info = {"method": "", "exact": False, "enumerated_modes": poly, "vertex_combos": combos}
    if len(rest) == 1:
        val = float(lp_norm(R.reshape(len(R), -1), rps[0]).max())
        info.update(method="vertex+closed_form" if poly else "closed_form", exact=True)
        return min(val, coord), info
    if len(rest) == 2 and rps == [2.0, 2.0]:
        val = float(spectral_norms(R).max())
        info.update(method="vertex+spectral" if poly else "spectral", exact=True)
        return min(val, coord), info

    factor = math.prod(_l2_comparison(p, T.shape[j]) for j, p in zip(rest, rps) if p != 2.0)
    flat = factor * np.min(
        [spectral_norms(np.moveaxis(R, k, 1).reshape(len(R), R.shape[k], -1)) for k in range(1, R.ndim)], axis=0
    )
    val = float(flat.max())
    info["method"] = "flattening"
    if factor != 1.0:
        info["l2_comparison_factor"] = factor
    if budget > 0:
        ubs, evals, finished = [], 0, True
        share = max(budget // len(R), 1000)
        for r in range(len(R)):
            ub, _, e, fin = branch_and_bound(R[r], rps, lower, float(flat[r]), rtol, share)
            ubs.append(ub)
            evals += e
            finished &= fin
        info.update(method="vertex+branch_and_bound" if poly else "branch_and_bound",
                    evaluations=evals, finished=finished)
        val = min(val, max(ubs))
    if coord < val:
        info.update(method="coordinate_decomposition", exact=False)
        val = coord
    return val, info
