import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from segre import _injective as inj
from segre.cross_norms import (
    FormWitness,
    NormKind,
    UnsupportedNormError,
    Verdict,
    banach_mazur_bound,
    check_cross_norm_sandwich,
    compare_bounds,
    form_norm_upper,
    hilbert_norm,
    injective_norm,
    projective_norm,
)
from segre.normed_space import SpaceSpec, norm
from segre.options import OptimizerOptions
from segre.tensor_core import Decomposition, DenseTensor, decomposition_cost, materialize, outer, w_tensor

from .strategies import seeds, spaces

L2 = SpaceSpec.lp(2, 2.0)
EPS_W = 2 / math.sqrt(3)  # frozen from the grid oracle below


def _grid_injective_w(steps=241):
    """Brute force sup |W(x, y, z)| over unit circles in R^2 (angles in [0, pi))."""
    t = np.linspace(0, np.pi, steps)
    c, s = np.cos(t), np.sin(t)
    # W(x, y, z) = x1 y1 z2 + x1 y2 z1 + x2 y1 z1
    val = (c[:, None, None] * c[None, :, None] * s[None, None, :]
           + c[:, None, None] * s[None, :, None] * c[None, None, :]
           + s[:, None, None] * c[None, :, None] * c[None, None, :])
    return float(np.abs(val).max())


def _check_certificate(z, cert):
    assert cert.is_consistent()
    assert cert.reevaluate_lower(z) == pytest.approx(cert.lower, rel=1e-9, abs=1e-12)
    if cert.kind is NormKind.PROJECTIVE and isinstance(cert.upper_witness, Decomposition):
        assert decomposition_cost(cert.upper_witness) == pytest.approx(cert.upper, rel=1e-12)
        err = np.linalg.norm(materialize(cert.upper_witness).coords - z.coords)
        assert err <= 1e-8 * max(1.0, z.frobenius())


class TestInjective:
    def test_zero_tensor(self):
        c = injective_norm(DenseTensor((L2, L2), np.zeros((2, 2))))
        assert (c.lower, c.upper) == (0.0, 0.0)

    def test_diag_matrix(self):
        c = injective_norm(DenseTensor((L2, L2), np.diag([3.0, 1.0])))
        assert c.lower == pytest.approx(3.0, rel=1e-12)
        assert c.upper == pytest.approx(3.0, rel=1e-12)

    def test_w_tensor_matches_grid_oracle(self):
        assert _grid_injective_w() == pytest.approx(EPS_W, abs=1e-4)
        c = injective_norm(w_tensor())
        assert abs(c.lower - EPS_W) <= 1e-9
        assert abs(c.upper - EPS_W) <= 1e-6
        _check_certificate(w_tensor(), c)

    def test_witness_functionals_are_dual_unit(self):
        modes = (SpaceSpec.lp(3, 1.0), SpaceSpec.ellipsoid(np.diag([2.0, 1.0])), SpaceSpec.lp(2, 3.0))
        z = DenseTensor(modes, np.random.default_rng(0).standard_normal((3, 2, 2)))
        c = injective_norm(z)
        from segre.normed_space import dual_norm

        for m, f in zip(modes, c.lower_witness):
            assert dual_norm(m, f) == pytest.approx(1.0, abs=1e-10)
        _check_certificate(z, c)

    def test_linf_modes_exact_by_vertices(self):
        # on l_1 modes the dual ball is a cube, so the injective norm is the largest |entry| pattern
        modes = (SpaceSpec.lp(2, 1.0),) * 3
        T = np.random.default_rng(1).standard_normal((2, 2, 2))
        c = injective_norm(DenseTensor(modes, T))
        brute = max(abs(np.einsum("ijk,i,j,k->", T, *s))
                    for s in itertools.product(itertools.product((1.0, -1.0), repeat=2), repeat=3))
        assert c.upper == pytest.approx(brute, rel=1e-12)
        assert c.lower == pytest.approx(brute, rel=1e-12)

    def test_ascent_is_monotone(self):
        T = np.random.default_rng(2).standard_normal((3, 3, 3))
        ps = [2.0, 1.5, 3.0]
        starts = inj.default_starts(T, ps, 4, 4, np.random.default_rng(0))
        prev = np.abs(inj.evaluate_forms(T, starts))
        phis = starts
        for _ in range(10):
            vals, phis, _ = inj.alternating_max(T, ps, phis, max_sweeps=1)
            assert np.all(vals >= prev * (1 - 1e-12))
            prev = vals

    @given(st.lists(spaces(max_dim=3), min_size=2, max_size=3), seeds, st.floats(0.1, 10.0))
    def test_homogeneity_and_bracket(self, modes, seed, c):
        z = DenseTensor(tuple(modes), np.random.default_rng(seed).standard_normal([m.dim for m in modes]))
        a, b = injective_norm(z), injective_norm(z * c)
        assert a.lower <= a.upper * (1 + 1e-9)
        assert b.lower == pytest.approx(c * a.lower, rel=1e-10)
        assert b.upper == pytest.approx(c * a.upper, rel=1e-7)

    def test_orthogonal_invariance(self):
        rng = np.random.default_rng(4)
        T = rng.standard_normal((3, 3, 2))
        Qs = [np.linalg.qr(rng.standard_normal((d, d)))[0] for d in T.shape]
        R = np.einsum("abc,ia,jb,kc->ijk", T, *Qs)
        modes = (SpaceSpec.lp(3), SpaceSpec.lp(3), SpaceSpec.lp(2))
        a, b = injective_norm(DenseTensor(modes, T)), injective_norm(DenseTensor(modes, R))
        assert a.lower == pytest.approx(b.lower, rel=1e-8)


class TestProjective:
    def test_identity_matrix(self):
        c = projective_norm(DenseTensor((L2, L2), np.eye(2)))
        assert c.lower == pytest.approx(2.0, rel=1e-12)
        assert c.upper == pytest.approx(2.0, rel=1e-12)

    def test_l1_mode_additivity(self):
        # e1 (x) x + e2 (x) y with an l_1 first mode has norm ||x|| + ||y|| exactly
        X = SpaceSpec.lp(3, 3.0)
        x, y = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.3, -1.0])
        z = DenseTensor((SpaceSpec.lp(2, 1.0), X), np.stack([x, y]))
        c = projective_norm(z)
        expected = norm(X, x) + norm(X, y)
        assert c.lower == pytest.approx(expected, rel=1e-8)
        assert c.upper == pytest.approx(expected, rel=1e-8)
        _check_certificate(z, c)

    def test_l1_additivity_against_exhaustive_three_term_search(self):
        # dim 2 oracle: no three-term decomposition from a fine grid beats ||x|| + ||y||
        X = SpaceSpec.lp(2, 2.0)
        x, y = np.array([1.0, 0.5]), np.array([-0.2, 1.0])
        target = np.stack([x, y])
        best = norm(X, x) + norm(X, y)
        grid = [np.array([math.cos(t), math.sin(t)]) for t in np.linspace(0, np.pi, 25, endpoint=False)]
        for a, b in itertools.combinations(grid, 2):
            # first-mode factors a, b and e = remaining direction solve the fit exactly
            A = np.stack([a, b], axis=1)
            if abs(np.linalg.det(A)) < 1e-6:
                continue
            V = np.linalg.solve(A, target)  # rows: second-mode factors
            cost = sum(np.abs(A[:, k]).sum() * np.linalg.norm(V[k]) for k in range(2))
            assert cost >= best * (1 - 1e-12)

    def test_w_tensor(self):
        c = projective_norm(w_tensor())
        assert c.lower >= 3 * math.sqrt(3) / 2 - 1e-6
        assert c.upper - c.lower <= 1e-3
        _check_certificate(w_tensor(), c)

    def test_w_tensor_real_value_is_three(self):
        # B = W - e2 (x) e2 (x) e2 is the symmetric form Im((x1 + i x2)^3) of norm 1 and <B, W> = 3
        B = w_tensor().coords.copy()
        B[1, 1, 1] = -1.0
        nb, info = form_norm_upper(B, (L2,) * 3)
        assert nb == pytest.approx(1.0, rel=1e-6)
        c = projective_norm(w_tensor())
        assert c.lower == pytest.approx(3.0, rel=1e-8)
        assert c.upper == pytest.approx(3.0, rel=1e-12)

    def test_nuclear_norm_of_matrices(self, rng):
        for _ in range(20):
            M = rng.standard_normal(tuple(rng.integers(1, 7, size=2)))
            c = projective_norm(DenseTensor(tuple(SpaceSpec.lp(d) for d in M.shape), M))
            nuc = np.linalg.svd(M, compute_uv=False).sum()
            assert c.lower == pytest.approx(nuc, rel=1e-9)
            assert c.upper == pytest.approx(nuc, rel=1e-9)

    def test_mixed_modes_certificate(self):
        modes = (SpaceSpec.lp(2, 1.0), SpaceSpec.ellipsoid([[2.0, 0.5], [0.5, 1.0]]), SpaceSpec.lp(3, np.inf))
        z = DenseTensor(modes, np.random.default_rng(9).standard_normal((2, 2, 3)))
        c = projective_norm(z)
        _check_certificate(z, c)
        assert isinstance(c.lower_witness, FormWitness)
        assert c.gap <= 1e-6 * c.upper

    def test_homogeneity(self):
        z = DenseTensor((L2, SpaceSpec.lp(2, 1.0), L2), np.random.default_rng(3).standard_normal((2, 2, 2)))
        a, b = projective_norm(z), projective_norm(z * 7.5)
        assert b.upper == pytest.approx(7.5 * a.upper, rel=1e-8)
        assert b.lower == pytest.approx(7.5 * a.lower, rel=1e-6)


class TestHilbertAndSandwich:
    def test_hilbert_examples(self):
        assert hilbert_norm(DenseTensor((L2, L2), np.eye(2))) == pytest.approx(math.sqrt(2))
        assert hilbert_norm(w_tensor()) == pytest.approx(math.sqrt(3))
        x, y = np.array([1.0, 2.0]), np.array([-3.0, 0.5])
        assert hilbert_norm(DenseTensor((L2, L2), outer([x, y]))) == pytest.approx(
            np.linalg.norm(x) * np.linalg.norm(y))

    def test_hilbert_on_ellipsoid_uses_orthonormal_coordinates(self):
        E = SpaceSpec.ellipsoid(np.diag([4.0, 1.0]))
        z = DenseTensor((E, E), outer([np.array([0.5, 0.0]), np.array([0.0, 1.0])]))
        assert hilbert_norm(z) == pytest.approx(1.0)

    def test_hilbert_rejects_non_euclidean(self):
        with pytest.raises(UnsupportedNormError):
            hilbert_norm(DenseTensor((SpaceSpec.lp(2, 1.0), L2), np.eye(2)))

    def test_sandwich_identity(self):
        rep = check_cross_norm_sandwich(DenseTensor((L2, L2), np.eye(2)))
        assert [leg.verdict for leg in rep.legs] == [Verdict.HOLDS] * 3
        assert rep.injective.upper == pytest.approx(1.0)
        assert rep.hilbert == pytest.approx(math.sqrt(2))
        assert rep.projective.lower == pytest.approx(2.0)

    def test_sandwich_pure_tensor(self):
        x = [np.array([1.0, 2.0]), np.array([0.5, -1.0])]
        rep = check_cross_norm_sandwich(DenseTensor((L2, L2), outer(x)))
        assert not rep.violation
        assert rep.injective.lower == pytest.approx(rep.projective.upper, rel=1e-8)

    @pytest.mark.slow
    def test_sandwich_random_cubes(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            rep = check_cross_norm_sandwich(DenseTensor((SpaceSpec.lp(3),) * 3, rng.standard_normal((3, 3, 3))),
                                            OptimizerOptions(restarts=8))
            assert not rep.violation


class TestMisc:
    def test_compare_bounds(self):
        assert compare_bounds(1.0, 1.0, 2.0, 2.0) is Verdict.HOLDS
        assert compare_bounds(1.0, 3.0, 2.0, 4.0) is Verdict.CONSISTENT
        assert compare_bounds(3.0, 3.0, 1.0, 2.0) is Verdict.VIOLATION

    def test_banach_mazur(self):
        assert banach_mazur_bound([2, 2, 2]) == 4
        assert banach_mazur_bound([5]) == 1
        assert banach_mazur_bound([2, 7, 3]) == 6
        with pytest.raises(ValueError):
            banach_mazur_bound([])

    def test_norm_kind_parse(self):
        assert NormKind.parse("eps") is NormKind.INJECTIVE
        assert NormKind.parse("Projective") is NormKind.PROJECTIVE
        with pytest.raises(ValueError):
            NormKind.parse("nuclear-ish")

    def test_form_norm_upper_linf_brute_force(self):
        # form on l_inf^2 x l_inf^3: its norm is the max over sign vectors
        B = np.random.default_rng(6).standard_normal((2, 3))
        modes = (SpaceSpec.lp(2, np.inf), SpaceSpec.lp(3, np.inf))
        nb, _ = form_norm_upper(B, modes)
        brute = max(abs(np.array(s) @ B @ np.array(t))
                    for s in itertools.product((1, -1), repeat=2) for t in itertools.product((1, -1), repeat=3))
        assert nb == pytest.approx(brute, rel=1e-12)
