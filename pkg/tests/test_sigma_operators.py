import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog
from scipy.stats import ortho_group

from segre.normed_space import SpaceSpec, Vector
from segre.options import OptimizerOptions
from segre.sigma_operators import (
    MultilinearMap,
    SigmaPoint,
    evaluate,
    evaluate_sigma,
    lipschitz_estimate,
    operator_norm,
    p_summing_ratio,
)
from segre.tensor_core import w_tensor

from .strategies import seeds

L2 = SpaceSpec.lp(2, 2.0)
LINF = {d: SpaceSpec.lp(d, math.inf) for d in (1, 2, 3)}
E2 = np.eye(2)


def random_map(rng, n, euclidean=False):
    dims = rng.integers(1, 4, size=n + 1)
    ps = [2.0] * (n + 1) if euclidean else rng.choice([1.0, 2.0, math.inf], size=n + 1)
    spaces = [SpaceSpec.lp(int(d), float(p)) for d, p in zip(dims, ps)]
    return MultilinearMap(spaces[0], tuple(spaces[1:]), rng.standard_normal(tuple(dims)))


def linf_pi_exhaustive(z):
    """Projective norm on l_inf modes: LP over forms bounded at every sign vertex."""
    dims = z.shape
    verts = [np.einsum(",".join("ijk"[: len(dims)]) + "->" + "ijk"[: len(dims)], *s).ravel()
             for s in itertools.product(*[list(itertools.product((1.0, -1.0), repeat=d)) for d in dims])]
    A = np.array(verts)
    res = linprog(-z.ravel(), A_ub=np.vstack([A, -A]), b_ub=np.ones(2 * len(A)), bounds=(None, None), method="highs")
    return -res.fun


class TestEvaluate:
    inner = MultilinearMap.form((L2, L2), np.eye(2))

    def test_inner_product(self):
        assert evaluate(self.inner, [E2[0], E2[0]]).coords[0] == 1.0
        assert evaluate(self.inner, [E2[0], E2[1]]).coords[0] == 0.0

    @given(seeds)
    def test_multilinear(self, seed):
        rng = np.random.default_rng(seed)
        T = random_map(rng, 3)
        xs = [rng.standard_normal(m.dim) for m in T.modes]
        y = rng.standard_normal(T.modes[1].dim)
        a, b = rng.standard_normal(2)
        mixed = evaluate(T, [xs[0], a * xs[1] + b * y, xs[2]]).coords
        split = a * evaluate(T, xs).coords + b * evaluate(T, [xs[0], y, xs[2]]).coords
        np.testing.assert_allclose(mixed, split, atol=1e-12 * (1 + np.abs(split).max()))
        np.testing.assert_allclose(evaluate(T, [2 * xs[0]] + xs[1:]).coords, 2 * evaluate(T, xs).coords, atol=1e-12)

    @given(seeds, st.integers(1, 3))
    def test_defining_identity(self, seed, n):
        rng = np.random.default_rng(seed)
        T = random_map(rng, n)
        xs = [rng.standard_normal(m.dim) for m in T.modes]
        direct = evaluate(T, xs).coords
        via_cone = evaluate_sigma(T, SigmaPoint.of(T.modes, xs)).coords
        np.testing.assert_allclose(direct, via_cone, atol=1e-12 * (1 + np.abs(direct).max()), rtol=0)

    def test_zero_point(self):
        T = random_map(np.random.default_rng(0), 2)
        u = SigmaPoint.of(T.modes, [np.zeros(m.dim) for m in T.modes])
        assert not np.any(evaluate_sigma(T, u).coords)

    def test_coefficient_column(self):
        C = np.arange(12.0).reshape(3, 2, 2)
        T = MultilinearMap(SpaceSpec.lp(3), (L2, L2), C)
        np.testing.assert_array_equal(evaluate_sigma(T, SigmaPoint.of(T.modes, [E2[0], E2[1]])).coords, C[:, 0, 1])

    @given(seeds, st.floats(-5, 5))
    def test_scaling(self, seed, c):
        rng = np.random.default_rng(seed)
        T = random_map(rng, 2)
        u = SigmaPoint.of(T.modes, [rng.standard_normal(m.dim) for m in T.modes])
        np.testing.assert_allclose(evaluate_sigma(T, u.scaled(c)).coords, c * evaluate_sigma(T, u).coords,
                                   atol=1e-12 * (1 + abs(c)) * 10)

    def test_mismatches(self):
        T = self.inner
        with pytest.raises(ValueError):
            evaluate(T, [E2[0]])
        with pytest.raises(ValueError):
            evaluate(T, [np.ones(3), E2[0]])
        with pytest.raises(ValueError):
            evaluate(T, [Vector(E2[0], SpaceSpec.lp(2, 1.0)), E2[0]])
        with pytest.raises(ValueError):
            evaluate_sigma(T, SigmaPoint.of((SpaceSpec.lp(2, 1.0), L2), [E2[0], E2[0]]))
        with pytest.raises(ValueError):
            MultilinearMap(L2, (L2,), np.zeros((2, 3)))

    def test_coefficients_read_only(self):
        with pytest.raises(ValueError):
            self.inner.coeffs[0, 0, 0] = 5.0


class TestOperatorNorm:
    def test_inner_product(self):
        c = operator_norm(MultilinearMap.form((L2, L2), np.eye(2)))
        assert c.lower == pytest.approx(1.0, abs=1e-10) and c.upper == pytest.approx(1.0, abs=1e-10)

    def test_diagonal(self):
        c = operator_norm(MultilinearMap.form((L2, L2), np.diag([3.0, 1.0])))
        s = np.linalg.svd(np.diag([3.0, 1.0]), compute_uv=False)[0]
        assert c.lower == pytest.approx(s, abs=1e-10) and c.upper == pytest.approx(s, abs=1e-10)

    def test_w_form(self):
        c = operator_norm(MultilinearMap.form((L2, L2, L2), w_tensor().coords))
        assert abs(c.lower - 2 / math.sqrt(3)) <= 1e-6
        assert c.upper - c.lower <= 1e-6

    def test_linf_codomain_and_l1_domain(self):
        # ||T|| from l1 x l1: sup over vertex pairs of the codomain norm
        rng = np.random.default_rng(4)
        C = rng.standard_normal((3, 2, 3))
        T = MultilinearMap(SpaceSpec.lp(3, math.inf), (SpaceSpec.lp(2, 1.0), SpaceSpec.lp(3, 1.0)), C)
        exact = np.abs(C).max()
        c = operator_norm(T)
        assert c.lower == pytest.approx(exact, abs=1e-10) and c.upper == pytest.approx(exact, abs=1e-10)

    @settings(max_examples=15)
    @given(seeds)
    def test_orthogonal_invariance(self, seed):
        rng = np.random.default_rng(seed)
        T = MultilinearMap(SpaceSpec.lp(2), (L2, SpaceSpec.lp(3)), rng.standard_normal((2, 2, 3)))
        Qs = [ortho_group.rvs(d, random_state=seed + i) for i, d in enumerate((2, 2, 3))]
        rotated = np.einsum("ai,bj,ck,ijk->abc", *Qs, T.coeffs)
        a = operator_norm(T)
        b = operator_norm(MultilinearMap(T.codomain, T.modes, rotated))
        assert abs(a.lower - b.lower) <= 1e-8 * max(1.0, a.lower)
        assert b.lower <= a.upper + 1e-8 and a.lower <= b.upper + 1e-8

    @settings(max_examples=15)
    @given(seeds)
    def test_euclidean_matrix_map_matches_svd(self, seed):
        # a bilinear form on l2 x l2 has operator norm equal to the top singular value
        rng = np.random.default_rng(seed)
        C = rng.standard_normal((3, 2))
        c = operator_norm(MultilinearMap.form((SpaceSpec.lp(3), L2), C))
        s = np.linalg.svd(C, compute_uv=False)[0]
        assert abs(c.lower - s) <= 1e-8 * s and abs(c.upper - s) <= 1e-8 * s


class TestLipschitz:
    def test_diagonal_recovers_norm(self):
        T = MultilinearMap.form((L2, L2), np.diag([3.0, 1.0]))
        est = lipschitz_estimate(T, 8)
        assert est.value == pytest.approx(3.0, abs=1e-10)
        u, v = est.best_pair
        assert not np.any(v.coords)

    def test_equal_pair_contributes_nothing(self):
        T = MultilinearMap.form((L2, L2), np.diag([3.0, 1.0]))
        est = lipschitz_estimate(T, 1, include_zero_pairs=False)
        assert est.value <= 3.0 + 1e-12
        with pytest.raises(ValueError):
            lipschitz_estimate(T, 0)

    @settings(max_examples=30)
    @given(seeds, st.integers(2, 3))
    def test_squeeze(self, seed, n):
        rng = np.random.default_rng(seed)
        T = random_map(rng, n)
        opts = OptimizerOptions(seed=seed)
        c = operator_norm(T, opts)
        est = lipschitz_estimate(T, 8, opts, operator_cert=c)
        assert est.value <= c.upper + 1e-6
        assert est.value >= c.lower - 1e-8

    def test_without_zero_pairs_stays_below(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            T = random_map(rng, 2)
            c = operator_norm(T)
            assert lipschitz_estimate(T, 16, include_zero_pairs=False).value <= c.upper + 1e-6

    def test_seeded(self):
        T = random_map(np.random.default_rng(5), 3)
        a = lipschitz_estimate(T, 10, OptimizerOptions(seed=1))
        b = lipschitz_estimate(T, 10, OptimizerOptions(seed=1))
        assert a.value == b.value and a.pairs == b.pairs


class TestPSumming:
    def test_empty_difference(self):
        T = MultilinearMap.form((L2, L2), np.eye(2))
        res = p_summing_ratio(T, [(E2[0], E2[1])], [(E2[0], E2[1])], 1.0)
        assert res.lhs == 0.0 and res.ratio_lower == 0.0

    def test_identity_form(self):
        T = MultilinearMap.form((L2, L2), np.eye(2))
        zero = (np.zeros(2), np.zeros(2))
        res = p_summing_ratio(T, [(E2[0], E2[0]), (E2[1], E2[1])], [zero, zero], 1.0)
        assert res.ratio_estimate >= 1 - 1e-9
        assert res.ratio_lower >= 1 - 1e-6
        assert res.ratio_lower <= res.ratio_estimate + 1e-12

    def test_linear_rank_one_against_brute_force(self):
        rng = np.random.default_rng(11)
        phi0, y, u = rng.standard_normal(2), rng.standard_normal(2), rng.standard_normal(2)
        T = MultilinearMap(L2, (L2,), np.outer(y, phi0))
        res = p_summing_ratio(T, [(u,)], [(np.zeros(2),)], 1.0)
        angles = np.linspace(0, 2 * np.pi, 200_001)
        sup = np.abs(np.cos(angles) * u[0] + np.sin(angles) * u[1]).max()
        exact = abs(phi0 @ u) * np.linalg.norm(y) / sup
        assert res.ratio_lower <= exact + 1e-9
        assert res.ratio_lower == pytest.approx(exact, rel=1e-6)
        assert res.ratio_lower <= np.linalg.norm(phi0) * np.linalg.norm(y) + 1e-12

    def test_p_below_one_rejected(self):
        T = MultilinearMap.form((L2, L2), np.eye(2))
        with pytest.raises(ValueError):
            p_summing_ratio(T, [(E2[0], E2[0])], [(E2[1], E2[1])], 0.5)
        with pytest.raises(ValueError):
            p_summing_ratio(T, [(E2[0], E2[0])], [], 1.0)

    @settings(max_examples=10)
    @given(seeds, st.sampled_from([1.0, 2.0]))
    def test_adding_a_pair_never_decreases_lhs(self, seed, p):
        rng = np.random.default_rng(seed)
        T = random_map(rng, 2)
        args = lambda: tuple(rng.standard_normal(m.dim) for m in T.modes)  # noqa: E731
        us, vs = [args(), args()], [args(), args()]
        small = p_summing_ratio(T, us[:1], vs[:1], p, n_random=2)
        big = p_summing_ratio(T, us, vs, p, n_random=2)
        assert big.lhs >= small.lhs - 1e-12

    @settings(max_examples=10)
    @given(seeds, st.integers(2, 3))
    def test_linf_exhaustive_oracle(self, seed, d):
        rng = np.random.default_rng(seed)
        modes = (LINF[d], LINF[2])
        T = MultilinearMap(SpaceSpec.lp(2), modes, rng.standard_normal((2, d, 2)))
        us = [tuple(rng.uniform(-1, 1, m.dim) for m in modes) for _ in range(3)]
        vs = [tuple(rng.uniform(-1, 1, m.dim) for m in modes) for _ in range(3)]
        res = p_summing_ratio(T, us, vs, 1.0, n_random=4)
        diffs = [np.outer(*u) - np.outer(*v) for u, v in zip(us, vs)]
        sup = max(linf_pi_exhaustive(diffs[0] + s1 * diffs[1] + s2 * diffs[2])
                  for s1, s2 in itertools.product((1, -1), repeat=2))
        assert res.rhs_lower <= sup * (1 + 1e-7)
        assert res.rhs_upper >= sup * (1 - 1e-7)
        assert res.ratio_lower <= res.lhs / sup * (1 + 1e-7)
