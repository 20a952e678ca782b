import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from segre.cp_fit import cp_to_tensor, fit_rank, rebalance
from segre.tensor_core import w_tensor

from .strategies import seeds


@given(seeds, st.integers(1, 4))
def test_exact_fit_recovers_generic_rank(seed, m):
    rng = np.random.default_rng(seed)
    factors = [rng.standard_normal((d, m)) for d in (3, 4, 4)]
    T = cp_to_tensor(factors)
    fit = fit_rank(T, m, np.random.default_rng(0))
    assert fit.converged
    assert fit.residual <= 1e-9 * np.linalg.norm(T)
    np.testing.assert_allclose(cp_to_tensor(fit.factors), T, atol=1e-8 * np.linalg.norm(T))


def test_w_tensor_has_no_two_term_fit():
    fit = fit_rank(w_tensor().coords, 2, np.random.default_rng(0), restarts=4)
    assert not fit.converged
    assert fit.diverging and fit.border_suspected
    # residual keeps shrinking while the terms grow
    hist = fit.history
    assert hist[-1][1] < hist[len(hist) // 2][1]
    assert hist[-1][2] > hist[len(hist) // 2][2]


def test_w_tensor_three_terms():
    fit = fit_rank(w_tensor().coords, 3, np.random.default_rng(0))
    assert fit.converged and not fit.border_suspected


def test_zero_terms():
    fit = fit_rank(np.zeros((2, 2)), 0, np.random.default_rng(0))
    assert fit.converged and fit.terms == 0


@given(seeds)
def test_rebalance_keeps_the_tensor(seed):
    rng = np.random.default_rng(seed)
    factors = [rng.standard_normal((d, 3)) * s for d, s in zip((2, 3, 2), (10.0, 0.1, 1.0))]
    out = rebalance(factors)
    np.testing.assert_allclose(cp_to_tensor(out), cp_to_tensor(factors), atol=1e-12 * 100)
    norms = np.array([np.linalg.norm(F, axis=0) for F in out])
    np.testing.assert_allclose(norms, norms[:1].repeat(3, axis=0), rtol=1e-12)


def test_fit_is_deterministic():
    T = np.random.default_rng(3).standard_normal((3, 3, 3))
    a = fit_rank(T, 5, np.random.default_rng(1), restarts=2)
    b = fit_rank(T, 5, np.random.default_rng(1), restarts=2)
    assert a.residual == b.residual
    for Fa, Fb in zip(a.factors, b.factors):
        np.testing.assert_array_equal(Fa, Fb)
