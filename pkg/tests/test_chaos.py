import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pam_mild.chaos import (
    ChaosExpansion,
    MultiIndex,
    enumerate_indices,
    hermite_eval,
    mollified_potential,
    multi_binomial,
    noise_multipliers,
    propagator_solve,
    residual_eta,
    usual_product,
    whitenoise_expansion,
    wick_product,
    xi_alpha_eval,
    z_difference_solve,
)
from pam_mild.errors import ConfigurationError, TruncationError
from pam_mild.mild import SolverConfig, initial_mode, partitioned_solve
from pam_mild.noise import MollifierKind, MollifierSpec
from pam_mild.spectral import Basis, SpectralField
from pam_mild.studies import gram_check, wick_identity_check

S = Basis.DIRICHLET_SINE
R = math.sqrt(2 / math.pi)
E1, E2 = MultiIndex.unit(1), MultiIndex.unit(2)
ZERO = MultiIndex.zero()


# multi-indices


def test_multi_index_algebra():
    a = MultiIndex.from_dict({1: 2, 3: 1})
    assert a.order == 3 and a.support == (1, 3) and a.max_mode == 3
    assert a[2] == 0 and a[1] == 2
    assert a + E1 == MultiIndex.from_dict({1: 3, 3: 1})
    assert a - MultiIndex.from_dict({1: 5}) == MultiIndex.from_dict({3: 1})
    assert E1.leq(a) and not E2.leq(a)
    assert a.meet(MultiIndex.from_dict({1: 1, 2: 4})) == E1
    assert a.factorial() == 2
    assert len(list(a.sub_indices())) == 6
    assert MultiIndex.from_dict({2: 0}) == ZERO
    assert MultiIndex.from_list(a.to_list()) == a
    with pytest.raises(ConfigurationError):
        MultiIndex(((0, 1),))
    with pytest.raises(ConfigurationError):
        MultiIndex(((1, -1),))


def test_enumerate_indices_counts():
    # number of indices of order <= P on M modes is C(P + M, M)
    for P, M in [(0, 3), (2, 2), (3, 3), (4, 1)]:
        idx = enumerate_indices(P, M)
        assert len(idx) == math.comb(P + M, M)
        assert len(set(idx)) == len(idx)
        assert [a.order for a in idx] == sorted(a.order for a in idx)
    assert multi_binomial(MultiIndex.from_dict({1: 3, 2: 2}), MultiIndex.from_dict({1: 1, 2: 1})) == 6


def test_hermite_values():
    assert hermite_eval(3, 2.0) == 2.0
    assert hermite_eval(0, 5.0) == 1.0
    assert hermite_eval(1, -1.5) == -1.5
    x = np.linspace(-3, 3, 11)
    np.testing.assert_allclose(hermite_eval(4, x), x**4 - 6 * x**2 + 3, atol=1e-12)
    with pytest.raises(ConfigurationError):
        hermite_eval(61, 0.0)
    with pytest.raises(ConfigurationError):
        hermite_eval(-1, 0.0)


def test_xi_alpha_examples():
    xi = np.array([0.7, -1.2])
    assert xi_alpha_eval(ZERO, xi) == 1.0
    assert xi_alpha_eval(E2, xi) == pytest.approx(-1.2)
    assert xi_alpha_eval(MultiIndex.from_dict({1: 2}), xi) == pytest.approx((0.49 - 1) / math.sqrt(2))
    assert xi_alpha_eval(E1 + E2, xi) == pytest.approx(0.7 * -1.2)
    with pytest.raises(ConfigurationError):
        xi_alpha_eval(MultiIndex.unit(3), xi)


# products


def scalar(alpha, c=1.0, P=None, M=None):
    return ChaosExpansion.single(alpha, c, max_order=P, max_mode=M)


def test_wick_examples():
    w = wick_product(scalar(E1), scalar(E1), max_order=4)
    assert set(w.terms) == {MultiIndex.from_dict({1: 2})}
    assert float(w[MultiIndex.from_dict({1: 2})]) == pytest.approx(math.sqrt(2))
    w = wick_product(scalar(E1), scalar(E2), max_order=4)
    assert float(w[E1 + E2]) == pytest.approx(1.0)
    u = ChaosExpansion({E1: np.array(2.0), MultiIndex.from_dict({2: 2}): np.array(-1.0)})
    w = wick_product(ChaosExpansion.constant(3.0), u)
    assert {a: float(v) for a, v in w.terms.items()} == {E1: 6.0, MultiIndex.from_dict({2: 2}): -3.0}


def test_usual_product_has_mean_correction():
    p = usual_product(scalar(E1), scalar(E1), max_order=4)
    assert float(p[ZERO]) == pytest.approx(1.0)
    assert float(p[MultiIndex.from_dict({1: 2})]) == pytest.approx(math.sqrt(2))


def random_expansion(rng, P, M, shape=()):
    return ChaosExpansion({a: rng.standard_normal(shape) for a in enumerate_indices(P, M)}, P, M)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_wick_is_commutative_and_bilinear(seed):
    rng = np.random.default_rng(seed)
    u, v, w = (random_expansion(rng, 2, 2, (3,)) for _ in range(3))
    c = rng.standard_normal()
    uv, vu = wick_product(u, v, max_order=4), wick_product(v, u, max_order=4)
    for a in set(uv.terms) | set(vu.terms):
        np.testing.assert_allclose(uv.get(a, 0.0), vu.get(a, 0.0), atol=1e-12)
    left = wick_product(u.scale(c) + w, v, max_order=4)
    right = wick_product(u, v, max_order=4).scale(c) + wick_product(w, v, max_order=4)
    for a in set(left.terms) | set(right.terms):
        np.testing.assert_allclose(left.get(a, 0.0), right.get(a, 0.0), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_usual_product_is_pathwise_product(seed):
    # with no truncation the chaos product reproduces u(xi) v(xi) for every draw
    rng = np.random.default_rng(seed)
    u, v = random_expansion(rng, 2, 2), random_expansion(rng, 2, 2)
    p = usual_product(u, v, max_order=4, max_mode=2)
    assert p.dropped_mass == 0.0
    xi = rng.standard_normal((50, 2))
    np.testing.assert_allclose(p.evaluate(xi), u.evaluate(xi) * v.evaluate(xi), rtol=1e-10, atol=1e-10)


def test_wick_product_has_no_mean_and_monte_carlo_second_moment():
    # E[(xi1 <> xi1)^2] = 2 and E[xi1 <> xi2] = 0, by Monte Carlo
    xi = np.random.default_rng(5).standard_normal((200_000, 2))
    w11 = wick_product(scalar(E1), scalar(E1), max_order=2).evaluate(xi)
    w12 = wick_product(scalar(E1), scalar(E2), max_order=2).evaluate(xi)
    n = xi.shape[0]
    assert abs(w11.mean()) < 3 * w11.std() / math.sqrt(n)
    assert abs((w11**2).mean() - 2) < 3 * (w11**2).std() / math.sqrt(n)
    assert abs(w12.mean()) < 3 * w12.std() / math.sqrt(n)


def test_truncation_drops_and_raises():
    u = scalar(MultiIndex.from_dict({1: 2}), P=2, M=1)
    w = wick_product(u, scalar(E1, P=1, M=1))
    assert w.terms == {} and w.dropped_mass == pytest.approx(3.0)
    with pytest.raises(TruncationError) as info:
        wick_product(u, scalar(E1, P=1, M=1), max_dropped=1.0)
    assert info.value.dropped_mass == pytest.approx(3.0)
    with pytest.raises(ConfigurationError):
        ChaosExpansion({MultiIndex.from_dict({1: 3}): np.array(1.0)}, max_order=2)
    with pytest.raises(ConfigurationError):
        wick_product(ChaosExpansion({E1: np.ones(3)}, basis=S), scalar(E1))


# identity and Gram


def test_residual_eta_examples():
    noise = ChaosExpansion({E1: np.array(2.0)}, 1, 1)
    eta = residual_eta(scalar(E1), noise)
    assert set(eta.terms) == {ZERO} and float(eta[ZERO]) == pytest.approx(2.0)
    eta = residual_eta(scalar(MultiIndex.from_dict({1: 2})), noise)
    assert float(eta[E1]) == pytest.approx(2 * math.sqrt(2))
    # the constant index has no lower neighbour
    assert residual_eta(ChaosExpansion.constant(1.0), noise).terms == {}
    with pytest.raises(ConfigurationError):
        residual_eta(scalar(E1), ChaosExpansion({MultiIndex.from_dict({1: 2}): np.array(1.0)}))


def test_usual_equals_wick_plus_eta():
    out = wick_identity_check(3, 3, seed=1)
    assert out["n_indices"] == math.comb(6, 3)
    assert out["max_relative_defect"] <= 1e-12


def test_gram_matrix_is_identity():
    out = gram_check(3, 2, 100_000, seed=2)
    assert out["n_indices"] == 10 and out["entries_outside"] == 0


def test_gram_check_detects_wrong_normalisation(monkeypatch):
    import pam_mild.chaos as chaos

    real = chaos.xi_alpha_eval
    monkeypatch.setattr(chaos, "xi_alpha_eval", lambda a, xi: real(a, xi) * (1 + 0.1 * (a.order == 2)))
    assert gram_check(2, 1, 50_000, seed=3)["entries_outside"] > 0


# white noise and the Wick equation


def test_whitenoise_expansion_examples():
    plain = whitenoise_expansion(3)
    assert set(plain.terms) == {MultiIndex.unit(k) for k in (1, 2, 3)}
    np.testing.assert_allclose(plain[MultiIndex.unit(2)], [0, 1, 0])
    g = whitenoise_expansion(4, MollifierSpec(MollifierKind.GAUSSIAN, 0.2), K=6)
    assert float(g[MultiIndex.unit(3)][2]) == pytest.approx(math.exp(-9 * 0.04 / 2))
    assert g[MultiIndex.unit(3)].shape == (6,)
    cut = whitenoise_expansion(8, MollifierSpec(MollifierKind.CUTOFF, 0.25))
    assert max(a.max_mode for a in cut.terms) == 4
    np.testing.assert_allclose(noise_multipliers(2), [1, 1])
    with pytest.raises(ConfigurationError):
        whitenoise_expansion(0)
    with pytest.raises(ConfigurationError):
        whitenoise_expansion(4, K=2)


def test_mollified_potential_matches_kl_path():
    noise = whitenoise_expansion(2, MollifierSpec(MollifierKind.GAUSSIAN, 0.5), K=8)
    W = mollified_potential([1.0, -0.5], noise, 64)
    x = np.linspace(0, math.pi, 65)
    g1, g2 = math.exp(-0.125), math.exp(-0.5)
    expected = R * (g1 * (1 - np.cos(x)) - 0.5 * g2 * (1 - np.cos(2 * x)) / 2)
    np.testing.assert_allclose(W.values, expected, atol=1e-12)


def test_propagator_without_noise_is_heat_flow():
    cfg = SolverConfig(K=16, N=64, T=0.2, dt=1e-3, delta=0.1)
    noise = whitenoise_expansion(4, MollifierSpec(MollifierKind.CUTOFF, 1.5), K=cfg.K)
    assert noise.terms == {}
    u = propagator_solve(initial_mode(1, cfg.K), noise, cfg, P=3, M=4)
    assert set(u.terms) == {ZERO}
    assert u[ZERO][-1, 0] == pytest.approx(math.exp(-0.2), abs=1e-14)


def test_propagator_first_order_closed_form():
    # u0 = m_1, W' = m_1 xi_1: u_(1) solves v_t = v_xx + m_1^2 e^{-t}, with
    # m_1^2 = (1 - cos 2x)/pi, whose sine coefficients are c_k = -8 R / (pi k (k^2 - 4)) for odd k
    cfg = SolverConfig(K=64, N=512, T=0.3, dt=5e-4, delta=0.1)
    u = propagator_solve(initial_mode(1, cfg.K), whitenoise_expansion(1, K=cfg.K), cfg, P=1, M=1)
    t = cfg.times
    got = u[E1]
    for k in (1, 3, 5, 7):
        c = -8 * R / (math.pi * k * (k * k - 4))
        exact = c * t * np.exp(-t) if k == 1 else c * (np.exp(-t) - np.exp(-k * k * t)) / (k * k - 1)
        np.testing.assert_allclose(got[:, k - 1], exact, atol=2e-6)
    assert np.max(np.abs(got[:, 1::2])) < 1e-12
    assert u.dropped_mass == pytest.approx(float(u.l2_mass(1)[-1] / u.l2_mass()[-1]))


def test_propagator_is_triangular_in_order():
    # raising P leaves the lower-order coefficients untouched
    cfg = SolverConfig(K=16, N=64, T=0.1, dt=1e-3, delta=0.1)
    noise = whitenoise_expansion(2, MollifierSpec(MollifierKind.GAUSSIAN, 0.3), K=cfg.K)
    u0 = initial_mode(1, cfg.K)
    low = propagator_solve(u0, noise, cfg, P=2, M=2)
    high = propagator_solve(u0, noise, cfg, P=3, M=2)
    for a, v in low.terms.items():
        assert np.array_equal(v, high[a])
    assert len(high.terms) == math.comb(5, 2)
    with pytest.raises(TruncationError):
        propagator_solve(u0, noise, cfg, P=1, M=2, max_tail=1e-12)


def test_propagator_order_zero_is_heat_flow():
    # E[u<>] is the order-0 coefficient, the heat flow of u0
    cfg = SolverConfig(K=16, N=64, T=0.05, dt=1e-3, delta=0.05)
    noise = whitenoise_expansion(1, MollifierSpec(MollifierKind.GAUSSIAN, 0.5), K=cfg.K)
    u0 = initial_mode(1, cfg.K)
    uw = propagator_solve(u0, noise, cfg, P=4, M=1)
    np.testing.assert_allclose(uw[ZERO][-1], np.exp(-np.arange(1, 17) ** 2 * cfg.T) * u0.coeffs, atol=1e-14)


def test_z_zero_noise():
    cfg = SolverConfig(K=16, N=64, T=0.1, dt=1e-3, delta=0.05)
    noise = whitenoise_expansion(1, MollifierSpec(MollifierKind.CUTOFF, 1.5), K=cfg.K)
    u0 = initial_mode(1, cfg.K)
    uw = propagator_solve(u0, noise, cfg, P=2, M=1)
    W = mollified_potential([0.8], noise, cfg.N)
    assert np.all(W.values == 0)
    u_eps = partitioned_solve(u0, W, cfg).trajectory
    res = z_difference_solve(u_eps, uw, [0.8], noise, cfg)
    assert res.scale < 1e-14 and np.max(np.abs(res.solved.coeffs)) < 1e-14


@pytest.mark.parametrize("P,target", [(3, 0.05), (5, 0.01)])
def test_z_two_routes_agree(P, target):
    cfg = SolverConfig(K=64, N=256, T=0.25, dt=1e-3, delta=0.05)
    noise = whitenoise_expansion(1, MollifierSpec(MollifierKind.GAUSSIAN, 0.1), K=cfg.K)
    u0 = initial_mode(1, cfg.K)
    xi = np.array([1.3])
    uw = propagator_solve(u0, noise, cfg, P=P, M=1)
    u_eps = partitioned_solve(u0, mollified_potential(xi, noise, cfg.N), cfg).trajectory
    res = z_difference_solve(u_eps, uw, xi, noise, cfg)
    assert res.scale > 1e-3
    assert res.relative_error < target


def test_serialization_round_trip():
    rng = np.random.default_rng(0)
    u = ChaosExpansion({a: rng.standard_normal(4) for a in enumerate_indices(2, 2)}, 2, 2, S, None, 0.25)
    back = ChaosExpansion.from_dict(json.loads(json.dumps(u.to_dict())))
    assert back.basis is S and back.max_order == 2 and back.dropped_mass == 0.25
    for a in u.terms:
        assert np.array_equal(back[a], u[a])
    assert u.to_grid(16).to_sine(4).terms.keys() == u.terms.keys()
    np.testing.assert_allclose(u.to_grid(16).to_sine(4)[E1], u[E1], atol=1e-12)
    assert SpectralField(S, u[E1]).K == 4
