import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pam_mild.errors import ConfigurationError, DomainError, NonConvergenceError
from pam_mild.mild import (
    SolverConfig,
    apply_M,
    choose_block_length,
    first_contraction_ratio,
    initial_mode,
    p0,
    partitioned_solve,
    picard_solve_block,
    random_hbeta,
    residual_check,
    snap_to_steps,
)
from pam_mild.noise import sample_brownian_kl
from pam_mild.reference import polynomial_potential, sup_distance
from pam_mild.spectral import Basis, GridFunction, SpectralField, TimeSeriesField, sobolev_norm

S = Basis.DIRICHLET_SINE
R = math.sqrt(2 / math.pi)
SMALL = SolverConfig(K=64, N=256, T=0.1, dt=1e-3, delta=0.025)


def bm(cfg, seed=0):
    return sample_brownian_kl(cfg.N // 2, cfg.N, seed).grid


# configuration


@pytest.mark.parametrize("bad", [
    dict(N=100, K=64),
    dict(beta=0.3, gamma=0.3),
    dict(gamma=0.5),
    dict(delta=0.5, T=0.1),
    dict(dt=0.2, delta=0.1),
    dict(tol=0.0),
    dict(T=0.1, dt=0.03, delta=0.03),
])
def test_config_validation(bad):
    with pytest.raises(ConfigurationError):
        SolverConfig(**bad)


def test_config_round_trip_and_defaults():
    cfg = SolverConfig()
    assert (cfg.K, cfg.N, cfg.T, cfg.dt) == (256, 1024, 0.5, 1e-4)
    assert 0 < cfg.beta < cfg.gamma < 0.5
    assert SolverConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.n_steps == 5000 and cfg.times[-1] == pytest.approx(0.5)
    with pytest.raises(ConfigurationError):
        SolverConfig.from_dict({"K": 8, "bogus": 1})


def test_random_hbeta_spectrum():
    f = random_hbeta(2**14, 0.25, 3)
    # E a_k^2 = k^{-2 beta - 1.02}: band-averaged power has that log-log slope
    bands = [(2**j, 2 ** (j + 1)) for j in range(3, 14)]
    centers = [math.sqrt(lo * hi) for lo, hi in bands]
    power = [np.mean(f.coeffs[lo - 1:hi - 1] ** 2) for lo, hi in bands]
    assert np.polyfit(np.log(centers), np.log(power), 1)[0] == pytest.approx(-1.52, abs=0.1)
    assert sobolev_norm(f, 0.25) < 10


# P_0 and the map


def test_p0_examples():
    u0 = initial_mode(1, 8)
    assert np.array_equal(p0(u0, 0).coeffs, u0.coeffs)
    assert p0(u0, 1.0).coeffs[0] == pytest.approx(math.exp(-1))
    f = random_hbeta(32, 0.2, 0)
    np.testing.assert_allclose(p0(f, 1e-14).coeffs, f.coeffs, rtol=1e-10)
    with pytest.raises(DomainError):
        p0(u0, -1)


def test_map_with_zero_potential_is_heat_flow():
    cfg = SMALL
    u0 = random_hbeta(cfg.K, cfg.beta, 1)
    u = TimeSeriesField(S, cfg.times, np.random.default_rng(0).standard_normal((cfg.n_steps + 1, cfg.K)))
    out = apply_M(u, GridFunction.zeros(cfg.N), u0, cfg)
    heat = np.exp(-np.outer(cfg.times, np.arange(1, cfg.K + 1) ** 2)) * u0.coeffs
    np.testing.assert_allclose(out.coeffs, heat, atol=1e-15)


def test_map_of_zero_trajectory_is_heat_flow():
    cfg = SMALL
    u0 = initial_mode(2, cfg.K)
    u = TimeSeriesField(S, cfg.times, np.zeros((cfg.n_steps + 1, cfg.K)))
    out = apply_M(u, bm(cfg), u0, cfg)
    np.testing.assert_allclose(out.coeffs[:, 1], np.exp(-4 * cfg.times), atol=1e-15)


def test_map_closed_form_for_mode_one_and_cosine_potential():
    # u(s) = m_1, W = cos x.  u W = (R/2) sin 2x, u_x W = (R/2)(1 + cos 2x).
    cfg = SolverConfig(K=32, N=1024, T=0.2, dt=1e-2, delta=0.2)
    u = TimeSeriesField.constant(initial_mode(1, cfg.K), cfg.times)
    out = apply_M(u, GridFunction.from_callable(np.cos, cfg.N), initial_mode(1, cfg.K), cfg)
    k = np.arange(1, cfg.K + 1, dtype=float)
    odd = 1 - (-1.0) ** k
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_coef = np.where(k == 2, 0.0, R * (R / 2) * 2 * odd / (4 - k**2))     # [u W]^cos_k
        sin_coef = (R / 2) * R * (odd / k + np.where(k == 2, 0.0, k * odd / (k**2 - 4)))  # [u_x W]^sin_k
    F = -k * cos_coef - sin_coef
    t = cfg.T
    expected = np.exp(-k**2 * t) * np.eye(cfg.K)[0] + (1 - np.exp(-k**2 * t)) / k**2 * F
    np.testing.assert_allclose(out.coeffs[-1], expected, atol=1e-5)


def test_map_rejects_mismatched_inputs():
    cfg = SMALL
    u = TimeSeriesField(S, cfg.times, np.zeros((cfg.n_steps + 1, cfg.K)))
    with pytest.raises(ConfigurationError):
        apply_M(u, GridFunction.zeros(128), initial_mode(1, cfg.K), cfg)
    with pytest.raises(ConfigurationError):
        apply_M(u, GridFunction.zeros(cfg.N), initial_mode(1, 16), cfg)


# block solves


def test_block_with_zero_potential_converges_in_one_step():
    cfg = SMALL
    sol = picard_solve_block(initial_mode(1, cfg.K), GridFunction.zeros(cfg.N), 0.0, 0.025, cfg)
    assert sol.iterations == 1
    np.testing.assert_allclose(sol.trajectory.coeffs[:, 0], np.exp(-sol.trajectory.times), atol=1e-15)


def test_block_linear_potential_keeps_mode_one():
    cfg = SolverConfig(K=256, N=1024, T=0.05, dt=1e-3, delta=0.05)
    sol = picard_solve_block(initial_mode(1, cfg.K), polynomial_potential([0, 1], cfg.N), 0.0, 0.05, cfg)
    dev = np.max(np.abs(sol.trajectory.grid_values(cfg.N) - R * np.sin(np.linspace(0, np.pi, cfg.N + 1))))
    assert dev < 1e-5


def test_block_ratios_below_one_and_steady():
    cfg = SMALL
    sol = picard_solve_block(initial_mode(1, cfg.K), bm(cfg, 3), 0.0, 0.025, cfg)
    r = sol.ratios
    assert np.all(r < 1)
    assert r.max() / r.min() < 5


def test_block_nonconvergence_carries_history():
    cfg = SolverConfig(K=64, N=256, T=0.1, dt=1e-3, delta=0.1, max_iter=3, tol=1e-14)
    with pytest.raises(NonConvergenceError) as info:
        picard_solve_block(initial_mode(1, cfg.K), bm(cfg, 0), 0.0, 0.1, cfg, block_index=4)
    assert info.value.block_index == 4 and len(info.value.ratios) == 2


def test_block_length_and_iterate_validation():
    cfg = SMALL
    with pytest.raises(ConfigurationError):
        picard_solve_block(initial_mode(1, cfg.K), bm(cfg), 0.0, 0.05, cfg)
    with pytest.raises(ConfigurationError):
        picard_solve_block(initial_mode(1, cfg.K), bm(cfg), 0.0, 0.02, cfg, initial_iterate="random")


@pytest.mark.parametrize("seed", [0, 1])
def test_fixed_point_independent_of_initial_iterate(seed):
    cfg = SMALL
    u0 = random_hbeta(cfg.K, cfg.beta, seed)
    a = partitioned_solve(u0, bm(cfg, seed), cfg, initial_iterate="heat").trajectory
    b = partitioned_solve(u0, bm(cfg, seed), cfg, initial_iterate="zero").trajectory
    gap = np.max(np.linalg.norm((a.coeffs - b.coeffs) * np.arange(1, cfg.K + 1) ** (1 + cfg.beta), axis=1))
    assert gap < 10 * cfg.tol


# partitioned solves


def test_zero_potential_heat_flow_to_T_one():
    cfg = SolverConfig(K=16, N=64, T=1.0, dt=1e-2, delta=0.25)
    sol = partitioned_solve(initial_mode(1, cfg.K), GridFunction.zeros(cfg.N), cfg)
    np.testing.assert_allclose(sol.trajectory.coeffs[:, 0], np.exp(-cfg.times), atol=1e-15)
    assert sol.iterations_per_block.tolist() == [1, 1, 1, 1]
    np.testing.assert_allclose(sol.block_edges, [0, 0.25, 0.5, 0.75, 1.0])


def test_partition_invariance():
    cfg = SolverConfig(K=64, N=256, T=0.05, dt=1e-3, delta=0.05, tol=1e-10)
    u0 = initial_mode(1, cfg.K)
    W = bm(cfg, 5)
    one = partitioned_solve(u0, W, cfg).trajectory
    two = partitioned_solve(u0, W, cfg.replace(delta=0.025)).trajectory
    gap = np.max(np.linalg.norm((one.coeffs - two.coeffs) * np.arange(1, cfg.K + 1) ** (1 + cfg.beta), axis=1))
    assert gap < 5 * cfg.tol


@pytest.mark.parametrize("k", [1, 2])
def test_linear_potential_separable_solution(k):
    cfg = SolverConfig(K=1024, N=4096, T=0.5, dt=1e-3, delta=0.05)
    u0 = initial_mode(k, cfg.K)
    sol = partitioned_solve(u0, polynomial_potential([0, 1], cfg.N), cfg).trajectory
    exact = TimeSeriesField(S, cfg.times, np.outer(np.exp((1 - k * k) * cfg.times), u0.coeffs))
    assert sup_distance(sol, exact, cfg.N) < 1e-6


def test_boundary_and_initial_conditions():
    cfg = SMALL
    u0 = random_hbeta(cfg.K, cfg.beta, 2)
    traj = partitioned_solve(u0, bm(cfg, 2), cfg).trajectory
    vals = traj.grid_values(cfg.N)
    assert np.max(np.abs(vals[:, [0, -1]])) < 1e-12
    l2 = np.linalg.norm(traj.coeffs[:6] - u0.coeffs, axis=1)
    assert l2[0] == 0 and np.all(np.diff(l2) > 0)


def test_adaptive_block_length():
    cfg = SMALL.replace(adaptive_delta=True)
    W = bm(cfg, 1)
    delta = choose_block_length(initial_mode(1, cfg.K), W, cfg)
    assert cfg.dt <= delta <= cfg.delta
    assert abs(delta / cfg.dt - round(delta / cfg.dt)) < 1e-9
    sol = partitioned_solve(initial_mode(1, cfg.K), W, cfg)
    assert sol.delta_used == pytest.approx(delta)
    assert choose_block_length(initial_mode(1, cfg.K), GridFunction.zeros(cfg.N), cfg) == cfg.delta


def test_snap_and_first_ratio():
    assert snap_to_steps(0.5 / 16, 1e-4) == pytest.approx(0.0312)
    assert snap_to_steps(1e-6, 1e-3) == 1e-3
    cfg = SMALL
    W = bm(cfg, 0)
    r1 = first_contraction_ratio(initial_mode(1, cfg.K), W, 0.0125, cfg)
    r2 = first_contraction_ratio(initial_mode(1, cfg.K), W, 0.05, cfg.replace(delta=0.05))
    assert 0 < r1 < r2 < 1
    assert first_contraction_ratio(initial_mode(1, cfg.K), GridFunction.zeros(cfg.N), 0.01, cfg) == 0.0


# residual


def test_residual_of_converged_solution():
    cfg = SMALL
    W = bm(cfg, 4)
    sol = partitioned_solve(initial_mode(1, cfg.K), W, cfg)
    assert residual_check(sol, W) <= 10 * cfg.tol


def test_residual_detects_perturbation():
    cfg = SMALL
    W = bm(cfg, 4)
    sol = partitioned_solve(initial_mode(1, cfg.K), W, cfg)
    bumped = sol.trajectory.coeffs.copy()
    bumped[:, 0] += 0.1
    bad = type(sol)(TimeSeriesField(S, cfg.times, bumped), cfg, sol.iterations_per_block)
    assert residual_check(bad, W) >= 0.05


def test_residual_of_exact_heat_flow():
    cfg = SolverConfig(K=256, N=1024, T=0.1, dt=1e-3, delta=0.05)
    u0 = random_hbeta(cfg.K, cfg.beta, 0)
    heat = np.exp(-np.outer(cfg.times, np.arange(1, cfg.K + 1) ** 2)) * u0.coeffs
    sol = type(partitioned_solve(u0, GridFunction.zeros(cfg.N), cfg))(
        TimeSeriesField(S, cfg.times, heat), cfg, np.array([1]))
    assert residual_check(sol, GridFunction.zeros(cfg.N)) < 1e-8


def test_residual_in_p4_norm():
    # W = 0 and u = heat flow + c m_1 for t > 0: the defect is c m_1, whose
    # H^{1+beta}_4 norm is c ||m_1||_{L_4} = c ((2/pi)^2 3 pi / 8)^{1/4}
    cfg = SolverConfig(K=32, N=256, T=0.05, dt=1e-3, delta=0.05)
    u0 = initial_mode(1, cfg.K)
    coeffs = np.exp(-np.outer(cfg.times, np.arange(1, cfg.K + 1) ** 2)) * u0.coeffs
    coeffs[1:, 0] += 0.01
    zero = GridFunction.zeros(cfg.N)
    sol = type(partitioned_solve(u0, zero, cfg))(TimeSeriesField(S, cfg.times, coeffs), cfg, np.array([1]))
    assert residual_check(sol, zero) == pytest.approx(0.01, rel=1e-9)
    expected = 0.01 * ((2 / math.pi) ** 2 * 3 * math.pi / 8) ** 0.25
    assert residual_check(sol, zero, p=4) == pytest.approx(expected, rel=1e-9)
    defect = SpectralField(S, 0.01 * np.eye(cfg.K)[0])
    assert residual_check(sol, zero, p=4) == pytest.approx(sobolev_norm(defect, 1.25, 4, N=cfg.N), rel=1e-9)
    with pytest.raises(ConfigurationError):
        residual_check(sol, zero, p=3)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.5, 3.0))
def test_solution_is_linear_in_initial_datum(seed, c):
    cfg = SolverConfig(K=32, N=128, T=0.02, dt=1e-3, delta=0.01, tol=1e-12)
    W = sample_brownian_kl(64, cfg.N, seed).grid
    u0 = random_hbeta(cfg.K, cfg.beta, seed)
    a = partitioned_solve(u0, W, cfg).trajectory.coeffs
    b = partitioned_solve(u0 * c, W, cfg).trajectory.coeffs
    np.testing.assert_allclose(b, c * a, atol=1e-9 * c * np.abs(a).max())
