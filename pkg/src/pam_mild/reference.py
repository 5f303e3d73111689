"""Reference solvers for the equation with a smooth potential W^eps.

Two independent routes, used as oracles for the mild fixed-point solver:

* direct: u_t = u_xx + u V with V = d/dx W^eps, diffusion exact in the sine
  basis and the potential handled by operator splitting;
* transformed: with I(x) = int_0^x W^eps, the substitution u = v e^{-I} turns
  the equation into v_t = v_xx - 2 W^eps v_x + (W^eps)^2 v, which involves
  W^eps but not its derivative.

Both return trajectories on the config's time grid.
"""

from __future__ import annotations

import time

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.stats import spearmanr

from .errors import ConfigurationError, StabilityError
from .mild import SolverConfig, partitioned_solve
from .noise import BrownianPath, MollifierKind, MollifierSpec, holder_distance, mollify
from .report import RunReport
from .spectral import (
    Basis,
    GridFunction,
    SpectralField,
    TimeSeriesField,
    cosine_analysis,
    cosine_synthesis,
    cosine_to_sine_derivative,
    etd_weights,
    grid_nodes,
    sine_analysis,
    sine_synthesis,
    sine_to_cosine_derivative,
    sobolev_norm_array,
)

SCHEMES = ("lie", "strang", "etd2")
STABILITY_LIMIT = 0.5


def potential_derivative(We: GridFunction, K_V: int | None = None) -> np.ndarray:
    """Grid values of dW/dx from the order-K_V cosine projection of W (default N/2)."""
    K_V = We.N // 2 if K_V is None else K_V
    c = cosine_analysis(We.values, K_V)
    return sine_synthesis(cosine_to_sine_derivative(c), We.N)


def _setup(u0: SpectralField, We: GridFunction, cfg: SolverConfig, scheme: str):
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    if u0.basis is not Basis.DIRICHLET_SINE:
        raise ConfigurationError("initial datum must be a sine-basis field")
    if u0.K != cfg.K:
        raise ConfigurationError(f"initial datum order {u0.K} differs from config K={cfg.K}")
    if We.N != cfg.N:
        raise ConfigurationError(f"potential grid N={We.N} does not match config N={cfg.N}")
    lam = np.arange(1, cfg.K + 1, dtype=float) ** 2
    return lam


def solve_mollified_direct(u0: SpectralField, We: GridFunction, cfg: SolverConfig,
                           scheme: str = "lie") -> TimeSeriesField:
    """Split-step solve of u_t = u_xx + u dW/dx.

    lie:    u <- e^{dt Lap} (u + dt u V)
    strang: u <- e^{dt Lap/2} P_K[e^{dt V} e^{dt Lap/2} u]
    """
    if scheme == "etd2":
        raise ConfigurationError("the direct solver offers 'lie' and 'strang'")
    lam = _setup(u0, We, cfg, scheme)
    N, K, dt = cfg.N, cfg.K, cfg.dt
    V = potential_derivative(We)
    vmax = float(np.max(np.abs(V)))
    if dt * vmax > STABILITY_LIMIT:
        raise StabilityError(f"dt * max|V| = {dt * vmax:.3g} exceeds {STABILITY_LIMIT}; reduce dt")
    out = np.empty((cfg.n_steps + 1, K))
    a = u0.coeffs.copy()
    out[0] = a
    if scheme == "lie":
        full = np.exp(-lam * dt)
        for n in range(cfg.n_steps):
            u = sine_synthesis(a, N)
            a = full * (a + dt * sine_analysis(u * V, K))
            out[n + 1] = a
    else:
        half = np.exp(-lam * dt / 2)
        growth = np.exp(dt * V)
        for n in range(cfg.n_steps):
            u = sine_synthesis(half * a, N)
            a = half * sine_analysis(u * growth, K)
            out[n + 1] = a
    return TimeSeriesField(Basis.DIRICHLET_SINE, cfg.times, out)


def integrated_potential(We: GridFunction) -> np.ndarray:
    """I(x) = int_0^x W^eps by cumulative trapezoid on the grid."""
    return cumulative_trapezoid(We.values, We.x, initial=0.0)


def solve_transformed(u0: SpectralField, We: GridFunction, cfg: SolverConfig,
                      scheme: str = "etd2", return_v: bool = False):
    """Solve through v = u e^{I}, I = int_0^x W^eps, then map back with e^{-I}.

    The drift and zero-order terms of the v-equation are explicit: forward
    Euler for lie, Heun between two diffusion half-steps for strang, and
    the second-order exponential Runge-Kutta step for etd2.  The drift does
    not vanish at x = pi, which costs the splitting schemes an order; etd2
    keeps second order.  With return_v the v trajectory is returned
    alongside u.
    """
    lam = _setup(u0, We, cfg, scheme)
    N, K, dt = cfg.N, cfg.K, cfg.dt
    W = np.asarray(We.values)
    W2 = W * W
    if dt * float(np.max(W2)) > STABILITY_LIMIT:
        raise StabilityError(f"dt * max W^2 = {dt * np.max(W2):.3g} exceeds {STABILITY_LIMIT}; reduce dt")
    I = integrated_potential(We)
    weight, unweight = np.exp(I), np.exp(-I)

    def rhs(a):
        v = sine_synthesis(a, N)
        vx = cosine_synthesis(sine_to_cosine_derivative(a), N)
        return sine_analysis(-2.0 * W * vx + W2 * v, K)

    a = sine_analysis(sine_synthesis(u0.coeffs, N) * weight, K)
    vs = np.empty((cfg.n_steps + 1, K))
    vs[0] = a
    if scheme == "lie":
        full = np.exp(-lam * dt)
        for n in range(cfg.n_steps):
            a = full * (a + dt * rhs(a))
            vs[n + 1] = a
    elif scheme == "etd2":
        decay, w_left, w_right = etd_weights(dt, lam)
        for n in range(cfg.n_steps):
            r = rhs(a)
            pred = decay * a + (w_left + w_right) * r
            a = pred + w_right * (rhs(pred) - r)
            vs[n + 1] = a
    else:
        half = np.exp(-lam * dt / 2)
        for n in range(cfg.n_steps):
            b = half * a
            k1 = rhs(b)
            k2 = rhs(b + dt * k1)
            a = half * (b + 0.5 * dt * (k1 + k2))
            vs[n + 1] = a
    us = sine_analysis(sine_synthesis(vs, N) * unweight, K)
    us[0] = u0.coeffs
    u = TimeSeriesField(Basis.DIRICHLET_SINE, cfg.times, us)
    if return_v:
        return u, TimeSeriesField(Basis.DIRICHLET_SINE, cfg.times, vs)
    return u


def transformed_residual(v: TimeSeriesField, We: GridFunction) -> float:
    """Largest coefficient-wise defect of the v-equation along a trajectory.

    Uses the exact-diffusion trapezoid rule between consecutive nodes:
    v_{n+1} - e^{-k^2 dt} v_n - dt/2 (e^{-k^2 dt} R(v_n) + R(v_{n+1})).
    """
    N, K = We.N, v.K
    W = np.asarray(We.values)
    lam = np.arange(1, K + 1, dtype=float) ** 2
    a = v.coeffs
    vv = sine_synthesis(a, N)
    vx = cosine_synthesis(sine_to_cosine_derivative(a), N)
    R = sine_analysis(-2.0 * W * vx + W * W * vv, K)
    dt = np.diff(v.times)[:, None]
    decay = np.exp(-lam * dt)
    defect = a[1:] - decay * a[:-1] - 0.5 * dt * (decay * R[:-1] + R[1:])
    return float(np.max(np.abs(defect)))


def sup_distance(a: TimeSeriesField, b: TimeSeriesField, N: int) -> float:
    """max over nodes (t, x) of |a - b| on the grid."""
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times):
        raise ConfigurationError("trajectories live on different time grids")
    if a.K != b.K:
        raise ConfigurationError("trajectories have different orders")
    return float(np.max(np.abs(sine_synthesis(a.coeffs - b.coeffs, N))))


def sup_sobolev_distance(a: TimeSeriesField, b: TimeSeriesField, s: float) -> float:
    """sup over nodes of the H^s_2 norm of a - b."""
    return float(np.max(sobolev_norm_array(a.coeffs - b.coeffs, s)))


def _fit_slope(x, y) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    ok = np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(x[ok], y[ok], 1)[0])


def epsilon_convergence_study(u0: SpectralField, W: BrownianPath, eps_list, cfg: SolverConfig,
                              kinds=tuple(MollifierKind), scheme: str = "strang",
                              u_mild: TimeSeriesField | None = None) -> RunReport:
    """Error of the mollified solution against the mild solution as eps shrinks.

    For each mollifier kind and eps: mollify, solve directly, and record the
    sup-in-time H^{1+beta}_2 error together with ||W - W^eps||_{C^gamma}.
    """
    eps = np.asarray(eps_list, dtype=float)
    if eps.size < 2 or np.any(np.diff(eps) >= 0):
        raise ConfigurationError("eps_list must be strictly decreasing with at least two entries")
    start = time.perf_counter()
    if u_mild is None:
        u_mild = partitioned_solve(u0, W.grid, cfg).trajectory
    s = 1.0 + cfg.beta
    report = RunReport(study="converge-eps", config=cfg.to_dict(), seed=W.seed)
    report.metrics["epsilon"] = eps.tolist()
    for kind in kinds:
        kind = MollifierKind(kind)
        errors, dists = [], []
        for e in eps:
            spec = MollifierSpec(kind, float(e))
            We = mollify(W, spec)
            u_eps = solve_mollified_direct(u0, We, cfg, scheme=scheme)
            errors.append(sup_sobolev_distance(u_eps, u_mild, s))
            dists.append(holder_distance(W, We, cfg.gamma))
        errors, dists = np.array(errors), np.array(dists)
        rho = spearmanr(errors, dists).statistic if np.ptp(errors) > 0 and np.ptp(dists) > 0 else float("nan")
        tag = kind.value
        report.metrics[tag] = {
            "errors": errors.tolist(),
            "holder_distances": dists.tolist(),
            "strictly_decreasing": bool(np.all(np.diff(errors) < 0)),
            "distances_decreasing": bool(np.all(np.diff(dists) < 0)),
            "spearman": float(rho),
            "slope_error_vs_eps": _fit_slope(eps, errors),
            "slope_error_vs_distance": _fit_slope(dists, errors),
            "slope_distance_vs_eps": _fit_slope(eps, dists),
        }
        report.add_series(f"errors_{tag}", eps, errors, columns=("epsilon", "error"))
        report.add_series(f"distances_{tag}", eps, dists, columns=("epsilon", "holder_distance"))
    report.wallclock = time.perf_counter() - start
    return report


def polynomial_potential(coeffs, N: int) -> GridFunction:
    """W(x) = sum_j c_j x^j on the grid (c_0 is dropped so that W(0) = 0)."""
    c = np.array(coeffs, dtype=float)
    c[0:1] = 0.0
    return GridFunction(np.polynomial.polynomial.polyval(grid_nodes(N), c))
