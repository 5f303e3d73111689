"""Mild solution of u_t = u_xx + u W'(x) on (0, pi) with Dirichlet data.

The rough product u W' is never formed.  After integrating the kernel by
parts the fixed-point map reads

    (M u)(t) = P_0(t) + d/dx (P^N * (u W))(t) - (P^D * (u_x W))(t),

which only needs W itself.  In the sine basis the two convolutions merge
into a single Duhamel integral whose k-th integrand is

    -k [u W]^cos_k(s) - [u_x W]^sin_k(s).

Solutions are built by Picard iteration on blocks of length <= delta, each
block restarted from the terminal field of the previous one.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, NonConvergenceError
from .spectral import (
    Basis,
    GridFunction,
    SpectralField,
    TimeSeriesField,
    cosine_analysis,
    cosine_synthesis,
    duhamel,
    heat_propagate,
    sine_analysis,
    sine_synthesis,
    sine_to_cosine_derivative,
    sobolev_norm_array,
    sobolev_weights,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    K: int = 256
    N: int = 1024
    T: float = 0.5
    dt: float = 1e-4
    delta: float = 0.05
    tol: float = 1e-8
    max_iter: int = 60
    beta: float = 0.25
    gamma: float = 0.3
    adaptive_delta: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ConfigurationError(f"K must be >= 1, got {self.K}")
        if self.N < 2 * self.K:
            raise ConfigurationError(f"need N >= 2K, got N={self.N}, K={self.K}")
        if not 0 < self.beta < self.gamma < 0.5:
            raise ConfigurationError(f"need 0 < beta < gamma < 1/2, got beta={self.beta}, gamma={self.gamma}")
        if not 0 < self.dt <= self.delta <= self.T:
            raise ConfigurationError(f"need 0 < dt <= delta <= T, got dt={self.dt}, delta={self.delta}, T={self.T}")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if abs(self.T / self.dt - round(self.T / self.dt)) > 1e-6:
            raise ConfigurationError(f"T={self.T} is not a whole number of steps dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown solver config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class BlockSolution:
    trajectory: TimeSeriesField
    iterations: int
    increments: np.ndarray
    ratios: np.ndarray


@dataclass(frozen=True)
class MildSolution:
    trajectory: TimeSeriesField
    config: SolverConfig
    iterations_per_block: np.ndarray
    contraction_ratios: list = field(default_factory=list)
    block_edges: np.ndarray = None
    delta_used: float = None

    @property
    def all_ratios(self) -> np.ndarray:
        if not self.contraction_ratios:
            return np.zeros(0)
        return np.concatenate([np.asarray(r) for r in self.contraction_ratios])


# ---------------------------------------------------------------------------
# initial data


def initial_mode(k: int, K: int) -> SpectralField:
    return SpectralField.mode(Basis.DIRICHLET_SINE, k, K)


def random_hbeta(K: int, beta: float, seed: int | None) -> SpectralField:
    """Random field just inside H^beta_2: a_k ~ k^(-beta - 1/2 - 0.01) N(0, 1)."""
    k = np.arange(1, K + 1)
    g = np.random.default_rng(seed).standard_normal(K)
    return SpectralField(Basis.DIRICHLET_SINE, g * k ** (-beta - 0.51))


# ---------------------------------------------------------------------------
# the map M


def _check_inputs(W: GridFunction, cfg: SolverConfig, K: int):
    if W.N != cfg.N:
        raise ConfigurationError(f"potential grid N={W.N} does not match config N={cfg.N}")
    if K != cfg.K:
        raise ConfigurationError(f"field order K={K} does not match config K={cfg.K}")


class MildOperator:
    """Discrete map M for a fixed potential W on the grid.

    Works on raw coefficient arrays of shape (n_times, K) so the Picard loop
    avoids per-node object churn.
    """

    def __init__(self, W: GridFunction, K: int):
        self.W = np.asarray(W.values)
        self.N = W.N
        self.K = K
        self.k = np.arange(1, K + 1, dtype=float)
        self.lam = self.k**2

    def integrand(self, U: np.ndarray) -> np.ndarray:
        u = sine_synthesis(U, self.N)
        ux = cosine_synthesis(sine_to_cosine_derivative(U), self.N)
        uw_cos = cosine_analysis(u * self.W, self.K)
        uxw_sin = sine_analysis(ux * self.W, self.K)
        return -self.k * uw_cos[..., 1:] - uxw_sin

    def free_flow(self, times: np.ndarray, u_init: np.ndarray) -> np.ndarray:
        return np.exp(-np.outer(times - times[0], self.lam)) * u_init

    def apply(self, U, times, u_init, extra=None):
        F = self.integrand(U)
        if extra is not None:
            F = F + extra
        return self.free_flow(times, u_init) + duhamel(times, F, self.lam)


def p0(u0: SpectralField, t: float) -> SpectralField:
    """Heat flow of the initial datum; equals u0 at t = 0."""
    if u0.basis is not Basis.DIRICHLET_SINE:
        raise ConfigurationError("initial datum must be a sine-basis field")
    if t < 0:
        raise DomainError(f"P_0 needs t >= 0, got {t}")
    return heat_propagate(u0, t)


def apply_M(u: TimeSeriesField, W: GridFunction, u0: SpectralField, cfg: SolverConfig,
            forcing: TimeSeriesField | None = None) -> TimeSeriesField:
    """One application of the fixed-point map on u's time nodes.

    P_0 is taken relative to the first node of `u`, so on a block it is
    the heat flow of the block's initial field.  `forcing` adds an extra
    Duhamel source (sine basis, same nodes).
    """
    if u.basis is not Basis.DIRICHLET_SINE or u0.basis is not Basis.DIRICHLET_SINE:
        raise ConfigurationError("apply_M works on sine-basis fields")
    _check_inputs(W, cfg, u.K)
    if u0.K != u.K:
        raise ConfigurationError("initial datum and trajectory orders differ")
    op = MildOperator(W, cfg.K)
    extra = None if forcing is None else forcing.coeffs
    out = op.apply(u.coeffs, u.times, u0.coeffs, extra)
    return TimeSeriesField(Basis.DIRICHLET_SINE, u.times, out)


def _sup_norm(D: np.ndarray, s: float) -> float:
    return float(np.max(sobolev_norm_array(D, s)))


def _picard(op: MildOperator, times, u_init, cfg, U=None, extra=None, block_index=None):
    s = 1.0 + cfg.beta
    if U is None:
        U = op.free_flow(times, u_init)
    increments = []
    ratios = []
    for n in range(1, cfg.max_iter + 1):
        U_next = op.apply(U, times, u_init, extra)
        d = _sup_norm(U_next - U, s)
        if increments and increments[-1] > 0:
            ratios.append(d / increments[-1])
        increments.append(d)
        U = U_next
        if d < cfg.tol:
            return U, n, np.array(increments), np.array(ratios)
    raise NonConvergenceError(
        f"Picard iteration did not reach tol={cfg.tol} in {cfg.max_iter} iterations "
        f"on [{times[0]:.6g}, {times[-1]:.6g}]; last increment {increments[-1]:.3e}",
        ratios=ratios,
        block_index=block_index,
    )


def _block_times(t0: float, t1: float, dt: float) -> np.ndarray:
    n = int(round((t1 - t0) / dt))
    if n < 1 or abs((t1 - t0) / dt - n) > 1e-6:
        raise ConfigurationError(f"block [{t0}, {t1}] is not a whole number of steps dt={dt}")
    return t0 + np.arange(n + 1) * dt


def picard_solve_block(u_init: SpectralField, W: GridFunction, t0: float, t1: float, cfg: SolverConfig,
                       initial_iterate: str = "heat", forcing: np.ndarray | None = None,
                       block_index: int | None = None) -> BlockSolution:
    """Fixed point of M on [t0, t1] by Picard iteration.

    `initial_iterate` is "heat" (free heat flow of u_init) or "zero".
    `forcing` is an optional (n_nodes, K) array of extra Duhamel sources.
    """
    _check_inputs(W, cfg, u_init.K)
    if t1 - t0 > cfg.delta * (1 + 1e-9):
        raise ConfigurationError(f"block length {t1 - t0} exceeds delta={cfg.delta}")
    times = _block_times(t0, t1, cfg.dt)
    op = MildOperator(W, cfg.K)
    if initial_iterate == "heat":
        U = None
    elif initial_iterate == "zero":
        U = np.zeros((times.size, cfg.K))
        U[0] = u_init.coeffs
    else:
        raise ConfigurationError(f"unknown initial iterate {initial_iterate!r}")
    U, n, inc, ratios = _picard(op, times, u_init.coeffs, cfg, U=U, extra=forcing, block_index=block_index)
    return BlockSolution(TimeSeriesField(Basis.DIRICHLET_SINE, times, U), n, inc, ratios)


def snap_to_steps(length: float, dt: float) -> float:
    """Nearest whole number (>= 1) of steps dt."""
    return max(1, int(round(length / dt))) * dt


def first_contraction_ratio(u_init: SpectralField, W: GridFunction, delta: float, cfg: SolverConfig) -> float:
    """||u2 - u1|| / ||u1 - u0|| on a single block [0, delta] starting from the heat flow.

    delta is snapped to the nearest whole number of steps.
    """
    times = _block_times(0.0, snap_to_steps(delta, cfg.dt), cfg.dt)
    op = MildOperator(W, cfg.K)
    U0 = op.free_flow(times, u_init.coeffs)
    U1 = op.apply(U0, times, u_init.coeffs)
    U2 = op.apply(U1, times, u_init.coeffs)
    s = 1.0 + cfg.beta
    d1 = _sup_norm(U1 - U0, s)
    return _sup_norm(U2 - U1, s) / d1 if d1 > 0 else 0.0


def choose_block_length(u0: SpectralField, W: GridFunction, cfg: SolverConfig, pilot: float | None = None) -> float:
    """delta = min(cfg.delta, (2 C ||W||_gamma)^-2), C from a pilot contraction ratio.

    C is calibrated assuming the ratio behaves like C delta^(1/2) ||W||_gamma,
    so the chosen block has a predicted ratio of 1/2.  The result is rounded
    down to a whole number of steps.
    """
    from .noise import holder_norm_estimate

    pilot = min(cfg.delta, 0.01) if pilot is None else pilot
    pilot = max(cfg.dt, math.floor(pilot / cfg.dt + 1e-9) * cfg.dt)
    wnorm = holder_norm_estimate(W, cfg.gamma)
    if wnorm == 0:
        return cfg.delta
    ratio = first_contraction_ratio(u0, W, pilot, cfg)
    if ratio <= 0:
        return cfg.delta
    c_hat = ratio / (math.sqrt(pilot) * wnorm)
    delta = min(cfg.delta, (2 * c_hat * wnorm) ** -2)
    return max(cfg.dt, math.floor(delta / cfg.dt + 1e-9) * cfg.dt)


def partitioned_solve(u0: SpectralField, W: GridFunction, cfg: SolverConfig,
                      forcing: np.ndarray | None = None, initial_iterate: str = "heat") -> MildSolution:
    """Chain block solves over 0 = t_0 < ... < t_n = T with t_{i+1} - t_i <= delta.

    `forcing`, if given, is a (n_steps + 1, K) array of extra sources on the
    global time grid.
    """
    _check_inputs(W, cfg, u0.K)
    if u0.basis is not Basis.DIRICHLET_SINE:
        raise ConfigurationError("initial datum must be a sine-basis field")
    delta = choose_block_length(u0, W, cfg) if cfg.adaptive_delta else cfg.delta
    steps_per_block = max(1, int(math.floor(delta / cfg.dt + 1e-9)))
    n = cfg.n_steps
    edges = list(range(0, n, steps_per_block)) + [n]
    times = cfg.times
    op = MildOperator(W, cfg.K)
    U = np.empty((n + 1, cfg.K))
    U[0] = u0.coeffs
    iterations, ratios = [], []
    for b, (i0, i1) in enumerate(zip(edges[:-1], edges[1:])):
        block_t = times[i0:i1 + 1]
        extra = None if forcing is None else forcing[i0:i1 + 1]
        init = None
        if initial_iterate == "zero":
            init = np.zeros((block_t.size, cfg.K))
            init[0] = U[i0]
        Ub, it, _, r = _picard(op, block_t, U[i0].copy(), cfg, U=init, extra=extra, block_index=b)
        U[i0:i1 + 1] = Ub
        iterations.append(it)
        ratios.append(r)
    log.debug("mild solve: %d blocks, iterations %s", len(iterations), iterations)
    return MildSolution(
        trajectory=TimeSeriesField(Basis.DIRICHLET_SINE, times, U),
        config=cfg,
        iterations_per_block=np.array(iterations),
        contraction_ratios=ratios,
        block_edges=times[edges],
        delta_used=steps_per_block * cfg.dt,
    )


def residual_check(sol: MildSolution, W: GridFunction, forcing: np.ndarray | None = None, p: int = 2) -> float:
    """max_t ||u - M u||_{H^{1+beta}_p} for the global map on [0, T].

    p = 2 is the norm the solver certifies; p = 4 samples the multiplied
    defect on the solver grid and integrates with the trapezoid rule.
    """
    traj = sol.trajectory
    op = MildOperator(W, sol.config.K)
    Mu = op.apply(traj.coeffs, traj.times, traj.coeffs[0], forcing)
    s = 1.0 + sol.config.beta
    if p == 2:
        return _sup_norm(traj.coeffs - Mu, s)
    if p != 4:
        raise ConfigurationError(f"residual norms support p in {{2, 4}}, got {p}")
    g = np.abs(sine_synthesis((traj.coeffs - Mu) * sobolev_weights(sol.config.K, s), W.N)) ** 4
    integral = (g.sum(axis=-1) - 0.5 * (g[:, 0] + g[:, -1])) * W.spacing
    return float(np.max(integral) ** 0.25)


def solve_ensemble(u0: SpectralField, paths, cfg: SolverConfig) -> list[MildSolution]:
    """One independent solve per path; no shared state between members."""
    return [partitioned_solve(u0, p.grid if hasattr(p, "grid") else p, cfg) for p in paths]
