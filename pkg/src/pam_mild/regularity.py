"""Empirical Hoelder exponents and smoothing-rate studies.

Exponents are read off log-log fits of sup-increments against dyadic lags.
The fit uses a central window: the two smallest lags (discretisation floor)
and the largest lag (boundary/window effects) are dropped.  The window is
recorded in every ExponentFit.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .noise import holder_norm_estimate
from .report import RunReport
from .spectral import (
    SQRT_2_OVER_PI,
    Basis,
    GridFunction,
    SpectralField,
    TimeSeriesField,
    cosine_synthesis,
    dirichlet_convolve,
    neumann_convolve,
    sine_to_cosine_derivative,
    sobolev_norm,
)

MIN_LAGS = 6
DROP_SMALL = 2
DROP_LARGE = 1


@dataclass(frozen=True)
class ExponentFit:
    lags: np.ndarray
    sup_increments: np.ndarray
    slope: float
    r2: float
    window: tuple
    intercept: float = 0.0

    def to_dict(self) -> dict:
        return {
            "lags": self.lags.tolist(),
            "sup_increments": self.sup_increments.tolist(),
            "slope": self.slope,
            "r2": self.r2,
            "window": list(self.window),
        }


def fit_loglog(lags, incs, drop_small: int = DROP_SMALL, drop_large: int = DROP_LARGE) -> ExponentFit:
    """Least-squares slope of log(incs) on log(lags) over the central window.

    Lags may come in any order; they are stored decreasing.
    """
    lags = np.asarray(lags, dtype=float)
    incs = np.asarray(incs, dtype=float)
    order = np.argsort(lags)
    lags, incs = lags[order], incs[order]
    if lags.size - drop_small - drop_large < 3:
        raise ConfigurationError(f"need at least {drop_small + drop_large + 3} lags, got {lags.size}")
    sel = slice(drop_small, lags.size - drop_large)
    with np.errstate(divide="ignore"):
        x, y = np.log(lags[sel]), np.log(incs[sel])
    if not np.all(np.isfinite(y)):
        raise ConfigurationError("zero or non-finite increments inside the fit window")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(
        lags=lags[::-1].copy(),
        sup_increments=incs[::-1].copy(),
        slope=float(slope),
        r2=float(r2),
        window=(float(lags[sel][0]), float(lags[sel][-1])),
        intercept=float(intercept),
    )


def _sine_at(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    k = np.arange(1, coeffs.shape[-1] + 1)
    return coeffs @ (SQRT_2_OVER_PI * np.sin(np.outer(k, x)))


def default_probes(N: int, count: int = 63) -> np.ndarray:
    """Interior probe points, evenly spread over the grid nodes."""
    idx = np.unique(np.linspace(1, N - 1, count).round().astype(int))
    return idx * math.pi / N


def estimate_time_exponent(u: TimeSeriesField, x_probes=None, t_window=None, N: int = 1024,
                           max_lag: float | None = None) -> ExponentFit:
    """Time-Hoelder exponent from sup_{t, x} |u(t + h, x) - u(t, x)| over dyadic h.

    Lags run over dt * 2^j up to max_lag (default (window length) / 8 where
    the window is t_window, default the whole time range).  Both t and t + h
    must lie inside the window.
    """
    if u.basis is not Basis.DIRICHLET_SINE:
        raise ConfigurationError("time exponent expects a sine-basis trajectory")
    times = u.times
    dts = np.diff(times)
    dt = float(dts[0])
    if not np.allclose(dts, dt, rtol=1e-9, atol=0):
        raise ConfigurationError("time exponent needs uniformly spaced nodes")
    x = default_probes(N) if x_probes is None else np.asarray(x_probes, dtype=float)
    if np.any((x <= 0) | (x >= math.pi)):
        raise ConfigurationError("probe points must be interior")
    lo, hi = (times[0], times[-1]) if t_window is None else t_window
    i0 = int(np.searchsorted(times, lo - 1e-12))
    i1 = int(np.searchsorted(times, hi + 1e-12)) - 1
    vals = _sine_at(u.coeffs[i0:i1 + 1], x)
    span = times[i1] - times[i0]
    max_lag = span / 8 if max_lag is None else max_lag
    steps = []
    s = 1
    while s * dt <= max_lag * (1 + 1e-9) and s <= i1 - i0:
        steps.append(s)
        s *= 2
    if len(steps) < MIN_LAGS:
        raise ConfigurationError(f"only {len(steps)} dyadic lags fit in [dt, {max_lag:.3g}], need {MIN_LAGS}")
    incs = [float(np.max(np.abs(vals[s:] - vals[:-s]))) for s in steps]
    return fit_loglog(np.array(steps) * dt, incs)


def estimate_space_exponent(u_slice: GridFunction, order: int = 2, max_lag_fraction: float = 1 / 8) -> ExponentFit:
    """Space-Hoelder exponent from sup_x of finite differences over dyadic lags.

    order=2 uses |u(x+h) - 2u(x) + u(x-h)|, suited to exponents in (1, 2);
    order=1 uses |u(x+h) - u(x)| for exponents in (0, 1).  Lags run over
    grid multiples 2^j up to max_lag_fraction * pi.
    """
    if order not in (1, 2):
        raise ConfigurationError(f"difference order must be 1 or 2, got {order}")
    v = np.asarray(u_slice.values)
    N = u_slice.N
    steps = []
    s = 1
    while s <= max_lag_fraction * N and order * s < N:
        steps.append(s)
        s *= 2
    if len(steps) < MIN_LAGS:
        raise ConfigurationError(f"grid N={N} too coarse: {len(steps)} lags, need {MIN_LAGS}")
    incs = []
    for s in steps:
        if order == 1:
            d = v[s:] - v[:-s]
        else:
            d = v[2 * s:] - 2 * v[s:-s] + v[:-2 * s]
        incs.append(float(np.max(np.abs(d))))
    return fit_loglog(np.array(steps) * (math.pi / N), incs)


def derivative_grid(f: SpectralField, N: int) -> GridFunction:
    """Spectral derivative of a sine field, on the grid."""
    if f.basis is not Basis.DIRICHLET_SINE:
        raise ConfigurationError("derivative_grid expects a sine-basis field")
    return GridFunction(cosine_synthesis(sine_to_cosine_derivative(f.coeffs), N))


# ---------------------------------------------------------------------------
# embedding


def embedding_check(f: SpectralField, beta: float, p: int, N: int | None = None) -> dict:
    """Sobolev H^{1+beta}_p norm against the Hoelder norm of f' at exponent beta - 1/p."""
    if p not in (2, 4):
        raise ConfigurationError(f"embedding check supports p in {{2, 4}}, got {p}")
    alpha = beta - 1.0 / p
    if alpha <= 0 or alpha >= 1:
        raise ConfigurationError(f"need 0 < beta - 1/p < 1, got {alpha:.3g}")
    N = 4 * f.K if N is None else N
    sob = sobolev_norm(f, 1.0 + beta, p=p, N=N)
    hol = holder_norm_estimate(derivative_grid(f, N), alpha)
    if sob == 0:
        return {"sobolev": 0.0, "holder": hol, "ratio": None}
    return {"sobolev": sob, "holder": hol, "ratio": hol / sob}


def random_sobolev_field(K: int, s: float, rng: np.random.Generator) -> SpectralField:
    """Random sine field just inside H^s_2: a_k ~ k^(-s - 1/2 - 0.01) N(0, 1)."""
    k = np.arange(1, K + 1)
    return SpectralField(Basis.DIRICHLET_SINE, rng.standard_normal(K) * k ** (-s - 0.51))


def embedding_family(K: int, beta: float, p: int, n_fields: int, seed: int) -> dict:
    """Embedding ratios over a random family; zero fields are skipped."""
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(n_fields):
        r = embedding_check(random_sobolev_field(K, 1.0 + beta, rng), beta, p)["ratio"]
        if r is not None:
            ratios.append(r)
    ratios = np.array(ratios)
    return {"K": K, "max_ratio": float(ratios.max()), "mean_ratio": float(ratios.mean()), "n": int(ratios.size)}


# ---------------------------------------------------------------------------
# smoothing-rate studies

SPECTRA = ("critical", "white")


def envelope_field(K: int, envelope_power: float, rng: np.random.Generator, spectrum: str = "critical") -> np.ndarray:
    """Random-sign coefficients with |a_k| ~ k^(-envelope_power) (critical) or N(0,1) draws (white).

    Coefficients are scaled to unit l2 norm.
    """
    if spectrum == "critical":
        k = np.arange(1, K + 1, dtype=float)
        a = rng.choice([-1.0, 1.0], size=K) * k ** (-envelope_power)
    elif spectrum == "white":
        a = rng.standard_normal(K)
    else:
        raise ConfigurationError(f"unknown spectrum {spectrum!r}, expected one of {SPECTRA}")
    return a / np.linalg.norm(a)


def _slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def smoothing_norms(a: np.ndarray, theta: float, times: np.ndarray) -> np.ndarray:
    """||Lambda^theta e^{t Lap} h||_2 for sine coefficients a at each t."""
    k = np.arange(1, a.size + 1, dtype=float)
    w = k ** (2 * theta) * a**2
    return np.sqrt(np.exp(-2.0 * np.outer(times, k**2)) @ w)


def kry_scaling_study(theta_list=(0.5, 1.0, 2.0), p: int = 2, K: int = 2**14, seed: int = 0,
                      t_range=(1e-4, 1e-1), n_times: int = 25, spectrum: str = "critical") -> RunReport:
    """Fitted t-exponent of ||Lambda^theta e^{t Lap} h||_2 against -theta/2.

    The default "critical" field has |a_k| ~ k^(-1/2), the spectrum for which
    every scale contributes equally; a white field (equal-weight draws) on
    K modes decays faster, like t^(-theta/2 - 1/4) while sqrt(t) K >> 1,
    and is reported alongside.  The single-mode worst case
    max_k k^theta e^{-k^2 t} is also fitted.
    """
    if p != 2:
        raise ConfigurationError("only p = 2 is supported by the smoothing study")
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    a = envelope_field(K, 0.5, rng, spectrum)
    white = envelope_field(K, 0.5, np.random.default_rng(seed), "white")
    times = np.geomspace(*t_range, n_times)
    k = np.arange(1, K + 1, dtype=float)
    report = RunReport(study="study-kry", config={"K": K, "p": p, "t_range": list(t_range),
                                                  "n_times": n_times, "spectrum": spectrum}, seed=seed)
    fits = {}
    for theta in theta_list:
        theta = float(theta)
        if not 0 <= theta <= 2:
            raise ConfigurationError(f"theta must lie in [0, 2], got {theta}")
        norms = smoothing_norms(a, theta, times)
        slope = _slope(times, norms)
        worst = np.array([np.max(k**theta * np.exp(-k**2 * t)) for t in times])
        c_fit = float(np.max(norms * times ** (theta / 2)))
        fits[str(theta)] = {
            "slope": slope,
            "target": -theta / 2,
            "deviation": slope + theta / 2,
            "white_slope": _slope(times, smoothing_norms(white, theta, times)),
            "single_mode_slope": _slope(times, worst),
            "fitted_constant": c_fit,
            "bound_holds": bool(np.all(norms <= c_fit * times ** (-theta / 2) * (1 + 1e-12))),
        }
        report.add_series(f"kry_theta_{theta:g}", times, norms, columns=("t", "norm"))
    report.metrics["kry"] = fits
    report.wallclock = time.perf_counter() - start
    return report


def schauder_norm(f: SpectralField, beta: float, T: float) -> float:
    """sup_{t <= T} ||P * f(t)||_{H^{2+beta}_2} for f constant in time.

    The convolution runs through the basis's own heat kernel (sine: P^D,
    cosine: P^N).  Each coefficient (1 - e^{-k^2 t}) f_k / k^2 increases in
    t, so the sup is attained at t = T.
    """
    traj = TimeSeriesField(f.basis, np.array([0.0, T]), np.stack([f.coeffs, f.coeffs]))
    conv = dirichlet_convolve(traj, T) if f.basis is Basis.DIRICHLET_SINE else neumann_convolve(traj, T)
    return sobolev_norm(conv, 2.0 + beta)


def critical_field(basis: Basis, K: int, gamma: float, rng: np.random.Generator) -> SpectralField:
    """Random-sign field with |f_k| ~ k^(-gamma - 1/2), unit H^gamma_2 norm.

    A cosine field also gets a unit mean mode, which carries no weight in
    either norm.
    """
    k = np.arange(1, K + 1, dtype=float)
    a = rng.choice([-1.0, 1.0], size=K) * k ** (-gamma - 0.5)
    a /= math.sqrt(np.sum(k ** (2 * gamma) * a**2))
    if basis is Basis.NEUMANN_COSINE:
        a = np.concatenate([[1.0], a])
    return SpectralField(basis, a)


def schauder_scaling_study(gamma: float, beta: float, p: int = 2, K: int = 2**18, seed: int = 0,
                           horizons=None) -> RunReport:
    """Fitted T-exponent of sup_t ||P * f||_{H^{2+beta}_2} for ||f||_{H^gamma_2} = 1.

    Dirichlet: f a random-sign sine field with |f_k| ~ k^(-gamma - 1/2), the
    critical H^gamma spectrum.  Neumann: an independent cosine field with the
    same envelope.
    Also fits the single-mode family f = k^-gamma m_k with k = round(T^-1/2).
    """
    if not 0 < beta < gamma < 1:
        raise ConfigurationError(f"need 0 < beta < gamma < 1, got beta={beta}, gamma={gamma}")
    if p != 2:
        raise ConfigurationError("only p = 2 is supported by the Schauder study")
    start = time.perf_counter()
    horizons = 2.0 ** np.arange(-12, -3) if horizons is None else np.asarray(horizons, dtype=float)
    rng = np.random.default_rng(seed)
    target = (gamma - beta) / 2
    report = RunReport(study="study-schauder", config={"gamma": gamma, "beta": beta, "p": p, "K": K,
                                                       "horizons": horizons.tolist()}, seed=seed)
    out = {"target": target}
    for name, basis in (("dirichlet", Basis.DIRICHLET_SINE), ("neumann", Basis.NEUMANN_COSINE)):
        f = critical_field(basis, K, gamma, rng)
        norms = np.array([schauder_norm(f, beta, T) for T in horizons])
        slope = _slope(horizons, norms)
        out[name] = {"slope": slope, "deviation": slope - target,
                     "fitted_constant": float(np.max(norms / horizons**target))}
        report.add_series(f"schauder_{name}", horizons, norms, columns=("T", "norm"))
    modes = np.maximum(1, np.round(horizons ** -0.5)).astype(int)
    single = np.array([(1 - math.exp(-m * m * T)) * float(m) ** (beta - gamma) for m, T in zip(modes, horizons)])
    c_single = single / horizons**target
    out["single_mode"] = {"slope": _slope(horizons, single), "ratio_min": float(c_single.min()),
                          "ratio_max": float(c_single.max())}
    report.metrics["schauder"] = out
    report.wallclock = time.perf_counter() - start
    return report
