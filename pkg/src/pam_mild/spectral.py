"""Eigenbasis representation of functions on (0, pi).

Functions are stored as coefficient vectors in one of two orthonormal bases
of L2(0, pi):

* Dirichlet sine basis   m_k(x) = sqrt(2/pi) sin(kx),  k = 1..K
* Neumann cosine basis   m~_0 = 1/sqrt(pi),  m~_k(x) = sqrt(2/pi) cos(kx),  k = 0..K

Grid samples live on the uniform nodes x_j = j*pi/N, j = 0..N.  Transforms
between the two are composite-trapezoid projections, computed with DST-I /
DCT-I, so a band-limited field round-trips exactly whenever K < N.

The heat semigroup, fractional Laplacian and Duhamel (space-time)
convolutions are all diagonal in these bases.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import ConfigurationError, DomainError

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


class Basis(str, enum.Enum):
    DIRICHLET_SINE = "DirichletSine"
    NEUMANN_COSINE = "NeumannCosine"

    @property
    def offset(self) -> int:
        """Wavenumber of the first stored coefficient."""
        return 1 if self is Basis.DIRICHLET_SINE else 0


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def wavenumbers(basis: Basis, K: int) -> np.ndarray:
    """Wavenumbers k matching the coefficient layout of `basis` at order K."""
    return np.arange(basis.offset, K + 1, dtype=float)


def grid_nodes(N: int) -> np.ndarray:
    return np.linspace(0.0, math.pi, N + 1)


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class SpectralField:
    """Truncated eigen-expansion of a function on (0, pi)."""

    basis: Basis
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis(self.basis))
        c = _readonly(self.coeffs)
        if c.ndim != 1:
            raise ConfigurationError("coefficients must be a 1-D vector")
        if self.basis is Basis.DIRICHLET_SINE and c.size < 1:
            raise ConfigurationError("sine field needs at least one coefficient")
        if self.basis is Basis.NEUMANN_COSINE and c.size < 1:
            raise ConfigurationError("cosine field needs at least the k=0 coefficient")
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self) -> int:
        return self.coeffs.size - (1 - self.basis.offset)

    @property
    def k(self) -> np.ndarray:
        return wavenumbers(self.basis, self.K)

    @classmethod
    def zeros(cls, basis: Basis, K: int) -> "SpectralField":
        basis = Basis(basis)
        return cls(basis, np.zeros(K + 1 - basis.offset))

    @classmethod
    def mode(cls, basis: Basis, k: int, K: int, amplitude: float = 1.0) -> "SpectralField":
        """Single eigenfunction m_k (or m~_k) scaled by `amplitude`."""
        basis = Basis(basis)
        c = np.zeros(K + 1 - basis.offset)
        c[k - basis.offset] = amplitude
        return cls(basis, c)

    def evaluate(self, N: int) -> "GridFunction":
        return GridFunction(synthesize(self.basis, self.coeffs, N))

    def with_coeffs(self, coeffs) -> "SpectralField":
        return SpectralField(self.basis, coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_layout(self, other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_layout(self, other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def to_dict(self) -> dict:
        return {"basis": self.basis.value, "K": self.K, "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralField":
        field = cls(Basis(d["basis"]), d["coeffs"])
        if "K" in d and int(d["K"]) != field.K:
            raise ConfigurationError(f"K={d['K']} does not match {field.coeffs.size} coefficients")
        return field


def _check_same_layout(a: SpectralField, b: SpectralField):
    if a.basis is not b.basis or a.K != b.K:
        raise ConfigurationError(
            f"incompatible fields: {a.basis.value}/K={a.K} vs {b.basis.value}/K={b.K}"
        )


@dataclass(frozen=True)
class GridFunction:
    """Samples on the nodes x_j = j*pi/N, j = 0..N."""

    values: np.ndarray

    def __post_init__(self):
        v = _readonly(self.values)
        if v.ndim != 1 or v.size < 2:
            raise ConfigurationError("grid function needs at least two nodes")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("grid values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.size - 1

    @property
    def x(self) -> np.ndarray:
        return grid_nodes(self.N)

    @property
    def spacing(self) -> float:
        return math.pi / self.N

    @classmethod
    def from_callable(cls, fn, N: int) -> "GridFunction":
        return cls(np.broadcast_to(fn(grid_nodes(N)), (N + 1,)))

    @classmethod
    def zeros(cls, N: int) -> "GridFunction":
        return cls(np.zeros(N + 1))

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        if other.N != self.N:
            raise ConfigurationError(f"grid mismatch: N={self.N} vs N={other.N}")
        return GridFunction(self.values - other.values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        if other.N != self.N:
            raise ConfigurationError(f"grid mismatch: N={self.N} vs N={other.N}")
        return GridFunction(self.values + other.values)

    def to_csv(self, path=None, header=("x", "value")) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for x, v in zip(self.x, self.values):
            w.writerow([repr(float(x)), repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "GridFunction":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 1])


@dataclass(frozen=True)
class TimeSeriesField:
    """A trajectory t -> u(t, .) stored as a (n_times, n_coeffs) array."""

    basis: Basis
    times: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis(self.basis))
        t = _readonly(self.times)
        c = _readonly(self.coeffs)
        if t.ndim != 1 or t.size < 1:
            raise ConfigurationError("need at least one time node")
        if np.any(np.diff(t) <= 0):
            raise ConfigurationError("time nodes must be strictly increasing")
        if c.ndim != 2 or c.shape[0] != t.size:
            raise ConfigurationError("coeffs must have shape (len(times), n_coeffs)")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self) -> int:
        return self.coeffs.shape[1] - (1 - self.basis.offset)

    def __len__(self):
        return self.times.size

    def __getitem__(self, i) -> SpectralField:
        return SpectralField(self.basis, self.coeffs[i])

    @classmethod
    def constant(cls, field: SpectralField, times) -> "TimeSeriesField":
        times = np.asarray(times, dtype=float)
        return cls(field.basis, times, np.tile(field.coeffs, (times.size, 1)))

    @classmethod
    def from_fields(cls, times, fields) -> "TimeSeriesField":
        fields = list(fields)
        basis = fields[0].basis
        if any(f.basis is not basis or f.K != fields[0].K for f in fields):
            raise ConfigurationError("all member fields must share basis and K")
        return cls(basis, times, np.stack([f.coeffs for f in fields]))

    def grid_values(self, N: int) -> np.ndarray:
        """Values on the spatial grid, shape (n_times, N+1)."""
        return synthesize(self.basis, self.coeffs, N)

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.value,
            "K": self.K,
            "times": self.times.tolist(),
            "coeffs": self.coeffs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TimeSeriesField":
        return cls(Basis(d["basis"]), d["times"], d["coeffs"])


# ---------------------------------------------------------------------------
# array-level transforms (batched along the last axis)


def _pad(coeffs: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(coeffs.shape[:-1] + (n,))
    m = min(n, coeffs.shape[-1])
    out[..., :m] = coeffs[..., :m]
    return out


def sine_synthesis(coeffs: np.ndarray, N: int) -> np.ndarray:
    """sum_k a_k m_k(x_j) at all N+1 nodes; coeffs[..., k-1] = a_k."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] > N - 1:
        raise ConfigurationError(f"sine order {coeffs.shape[-1]} needs N > K (got N={N})")
    out = np.zeros(coeffs.shape[:-1] + (N + 1,))
    out[..., 1:N] = 0.5 * SQRT_2_OVER_PI * scipy.fft.dst(_pad(coeffs, N - 1), type=1, axis=-1)
    return out


def sine_analysis(values: np.ndarray, K: int) -> np.ndarray:
    """Trapezoid projection onto m_1..m_K; boundary samples are ignored."""
    values = np.asarray(values, dtype=float)
    N = values.shape[-1] - 1
    h = math.pi / N
    full = scipy.fft.dst(values[..., 1:N], type=1, axis=-1)
    return (0.5 * h * SQRT_2_OVER_PI) * full[..., :K]


def cosine_synthesis(coeffs: np.ndarray, N: int) -> np.ndarray:
    """sum_k a_k m~_k(x_j) at all N+1 nodes; coeffs[..., k] = a_k."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] > N:
        raise ConfigurationError(f"cosine order {coeffs.shape[-1] - 1} needs N > K (got N={N})")
    c = _pad(coeffs, N + 1)
    c[..., 0] *= INV_SQRT_PI
    c[..., 1:N] *= 0.5 * SQRT_2_OVER_PI
    c[..., N] *= SQRT_2_OVER_PI
    return scipy.fft.dct(c, type=1, axis=-1)


def cosine_analysis(values: np.ndarray, K: int) -> np.ndarray:
    """Trapezoid projection onto m~_0..m~_K (endpoints weighted 1/2)."""
    values = np.asarray(values, dtype=float)
    N = values.shape[-1] - 1
    h = math.pi / N
    full = scipy.fft.dct(values, type=1, axis=-1)[..., : K + 1]
    out = (0.5 * h * SQRT_2_OVER_PI) * full
    out[..., 0] = 0.5 * h * INV_SQRT_PI * full[..., 0]
    return out


def synthesize(basis: Basis, coeffs, N: int) -> np.ndarray:
    if Basis(basis) is Basis.DIRICHLET_SINE:
        return sine_synthesis(coeffs, N)
    return cosine_synthesis(coeffs, N)


def analyze(basis: Basis, values, K: int) -> np.ndarray:
    if Basis(basis) is Basis.DIRICHLET_SINE:
        return sine_analysis(values, K)
    return cosine_analysis(values, K)


def sine_to_cosine_derivative(coeffs: np.ndarray) -> np.ndarray:
    """d/dx of a sine series as cosine coefficients: a_k m_k -> k a_k m~_k."""
    coeffs = np.asarray(coeffs, dtype=float)
    K = coeffs.shape[-1]
    out = np.zeros(coeffs.shape[:-1] + (K + 1,))
    out[..., 1:] = coeffs * np.arange(1, K + 1)
    return out


def cosine_to_sine_derivative(coeffs: np.ndarray) -> np.ndarray:
    """d/dx of a cosine series as sine coefficients: b_k m~_k -> -k b_k m_k."""
    coeffs = np.asarray(coeffs, dtype=float)
    K = coeffs.shape[-1] - 1
    return -coeffs[..., 1:] * np.arange(1, K + 1)


def _check_order(K: int, N: int):
    if K <= 0:
        raise ConfigurationError(f"truncation order must be positive, got K={K}")
    if N < 2 * K:
        raise ConfigurationError(f"grid too coarse: need N >= 2K, got N={N}, K={K}")


# ---------------------------------------------------------------------------
# operations


def sine_transform(f: GridFunction, K: int) -> SpectralField:
    _check_order(K, f.N)
    return SpectralField(Basis.DIRICHLET_SINE, sine_analysis(f.values, K))


def cosine_transform(f: GridFunction, K: int) -> SpectralField:
    _check_order(K, f.N)
    return SpectralField(Basis.NEUMANN_COSINE, cosine_analysis(f.values, K))


def heat_propagate(f: SpectralField, t: float) -> SpectralField:
    """e^{t Laplacian} f: each coefficient decays by exp(-k^2 t)."""
    if t < 0:
        raise DomainError(f"heat semigroup needs t >= 0, got {t}")
    return f.with_coeffs(np.exp(-f.k**2 * t) * f.coeffs)


def apply_frac_laplacian(f: SpectralField, theta: float) -> SpectralField:
    """(-Laplacian)^{theta/2} f, i.e. a_k -> k^theta a_k."""
    if theta == 0:
        return f
    k = f.k
    mult = np.zeros_like(k)
    pos = k > 0
    mult[pos] = k[pos] ** theta
    if f.basis is Basis.NEUMANN_COSINE and theta < 0 and f.coeffs[0] != 0:
        raise DomainError("negative power of the Laplacian on a field with a nonzero k=0 mode")
    return f.with_coeffs(mult * f.coeffs)


def sobolev_weights(K: int, s: float, basis: Basis = Basis.DIRICHLET_SINE) -> np.ndarray:
    k = wavenumbers(Basis(basis), K)
    w = np.zeros_like(k)
    w[k > 0] = k[k > 0] ** s
    return w


def sobolev_norm(f: SpectralField, s: float, p: float = 2, N: int | None = None) -> float:
    """||(-Laplacian)^{s/2} f||_{L_p(0, pi)}.

    p = 2 is evaluated exactly through Parseval.  p = 1 and p = 4 sample the
    multiplied field on the grid and apply the trapezoid rule.
    """
    if p not in (1, 2, 4):
        raise ConfigurationError(f"unsupported integrability p={p}; use 1, 2 or 4")
    if p == 2:
        w = sobolev_weights(f.K, s, f.basis)
        return float(np.sqrt(np.sum((w * f.coeffs) ** 2)))
    if f.basis is not Basis.DIRICHLET_SINE:
        raise ConfigurationError("p != 2 Sobolev norms are defined for sine fields only")
    N = 4 * f.K if N is None else N
    _check_order(f.K, N)
    g = np.abs(apply_frac_laplacian(f, s).evaluate(N).values) ** p
    h = math.pi / N
    integral = h * (g.sum() - 0.5 * (g[0] + g[-1]))
    return float(integral ** (1.0 / p))


def sobolev_norm_array(coeffs: np.ndarray, s: float) -> np.ndarray:
    """H^s_2 norm of sine coefficient arrays along the last axis."""
    w = sobolev_weights(coeffs.shape[-1], s)
    return np.sqrt(np.sum((coeffs * w) ** 2, axis=-1))


# ---------------------------------------------------------------------------
# Duhamel convolution in time


def _phi1(z):
    """(1 - e^{-z}) / z, with the z = 0 limit."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = -np.expm1(-z[nz]) / z[nz]
    return out


def _phi2(z):
    """(z - 1 + e^{-z}) / z^2, series near 0 to dodge cancellation."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < 1e-2
    zs = z[small]
    out[small] = 0.5 - zs / 6 + zs**2 / 24 - zs**3 / 120 + zs**4 / 720
    zb = z[~small]
    out[~small] = (zb + np.expm1(-zb)) / zb**2
    return out


def etd_weights(h, lam):
    """Exact weights for int_0^h e^{-lam (h - r)} f(r) dr, f linear on [0, h].

    Returns (decay, w_left, w_right) so that the integral equals
    w_left * f(0) + w_right * f(h).
    """
    z = np.multiply.outer(np.asarray(h, dtype=float), np.asarray(lam, dtype=float))
    hh = np.asarray(h, dtype=float)[..., None] if np.ndim(h) else float(h)
    a = hh * _phi1(z)
    b = hh * _phi2(z)
    return np.exp(-z), a - b, b


def duhamel(times: np.ndarray, forcing: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """int_{t_0}^{t_i} e^{-lam (t_i - s)} F(s) ds at every node t_i.

    `forcing` has shape (n_times, n_modes) and is taken piecewise linear in s
    between nodes, for which the result is exact.
    """
    times = np.asarray(times, dtype=float)
    forcing = np.asarray(forcing, dtype=float)
    out = np.zeros_like(forcing)
    if times.size < 2:
        return out
    steps = np.diff(times)
    if np.allclose(steps, steps[0], rtol=1e-12, atol=0):
        decay, wl, wr = etd_weights(steps[0], lam)
        decay = np.broadcast_to(decay, (steps.size,) + decay.shape)
        wl = np.broadcast_to(wl, decay.shape)
        wr = np.broadcast_to(wr, decay.shape)
    else:
        decay, wl, wr = etd_weights(steps, lam)
    acc = np.zeros(forcing.shape[1:])
    for i in range(steps.size):
        acc = decay[i] * acc + wl[i] * forcing[i] + wr[i] * forcing[i + 1]
        out[i + 1] = acc
    return out


def _convolve_at(times, forcing, lam, t):
    if t < times[0] - 1e-14 or t > times[-1] * (1 + 1e-14) + 1e-14:
        raise DomainError(f"t={t} outside the time range [{times[0]}, {times[-1]}]")
    t = min(max(t, times[0]), times[-1])
    i = int(np.searchsorted(times, t, side="right") - 1)
    i = min(i, times.size - 1)
    acc = duhamel(times[: i + 1], forcing[: i + 1], lam)[-1]
    if t > times[i]:
        tau = t - times[i]
        frac = tau / (times[i + 1] - times[i])
        f_t = (1 - frac) * forcing[i] + frac * forcing[i + 1]
        decay, wl, wr = etd_weights(tau, lam)
        acc = decay * acc + wl * forcing[i] + wr * f_t
    return acc


def dirichlet_convolve(f: TimeSeriesField, t: float) -> SpectralField:
    """(P^D * f)(t, .) for a sine-basis trajectory f."""
    if f.basis is not Basis.DIRICHLET_SINE:
        raise ConfigurationError("dirichlet_convolve expects a sine-basis trajectory")
    lam = wavenumbers(f.basis, f.K) ** 2
    return SpectralField(f.basis, _convolve_at(f.times, f.coeffs, lam, t))


def neumann_convolve(f: TimeSeriesField, t: float) -> SpectralField:
    """(P^N * f)(t, .) for a cosine-basis trajectory f."""
    if f.basis is not Basis.NEUMANN_COSINE:
        raise ConfigurationError("neumann_convolve expects a cosine-basis trajectory")
    lam = wavenumbers(f.basis, f.K) ** 2
    return SpectralField(f.basis, _convolve_at(f.times, f.coeffs, lam, t))


def neumann_convolve_dx(f: TimeSeriesField, t: float) -> SpectralField:
    """d/dx (P^N * f)(t, .), returned in the sine basis."""
    c = neumann_convolve(f, t)
    return SpectralField(Basis.DIRICHLET_SINE, cosine_to_sine_derivative(c.coeffs))


def pointwise_multiply(f: SpectralField, g: GridFunction, out_basis: Basis | None = None) -> SpectralField:
    """Project the grid product f*g onto `out_basis` at f's order."""
    out_basis = f.basis if out_basis is None else Basis(out_basis)
    _check_order(f.K, g.N)
    prod = f.evaluate(g.N).values * g.values
    return SpectralField(out_basis, analyze(out_basis, prod, f.K))
