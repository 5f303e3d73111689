"""Wiener chaos algebra and the Wick-interpreted equation.

Random fields are expanded as u = sum_alpha u_alpha xi_alpha over the
normalised Hermite functionals xi_alpha = prod_k H_{alpha_k}(xi_k)/sqrt(alpha_k!).
Coefficients are numpy arrays of a common shape; an expansion tagged with
the sine basis holds sine coefficients along its last axis and must be moved
to the grid (`to_grid`) before pointwise products.

Products of two functionals follow the Hermite linearisation

    xi_a xi_b = sum_{g <= a ^ b} sqrt(a! b! (a+b-2g)!) / (g! (a-g)! (b-g)!) xi_{a+b-2g},

whose g = 0 term is the Wick product.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, TruncationError
from .mild import SolverConfig, partitioned_solve
from .noise import MollifierSpec, kl_values
from .spectral import (
    Basis,
    GridFunction,
    SpectralField,
    TimeSeriesField,
    duhamel,
    sine_analysis,
    sine_synthesis,
)

log = logging.getLogger(__name__)

HERMITE_MAX_DEGREE = 60


# ---------------------------------------------------------------------------
# multi-indices


@dataclass(frozen=True)
class MultiIndex:
    """Finitely supported alpha = (alpha_1, alpha_2, ...), stored as sorted (k, alpha_k) pairs."""

    entries: tuple = ()

    def __post_init__(self):
        clean = {}
        for k, a in self.entries:
            k, a = int(k), int(a)
            if k < 1:
                raise ConfigurationError(f"modes start at 1, got {k}")
            if a < 0:
                raise ConfigurationError(f"multiplicities must be >= 0, got {a} at mode {k}")
            if a:
                clean[k] = clean.get(k, 0) + a
        object.__setattr__(self, "entries", tuple(sorted(clean.items())))

    @classmethod
    def zero(cls) -> "MultiIndex":
        return cls(())

    @classmethod
    def unit(cls, k: int) -> "MultiIndex":
        return cls(((k, 1),))

    @classmethod
    def from_dict(cls, d: dict) -> "MultiIndex":
        return cls(tuple(d.items()))

    @classmethod
    def from_list(cls, pairs) -> "MultiIndex":
        return cls(tuple(tuple(p) for p in pairs))

    def as_dict(self) -> dict:
        return dict(self.entries)

    def to_list(self) -> list:
        return [[k, a] for k, a in self.entries]

    def __getitem__(self, k: int) -> int:
        for j, a in self.entries:
            if j == k:
                return a
        return 0

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(self.entries + other.entries)

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        """Componentwise difference, clamped at zero."""
        d = self.as_dict()
        for k, a in other.entries:
            d[k] = max(0, d.get(k, 0) - a)
        return MultiIndex(tuple(d.items()))

    def leq(self, other: "MultiIndex") -> bool:
        """Componentwise alpha <= beta."""
        return all(a <= other[k] for k, a in self.entries)

    def meet(self, other: "MultiIndex") -> "MultiIndex":
        """Componentwise minimum."""
        return MultiIndex(tuple((k, min(a, other[k])) for k, a in self.entries))

    @property
    def order(self) -> int:
        return sum(a for _, a in self.entries)

    @property
    def support(self) -> tuple:
        return tuple(k for k, _ in self.entries)

    @property
    def max_mode(self) -> int:
        return self.entries[-1][0] if self.entries else 0

    def factorial(self) -> int:
        return math.prod(math.factorial(a) for _, a in self.entries)

    def sub_indices(self):
        """Every beta <= alpha."""
        ks = [k for k, _ in self.entries]
        for combo in itertools.product(*(range(a + 1) for _, a in self.entries)):
            yield MultiIndex(tuple(zip(ks, combo)))

    def __repr__(self) -> str:
        if not self.entries:
            return "MultiIndex(0)"
        return "MultiIndex(" + ", ".join(f"{k}:{a}" for k, a in self.entries) + ")"


def enumerate_indices(max_order: int, max_mode: int):
    """All multi-indices with order <= max_order supported on modes 1..max_mode, by order."""
    out = []
    for n in range(max_order + 1):
        for combo in itertools.combinations_with_replacement(range(1, max_mode + 1), n):
            d = {}
            for k in combo:
                d[k] = d.get(k, 0) + 1
            out.append(MultiIndex.from_dict(d))
    return out


def multi_binomial(alpha: MultiIndex, beta: MultiIndex) -> int:
    """alpha! / (beta! (alpha - beta)!) for beta <= alpha."""
    return math.prod(math.comb(a, beta[k]) for k, a in alpha.entries)


# ---------------------------------------------------------------------------
# Hermite functionals


def hermite_eval(n: int, x):
    """Probabilists' Hermite polynomial He_n(x) by the three-term recurrence."""
    if n < 0:
        raise ConfigurationError(f"Hermite degree must be >= 0, got {n}")
    if n > HERMITE_MAX_DEGREE:
        raise ConfigurationError(f"Hermite degree {n} exceeds the overflow guard {HERMITE_MAX_DEGREE}")
    x = np.asarray(x, dtype=float)
    h_prev, h = np.ones_like(x), x.copy()
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    for j in range(1, n):
        h_prev, h = h, x * h - j * h_prev
    return h if h.ndim else float(h)


def xi_alpha_eval(alpha: MultiIndex, xi):
    """prod_k He_{alpha_k}(xi_k) / sqrt(alpha_k!).  xi is indexed from mode 1.

    `xi` may carry extra leading axes (draws); the mode axis is the last one.
    """
    xi = np.asarray(xi, dtype=float)
    if alpha.max_mode > xi.shape[-1]:
        raise ConfigurationError(f"draws cover modes 1..{xi.shape[-1]}, index needs mode {alpha.max_mode}")
    out = np.ones(xi.shape[:-1])
    for k, a in alpha.entries:
        out = out * hermite_eval(a, xi[..., k - 1]) / math.sqrt(math.factorial(a))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# expansions


@dataclass
class ChaosExpansion:
    """Map MultiIndex -> coefficient array, with truncation bookkeeping.

    basis=None means coefficients are point values (scalars or grids);
    Basis.DIRICHLET_SINE means sine coefficients along the last axis.
    """

    terms: dict = field(default_factory=dict)
    max_order: int | None = None
    max_mode: int | None = None
    basis: Basis | None = None
    times: np.ndarray | None = None
    dropped_mass: float = 0.0

    def __post_init__(self):
        for alpha in self.terms:
            if not self.admits(alpha):
                raise ConfigurationError(f"{alpha} violates truncation (P={self.max_order}, M={self.max_mode})")

    def admits(self, alpha: MultiIndex) -> bool:
        if self.max_order is not None and alpha.order > self.max_order:
            return False
        if self.max_mode is not None and alpha.max_mode > self.max_mode:
            return False
        return True

    @classmethod
    def constant(cls, value, **kw) -> "ChaosExpansion":
        return cls({MultiIndex.zero(): np.asarray(value, dtype=float)}, **kw)

    @classmethod
    def single(cls, alpha: MultiIndex, value=1.0, **kw) -> "ChaosExpansion":
        return cls({alpha: np.asarray(value, dtype=float)}, **kw)

    def __getitem__(self, alpha: MultiIndex):
        return self.terms[alpha]

    def get(self, alpha: MultiIndex, default=None):
        return self.terms.get(alpha, default)

    def indices(self) -> list:
        return sorted(self.terms, key=lambda a: (a.order, a.entries))

    def __add__(self, other: "ChaosExpansion") -> "ChaosExpansion":
        terms = {a: np.array(v, dtype=float) for a, v in self.terms.items()}
        for a, v in other.terms.items():
            terms[a] = terms[a] + v if a in terms else np.array(v, dtype=float)
        return ChaosExpansion(terms, _loosest(self.max_order, other.max_order),
                              _loosest(self.max_mode, other.max_mode), self.basis, self.times,
                              self.dropped_mass + other.dropped_mass)

    def __sub__(self, other: "ChaosExpansion") -> "ChaosExpansion":
        return self + other.scale(-1.0)

    def scale(self, c: float) -> "ChaosExpansion":
        return ChaosExpansion({a: c * v for a, v in self.terms.items()}, self.max_order, self.max_mode,
                              self.basis, self.times, self.dropped_mass)

    def restrict(self, max_order: int) -> "ChaosExpansion":
        terms = {a: v for a, v in self.terms.items() if a.order <= max_order}
        return ChaosExpansion(terms, max_order, self.max_mode, self.basis, self.times)

    def evaluate(self, xi):
        """Pathwise value sum_alpha u_alpha xi_alpha(xi) for one draw."""
        xi = np.asarray(xi, dtype=float)
        out = None
        for a, v in self.terms.items():
            term = v * xi_alpha_eval(a, xi)
            out = term if out is None else out + term
        return 0.0 if out is None else out

    def second_moment(self):
        """E[u^2] = sum_alpha u_alpha^2 pointwise (value expansions)."""
        if self.basis is not None:
            raise ConfigurationError("second_moment acts on point values; call to_grid first")
        return sum(np.asarray(v) ** 2 for v in self.terms.values())

    def l2_mass(self, order: int | None = None):
        """sum_alpha ||u_alpha||_{L_2(0, pi)}^2 for sine expansions (per time node if present)."""
        if self.basis is not Basis.DIRICHLET_SINE:
            raise ConfigurationError("l2_mass expects a sine-basis expansion")
        vals = [np.sum(np.asarray(v) ** 2, axis=-1) for a, v in self.terms.items()
                if order is None or a.order == order]
        return sum(vals) if vals else 0.0

    def to_grid(self, N: int) -> "ChaosExpansion":
        if self.basis is None:
            return self
        terms = {a: sine_synthesis(np.asarray(v), N) for a, v in self.terms.items()}
        return ChaosExpansion(terms, self.max_order, self.max_mode, None, self.times, self.dropped_mass)

    def to_sine(self, K: int) -> "ChaosExpansion":
        if self.basis is Basis.DIRICHLET_SINE:
            return self
        terms = {a: sine_analysis(np.asarray(v), K) for a, v in self.terms.items()}
        return ChaosExpansion(terms, self.max_order, self.max_mode, Basis.DIRICHLET_SINE, self.times,
                              self.dropped_mass)

    def to_dict(self) -> dict:
        return {
            "max_order": self.max_order,
            "max_mode": self.max_mode,
            "basis": None if self.basis is None else self.basis.value,
            "times": None if self.times is None else np.asarray(self.times).tolist(),
            "dropped_mass": self.dropped_mass,
            "terms": [{"index": a.to_list(), "coeffs": np.asarray(self.terms[a]).tolist()} for a in self.indices()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChaosExpansion":
        terms = {MultiIndex.from_list(t["index"]): np.asarray(t["coeffs"], dtype=float) for t in d["terms"]}
        return cls(terms, d.get("max_order"), d.get("max_mode"),
                   None if d.get("basis") is None else Basis(d["basis"]),
                   None if d.get("times") is None else np.asarray(d["times"]),
                   d.get("dropped_mass", 0.0))


def _loosest(a, b):
    if a is None or b is None:
        return None
    return max(a, b)


def _tightest(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


@lru_cache(maxsize=None)
def _sqrt_factorial_ratio(alpha: MultiIndex, a: MultiIndex, b: MultiIndex, g: MultiIndex) -> float:
    """sqrt(alpha! a! b!) / (g! (a-g)! (b-g)!) with alpha = a + b - 2g."""
    num = alpha.factorial() * a.factorial() * b.factorial()
    den = g.factorial() * (a - g).factorial() * (b - g).factorial()
    return math.sqrt(num) / den


def _check_product_inputs(u: ChaosExpansion, v: ChaosExpansion):
    if u.basis is not None or v.basis is not None:
        raise ConfigurationError("products act on point values; convert sine expansions with to_grid")


class _Accumulator:
    def __init__(self, max_order, max_mode):
        self.max_order, self.max_mode = max_order, max_mode
        self.kept, self.dropped = {}, {}

    def add(self, alpha, value):
        target = self.kept
        if (self.max_order is not None and alpha.order > self.max_order) or (
                self.max_mode is not None and alpha.max_mode > self.max_mode):
            target = self.dropped
        target[alpha] = target[alpha] + value if alpha in target else value

    def result(self, times, max_dropped) -> ChaosExpansion:
        mass = float(sum(np.sum(np.asarray(v) ** 2) for v in self.dropped.values()))
        if mass > 0:
            log.warning("chaos product truncation dropped %d indices (mass %.3e)", len(self.dropped), mass)
        if max_dropped is not None and mass > max_dropped:
            raise TruncationError(f"truncation dropped mass {mass:.3e} > {max_dropped:.3e}", mass)
        return ChaosExpansion(self.kept, self.max_order, self.max_mode, None, times, mass)


def wick_product(u: ChaosExpansion, v: ChaosExpansion, max_order: int | None = None,
                 max_mode: int | None = None, max_dropped: float | None = None) -> ChaosExpansion:
    """(u <> v)_alpha = sum_{beta <= alpha} sqrt(alpha! / (beta! (alpha-beta)!)) u_{alpha-beta} v_beta.

    Output truncation defaults to the tighter of the inputs'; anything beyond
    it is dropped and its squared mass recorded.
    """
    _check_product_inputs(u, v)
    acc = _Accumulator(_tightest(u.max_order, v.max_order) if max_order is None else max_order,
                       _tightest(u.max_mode, v.max_mode) if max_mode is None else max_mode)
    for a, ua in u.terms.items():
        for b, vb in v.terms.items():
            alpha = a + b
            acc.add(alpha, math.sqrt(multi_binomial(alpha, b)) * (ua * vb))
    return acc.result(u.times, max_dropped)


def product_correction(u: ChaosExpansion, v: ChaosExpansion, max_order: int | None = None,
                       max_mode: int | None = None, max_dropped: float | None = None) -> ChaosExpansion:
    """The gamma != 0 part of

        (uv)_alpha = sum_gamma sum_{beta <= alpha}
                     sqrt(alpha! (alpha-beta+gamma)! (beta+gamma)!) / (beta! gamma! (alpha-beta)!)
                     u_{alpha-beta+gamma} v_{beta+gamma}.

    A term with u_a, v_b present has a = alpha-beta+gamma and b = beta+gamma,
    so gamma <= a ^ b and alpha = a + b - 2 gamma; the sum runs over exactly
    those (a, b, gamma).
    """
    _check_product_inputs(u, v)
    acc = _Accumulator(_tightest(u.max_order, v.max_order) if max_order is None else max_order,
                       _tightest(u.max_mode, v.max_mode) if max_mode is None else max_mode)
    zero = MultiIndex.zero()
    for a, ua in u.terms.items():
        for b, vb in v.terms.items():
            for g in a.meet(b).sub_indices():
                if g == zero:
                    continue
                alpha = (a - g) + (b - g)
                acc.add(alpha, _sqrt_factorial_ratio(alpha, a, b, g) * (ua * vb))
    return acc.result(u.times, max_dropped)


def usual_product(u: ChaosExpansion, v: ChaosExpansion, max_order: int | None = None,
                  max_mode: int | None = None, max_dropped: float | None = None) -> ChaosExpansion:
    """Chaos coefficients of the pointwise product u v: Wick term plus correction."""
    w = wick_product(u, v, max_order, max_mode)
    c = product_correction(u, v, max_order, max_mode)
    out = w + c
    out.max_order, out.max_mode = w.max_order, w.max_mode
    if max_dropped is not None and out.dropped_mass > max_dropped:
        raise TruncationError(f"truncation dropped mass {out.dropped_mass:.3e} > {max_dropped:.3e}", out.dropped_mass)
    return out


# ---------------------------------------------------------------------------
# white noise and the Wick equation


def noise_multipliers(M: int, mollifier: MollifierSpec | None = None) -> np.ndarray:
    """m_k^eps = mult_k m_k for k = 1..M (all ones without a mollifier)."""
    if M < 0:
        raise ConfigurationError(f"M must be >= 0, got {M}")
    k = np.arange(1, M + 1)
    return np.ones(M) if mollifier is None else mollifier.multiplier(k)


def whitenoise_expansion(M: int, mollifier: MollifierSpec | None = None, K: int | None = None) -> ChaosExpansion:
    """First-order chaos W' = sum_{k <= M} m_k^eps xi_{eps(k)} in the sine basis.

    Modes removed by a spectral cutoff are left out.  K (default M) is the
    sine order of the coefficient vectors.
    """
    if M < 1:
        raise ConfigurationError(f"white noise needs M >= 1, got {M}")
    K = M if K is None else K
    if K < M:
        raise ConfigurationError(f"sine order K={K} cannot hold {M} modes")
    mult = noise_multipliers(M, mollifier)
    terms = {}
    for k in range(1, M + 1):
        if mult[k - 1] == 0:
            continue
        c = np.zeros(K)
        c[k - 1] = mult[k - 1]
        terms[MultiIndex.unit(k)] = c
    return ChaosExpansion(terms, 1, M, Basis.DIRICHLET_SINE)


def _noise_modes(noise: ChaosExpansion) -> dict:
    """mode k -> sine coefficient vector of m_k^eps, for a first-order noise expansion."""
    if noise.basis is not Basis.DIRICHLET_SINE:
        raise ConfigurationError("noise expansion must hold sine coefficients")
    modes = {}
    for a, v in noise.terms.items():
        if a.order != 1:
            raise ConfigurationError(f"noise must be first-order chaos, found {a}")
        modes[a.support[0]] = np.asarray(v, dtype=float)
    return modes


def propagator_solve(u0: SpectralField, noise: ChaosExpansion, cfg: SolverConfig, P: int, M: int,
                     max_tail: float | None = None) -> ChaosExpansion:
    """Chaos coefficients of the Wick solution, order by order.

    u_(0) is the heat flow of u0 and for |alpha| >= 1

        u_alpha(t) = int_0^t e^{(t-s) Lap} sum_k sqrt(alpha_k) m_k^eps u_{alpha - eps(k)}(s) ds,

    with products on the grid and the same exponential quadrature as the
    mild solver.  `dropped_mass` holds the share of the L_2 mass at time T
    carried by order P, an estimate of the truncation tail.
    """
    if u0.basis is not Basis.DIRICHLET_SINE or u0.K != cfg.K:
        raise ConfigurationError("initial datum must be a sine field of order cfg.K")
    if P < 0 or M < 0:
        raise ConfigurationError("P and M must be >= 0")
    modes = {k: v for k, v in _noise_modes(noise).items() if k <= M}
    N, K = cfg.N, cfg.K
    times = cfg.times
    lam = np.arange(1, K + 1, dtype=float) ** 2
    m_grid = {k: sine_synthesis(_pad_to(v, K), N) for k, v in modes.items()}
    terms = {MultiIndex.zero(): np.exp(-np.outer(times, lam)) * u0.coeffs}
    grids = {MultiIndex.zero(): sine_synthesis(terms[MultiIndex.zero()], N)}
    active = sorted(m_grid)
    for alpha in enumerate_indices(P, max(active) if active else 0):
        if alpha.order == 0 or any(k not in m_grid for k in alpha.support):
            continue
        prod = np.zeros((times.size, N + 1))
        for k, a_k in alpha.entries:
            prod += math.sqrt(a_k) * m_grid[k] * grids[alpha - MultiIndex.unit(k)]
        coeffs = duhamel(times, sine_analysis(prod, K), lam)
        terms[alpha] = coeffs
        if alpha.order < P:
            grids[alpha] = sine_synthesis(coeffs, N)
    out = ChaosExpansion(terms, P, M, Basis.DIRICHLET_SINE, times)
    total = float(np.atleast_1d(out.l2_mass())[-1])
    top = float(np.atleast_1d(out.l2_mass(order=P))[-1])
    out.dropped_mass = top / total if total > 0 and P > 0 else 0.0
    if max_tail is not None and out.dropped_mass > max_tail:
        raise TruncationError(f"order-{P} share {out.dropped_mass:.3e} exceeds {max_tail:.3e}; raise P",
                              out.dropped_mass)
    return out


def _pad_to(v: np.ndarray, K: int) -> np.ndarray:
    if v.size >= K:
        return v[:K]
    out = np.zeros(K)
    out[: v.size] = v
    return out


def residual_eta(u_wick: ChaosExpansion, noise: ChaosExpansion, N: int | None = None) -> ChaosExpansion:
    """eta_alpha = sum_k sqrt(alpha_k + 1) u_{alpha + eps(k)} m_k^eps, for |alpha| <= P - 1.

    Works on point values; sine-basis inputs are moved to an N-point grid.
    """
    if u_wick.basis is not None or noise.basis is not None:
        if N is None:
            raise ConfigurationError("sine-basis expansions need a grid size N")
        u_wick, noise = u_wick.to_grid(N), noise.to_grid(N)
    m = {}
    for a, v in noise.terms.items():
        if a.order != 1:
            raise ConfigurationError(f"noise must be first-order chaos, found {a}")
        m[a.support[0]] = np.asarray(v)
    terms = {}
    for a, ua in u_wick.terms.items():
        for k, a_k in a.entries:
            if k not in m:
                continue
            alpha = a - MultiIndex.unit(k)
            val = math.sqrt(a_k) * ua * m[k]
            terms[alpha] = terms[alpha] + val if alpha in terms else val
    P = None if u_wick.max_order is None else max(u_wick.max_order - 1, 0)
    return ChaosExpansion(terms, P, u_wick.max_mode, None, u_wick.times)


@dataclass(frozen=True)
class ZResult:
    solved: TimeSeriesField
    direct: TimeSeriesField
    relative_error: float
    scale: float


def mollified_potential(xi, noise: ChaosExpansion, N: int) -> GridFunction:
    """W^eps(x) = sum_k xi_k mult_k int_0^x m_k on the grid, for the draws xi."""
    modes = _noise_modes(noise)
    M = max(modes) if modes else 0
    xi = np.asarray(xi, dtype=float)
    if xi.size < M:
        raise ConfigurationError(f"need draws for modes 1..{M}, got {xi.size}")
    weights = np.zeros(M)
    for k, v in modes.items():
        weights[k - 1] = v[k - 1]
    return GridFunction(kl_values(xi[:M] * weights, N))


def z_difference_solve(u_eps: TimeSeriesField, u_wick: ChaosExpansion, xi, noise: ChaosExpansion,
                       cfg: SolverConfig) -> ZResult:
    """Z = u^eps - u<> two ways: from its own equation and by direct subtraction.

    With u<> <> W' = u<> W' - eta, the difference satisfies
    Z = P * (Z W'^eps) + P * eta, Z(0) = 0, solved with the mild solver's
    Picard machinery and eta evaluated pathwise at xi.
    """
    if u_wick.basis is not Basis.DIRICHLET_SINE:
        raise ConfigurationError("u_wick must be a sine-basis expansion from propagator_solve")
    if u_eps.K != cfg.K or u_eps.times.size != cfg.n_steps + 1:
        raise ConfigurationError("u_eps must live on the config's grid")
    N, K = cfg.N, cfg.K
    We = mollified_potential(xi, noise, N)
    eta = residual_eta(u_wick, noise, N)
    eta_path = eta.evaluate(xi)
    forcing = sine_analysis(np.asarray(eta_path), K) if np.ndim(eta_path) else np.zeros((cfg.n_steps + 1, K))
    zero = SpectralField.zeros(Basis.DIRICHLET_SINE, K)
    solved = partitioned_solve(zero, We, cfg, forcing=forcing).trajectory
    direct_coeffs = u_eps.coeffs - u_wick.evaluate(xi)
    direct = TimeSeriesField(Basis.DIRICHLET_SINE, u_eps.times, direct_coeffs)
    diff = float(np.max(np.abs(sine_synthesis(solved.coeffs - direct_coeffs, N))))
    scale = float(np.max(np.abs(sine_synthesis(direct_coeffs, N))))
    return ZResult(solved, direct, diff / scale if scale > 0 else diff, scale)
