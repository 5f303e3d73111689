"""Brownian and fractional Brownian potentials on [0, pi].

Brownian paths come from the Karhunen-Loeve series built on the sine basis,

    W(x) = sum_k xi_k * int_0^x m_k(y) dy = sum_k xi_k sqrt(2/pi) (1 - cos kx) / k,

so that W' = sum_k xi_k m_k is the (truncated) white noise.  Because the
series is a cosine expansion, W lives exactly in the Neumann basis and its
derivative exactly in the Dirichlet basis.

Ensembles derive per-path seeds from a master seed as ``master ^ i``.
"""

from __future__ import annotations

import enum
import functools
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import ConfigurationError, NumericalError
from .spectral import (
    SQRT_2_OVER_PI,
    GridFunction,
    cosine_synthesis,
    grid_nodes,
)

FBM_MAX_NODES = 2048
FBM_JITTER = 1e-12


def split_seed(master: int, i: int) -> int:
    """Seed of the i-th ensemble member."""
    return int(master) ^ int(i)


class PathKind(str, enum.Enum):
    BM = "BM"
    FBM = "FBM"


@dataclass(frozen=True)
class BrownianPath:
    xi: np.ndarray
    grid: GridFunction
    seed: int | None
    kind: PathKind = PathKind.BM
    hurst: float | None = None

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def K_W(self) -> int:
        return self.xi.size

    def holder_norm(self, gamma: float) -> float:
        return holder_norm_estimate(self.grid, gamma)

    def holder_seminorm(self, gamma: float) -> float:
        return holder_norm_estimate(self.grid, gamma) - float(np.max(np.abs(self.grid.values)))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "kind": self.kind.value,
            "hurst": self.hurst,
            "N": self.N,
            "xi": self.xi.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_csv(self, path=None) -> str:
        return self.grid.to_csv(path, header=("x", "W"))

    @classmethod
    def from_dict(cls, d: dict) -> "BrownianPath":
        kind = PathKind(d.get("kind", "BM"))
        if kind is PathKind.BM:
            return sample_brownian_kl(len(d["xi"]), int(d["N"]), d.get("seed"), xi=d["xi"])
        raise ConfigurationError("fBm paths carry no KL coefficients; reload them from CSV")


def kl_values(xi: np.ndarray, N: int) -> np.ndarray:
    """Grid values of sum_k xi_k sqrt(2/pi) (1 - cos kx)/k, with W(0) = 0 exactly."""
    xi = np.asarray(xi, dtype=float)
    K_W = xi.size
    if K_W == 0:
        return np.zeros(N + 1)
    k = np.arange(1, K_W + 1)
    if 2 * K_W <= N:
        # W = const - sum_k (xi_k / k) m~_k
        c = np.zeros(K_W + 1)
        c[1:] = -xi / k
        values = cosine_synthesis(c, N) + SQRT_2_OVER_PI * np.sum(xi / k)
    else:
        x = grid_nodes(N)
        values = SQRT_2_OVER_PI * ((1.0 - np.cos(np.outer(x, k))) / k) @ xi
    values[0] = 0.0
    return values


def sample_brownian_kl(K_W: int, N: int, seed: int | None, xi=None) -> BrownianPath:
    """Brownian motion on [0, pi] from the first K_W Karhunen-Loeve terms.

    `xi` overrides the Gaussian draws (used to build deterministic paths).
    """
    if K_W < 1:
        raise ConfigurationError(f"K_W must be >= 1, got {K_W}")
    if N < 2:
        raise ConfigurationError(f"grid needs N >= 2, got {N}")
    if xi is None:
        xi = np.random.default_rng(seed).standard_normal(K_W)
    else:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (K_W,):
            raise ConfigurationError(f"xi must have length K_W={K_W}")
    xi = xi.copy()
    xi.setflags(write=False)
    return BrownianPath(xi=xi, grid=GridFunction(kl_values(xi, N)), seed=seed)


def sample_brownian_ensemble(K_W: int, N: int, n_paths: int, master_seed: int) -> list[BrownianPath]:
    return [sample_brownian_kl(K_W, N, split_seed(master_seed, i)) for i in range(n_paths)]


@functools.lru_cache(maxsize=8)
def _fbm_factor(H: float, N: int) -> np.ndarray:
    x = grid_nodes(N)[1:]
    cov = 0.5 * (x[:, None] ** (2 * H) + x[None, :] ** (2 * H) - np.abs(x[:, None] - x[None, :]) ** (2 * H))
    cov[np.diag_indices_from(cov)] += FBM_JITTER
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"fBm covariance not positive definite (H={H}, N={N})") from exc
    L.setflags(write=False)
    return L


def sample_fbm_grid(H: float, N: int, seed: int | None) -> BrownianPath:
    """Exact fBm on the grid nodes via dense Cholesky of the covariance."""
    if not 0 < H < 1:
        raise ConfigurationError(f"Hurst index must lie in (0, 1), got {H}")
    if N > FBM_MAX_NODES:
        raise ConfigurationError(f"dense Cholesky limited to N <= {FBM_MAX_NODES}, got {N}")
    L = _fbm_factor(float(H), int(N))
    z = np.random.default_rng(seed).standard_normal(N)
    values = np.zeros(N + 1)
    values[1:] = L @ z
    return BrownianPath(
        xi=np.zeros(0), grid=GridFunction(values), seed=seed, kind=PathKind.FBM, hurst=float(H)
    )


def sample_fbm_ensemble(H: float, N: int, n_paths: int, master_seed: int) -> np.ndarray:
    """Grid values of `n_paths` fBm paths, shape (n_paths, N+1)."""
    return np.stack([sample_fbm_grid(H, N, split_seed(master_seed, i)).grid.values for i in range(n_paths)])


# ---------------------------------------------------------------------------
# mollification


class MollifierKind(str, enum.Enum):
    GAUSSIAN = "GaussianKernel"
    CUTOFF = "SpectralCutoff"


@dataclass(frozen=True)
class MollifierSpec:
    kind: MollifierKind
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "kind", MollifierKind(self.kind))
        if not self.epsilon > 0:
            raise ConfigurationError(f"mollifier width must be positive, got {self.epsilon}")

    @property
    def cutoff_mode(self) -> int:
        """Largest KL mode kept by the spectral cutoff."""
        return int(math.floor(1.0 / self.epsilon + 1e-12))

    def multiplier(self, k) -> np.ndarray:
        """Diagonal action on the m_k (and m~_k) eigenfunctions."""
        k = np.asarray(k, dtype=float)
        if self.kind is MollifierKind.GAUSSIAN:
            return np.exp(-0.5 * (k * self.epsilon) ** 2)
        return (k <= self.cutoff_mode).astype(float)


def cosine_filter(values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    """Apply a diagonal multiplier to the full DCT-I cosine interpolant."""
    N = values.shape[-1] - 1
    y = scipy.fft.dct(values, type=1, axis=-1) * multiplier
    return scipy.fft.dct(y, type=1, axis=-1) / (2 * N)


def mollify(W: BrownianPath, spec: MollifierSpec) -> GridFunction:
    """Smooth approximation W^eps of a sampled path, with W^eps(0) = 0.

    Gaussian: convolution of the even reflection of W about 0 and pi with a
    Gaussian of standard deviation eps.  The reflected extension is 2pi
    periodic and even, so the convolution acts on the cosine interpolant as
    the multiplier exp(-k^2 eps^2 / 2); the constant W^eps(0) is then
    subtracted.  Cutoff: keep KL terms with k <= 1/eps.
    """
    if spec.epsilon >= math.pi:
        raise ConfigurationError(f"mollifier width must be < pi, got {spec.epsilon}")
    N = W.N
    if spec.kind is MollifierKind.CUTOFF and W.kind is PathKind.BM and W.K_W > 0:
        xi = np.array(W.xi)
        xi[spec.cutoff_mode:] = 0.0
        return GridFunction(kl_values(xi, N))
    values = cosine_filter(W.grid.values, spec.multiplier(np.arange(N + 1)))
    values -= values[0]
    values[0] = 0.0
    return GridFunction(values)


# ---------------------------------------------------------------------------
# Hoelder norms


def holder_norm_estimate(f: GridFunction, gamma: float, exact: bool = False) -> float:
    """sup|f| + [f]_gamma on the grid.

    The seminorm is maximised over node pairs at lags up to pi/4 plus the
    full-range pair (0, pi).  `exact=True` scans every pair (N <= 1024).
    """
    v = f.values
    N = f.N
    if exact:
        if N > 1024:
            raise ConfigurationError("exact Hoelder scan limited to N <= 1024")
        max_lag = N
    else:
        max_lag = max(1, N // 4)
    h = math.pi / N
    semi = abs(v[-1] - v[0]) / math.pi**gamma
    for lag in range(1, max_lag + 1):
        d = np.max(np.abs(v[lag:] - v[:-lag]))
        q = d / (lag * h) ** gamma
        if q > semi:
            semi = q
    return float(np.max(np.abs(v)) + semi)


def holder_distance(W: BrownianPath, We: GridFunction, gamma: float) -> float:
    if We.N != W.N:
        raise ConfigurationError(f"grid mismatch: path N={W.N}, mollified N={We.N}")
    return holder_norm_estimate(W.grid - We, gamma)
