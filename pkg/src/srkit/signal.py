"""Spike trains, low-resolution forward operators, pulse streams and noise."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .harmonics import normalized_legendre_all, sph_harm_all
from .manifold import Support, canonical_points


@dataclass(frozen=True, eq=False)
class SpikeTrain:
    """Finite signed Dirac ensemble ``sum_m c_m delta_{t_m}``."""

    support: Support
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float).reshape(-1)
        if len(amps) != len(self.support):
            raise ValueError("one amplitude per support point is required")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_arrays(cls, manifold: str, points, amplitudes) -> "SpikeTrain":
        return cls(Support(manifold, points), amplitudes)

    @classmethod
    def empty(cls, manifold: str) -> "SpikeTrain":
        return cls(Support.empty(manifold), np.zeros(0))

    @property
    def manifold(self) -> str:
        return self.support.manifold

    @property
    def points(self) -> np.ndarray:
        return self.support.points

    def __len__(self) -> int:
        return len(self.support)

    def tv_norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes)))

    def to_dict(self) -> dict:
        return {
            "manifold": self.manifold,
            "points": self.points.tolist(),
            "amplitudes": self.amplitudes.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpikeTrain":
        manifold = d["manifold"]
        if manifold == "real_line":
            return cls(RealLineSupport(d["points"]), d["amplitudes"])
        pts = np.asarray(d["points"], dtype=float)
        if manifold == "sphere":
            pts = pts.reshape(-1, 3)
        return cls(Support(manifold, pts), d["amplitudes"])


class RealLineSupport(Support):
    """Support on the real line, used by the pulse-stream model."""

    def __init__(self, points):
        pts = np.array(points, dtype=float).reshape(-1)
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if len(np.unique(pts)) != len(pts):
            raise ValueError("support contains duplicate points")
        pts.setflags(write=False)
        object.__setattr__(self, "manifold", "real_line")
        object.__setattr__(self, "points", pts)


def real_line_train(points, amplitudes) -> SpikeTrain:
    return SpikeTrain(RealLineSupport(points), amplitudes)


# ---------------------------------------------------------------------------
# measurement operators


def measurement_dim(manifold: str, N: int) -> int:
    """Number of (possibly complex) coefficients observed at degree ``N``."""
    return {"torus": 2 * N + 1, "interval": N + 1, "sphere": (N + 1) ** 2}[manifold]


def atoms(manifold: str, N: int, points) -> np.ndarray:
    """Coefficients of unit spikes at ``points``, one column per point.

    torus ``exp(-2 pi i k t)``, interval ``sqrt((2k+1)/2) P_k(t)``,
    sphere ``conj(Y_{n,k}(xi))``.
    """
    pts = canonical_points(manifold, points)
    if manifold == "torus":
        k = np.arange(-N, N + 1)
        return np.exp(-2j * np.pi * np.multiply.outer(k, pts))
    if manifold == "interval":
        return normalized_legendre_all(N, pts)
    return np.conj(sph_harm_all(N, pts)).T


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Low-resolution coefficients of a measure at degree ``N``."""

    manifold: str
    N: int
    coefficients: np.ndarray
    noise: dict | None = None

    def __post_init__(self):
        dt = float if self.manifold == "interval" else complex
        c = np.array(self.coefficients, dtype=dt).reshape(-1)
        if len(c) != measurement_dim(self.manifold, self.N):
            raise ValueError(
                f"{self.manifold} degree {self.N} expects {measurement_dim(self.manifold, self.N)} coefficients"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def is_complex(self) -> bool:
        return self.manifold != "interval"

    def to_dict(self) -> dict:
        c = self.coefficients
        coeffs = [[float(z.real), float(z.imag)] for z in c] if self.is_complex else c.tolist()
        return {"manifold": self.manifold, "N": self.N, "coefficients": coeffs, "noise": self.noise}

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementSet":
        manifold = d["manifold"]
        raw = d["coefficients"]
        if manifold == "interval":
            coeffs = np.asarray(raw, dtype=float)
        else:
            arr = np.asarray(raw, dtype=float).reshape(-1, 2)
            coeffs = arr[:, 0] + 1j * arr[:, 1]
        return cls(manifold, int(d["N"]), coeffs, d.get("noise"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MeasurementSet":
        return cls.from_dict(json.loads(text))


def _forward(x: SpikeTrain, manifold: str, N: int) -> MeasurementSet:
    if x.manifold != manifold:
        raise ValueError(f"expected a {manifold} spike train, got {x.manifold}")
    if len(x) == 0:
        dt = float if manifold == "interval" else complex
        return MeasurementSet(manifold, N, np.zeros(measurement_dim(manifold, N), dtype=dt))
    return MeasurementSet(manifold, N, atoms(manifold, N, x.points) @ x.amplitudes)


def forward_torus(x: SpikeTrain, N: int) -> MeasurementSet:
    """Fourier coefficients ``sum_m c_m exp(-2 pi i k t_m)``, ``|k| <= N``."""
    ms = _forward(x, "torus", N)
    # enforce exact conjugate symmetry for real measures
    c = np.array(ms.coefficients)
    c[:N] = np.conj(c[::-1][:N])
    c[N] = c[N].real
    return replace(ms, coefficients=c)


def forward_interval(x: SpikeTrain, N: int) -> MeasurementSet:
    """Moments against orthonormal Legendre polynomials of degree ``<= N``."""
    return _forward(x, "interval", N)


def forward_sphere(x: SpikeTrain, N: int) -> MeasurementSet:
    """Spherical harmonic coefficients ``sum_m c_m conj(Y_{n,k}(xi_m))``."""
    return _forward(x, "sphere", N)


def forward(x: SpikeTrain, N: int) -> MeasurementSet:
    return {"torus": forward_torus, "interval": forward_interval, "sphere": forward_sphere}[x.manifold](x, N)


def eval_lowres(y: MeasurementSet, points) -> np.ndarray:
    """Space-domain projection synthesised from the coefficients."""
    Phi = atoms(y.manifold, y.N, points)
    return np.real(Phi.conj().T @ y.coefficients)


# ---------------------------------------------------------------------------
# pulse kernels


def _gaussian(t, order):
    g = np.exp(-0.5 * t * t)
    return [g, -t * g, (t * t - 1) * g, (3 * t - t**3) * g][order]


def _cauchy(t, order):
    u = 1.0 + t * t
    return [1.0 / u, -2 * t / u**2, (6 * t * t - 2) / u**3, 24 * t * (1 - t * t) / u**4][order]


def _triangle(t, order):
    if order != 0:
        raise NotImplementedError
    return np.maximum(0.0, 1.0 - np.abs(t))


@dataclass(frozen=True)
class PulseKernel:
    """Pulse shape ``K`` with derivatives up to order three.

    Kernels without analytic derivatives fall back to central differences
    with step ``fd_step``.
    """

    name: str
    fn: Callable = field(repr=False)
    analytic: bool = True
    fd_step: float = 1e-3

    def __call__(self, t, order: int = 0):
        t = np.asarray(t, dtype=float)
        if self.analytic:
            return self.fn(t, order)
        return self._fd(t, order)

    def _fd(self, t, order):
        if order == 0:
            return self.fn(t, 0)
        h = self.fd_step
        lo = self._fd(t - h, order - 1)
        hi = self._fd(t + h, order - 1)
        return (hi - lo) / (2 * h)

    def scaled(self, t, sigma: float, order: int = 0):
        """Derivative of ``K_sigma(t) = K(t / sigma)``."""
        return self(np.asarray(t, dtype=float) / sigma, order) / sigma**order


KERNELS = {
    "gaussian": PulseKernel("gaussian", _gaussian),
    "cauchy": PulseKernel("cauchy", _cauchy),
    "triangle": PulseKernel("triangle", _triangle, analytic=False),
}


def get_kernel(kernel) -> PulseKernel:
    if isinstance(kernel, PulseKernel):
        return kernel
    try:
        return KERNELS[kernel]
    except KeyError:
        raise ValueError(f"unknown pulse kernel {kernel!r}; known: {sorted(KERNELS)}") from None


@dataclass(frozen=True, eq=False)
class PulseSamples:
    """Uniform samples of a pulse stream."""

    grid: np.ndarray
    values: np.ndarray
    kernel: str
    sigma: float
    noise: dict | None = None

    def __post_init__(self):
        g = np.array(self.grid, dtype=float).reshape(-1)
        v = np.array(self.values, dtype=float).reshape(-1)
        if len(g) != len(v):
            raise ValueError("grid and values differ in length")
        if len(g) > 1:
            d = np.diff(g)
            if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9, atol=0):
                raise ValueError("sample grid must be strictly increasing and uniform")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        g.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "sigma": self.sigma,
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
            "noise": self.noise,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PulseSamples":
        return cls(d["grid"], d["values"], d["kernel"], float(d["sigma"]), d.get("noise"))


def default_sample_grid(points, sigma: float, density: int = 8, margin: float = 10.0) -> np.ndarray:
    """Uniform grid with ``density`` samples per sigma over the support +- ``margin`` sigma."""
    pts = np.asarray(points, dtype=float)
    lo = (pts.min() if pts.size else 0.0) - margin * sigma
    hi = (pts.max() if pts.size else 0.0) + margin * sigma
    n = int(math.ceil((hi - lo) * density / sigma)) + 1
    return np.linspace(lo, hi, n)


def sop_forward(x: SpikeTrain, kernel, sigma: float, grid=None) -> PulseSamples:
    """Samples of ``sum_m c_m K_sigma(t - t_m)`` on a uniform grid."""
    K = get_kernel(kernel)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if grid is None:
        grid = default_sample_grid(x.points, sigma)
    grid = np.asarray(grid, dtype=float)
    vals = K.scaled(np.subtract.outer(grid, x.points), sigma) @ x.amplitudes if len(x) else np.zeros_like(grid)
    return PulseSamples(grid, vals, K.name, sigma)


# ---------------------------------------------------------------------------
# noise


def _noise_rng(seed) -> np.random.Generator:
    # counter-based generator, one stream per call
    return np.random.Generator(np.random.Philox(seed))


def noise_ball_radius(manifold: str, N: int, sd: float, k: float = 2.0) -> float:
    """Radius ``delta`` that contains the noise of :func:`add_noise` with high probability.

    ``||e||^2 / sd^2`` is chi-square with ``n`` real degrees of freedom; the
    radius is its mean plus ``k`` standard deviations.
    """
    n = measurement_dim(manifold, N) * (1 if manifold == "interval" else 2)
    return chi_radius(n, sd, k)


def chi_radius(n: int, sd: float, k: float = 2.0) -> float:
    """``sd`` times the mean plus ``k`` standard deviations of a chi-square with ``n`` degrees, square-rooted."""
    return sd * math.sqrt(n + k * math.sqrt(2 * n))


def add_noise(y, sd: float, seed=None):
    """Add iid zero-mean Gaussian noise of standard deviation ``sd``.

    Complex coefficients receive independent real and imaginary
    perturbations, each with standard deviation ``sd``.
    """
    if sd < 0:
        raise ValueError("noise standard deviation must be nonnegative")
    meta = {"sd": sd, "seed": seed}
    if sd == 0:
        return replace(y, noise=meta)
    rng = _noise_rng(seed)
    if isinstance(y, PulseSamples):
        return replace(y, values=y.values + sd * rng.standard_normal(len(y.values)), noise=meta)
    c = y.coefficients
    if y.is_complex:
        e = rng.standard_normal((2, len(c)))
        noisy = c + sd * (e[0] + 1j * e[1])
    else:
        noisy = c + sd * rng.standard_normal(len(c))
    return replace(y, coefficients=noisy, noise=meta)
