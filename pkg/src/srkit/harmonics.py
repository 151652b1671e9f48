"""Measurement eigenbases and localized kernels, with derivatives.

Torus kernels are trigonometric polynomials in ``t`` with frequencies
``exp(2j*pi*k*t)``; they are evaluated from their (exact, finite) Fourier
coefficients so the removable singularities of the closed sine-ratio forms
never arise.  Sphere kernels are zonal, i.e. functions of ``c = xi . eta``
expanded in Legendre polynomials.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .manifold import tangent_basis

KERNEL_KINDS = ("dirichlet", "fejer4", "zonal_projection", "localized_zonal")


@dataclass(frozen=True)
class KernelFamily:
    """A named kernel of degree ``N`` on a manifold."""

    manifold: str
    N: int
    kind: str

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("kernel degree must be >= 1")
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    def __call__(self, x, order: int = 0):
        fn = {
            "dirichlet": dirichlet,
            "fejer4": fejer4,
            "zonal_projection": zonal_projection_kernel,
            "localized_zonal": localized_zonal_kernel,
        }[self.kind]
        return fn(self.N, x, order)


# ---------------------------------------------------------------------------
# trigonometric polynomials on the torus


def trig_eval(coeffs, t, order: int = 0) -> np.ndarray:
    """Evaluate ``sum_k c_k (2 pi i k)^order exp(2 pi i k t)`` for ``k = -K..K``.

    ``coeffs`` has odd length ``2K + 1`` ordered from ``-K`` to ``K``.  The
    result is complex; callers holding Hermitian coefficients take ``.real``.
    """
    coeffs = np.asarray(coeffs)
    K = (len(coeffs) - 1) // 2
    k = np.arange(-K, K + 1)
    t = np.asarray(t, dtype=float)
    w = coeffs * (2j * np.pi * k) ** order
    phase = np.exp(2j * np.pi * np.multiply.outer(t, k))
    return phase @ w


def dirichlet_coefficients(N: int) -> np.ndarray:
    return np.ones(2 * N + 1)


def fejer_coefficients(M: int) -> np.ndarray:
    """Coefficients of ``[sin((M+1) pi t) / ((M+1) sin(pi t))]^2``, ``|k| <= M``."""
    k = np.arange(-M, M + 1)
    return (M + 1 - np.abs(k)) / (M + 1) ** 2


def fejer4_coefficients(N: int) -> np.ndarray:
    """Coefficients of the squared Fejer kernel with ``M = N // 2``, padded to ``|k| <= N``."""
    if N < 2:
        raise ValueError("fejer4 needs N >= 2")
    M = N // 2
    f = fejer_coefficients(M)
    g = np.convolve(f, f)  # |k| <= 2M
    out = np.zeros(2 * N + 1)
    out[N - 2 * M : N + 2 * M + 1] = g
    return out


def dirichlet(N: int, t, order: int = 0):
    """Dirichlet kernel ``sum_{|k|<=N} exp(2 pi i k t)`` or its derivative."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    out = trig_eval(dirichlet_coefficients(N), t, order).real
    return float(out) if np.ndim(out) == 0 else out


def fejer4(N: int, t, order: int = 0):
    """Peak-normalised fourth power of the Fejer ratio, degree ``2 * (N // 2)``."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    out = trig_eval(fejer4_coefficients(N), t, order).real
    return float(out) if np.ndim(out) == 0 else out


def fejer4_closed_form(N: int, t):
    """Closed sine-ratio form of :func:`fejer4` (order 0 only)."""
    M = N // 2
    t = np.asarray(t, dtype=float)
    s = np.sin(np.pi * t)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sin((M + 1) * np.pi * t) / ((M + 1) * s)
    r = np.where(np.abs(s) < 1e-15, np.cos((M + 1) * np.pi * np.round(t)) / np.cos(np.pi * np.round(t)), r)
    return r**4


# ---------------------------------------------------------------------------
# Legendre polynomials and spherical harmonics


def legendre_all(N: int, x, order: int = 0) -> np.ndarray:
    """``P_n^{(order)}(x)`` for ``n = 0..N``, stacked along the first axis.

    Values use Bonnet's recurrence; derivatives use
    ``P'_{n+1} = P'_{n-1} + (2n+1) P_n`` which is regular at ``x = +-1``.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    x = np.asarray(x, dtype=float)
    P = np.zeros((order + 1, N + 1) + x.shape)
    P[0, 0] = 1.0
    if N >= 1:
        P[0, 1] = x
    for n in range(1, N):
        P[0, n + 1] = ((2 * n + 1) * x * P[0, n] - n * P[0, n - 1]) / (n + 1)
    for d in range(1, order + 1):
        if N >= 1:
            P[d, 1] = 1.0 if d == 1 else 0.0
        for n in range(1, N):
            P[d, n + 1] = P[d, n - 1] + (2 * n + 1) * P[d - 1, n]
    return P[order]


def legendre(n: int, x, order: int = 0):
    """Legendre polynomial ``P_n`` (or a derivative) with ``P_n(1) = 1``."""
    if n < 0:
        raise ValueError("degree must be >= 0")
    out = legendre_all(n, x, order)[n]
    return float(out) if np.ndim(out) == 0 else out


def normalized_legendre_all(N: int, x, order: int = 0) -> np.ndarray:
    """Orthonormal Legendre ``sqrt((2n+1)/2) P_n^{(order)}(x)``, ``n = 0..N``."""
    P = legendre_all(N, x, order)
    scale = np.sqrt((2 * np.arange(N + 1) + 1) / 2.0)
    return P * scale.reshape((-1,) + (1,) * (P.ndim - 1))


def sh_index(n: int, k: int) -> int:
    """Flat index of ``Y_{n,k}`` in degree-major order."""
    return n * n + n + k


def sh_degrees(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Degree and order arrays matching :func:`sh_index` for ``n <= N``."""
    n = np.concatenate([np.full(2 * d + 1, d) for d in range(N + 1)])
    k = np.concatenate([np.arange(-d, d + 1) for d in range(N + 1)])
    return n, k


@functools.lru_cache(maxsize=32)
def _recurrence_coefficients(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Three-term coefficients ``a[n, m]``, ``b[n, m]`` of the normalised recurrence in ``n``."""
    n = np.arange(N + 1, dtype=float)[:, None]
    m = np.arange(N + 1, dtype=float)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.sqrt((4.0 * n * n - 1.0) / (n * n - m * m))
        b = -np.sqrt((2 * n + 1) * ((n - 1) ** 2 - m * m) / ((2 * n - 3) * (n * n - m * m)))
    return np.nan_to_num(a), np.nan_to_num(b)


def _assoc_legendre_normalized(N: int, x: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Fully normalised ``Pbar_n^m`` (Condon-Shortley phase), shape ``(N+1, N+1, npts)``.

    ``Y_{n,m} = Pbar_n^m(cos theta) exp(i m phi)`` for ``m >= 0``.
    """
    P = np.zeros((N + 1, N + 1, x.size))
    P[0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(1, N + 1):
        P[m, m] = -math.sqrt((2 * m + 1) / (2.0 * m)) * s * P[m - 1, m - 1]
    for m in range(0, N):
        P[m + 1, m] = math.sqrt(2 * m + 3) * x * P[m, m]
    a, b = _recurrence_coefficients(N)
    for n in range(2, N + 1):
        # orders m <= n - 2 advance together
        P[n, : n - 1] = a[n, : n - 1, None] * x * P[n - 1, : n - 1] + b[n, : n - 1, None] * P[n - 2, : n - 1]
    return P


@functools.lru_cache(maxsize=32)
def _sh_layout(N: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    n, k = sh_degrees(N)
    ak = np.abs(k)
    neg = np.flatnonzero(k < 0)
    return n, ak, neg, (-1.0) ** ak[neg]


def sph_harm_all(N: int, xis) -> np.ndarray:
    """Complex orthonormal ``Y_{n,k}(xi)`` for all ``n <= N``, shape ``(npts, (N+1)^2)``."""
    xis = np.asarray(xis, dtype=float).reshape(-1, 3)
    z = np.clip(xis[:, 2], -1.0, 1.0)
    s = np.hypot(xis[:, 0], xis[:, 1])
    phi = np.arctan2(xis[:, 1], xis[:, 0])
    P = _assoc_legendre_normalized(N, z, s)
    n, ak, neg, sign = _sh_layout(N)
    eim = np.exp(1j * np.multiply.outer(phi, np.arange(N + 1)))
    out = P[n, ak].T * eim[:, ak]
    # Y_{n,-k} = (-1)^k conj(Y_{n,k})
    out[:, neg] = sign * np.conj(out[:, neg])
    return out


def sph_harm(n: int, k: int, xi):
    """Orthonormal complex spherical harmonic ``Y_{n,k}`` at unit vector(s) ``xi``."""
    if n < 0 or abs(k) > n:
        raise ValueError(f"invalid spherical harmonic index (n={n}, k={k})")
    xi = np.asarray(xi, dtype=float)
    out = sph_harm_all(n, xi)[:, sh_index(n, k)]
    return complex(out[0]) if xi.ndim == 1 else out


# ---------------------------------------------------------------------------
# zonal kernels


def smooth_cutoff(u):
    """C-infinity cutoff equal to 1 on ``[0, 1/2]`` and 0 on ``[1, inf)``."""
    u = np.asarray(u, dtype=float)

    def f(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    a = f(np.atleast_1d(2.0 - 2.0 * u))
    b = f(np.atleast_1d(2.0 * u - 1.0))
    h = a / (a + b)
    return float(h[0]) if u.ndim == 0 else h.reshape(u.shape)


def projection_weights(N: int) -> np.ndarray:
    """Legendre weights ``(2n+1)/(4 pi)`` of the degree-``N`` reproducing kernel."""
    n = np.arange(N + 1)
    return (2 * n + 1) / (4 * math.pi)


def localized_weights(N: int) -> np.ndarray:
    """Legendre weights ``h(n/N) (2n+1)/(4 pi)`` of the localized kernel."""
    if N < 2:
        raise ValueError("localized kernel needs N >= 2")
    return smooth_cutoff(np.arange(N + 1) / N) * projection_weights(N)


def zonal_eval(weights, c, order: int = 0):
    """``sum_n w_n P_n^{(order)}(c)``."""
    weights = np.asarray(weights, dtype=float)
    c = np.asarray(c, dtype=float)
    P = legendre_all(len(weights) - 1, c, order)
    out = np.tensordot(weights, P, axes=(0, 0))
    return float(out) if np.ndim(out) == 0 else out


def zonal_projection_kernel(N: int, c, order: int = 0):
    """Reproducing kernel of spherical harmonics of degree ``<= N`` as a function of ``xi . eta``."""
    return zonal_eval(projection_weights(N), c, order)


def localized_zonal_kernel(N: int, c, order: int = 0):
    """Smooth-cutoff superposition of projection kernels, bandlimited to ``N``."""
    return zonal_eval(localized_weights(N), c, order)


def zonal_frame_derivs(weights, xi, eta, e1, e2) -> tuple[np.ndarray, ...]:
    """Derivatives of ``F(xi . eta)`` in ``eta`` along the tangent frame ``(e1, e2)`` at ``eta``.

    Arrays broadcast over leading axes.  Returns
    ``(value, d1, d2, d11, d12, d22)``.
    """
    c = np.clip(np.sum(xi * eta, axis=-1), -1.0, 1.0)
    a1 = np.sum(xi * e1, axis=-1)
    a2 = np.sum(xi * e2, axis=-1)
    F0 = zonal_eval(weights, c, 0)
    F1 = zonal_eval(weights, c, 1)
    F2 = zonal_eval(weights, c, 2)
    return (
        F0,
        F1 * a1,
        F1 * a2,
        F2 * a1 * a1 - F1 * c,
        F2 * a1 * a2,
        F2 * a2 * a2 - F1 * c,
    )


def zonal_directional_derivs(N: int, xi, eta) -> tuple[float, ...]:
    """Localized kernel ``F_N(xi . eta)`` and its derivatives in ``eta`` along ``tangent_basis(eta)``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    e1, e2 = tangent_basis(eta)
    return tuple(float(v) for v in zonal_frame_derivs(localized_weights(N), xi, eta, e1, e2))


def gauss_sphere_quadrature(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Product rule exact for spherical polynomials of total degree ``<= degree``.

    Gauss-Legendre in ``cos(theta)`` times an equispaced azimuth rule.
    """
    nz = degree // 2 + 1
    nphi = degree + 1
    z, wz = np.polynomial.legendre.leggauss(nz)
    phi = 2 * np.pi * np.arange(nphi) / nphi
    Z, PHI = np.meshgrid(z, phi, indexing="ij")
    R = np.sqrt(1 - Z**2)
    pts = np.column_stack([(R * np.cos(PHI)).ravel(), (R * np.sin(PHI)).ravel(), Z.ravel()])
    w = np.outer(wz, np.full(nphi, 2 * np.pi / nphi)).ravel()
    return pts, w
