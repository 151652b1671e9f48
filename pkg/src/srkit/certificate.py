"""Dual certificates: construction and numerical verification.

A certificate for a support ``T`` and signs ``u`` is a function ``q`` in the
measurement space with ``q(t_m) = u_m`` and ``|q| < 1`` elsewhere.  The
constructions here interpolate with a localized kernel and its derivatives
so that every ``t_m`` is also a critical point of ``q``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import harmonics as hm
from .manifold import (
    Support,
    check_separation,
    fibonacci_sphere,
    pairwise_distances,
    tangent_bases,
)
from .signal import get_kernel

#: default separation constants used as construction preconditions
DEFAULT_NU = {"torus": 2.5, "interval": 5 * math.pi, "sphere": 2 * math.pi, "real_line": 4.0}

MAX_CONDITION = 1e12
_SPHERE_CHUNK = 20_000


class CertificateError(RuntimeError):
    """The interpolation system could not be solved reliably."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition


# ---------------------------------------------------------------------------
# bandlimited functions


@dataclass(frozen=True, eq=False)
class BandlimitedFunction:
    """Real function ``Re sum_k c_k b_k`` in the degree-``N`` measurement space.

    The basis ``b_k`` is ``exp(2 pi i k t)`` on the torus, orthonormal
    Legendre polynomials on the interval, and ``Y_{n,k}`` on the sphere, so
    the adjoint of the measurement operator maps a coefficient vector ``c``
    to the function with these coefficients.
    """

    manifold: str
    N: int
    coefficients: np.ndarray
    _nodal: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        c = np.array(self.coefficients)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def zero(cls, manifold: str, N: int) -> "BandlimitedFunction":
        from .signal import measurement_dim

        dt = float if manifold == "interval" else complex
        return cls(manifold, N, np.zeros(measurement_dim(manifold, N), dtype=dt))

    def __call__(self, points) -> np.ndarray:
        if self.manifold == "torus":
            return np.real(hm.trig_eval(self.coefficients, np.asarray(points, dtype=float)))
        if self.manifold == "interval":
            return self.coefficients @ hm.normalized_legendre_all(self.N, np.asarray(points, dtype=float))
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        out = np.empty(len(pts))
        for i in range(0, len(pts), _SPHERE_CHUNK):
            Y = hm.sph_harm_all(self.N, pts[i : i + _SPHERE_CHUNK])
            out[i : i + _SPHERE_CHUNK] = np.real(Y @ self.coefficients)
        return out

    def derivatives(self, points):
        """Value, gradient and Hessian.

        On the torus and the interval ``grad`` and ``hess`` are arrays of
        scalars (derivatives in the coordinate).  On the sphere they are
        ``(n, 2)`` and ``(n, 2, 2)`` arrays in the ``tangent_basis`` frame
        at each point.
        """
        if self.manifold == "torus":
            t = np.asarray(points, dtype=float)
            return tuple(np.real(hm.trig_eval(self.coefficients, t, d)) for d in range(3))
        if self.manifold == "interval":
            t = np.asarray(points, dtype=float)
            return tuple(self.coefficients @ hm.normalized_legendre_all(self.N, t, d) for d in range(3))
        return self._sphere_derivatives(np.asarray(points, dtype=float).reshape(-1, 3))

    def _nodes(self):
        # q(xi) = sum_j w_j q(eta_j) K_N(xi . eta_j) exactly, by a degree-2N rule
        if "nodes" not in self._nodal:
            eta, w = hm.gauss_sphere_quadrature(2 * self.N)
            self._nodal["nodes"] = (eta, w * self(eta))
        return self._nodal["nodes"]

    def _sphere_derivatives(self, pts):
        eta, wq = self._nodes()
        weights = hm.projection_weights(self.N)
        e1, e2 = tangent_bases(pts)
        n = len(pts)
        val = np.empty(n)
        grad = np.empty((n, 2))
        hess = np.empty((n, 2, 2))
        step = max(1, _SPHERE_CHUNK // max(1, len(eta)) * 8)
        for i in range(0, n, step):
            sl = slice(i, i + step)
            F, d1, d2, d11, d12, d22 = hm.zonal_frame_derivs(
                weights, eta[None, :, :], pts[sl, None, :], e1[sl, None, :], e2[sl, None, :]
            )
            val[sl] = F @ wq
            grad[sl, 0] = d1 @ wq
            grad[sl, 1] = d2 @ wq
            hess[sl, 0, 0] = d11 @ wq
            hess[sl, 0, 1] = hess[sl, 1, 0] = d12 @ wq
            hess[sl, 1, 1] = d22 @ wq
        return val, grad, hess

    def to_dict(self) -> dict:
        c = self.coefficients
        coeffs = [[float(z.real), float(z.imag)] for z in c] if np.iscomplexobj(c) else [float(v) for v in c]
        return {"manifold": self.manifold, "N": self.N, "coefficients": coeffs}


def sphere_coefficients(fn, N: int) -> np.ndarray:
    """Project a degree-``<= N`` real function on the sphere onto ``Y_{n,k}``, ``n <= N``."""
    eta, w = hm.gauss_sphere_quadrature(2 * N)
    Y = hm.sph_harm_all(N, eta)
    return (np.conj(Y) * (w * fn(eta))[:, None]).sum(axis=0)


def torus_coefficients(fn, N: int, oversample: int = 4) -> np.ndarray:
    """Fourier coefficients ``k = -N..N`` of a 1-periodic function sampled on ``oversample * N`` points."""
    P = max(oversample * N, 2 * N + 1)
    t = np.arange(P) / P
    F = np.fft.fft(fn(t)) / P
    k = np.arange(-N, N + 1)
    return F[k % P]


# ---------------------------------------------------------------------------
# construction


def _solve_system(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    cond = float(np.linalg.cond(M)) if M.size else 1.0
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise CertificateError("interpolation system is singular or ill-conditioned", cond)
    return np.linalg.solve(M, rhs)


def _torus_certificate(T: np.ndarray, u: np.ndarray, N: int):
    f = hm.fejer4_coefficients(N)
    kappa = math.sqrt(abs(hm.trig_eval(f, 0.0, 2).real))
    diff = np.subtract.outer(T, T)
    K = [np.real(hm.trig_eval(f, diff, d)) for d in range(3)]
    s = len(T)
    M = np.zeros((2 * s, 2 * s))
    # rows: value equations then derivative equations; b scaled by 1/kappa
    M[:s, :s] = K[0]
    M[:s, s:] = K[1] / kappa
    M[s:, :s] = K[1] / kappa
    M[s:, s:] = K[2] / kappa**2
    sol = _solve_system(M, np.concatenate([u, np.zeros(s)]))
    a, b = sol[:s], sol[s:] / kappa
    k = np.arange(-N, N + 1)
    phase = np.exp(-2j * np.pi * np.multiply.outer(k, T))
    coeffs = (f[:, None] * phase) @ a + (f[:, None] * (2j * np.pi * k)[:, None] * phase) @ b
    return coeffs, a, b, float(np.linalg.cond(M))


def _interval_certificate(T: np.ndarray, u: np.ndarray, N: int):
    f = hm.fejer4_coefficients(N)  # in theta: K(theta) = sum_k f_k exp(i k theta)
    theta = np.arccos(np.clip(T, -1, 1))
    s = len(T)
    endpoint = (theta < 1e-9) | (np.pi - theta < 1e-9)

    def K(x, d):
        return np.real(hm.trig_eval(f, x / (2 * np.pi), d)) / (2 * np.pi) ** d

    kappa = math.sqrt(abs(K(np.array(0.0), 2)))
    dm = np.subtract.outer(theta, theta)
    dp = np.add.outer(theta, theta)
    # value of the even kernel pair and of its derivative companion, and their theta-derivatives
    E0 = K(dm, 0) + K(dp, 0)
    E1 = K(dm, 1) + K(dp, 1)
    O0 = K(dm, 1) - K(dp, 1)
    O1 = K(dm, 2) - K(dp, 2)
    keep = ~endpoint
    M = np.block([[E0, O0[:, keep] / kappa], [E1[keep] / kappa, O1[np.ix_(keep, keep)] / kappa**2]])
    rhs = np.concatenate([u, np.zeros(int(keep.sum()))])
    sol = _solve_system(M, rhs)
    a = sol[:s]
    b = np.zeros(s)
    b[keep] = sol[s:] / kappa

    def q_theta(th):
        th = np.asarray(th, dtype=float)
        dmm = np.subtract.outer(th, theta)
        dpp = np.add.outer(th, theta)
        return (K(dmm, 0) + K(dpp, 0)) @ a + (K(dmm, 1) - K(dpp, 1)) @ b

    # q(cos theta) is a cosine polynomial of degree <= N, i.e. an algebraic polynomial in t
    x, w = np.polynomial.legendre.leggauss(N + 1)
    P = hm.normalized_legendre_all(N, x)
    coeffs = P @ (w * q_theta(np.arccos(x)))
    return coeffs, a, b, float(np.linalg.cond(M))


def _sphere_system(T: np.ndarray, weights: np.ndarray):
    """Interpolation matrix for value and tangent-gradient conditions, interleaved per spike."""
    s = len(T)
    e1, e2 = tangent_bases(T)
    c = np.clip(T @ T.T, -1.0, 1.0)
    F0 = hm.zonal_eval(weights, c, 0)
    F1 = hm.zonal_eval(weights, c, 1)
    F2 = hm.zonal_eval(weights, c, 2)
    a1 = T @ e1.T  # [i, m] = xi_i . e1(xi_m)
    a2 = T @ e2.T
    M = np.zeros((3 * s, 3 * s))
    M[0::3, 0::3] = F0
    M[0::3, 1::3] = F1 * a1
    M[0::3, 2::3] = F1 * a2
    for r, D in ((1, e1), (2, e2)):
        b = D @ T.T  # [i, m] = d_i . xi_m, d_i the r-th tangent at xi_i
        M[r::3, 0::3] = F1 * b
        M[r::3, 1::3] = F2 * b * a1 + F1 * (D @ e1.T)
        M[r::3, 2::3] = F2 * b * a2 + F1 * (D @ e2.T)
    return M


def _sphere_certificate(T: np.ndarray, u: np.ndarray, N: int):
    weights = hm.localized_weights(N)
    M = _sphere_system(T, weights)
    scale = np.ones(3 * len(T))
    kappa = math.sqrt(abs(hm.zonal_eval(weights, 1.0, 1)))
    scale[1::3] = scale[2::3] = 1.0 / kappa
    Ms = M * scale[None, :] * scale[:, None]
    rhs = np.zeros(3 * len(T))
    rhs[0::3] = u
    sol = _solve_system(Ms, rhs * scale) * scale
    alpha, beta, gamma = sol[0::3], sol[1::3], sol[2::3]
    e1, e2 = tangent_bases(T)

    def q(xi):
        xi = np.asarray(xi, dtype=float).reshape(-1, 3)
        c = np.clip(xi @ T.T, -1.0, 1.0)
        F0 = hm.zonal_eval(weights, c, 0)
        F1 = hm.zonal_eval(weights, c, 1)
        return F0 @ alpha + (F1 * (xi @ e1.T)) @ beta + (F1 * (xi @ e2.T)) @ gamma

    coeffs = sphere_coefficients(q, N)
    return coeffs, (alpha, beta, gamma), float(np.linalg.cond(Ms))


@dataclass(frozen=True, eq=False)
class Certificate(BandlimitedFunction):
    """A :class:`BandlimitedFunction` that remembers its kernel coefficients."""

    kernel_coefficients: tuple = ()
    condition: float = 1.0


def build_certificate(support: Support, u, N: int, nu: float | None = None, check: bool = True) -> Certificate:
    """Interpolate the signs ``u`` on ``support`` with a localized kernel.

    Torus: ``q = sum a_m K(t - t_m) + b_m K'(t - t_m)`` with the squared
    Fejer kernel.  Interval: the same construction in ``theta = arccos t``,
    symmetrised so that ``q`` is a polynomial in ``t``.  Sphere:
    ``q = sum alpha_m F(xi . xi_m) + beta_m D_1 F + gamma_m D_2 F`` with the
    localized zonal kernel and rotational derivatives along the tangent
    frame at ``xi_m``.

    Raises :class:`ValueError` if ``check`` is set and the support is not
    ``nu / N`` separated, and :class:`CertificateError` if the linear
    system is too ill-conditioned.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    if len(u) != len(support):
        raise ValueError("one sign per support point is required")
    manifold = support.manifold
    if check:
        nu = DEFAULT_NU[manifold] if nu is None else nu
        if not check_separation(support, N, nu):
            raise ValueError(f"support violates the separation {nu}/{N}")
    T = support.points
    if len(T) == 0:
        return Certificate(manifold, N, BandlimitedFunction.zero(manifold, N).coefficients)
    if manifold == "torus":
        coeffs, a, b, cond = _torus_certificate(T, u, N)
        kc = (a, b)
    elif manifold == "interval":
        coeffs, a, b, cond = _interval_certificate(T, u, N)
        kc = (a, b)
    else:
        coeffs, kc, cond = _sphere_certificate(T, u, N)
    return Certificate(manifold, N, coeffs, kernel_coefficients=kc, condition=cond)


def nonneg_certificate_torus(support: Support, N: int) -> BandlimitedFunction:
    """``q(t) = 1 - 2^-(s+1) prod_m (1 - cos 2 pi (t - t_m))``, degree ``s <= N``."""
    if support.manifold != "torus":
        raise ValueError("nonneg_certificate_torus needs a torus support")
    s = len(support)
    if s > N:
        raise ValueError(f"support of size {s} exceeds the degree {N}")
    prod = np.array([1.0 + 0j])
    for t in support.points:
        factor = np.array([-0.5 * np.exp(2j * np.pi * t), 1.0, -0.5 * np.exp(-2j * np.pi * t)])
        prod = np.convolve(prod, factor)
    coeffs = np.zeros(2 * N + 1, dtype=complex)
    coeffs[N - s : N + s + 1] = -(2.0 ** -(s + 1)) * prod
    coeffs[N] += 1.0
    return BandlimitedFunction("torus", N, coeffs)


def nonneg_certificate_value(support: Support, t) -> np.ndarray:
    """Closed-form evaluation of :func:`nonneg_certificate_torus`."""
    t = np.asarray(t, dtype=float)
    s = len(support)
    prod = np.ones_like(t)
    for tm in support.points:
        prod = prod * (1.0 - np.cos(2 * np.pi * (t - tm)))
    return 1.0 - 2.0 ** -(s + 1) * prod


# ---------------------------------------------------------------------------
# verification


@dataclass
class CertificateReport:
    interpolation: float
    stationarity: float
    off_support_max: float
    curvature: float
    verdict: bool
    near_support_max: float = float("nan")
    tail_bound: float | None = None
    r_excl: float = 0.0
    n_scan: int = 0
    tol_interp: float = 1e-8
    tol_gap: float = 1e-6

    def to_dict(self) -> dict:
        return asdict(self)


def default_exclusion(manifold: str, N: int) -> float:
    # arccos and geodesic radians resolve 2 pi / N, the torus 1 / N
    if manifold == "torus":
        return 0.05 / N
    return 0.05 * 2 * math.pi / N


def scan_points(manifold: str, n: int | None = None) -> np.ndarray:
    if manifold == "torus":
        n = n or 2**14
        return np.arange(n) / n
    if manifold == "interval":
        n = n or 2**14
        return np.cos(np.pi * np.arange(n) / (n - 1))
    return fibonacci_sphere(n or 200_000)


def _curvature(manifold: str, val, grad, hess) -> np.ndarray:
    """Largest directional second derivative of ``q^2`` at each point."""
    if manifold != "sphere":
        return 2.0 * (grad * grad + val * hess)
    H = 2.0 * (np.einsum("ni,nj->nij", grad, grad) + val[:, None, None] * hess)
    return np.linalg.eigvalsh(H)[:, -1]


def verify_certificate(
    q: BandlimitedFunction,
    support: Support,
    u,
    grid_density: int | None = None,
    r_excl: float | None = None,
    tol_interp: float = 1e-8,
    tol_gap: float = 1e-6,
) -> CertificateReport:
    """Dense scan of ``|q|`` off the support plus local checks at the support."""
    manifold = q.manifold
    u = np.asarray(u, dtype=float).reshape(-1)
    r_excl = default_exclusion(manifold, q.N) if r_excl is None else r_excl
    X = scan_points(manifold, grid_density)
    vals = np.abs(q(X))
    T = support.points
    if len(T):
        dist = pairwise_distances(manifold, X, T).min(axis=1)
        far = dist > r_excl
        v, g, H = q.derivatives(T)
        if manifold == "interval":
            # local checks in the arccos coordinate, where endpoints are interior critical points
            sin, cos = np.sqrt(np.clip(1 - T * T, 0, None)), T
            g, H = -sin * g, sin * sin * H - cos * g
        interp = float(np.max(np.abs(v - u)))
        stat = float(np.max(np.abs(g))) if manifold != "sphere" else float(np.max(np.linalg.norm(g, axis=1)))
        curv = float(np.max(_curvature(manifold, v, g, H)))
        near = float(vals[~far].max(initial=0.0))
    else:
        far = np.ones(len(X), dtype=bool)
        interp = stat = 0.0
        curv = -math.inf
        near = float("nan")
    off = float(vals[far].max(initial=0.0))
    verdict = interp <= tol_interp and off <= 1.0 - tol_gap and curv < 0
    return CertificateReport(
        interpolation=interp,
        stationarity=stat,
        off_support_max=off,
        curvature=curv,
        verdict=bool(verdict),
        near_support_max=near,
        r_excl=r_excl,
        n_scan=len(X),
        tol_interp=tol_interp,
        tol_gap=tol_gap,
    )


# ---------------------------------------------------------------------------
# pulse kernels


@dataclass
class AdmissibilityReport:
    kernel: str
    C: list
    epsilon: float
    beta: float
    even: bool
    smooth: bool
    passed: bool
    reasons: list
    scan_extent: float
    scan_density: int

    def to_dict(self) -> dict:
        return asdict(self)


def _smoothness_audit(K, t: np.ndarray) -> tuple[bool, list]:
    """Finite-difference derivatives of order <= 3 must converge as the step shrinks."""
    reasons = []
    w = 1.0 + t * t
    f = lambda x: K(x, 0)  # noqa: E731

    def fd(x, order, h):
        if order == 0:
            return f(x)
        return (fd(x + h, order - 1, h) - fd(x - h, order - 1, h)) / (2 * h)

    for order in (1, 2, 3):
        coarse = np.max(w * np.abs(fd(t, order, 1e-2)))
        fine = np.max(w * np.abs(fd(t, order, 1e-2 / 4)))
        if not (np.isfinite(coarse) and np.isfinite(fine)) or abs(fine - coarse) > 0.05 * max(coarse, 1e-12):
            reasons.append(f"finite-difference derivative of order {order} does not converge")
            return False, reasons
    return True, reasons


def admissibility_check(kernel, scan_extent: float = 50.0, scan_density: int = 200) -> AdmissibilityReport:
    """Scan-based audit of the admissibility properties of a pulse kernel.

    ``scan_density`` is the number of scan points per unit length on
    ``[-scan_extent, scan_extent]``.  Decay constants are
    ``C_l = max (1 + t^2) |K^(l)(t)|`` over the scan; ``epsilon`` is the
    largest scan radius with ``K > 0``, ``K'' < 0`` on ``[-eps, eps]`` and
    ``K(t) < K(eps)`` beyond it; ``beta = -max K''`` on ``[-eps, eps]``.
    """
    K = get_kernel(kernel)
    n = int(2 * scan_extent * scan_density) + 1
    t = np.linspace(-scan_extent, scan_extent, n)
    reasons = []
    k0 = K(t, 0)
    even = bool(np.max(np.abs(k0 - K(-t, 0))) <= 1e-12 * max(1.0, np.max(np.abs(k0))))
    if not even:
        reasons.append("kernel is not even")
    smooth, why = _smoothness_audit(K, t)
    reasons += why
    w = 1.0 + t * t
    C = []
    for order in range(4):
        try:
            C.append(float(np.max(w * np.abs(K(t, order)))))
        except (NotImplementedError, FloatingPointError):
            C.append(math.inf)
    if not all(np.isfinite(C)):
        reasons.append("decay constants are not finite")

    # local property on the nonnegative half-scan
    tp = t[t >= 0]
    kp = K(tp, 0)
    k2 = K(tp, 2)
    # suffix max of K beyond each radius
    tail_max = np.concatenate([np.maximum.accumulate(kp[::-1])[::-1][1:], [-np.inf]])
    ok = (np.minimum.accumulate(kp) > 0) & (np.maximum.accumulate(k2) < 0) & (tail_max < kp)
    # require the property from the origin outward without gaps
    run = 0
    while run < len(ok) and ok[run]:
        run += 1
    eps = float(tp[run - 1]) if run > 0 else 0.0
    beta = float(-np.max(k2[:run])) if run > 0 else 0.0
    if eps <= 0:
        reasons.append("no neighbourhood of the origin is positive and strictly concave")
    if beta <= 0:
        reasons.append("curvature at the peak is not bounded away from zero")
    passed = even and smooth and all(np.isfinite(C)) and eps > 0 and beta > 0
    return AdmissibilityReport(
        kernel=K.name,
        C=C,
        epsilon=eps,
        beta=beta,
        even=even,
        smooth=smooth,
        passed=bool(passed),
        reasons=reasons,
        scan_extent=scan_extent,
        scan_density=scan_density,
    )


@dataclass(frozen=True, eq=False)
class PulseCertificate:
    """``q(t) = sum_m a_m K_sigma(t - t_m) + b_m K_sigma'(t - t_m)``."""

    points: np.ndarray
    a: np.ndarray
    b: np.ndarray
    kernel: str
    sigma: float
    condition: float = 1.0

    def derivatives(self, t):
        K = get_kernel(self.kernel)
        d = np.subtract.outer(np.asarray(t, dtype=float), self.points)
        return tuple(K.scaled(d, self.sigma, k) @ self.a + K.scaled(d, self.sigma, k + 1) @ self.b for k in range(3))

    def __call__(self, t):
        return self.derivatives(t)[0]


def sop_certificate(points, u, kernel, sigma: float, nu: float | None = None, admissibility=None):
    """Kernel-and-derivative interpolation for a pulse stream and its verification.

    Returns ``(PulseCertificate, CertificateReport)``; the report's
    ``tail_bound`` bounds ``|q|`` beyond the scanned window using the
    decay constants ``C_0`` and ``C_1``.
    """
    K = get_kernel(kernel)
    T = np.asarray(points, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    adm = admissibility or admissibility_check(K)
    if not adm.passed:
        raise ValueError(f"kernel {K.name} is not admissible: {'; '.join(adm.reasons)}")
    nu = DEFAULT_NU["real_line"] if nu is None else nu
    if len(T) > 1 and np.min(np.diff(np.sort(T))) < nu * sigma:
        raise ValueError(f"support violates the separation {nu} sigma")
    s = len(T)
    d = np.subtract.outer(T, T)
    kappa = math.sqrt(abs(K.scaled(0.0, sigma, 2)))
    M = np.block(
        [
            [K.scaled(d, sigma, 0), K.scaled(d, sigma, 1) / kappa],
            [K.scaled(d, sigma, 1) / kappa, K.scaled(d, sigma, 2) / kappa**2],
        ]
    )
    sol = _solve_system(M, np.concatenate([u, np.zeros(s)]))
    cert = PulseCertificate(T, sol[:s], sol[s:] / kappa, K.name, sigma, float(np.linalg.cond(M)))

    lo, hi = T.min() - 20 * sigma, T.max() + 20 * sigma
    X = np.linspace(lo, hi, int((hi - lo) / sigma * 400) + 1)
    vals = np.abs(cert(X))
    r_excl = 0.05 * sigma
    far = np.abs(np.subtract.outer(X, T)).min(axis=1) > r_excl
    v, g, H = cert.derivatives(T)
    interp = float(np.max(np.abs(v - u)))
    curv = float(np.max(2.0 * (g * g + v * H)))
    # beyond the window every kernel is at least 20 sigma away
    tail = (np.abs(cert.a).sum() * adm.C[0] + np.abs(cert.b).sum() * adm.C[1] / sigma) / (1.0 + 20.0**2)
    off = float(vals[far].max(initial=0.0))
    verdict = interp <= 1e-8 and off <= 1 - 1e-6 and curv < 0 and tail < 1.0
    report = CertificateReport(
        interpolation=interp,
        stationarity=float(np.max(np.abs(g))),
        off_support_max=off,
        curvature=curv,
        verdict=bool(verdict),
        near_support_max=float(vals[~far].max(initial=0.0)),
        tail_bound=float(tail),
        r_excl=r_excl,
        n_scan=len(X),
    )
    return cert, report
