import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from conftest import random_unit_vectors
from srkit.certificate import (
    BandlimitedFunction,
    CertificateError,
    admissibility_check,
    build_certificate,
    nonneg_certificate_torus,
    nonneg_certificate_value,
    sop_certificate,
    verify_certificate,
)
from srkit.harmonics import fejer4, fejer4_coefficients, localized_zonal_kernel
from srkit.manifold import Support, exp_map, random_separated_support, tangent_basis
from srkit.signal import PulseKernel, measurement_dim


def random_signs(rng, n):
    return rng.choice([-1.0, 1.0], n)


def torus_degree(q):
    """Largest |k| with a non-negligible coefficient, by FFT of samples."""
    n = 4 * q.N + 8
    c = np.fft.fft(q(np.arange(n) / n)) / n
    k = np.abs(np.fft.fftfreq(n, 1 / n))
    return int(k[np.abs(c) > 1e-12].max(initial=0))


# torus


def test_torus_single_spike_coefficients():
    q = build_certificate(Support("torus", [0.0]), [1.0], 16)
    a, b = q.kernel_coefficients
    assert a[0] == pytest.approx(1.0) and abs(b[0]) <= 1e-14
    t = np.linspace(0, 1, 101)
    np.testing.assert_allclose(q(t), fejer4(16, t), atol=1e-12)


def test_torus_two_spikes_n64_interpolate():
    N = 64
    T = Support("torus", [0.3, 0.3 + 2.5 / N])
    q = build_certificate(T, [1.0, -1.0], N)
    v, g, _ = q.derivatives(T.points)
    assert np.max(np.abs(v - [1, -1])) <= 1e-10
    assert np.max(np.abs(g)) <= 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_torus_random_supports_valid(seed):
    rng = np.random.default_rng(seed)
    T = random_separated_support("torus", 64, 2.5, 12, seed=seed)
    u = random_signs(rng, len(T))
    r = verify_certificate(build_certificate(T, u, 64), T, u)
    assert r.verdict, r
    assert r.interpolation <= 1e-8 and r.stationarity <= 1e-8


def test_torus_certificate_is_bandlimited(rng):
    T = random_separated_support("torus", 20, 2.5, 5, seed=4)
    q = build_certificate(T, random_signs(rng, len(T)), 20)
    assert len(q.coefficients) == 41
    assert torus_degree(q) <= 20


def test_sign_flip_negates(rng):
    for manifold, N, nu in (("torus", 20, 2.5), ("interval", 20, 5 * math.pi), ("sphere", 6, 2 * math.pi)):
        T = random_separated_support(manifold, N, nu, 4, seed=9)
        u = random_signs(rng, len(T))
        np.testing.assert_allclose(
            build_certificate(T, -u, N).coefficients, -build_certificate(T, u, N).coefficients, atol=1e-12
        )


def test_separation_precondition():
    with pytest.raises(ValueError):
        build_certificate(Support("torus", [0.0, 0.01]), [1, 1], 10)
    q = build_certificate(Support("torus", [0.0, 0.05]), [1, 1], 10, check=False)
    assert q.N == 10


def test_ill_conditioned_system_raises():
    with pytest.raises(CertificateError) as e:
        build_certificate(Support("torus", [0.0, 1e-7]), [1, -1], 10, check=False)
    assert e.value.condition > 1e12


def test_sign_count_checked():
    with pytest.raises(ValueError):
        build_certificate(Support("torus", [0.0, 0.5]), [1.0], 10)


# interval


@pytest.mark.parametrize("seed", range(3))
def test_interval_certificate_valid(seed):
    rng = np.random.default_rng(seed)
    N = 30
    T = random_separated_support("interval", N, 5 * math.pi, 4, seed=seed)
    u = random_signs(rng, len(T))
    q = build_certificate(T, u, N)
    assert len(q.coefficients) == N + 1
    r = verify_certificate(q, T, u)
    assert r.verdict, r


def test_interval_certificate_endpoint_spike():
    T = Support("interval", [1.0, 0.0])
    q = build_certificate(T, [1.0, -1.0], 20)
    assert q(np.array([1.0, 0.0])) == pytest.approx([1.0, -1.0], abs=1e-10)
    assert verify_certificate(q, T, [1.0, -1.0]).verdict


# sphere


def test_sphere_single_pole():
    N = 8
    q = build_certificate(Support("sphere", [[0, 0, 1]]), [1.0], N)
    alpha, beta, gamma = q.kernel_coefficients
    assert alpha[0] == pytest.approx(1 / localized_zonal_kernel(N, 1.0))
    assert abs(beta[0]) <= 1e-12 and abs(gamma[0]) <= 1e-12


@pytest.mark.parametrize("seed", range(2))
def test_sphere_random_supports_valid(seed):
    rng = np.random.default_rng(seed)
    T = random_separated_support("sphere", 10, 2 * math.pi, 6, seed=seed)
    u = random_signs(rng, len(T))
    q = build_certificate(T, u, 10)
    assert len(q.coefficients) == 121
    r = verify_certificate(q, T, u, grid_density=200_000)
    assert r.verdict, r


def test_sphere_derivatives_match_finite_differences(rng):
    T = random_separated_support("sphere", 6, 2 * math.pi, 3, seed=2)
    q = build_certificate(T, random_signs(rng, len(T)), 6)
    h = 1e-5
    for xi in random_unit_vectors(rng, 4):
        v, g, H = q.derivatives(xi[None])
        e1, e2 = tangent_basis(xi)
        f = lambda a, b: q(exp_map(xi, a * e1 + b * e2)[None])[0]  # noqa: E731
        assert v[0] == pytest.approx(q(xi[None])[0], abs=1e-10)
        fd = [(f(h, 0) - f(-h, 0)) / (2 * h), (f(0, h) - f(0, -h)) / (2 * h)]
        np.testing.assert_allclose(g[0], fd, atol=1e-6 * max(1, np.abs(fd).max()))
        assert H[0, 0, 0] == pytest.approx((f(h, 0) - 2 * v[0] + f(-h, 0)) / h**2, abs=1e-3)


@pytest.mark.parametrize("manifold", ["torus", "interval"])
def test_derivatives_match_finite_differences(manifold, rng):
    N = 12
    n = measurement_dim(manifold, N)
    c = rng.normal(size=n) + (1j * rng.normal(size=n) if manifold == "torus" else 0)
    q = BandlimitedFunction(manifold, N, c)
    t = rng.uniform(0.05, 0.95, 20) if manifold == "torus" else rng.uniform(-0.95, 0.95, 20)
    v, g, H = q.derivatives(t)
    h = 1e-6
    scale = max(1.0, np.abs(v).max())
    np.testing.assert_allclose(g, (q(t + h) - q(t - h)) / (2 * h), atol=1e-6 * scale * N)
    np.testing.assert_allclose(H, (q.derivatives(t + h)[1] - q.derivatives(t - h)[1]) / (2 * h), atol=1e-6 * scale * N**2)


def test_evaluation_linear_in_coefficients(rng):
    a, b = rng.normal(size=(2, 31))
    t = rng.uniform(-1, 1, 10)
    lhs = BandlimitedFunction("interval", 30, a + 3 * b)(t)
    rhs = BandlimitedFunction("interval", 30, a)(t) + 3 * BandlimitedFunction("interval", 30, b)(t)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


# verification


def test_zero_function_invalid():
    T = Support("torus", [0.25])
    r = verify_certificate(BandlimitedFunction.zero("torus", 8), T, [1.0])
    assert r.interpolation == pytest.approx(1.0)
    assert not r.verdict


def test_fejer_kernel_is_valid_certificate():
    N, t1 = 10, 0.3
    k = np.arange(-N, N + 1)
    q = BandlimitedFunction("torus", N, fejer4_coefficients(N) * np.exp(-2j * np.pi * k * t1))
    r = verify_certificate(q, Support("torus", [t1]), [1.0])
    assert r.verdict
    assert r.interpolation <= 1e-12 and r.off_support_max < 1


def test_dirichlet_kernel_is_not_certificate():
    # normalised Dirichlet kernel oscillates but stays below one; a scaled copy does not
    N = 10
    q = BandlimitedFunction("torus", N, 1.2 * np.ones(2 * N + 1) / (2 * N + 1))
    assert not verify_certificate(q, Support("torus", [0.0]), [1.0]).verdict


# non-negative closed form


def test_nonneg_single_spike_examples():
    T = Support("torus", [0.0])
    q = nonneg_certificate_torus(T, 4)
    assert q(np.array([0.0]))[0] == pytest.approx(1.0)
    assert q(np.array([0.5]))[0] == pytest.approx(0.5)
    t = np.linspace(0, 1, 64)
    np.testing.assert_allclose(q(t), 1 - (1 - np.cos(2 * np.pi * t)) / 4, atol=1e-14)


@settings(max_examples=20)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_nonneg_closed_form_properties(s, seed):
    rng = np.random.default_rng(seed)
    N = 16
    pts = np.sort(rng.random(s))
    if s > 1 and np.min(np.diff(np.concatenate([pts, [pts[0] + 1]]))) <= 1e-3:
        return
    T = Support("torus", pts)
    q = nonneg_certificate_torus(T, N)
    np.testing.assert_allclose(q(pts), 1.0, atol=1e-13)
    t = np.arange(2**14) / 2**14
    v = q(t)
    np.testing.assert_allclose(v, nonneg_certificate_value(T, t), atol=1e-12)
    assert v.min() >= 0.5 - 1e-12
    far = np.min(np.abs(((t[:, None] - pts[None]) + 0.5) % 1 - 0.5), axis=1) > 0.05 / N
    # the margin below one is a product of small factors near clustered points
    assert v[far].max() < 1
    assert torus_degree(q) <= s


def test_nonneg_margin_on_spread_support():
    N, pts = 16, np.arange(5) / 5 + 0.01
    T = Support("torus", pts)
    t = np.arange(2**14) / 2**14
    far = np.min(np.abs(((t[:, None] - pts[None]) + 0.5) % 1 - 0.5), axis=1) > 1e-3
    assert nonneg_certificate_torus(T, N)(t)[far].max() < 1 - 1e-9


def test_nonneg_rejects_too_many_points():
    with pytest.raises(ValueError):
        nonneg_certificate_torus(Support("torus", np.arange(5) / 5), 4)


# pulse kernels


def test_gaussian_admissible():
    r = admissibility_check("gaussian")
    assert r.passed and r.even and r.smooth
    c0 = -minimize_scalar(lambda t: -(1 + t * t) * math.exp(-t * t / 2), bounds=(0, 3), method="bounded").fun
    assert c0 == pytest.approx(2 * math.exp(-0.5), rel=1e-8)
    assert r.C[0] == pytest.approx(c0, rel=1e-4)
    assert r.epsilon > 0 and r.beta > 0


def test_cauchy_admissible():
    r = admissibility_check("cauchy")
    assert r.passed
    assert r.C[0] == pytest.approx(1.0)


def test_triangle_not_admissible():
    r = admissibility_check("triangle")
    assert not r.passed and not r.smooth and r.reasons


def test_odd_kernel_not_admissible():
    odd = PulseKernel("odd", lambda t, order: [t * np.exp(-t * t), (1 - 2 * t * t) * np.exp(-t * t)][min(order, 1)])
    r = admissibility_check(odd)
    assert not r.even and not r.passed


def test_sop_single_spike():
    q, rep = sop_certificate([0.0], [1.0], "gaussian", 0.7)
    assert q.a[0] == pytest.approx(1.0) and abs(q.b[0]) <= 1e-14
    assert rep.verdict


def test_sop_three_gaussian_spikes():
    T = [0.0, 4.0, 8.0]
    u = [1.0, -1.0, 1.0]
    q, rep = sop_certificate(T, u, "gaussian", 1.0)
    assert rep.verdict and rep.interpolation <= 1e-10
    assert rep.tail_bound < 1


def test_sop_cauchy_pair():
    _, rep = sop_certificate([0.0, 8.0], [1.0, 1.0], "cauchy", 1.0)
    assert rep.verdict


def test_sop_rejects_triangle_and_crowding():
    with pytest.raises(ValueError):
        sop_certificate([0.0], [1.0], "triangle", 1.0)
    with pytest.raises(ValueError):
        sop_certificate([0.0, 1.0], [1.0, 1.0], "gaussian", 1.0)
