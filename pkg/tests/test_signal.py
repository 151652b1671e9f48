import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import legendre as npleg
from scipy.special import sph_harm_y

from conftest import random_unit_vectors
from srkit.harmonics import dirichlet, zonal_projection_kernel
from srkit.manifold import Support
from srkit.signal import (
    MeasurementSet,
    PulseSamples,
    SpikeTrain,
    add_noise,
    default_sample_grid,
    eval_lowres,
    forward,
    forward_interval,
    forward_sphere,
    forward_torus,
    get_kernel,
    noise_ball_radius,
    real_line_train,
    sop_forward,
)
from srkit.solver import build_dictionary


def sphere_basis(N, xi):
    """Direct per-index evaluation of Y_{n,k}, rows by point."""
    xi = np.atleast_2d(xi)
    theta, phi = np.arccos(np.clip(xi[:, 2], -1, 1)), np.arctan2(xi[:, 1], xi[:, 0])
    return np.stack([sph_harm_y(n, k, theta, phi) for n in range(N + 1) for k in range(-n, n + 1)], axis=1)


def legendre_hat(k, x):
    c = np.zeros(k + 1)
    c[k] = 1
    return math.sqrt((2 * k + 1) / 2) * npleg.legval(x, c)


def random_train(manifold, rng, n=4):
    if manifold == "torus":
        pts = rng.random(n)
    elif manifold == "interval":
        pts = rng.uniform(-1, 1, n)
    else:
        pts = random_unit_vectors(rng, n)
    return SpikeTrain.from_arrays(manifold, pts, rng.normal(size=n))


# spike trains


def test_tv_norm_is_l1_of_amplitudes(rng):
    x = random_train("torus", rng, 6)
    assert x.tv_norm() == np.sum(np.abs(x.amplitudes))


def test_spike_train_rejects_mismatch():
    with pytest.raises(ValueError):
        SpikeTrain.from_arrays("torus", [0.1, 0.2], [1.0])
    with pytest.raises(ValueError):
        SpikeTrain.from_arrays("torus", [0.1], [np.inf])


@pytest.mark.parametrize("manifold", ["torus", "interval", "sphere"])
def test_spike_train_json_round_trip(manifold, rng):
    x = random_train(manifold, rng)
    back = SpikeTrain.from_dict(json.loads(json.dumps(x.to_dict())))
    np.testing.assert_array_equal(back.points, x.points)
    np.testing.assert_array_equal(back.amplitudes, x.amplitudes)


# torus


def test_torus_unit_spike_at_origin():
    y = forward_torus(SpikeTrain.from_arrays("torus", [0.0], [1.0]), 5)
    np.testing.assert_array_equal(y.coefficients, np.ones(11))


def test_torus_conjugate_symmetry_exact(rng):
    y = forward_torus(random_train("torus", rng, 7), 9).coefficients
    assert np.array_equal(y[::-1], np.conj(y))


def test_torus_two_spikes_direct_sum():
    y = forward_torus(SpikeTrain.from_arrays("torus", [0.2, 0.7], [1.5, -2.0]), 3).coefficients
    ref = [1.5 * np.exp(-2j * np.pi * k * 0.2) - 2 * np.exp(-2j * np.pi * k * 0.7) for k in range(-3, 4)]
    np.testing.assert_allclose(y, ref, atol=1e-14)


# interval


def test_interval_unit_spike_at_endpoint():
    y = forward_interval(SpikeTrain.from_arrays("interval", [1.0], [1.0]), 6).coefficients
    np.testing.assert_allclose(y, np.sqrt((2 * np.arange(7) + 1) / 2), atol=1e-14)


def test_interval_empty_is_zero():
    y = forward_interval(SpikeTrain.empty("interval"), 4)
    assert np.array_equal(y.coefficients, np.zeros(5))


def test_interval_direct_sum(rng):
    x = random_train("interval", rng, 3)
    ref = [sum(c * legendre_hat(k, t) for t, c in zip(x.points, x.amplitudes)) for k in range(6)]
    np.testing.assert_allclose(forward_interval(x, 5).coefficients, ref, atol=1e-13)


# sphere


def test_sphere_constant_coefficient(rng):
    y = forward_sphere(SpikeTrain.from_arrays("sphere", random_unit_vectors(rng, 1), [1.0]), 4)
    assert y.coefficients[0] == pytest.approx(1 / math.sqrt(4 * math.pi))


def test_sphere_pole_is_axisymmetric():
    y = forward_sphere(SpikeTrain.from_arrays("sphere", [[0, 0, 1]], [1.0]), 6).coefficients
    k = np.array([k for n in range(7) for k in range(-n, n + 1)])
    assert np.max(np.abs(y[k != 0])) <= 1e-14


def test_sphere_direct_sum(rng):
    x = random_train("sphere", rng, 4)
    ref = np.conj(sphere_basis(5, x.points)).T @ x.amplitudes
    np.testing.assert_allclose(forward_sphere(x, 5).coefficients, ref, atol=1e-12)


def test_sphere_real_measure_symmetry(rng):
    y = forward_sphere(random_train("sphere", rng, 5), 6).coefficients
    i = 0
    for n in range(7):
        row = y[i : i + 2 * n + 1]
        for k in range(1, n + 1):
            assert abs(row[n - k] - (-1) ** k * np.conj(row[n + k])) <= 1e-12
        i += 2 * n + 1


@pytest.mark.parametrize("manifold", ["torus", "interval", "sphere"])
def test_forward_is_linear(manifold, rng):
    x1 = random_train(manifold, rng, 3)
    a2 = rng.normal(size=3)
    x2 = SpikeTrain(x1.support, a2)
    xs = SpikeTrain(x1.support, x1.amplitudes + 2.5 * a2)
    np.testing.assert_allclose(
        forward(xs, 6).coefficients, forward(x1, 6).coefficients + 2.5 * forward(x2, 6).coefficients, atol=1e-12
    )


def test_forward_rejects_wrong_manifold(rng):
    with pytest.raises(ValueError):
        forward_torus(random_train("interval", rng), 3)


def test_measurement_set_dimension_checked():
    with pytest.raises(ValueError):
        MeasurementSet("sphere", 3, np.zeros(15))


@pytest.mark.parametrize("manifold", ["torus", "interval", "sphere"])
def test_measurement_json_round_trip(manifold, rng):
    y = add_noise(forward(random_train(manifold, rng), 4), 0.1, seed=3)
    back = MeasurementSet.from_json(y.to_json())
    np.testing.assert_array_equal(back.coefficients, y.coefficients)
    assert back.noise == y.noise and back.N == 4 and back.manifold == manifold


# pulse streams


def test_sop_gaussian_peak():
    y = sop_forward(real_line_train([0.0], [1.0]), "gaussian", 1.0, grid=np.linspace(-2, 2, 5))
    assert y.values[2] == pytest.approx(1.0)


def test_sop_cauchy_direct_sum():
    grid = np.linspace(-5, 5, 81)
    y = sop_forward(real_line_train([-1.0, 1.5], [2.0, -1.0]), "cauchy", 0.5, grid)
    ref = [2 / (1 + ((t + 1) / 0.5) ** 2) - 1 / (1 + ((t - 1.5) / 0.5) ** 2) for t in grid]
    np.testing.assert_allclose(y.values, ref, atol=1e-14)


def test_sop_linear(rng):
    grid = np.linspace(-10, 10, 201)
    pts = np.array([-2.0, 0.5, 3.0])
    a, b = rng.normal(size=3), rng.normal(size=3)
    f = lambda amps: sop_forward(real_line_train(pts, amps), "gaussian", 0.7, grid).values
    np.testing.assert_allclose(f(a + b), f(a) + f(b), atol=1e-13)


def test_default_sample_grid_density_and_extent():
    g = default_sample_grid([0.0, 3.0], 0.5)
    assert g[0] == pytest.approx(-5.0) and g[-1] >= 8.0
    assert np.diff(g).max() <= 0.5 / 8 + 1e-12


def test_pulse_samples_reject_nonuniform_grid():
    with pytest.raises(ValueError):
        PulseSamples([0.0, 1.0, 3.0], [0, 0, 0], "gaussian", 1.0)


@pytest.mark.parametrize("name", ["gaussian", "cauchy"])
@pytest.mark.parametrize("order", [1, 2, 3])
def test_pulse_kernel_derivatives(name, order, rng):
    K = get_kernel(name)
    t = rng.uniform(-4, 4, 50)
    h = 1e-5
    fd = (K(t + h, order - 1) - K(t - h, order - 1)) / (2 * h)
    np.testing.assert_allclose(K(t, order), fd, atol=1e-7)


def test_unknown_kernel():
    with pytest.raises(ValueError):
        get_kernel("boxcar")


# noise


def test_zero_noise_is_identity(rng):
    y = forward(random_train("sphere", rng), 4)
    np.testing.assert_array_equal(add_noise(y, 0.0, seed=1).coefficients, y.coefficients)


def test_noise_deterministic_per_seed(rng):
    y = forward(random_train("torus", rng), 4)
    a, b, c = add_noise(y, 0.3, seed=7), add_noise(y, 0.3, seed=7), add_noise(y, 0.3, seed=8)
    np.testing.assert_array_equal(a.coefficients, b.coefficients)
    assert not np.array_equal(a.coefficients, c.coefficients)


def test_noise_sample_statistics():
    sd = 0.37
    y = PulseSamples(np.arange(100_000.0), np.zeros(100_000), "gaussian", 1.0)
    e = add_noise(y, sd, seed=11).values
    assert abs(e.std() / sd - 1) <= 0.02
    assert abs(e.mean()) <= 5 * sd / math.sqrt(len(e))


def test_complex_noise_components_independent():
    sd = 0.5
    y = MeasurementSet("sphere", 150, np.zeros(151**2, dtype=complex))
    e = add_noise(y, sd, seed=2).coefficients
    assert abs(e.real.std() / sd - 1) <= 0.02 and abs(e.imag.std() / sd - 1) <= 0.02
    assert abs(np.corrcoef(e.real, e.imag)[0, 1]) <= 0.02


def test_noise_ball_radius_covers_noise():
    N, sd = 10, 0.2
    y = MeasurementSet("torus", N, np.zeros(2 * N + 1, dtype=complex))
    r = noise_ball_radius("torus", N, sd)
    inside = [np.linalg.norm(add_noise(y, sd, seed=s).coefficients) <= r for s in range(400)]
    assert np.mean(inside) >= 0.9


def test_negative_sd_rejected(rng):
    with pytest.raises(ValueError):
        add_noise(forward(random_train("torus", rng), 3), -1.0)


# low-resolution synthesis


def test_eval_lowres_torus_peak():
    y = forward_torus(SpikeTrain.from_arrays("torus", [0.0], [1.0]), 7)
    assert eval_lowres(y, [0.0])[0] == pytest.approx(15.0)


def test_eval_lowres_sphere_peak(rng):
    xi = random_unit_vectors(rng, 1)
    y = forward_sphere(SpikeTrain.from_arrays("sphere", xi, [1.0]), 6)
    assert eval_lowres(y, xi)[0] == pytest.approx(49 / (4 * math.pi))


def test_eval_lowres_matches_direct_sum(rng):
    x = random_train("torus", rng)
    y = forward_torus(x, 5)
    t = rng.random()
    ref = sum(y.coefficients[k + 5] * np.exp(2j * np.pi * k * t) for k in range(-5, 6)).real
    assert eval_lowres(y, [t])[0] == pytest.approx(ref, abs=1e-12)

    xs = random_train("sphere", rng)
    ys = forward_sphere(xs, 5)
    xi = random_unit_vectors(rng, 1)
    ref = np.real(sphere_basis(5, xi) @ ys.coefficients)[0]
    assert eval_lowres(ys, xi)[0] == pytest.approx(ref, abs=1e-12)

    xi_ = random_train("interval", rng)
    yi = forward_interval(xi_, 5)
    p = rng.uniform(-1, 1)
    ref = sum(yi.coefficients[k] * legendre_hat(k, p) for k in range(6))
    assert eval_lowres(yi, [p])[0] == pytest.approx(ref, abs=1e-12)


def test_eval_lowres_is_kernel_superposition(rng):
    x = random_train("torus", rng, 5)
    t = rng.random(30)
    ref = sum(c * dirichlet(6, t - s) for s, c in zip(x.points, x.amplitudes))
    np.testing.assert_allclose(eval_lowres(forward_torus(x, 6), t), ref, atol=1e-10)

    xs = random_train("sphere", rng, 5)
    pts = random_unit_vectors(rng, 30)
    ref = sum(c * zonal_projection_kernel(6, np.clip(pts @ s, -1, 1)) for s, c in zip(xs.points, xs.amplitudes))
    np.testing.assert_allclose(eval_lowres(forward_sphere(xs, 6), pts), ref, atol=1e-10)


@pytest.mark.parametrize("manifold", ["torus", "interval", "sphere"])
def test_adjoint_identity(manifold, rng):
    D = build_dictionary(manifold, 5, 200)
    w = rng.normal(size=D.G)
    m = D.matrix.shape[0]
    v = rng.normal(size=m) + (1j * rng.normal(size=m) if D.is_complex else 0)
    lhs = np.real(np.vdot(v, D.apply(w)))
    assert lhs == pytest.approx(w @ D.adjoint(v), abs=1e-10 * max(1, abs(lhs)))


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=6))
def test_tv_norm_property(amps):
    x = SpikeTrain(Support("torus", np.arange(len(amps)) / 8), amps)
    assert x.tv_norm() == pytest.approx(sum(abs(a) for a in amps))
