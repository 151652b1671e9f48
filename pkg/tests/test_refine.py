import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_unit_vectors
from srkit.certificate import BandlimitedFunction, build_certificate
from srkit.manifold import Support, exp_map, pairwise_distances, random_separated_support, tangent_basis
from srkit.refine import (
    RecoveryConfig,
    detect_support,
    dual_polynomial,
    fit_amplitudes,
    polish,
    recover,
    support_error,
)
from srkit.signal import MeasurementSet, SpikeTrain, add_noise, atoms, forward, measurement_dim
from srkit.solver import build_dictionary, solve_bp

CONSTANT = {"torus": 1.0, "interval": math.sqrt(2.0), "sphere": math.sqrt(4 * math.pi)}


def constant_function(manifold, N, value):
    n = measurement_dim(manifold, N)
    c = np.zeros(n, dtype=float if manifold == "interval" else complex)
    c[N if manifold == "torus" else 0] = value * CONSTANT[manifold]
    return BandlimitedFunction(manifold, N, c)


def random_train(manifold, N, nu, s, seed):
    T = random_separated_support(manifold, N, nu, s, seed=seed)
    rng = np.random.default_rng(seed)
    return SpikeTrain(T, rng.choice([-1, 1], len(T)) * rng.uniform(0.5, 2, len(T)))


# dual polynomial


def test_constant_function_has_expected_value():
    for manifold, pt in (("torus", [0.3]), ("interval", [0.2]), ("sphere", [[0, 0, 1.0]])):
        assert constant_function(manifold, 5, 0.5)(pt)[0] == pytest.approx(0.5)


def test_dual_polynomial_of_zero_data():
    D = build_dictionary("torus", 6, 128)
    r = solve_bp(D, MeasurementSet("torus", 6, np.zeros(13)))
    q = dual_polynomial(r, D)
    assert np.max(np.abs(q(np.linspace(0, 1, 500)))) < 1
    assert len(detect_support(q)) == 0


@pytest.mark.parametrize("manifold", ["torus", "interval", "sphere"])
def test_dual_polynomial_peaks_at_single_spike(manifold):
    D = build_dictionary(manifold, 6, 500)
    x = SpikeTrain.from_arrays(manifold, D.grid[[123]], [1.0])
    r = solve_bp(D, forward(x, 6))
    q = dual_polynomial(r, D)
    assert 1 - 1e-4 <= q(D.grid[[123]])[0] <= 1 + 1e-6
    # the dual polynomial is A* c on the grid
    np.testing.assert_allclose(q(D.grid), D.adjoint(r.dual), atol=1e-10)


# detection and polishing


def test_constant_below_one_detects_nothing():
    for manifold in ("torus", "interval", "sphere"):
        assert len(detect_support(constant_function(manifold, 6, 0.5))) == 0


@pytest.mark.parametrize(
    "manifold,N,nu,s",
    [("torus", 20, 2.5, 5), ("interval", 20, 5 * math.pi, 3), ("sphere", 8, 2 * math.pi, 4)],
)
def test_detect_certificate_peaks(manifold, N, nu, s):
    T = random_separated_support(manifold, N, nu, s, seed=5)
    u = np.random.default_rng(5).choice([-1.0, 1.0], len(T))
    found = detect_support(build_certificate(T, u, N))
    assert len(found) == len(T)
    assert support_error(T, found).max <= 1e-6


def test_zero_tau_detects_nothing():
    T = Support("torus", [0.1, 0.6])
    assert len(detect_support(build_certificate(T, [1.0, -1.0], 16), tau=0.0)) == 0


def test_polish_fixed_point_at_peak():
    T = Support("torus", [0.25])
    q = build_certificate(T, [1.0], 16)
    out = polish(T, q)
    assert out.points[0] == pytest.approx(0.25, abs=1e-14)


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_polish_converges_from_offset(sign):
    N = 16
    T = Support("torus", [0.2, 0.6])
    q = build_certificate(T, [sign, -sign], N)
    out = polish(Support("torus", [0.2 + 0.3 / (2 * N), 0.6 - 0.3 / (2 * N)]), q)
    np.testing.assert_allclose(np.sort(out.points), [0.2, 0.6], atol=1e-10)


def test_polish_interval_and_sphere_offsets(rng):
    N = 16
    T = Support("interval", [-0.6, 0.6])
    q = build_certificate(T, [1.0, 1.0], N)
    start = np.cos(np.arccos(T.points) + 0.3 / (2 * N))
    np.testing.assert_allclose(np.sort(polish(Support("interval", start), q).points), [-0.6, 0.6], atol=1e-10)

    xi = random_unit_vectors(rng, 1)[0]
    qs = build_certificate(Support("sphere", xi[None]), [-1.0], N)
    e1, _ = tangent_basis(xi)
    out = polish(Support("sphere", exp_map(xi, 0.3 / (2 * N) * e1)[None]), qs)
    assert pairwise_distances("sphere", out.points, xi[None])[0, 0] <= 1e-10


def test_polish_drops_flat_region():
    # half a period away the Fejer-type kernel is tiny
    q = build_certificate(Support("torus", [0.0]), [1.0], 8)
    assert len(polish(Support("torus", [0.5]), q)) == 0


# amplitudes


@pytest.mark.parametrize("manifold,N,nu", [("torus", 16, 2.5), ("interval", 16, 5 * math.pi), ("sphere", 6, 2 * math.pi)])
def test_fit_amplitudes_exact(manifold, N, nu):
    x = random_train(manifold, N, nu, 4, seed=2)
    fit = fit_amplitudes(x.support, forward(x, N))
    np.testing.assert_allclose(fit.train.amplitudes, x.amplitudes, atol=1e-8)
    assert fit.residual <= 1e-10 and not fit.flagged


def test_fit_amplitudes_zero_data():
    T = Support("torus", [0.1, 0.5])
    fit = fit_amplitudes(T, MeasurementSet("torus", 8, np.zeros(17)))
    np.testing.assert_array_equal(fit.train.amplitudes, [0.0, 0.0])


def test_fit_amplitudes_noise_within_perturbation_bound():
    N, sd = 12, 0.01
    x = random_train("torus", N, 2.5, 4, seed=3)
    y0 = forward(x, N)
    # covariance of least-squares amplitudes under sd-per-real-coordinate noise
    Phi = atoms("torus", N, x.points)
    A = np.vstack([Phi.real, Phi.imag])
    std = sd * np.sqrt(np.diag(np.linalg.inv(A.T @ A)))
    for seed in range(20):
        fit = fit_amplitudes(x.support, add_noise(y0, sd, seed=seed))
        assert np.all(np.abs(fit.train.amplitudes - x.amplitudes) <= 5 * std)


def test_fit_amplitudes_flags_duplicate_columns():
    T = Support("torus", [0.1, 0.1 + 1e-15])
    fit = fit_amplitudes(T, forward(SpikeTrain.from_arrays("torus", [0.1], [1.0]), 8))
    assert fit.flagged


# support error


def test_support_error_identical():
    T = Support("torus", [0.1, 0.5, 0.9])
    e = support_error(T, T)
    assert (e.mean, e.max) == (0.0, 0.0)
    assert e.unmatched_true == e.unmatched_est == 0


def test_support_error_single_perturbed_pair(rng):
    xi = random_unit_vectors(rng, 1)[0]
    e1, _ = tangent_basis(xi)
    e = support_error(Support("sphere", xi[None]), Support("sphere", exp_map(xi, 1e-3 * e1)[None]))
    assert e.mean == pytest.approx(1e-3) and e.max == pytest.approx(1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_support_error_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    a, b = random_unit_vectors(rng, 4), random_unit_vectors(rng, 4)
    M = pairwise_distances("sphere", a, b)
    best = min(itertools.permutations(range(4)), key=lambda p: sum(M[i, p[i]] for i in range(4)))
    d = [M[i, best[i]] for i in range(4)]
    e = support_error(Support("sphere", a), Support("sphere", b))
    assert e.mean == pytest.approx(np.mean(d)) and e.max == pytest.approx(np.max(d))


def test_support_error_counts_unmatched():
    e = support_error(Support("torus", [0.1, 0.5]), Support("torus", [0.1]))
    assert e.unmatched_true == 1 and e.unmatched_est == 0 and e.mean == 0.0
    e = support_error(Support("torus", [0.1]), Support.empty("torus"))
    assert math.isnan(e.mean) and e.unmatched_true == 1


def test_support_error_gate_refuses_far_pairs():
    truth = Support("torus", [0.1, 0.5])
    est = Support("torus", [0.1001, 0.8])
    assert support_error(truth, est).max == pytest.approx(0.3)
    e = support_error(truth, est, gate=0.05)
    assert e.max == pytest.approx(1e-4) and e.unmatched_true == 1 and e.unmatched_est == 1


def test_support_error_manifold_mismatch():
    with pytest.raises(ValueError):
        support_error(Support("torus", [0.1]), Support("interval", [0.1]))


@settings(max_examples=30)
@given(st.lists(st.floats(0, 0.999), min_size=1, max_size=5, unique=True), st.randoms())
def test_support_error_permutation_invariant(pts, rnd):
    shuffled = list(pts)
    rnd.shuffle(shuffled)
    a = support_error(Support("torus", pts), Support("torus", shuffled))
    assert a.max == pytest.approx(0.0, abs=1e-15)


# end to end


def test_recover_torus_off_grid():
    x = random_train("torus", 20, 2.5, 4, seed=11)
    r = recover(forward(x, 20), truth=x)
    assert r.error.mean <= 1e-3 and r.error.unmatched_true == 0 and r.error.unmatched_est == 0
    assert not r.flags


def test_recover_sphere_n5():
    T = random_separated_support("sphere", 5, 2 * math.pi, 10, seed=0)
    x = SpikeTrain(T, 10 * np.random.default_rng(1).standard_normal(len(T)))
    r = recover(forward(x, 5), truth=x)
    assert r.error.mean <= 1e-3 and r.error.max <= 5e-3


@pytest.mark.parametrize("manifold", ["torus", "interval", "sphere"])
def test_recover_zero_measurements(manifold):
    y = MeasurementSet(manifold, 4, np.zeros(measurement_dim(manifold, 4)))
    r = recover(y)
    assert len(r.estimate) == 0 and r.flags == []


def test_recover_noisy_torus():
    x = random_train("torus", 20, 2.5, 4, seed=12)
    y = add_noise(forward(x, 20), 0.01, seed=1)
    r = recover(y, RecoveryConfig(noise_sd=0.01), truth=x)
    assert r.error.unmatched_true == 0 and r.error.unmatched_est == 0
    assert r.error.max <= 1e-2 / 20


def test_recovery_result_serialises():
    x = random_train("interval", 20, 5 * math.pi, 3, seed=1)
    r = recover(forward(x, 20), truth=x)
    d = json.loads(r.to_json())
    assert d["estimate"]["manifold"] == "interval" and len(d["estimate"]["points"]) == 3
    rows = r.to_csv(truth=x).strip().splitlines()
    assert rows[0].startswith("true_point") and len(rows) == 4
