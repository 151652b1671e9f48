"""Stream-of-pulses deconvolution on the real line.

Samples ``y(t_i) = sum_m c_m K_sigma(t_i - s_m)`` are fitted on a fine grid
of candidate delays, and the grid solution is refined by the same
detect, select and slide stages used for spectral measurements.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .refine import (
    RecoveryConfig,
    RecoveryResult,
    SpikeModel,
    _solver_summary,
    select_and_slide,
    support_error,
)
from .signal import PulseKernel, PulseSamples, RealLineSupport, SpikeTrain, chi_radius, get_kernel
from .solver import SolverResult, solve_real

DEFAULT_DENSITY = 16
BOUNDARY_INSET = 5.0
# exact basis pursuit on a fine pulse grid is numerically singular
GRID_RELAX = 1e-3


@dataclass(frozen=True, eq=False)
class PulseDictionary:
    """Translated kernels ``K_sigma(t_i - s_j)`` sampled on a uniform grid.

    Rows follow ``sample_grid`` and columns follow ``locations``.
    """

    kernel: PulseKernel
    sigma: float
    locations: np.ndarray
    sample_grid: np.ndarray
    matrix: np.ndarray

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    def apply(self, w) -> np.ndarray:
        return self.matrix @ np.asarray(w, dtype=float)

    def adjoint(self, v) -> np.ndarray:
        return self.matrix.T @ np.asarray(v, dtype=float)


def _uniform(g: np.ndarray, what: str) -> None:
    if len(g) > 1:
        d = np.diff(g)
        if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9, atol=0):
            raise ValueError(f"{what} must be strictly increasing and uniform")


def default_locations(sample_grid, sigma: float, density: int = DEFAULT_DENSITY) -> np.ndarray:
    """Candidate delays at ``density`` per sigma, inset ``5 sigma`` from the sample ends."""
    g = np.asarray(sample_grid, dtype=float)
    lo, hi = g[0] + BOUNDARY_INSET * sigma, g[-1] - BOUNDARY_INSET * sigma
    if hi < lo:
        raise ValueError("sample grid is shorter than twice the boundary inset")
    n = int(math.ceil((hi - lo) * density / sigma)) + 1
    return np.linspace(lo, hi, n)


def build_pulse_dictionary(kernel, sigma: float, location_grid=None, sample_grid=None, density: int = DEFAULT_DENSITY) -> PulseDictionary:
    """Dictionary of unit pulses at ``location_grid`` observed on ``sample_grid``.

    Without ``location_grid`` the delays are spaced ``sigma / density``
    apart and inset ``5 sigma`` from both ends of the sample grid.

    Raises
    ------
    ValueError
        If either grid is not uniform or the locations extend beyond the
        sample grid.
    """
    K = get_kernel(kernel)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if sample_grid is None:
        raise ValueError("a sample grid is required")
    g = np.asarray(sample_grid, dtype=float).reshape(-1)
    _uniform(g, "sample grid")
    locs = default_locations(g, sigma, density) if location_grid is None else np.asarray(location_grid, dtype=float).reshape(-1)
    _uniform(locs, "location grid")
    if len(locs) == 0 or locs[0] < g[0] or locs[-1] > g[-1]:
        raise ValueError("sample grid is shorter than the location extent")
    A = K.scaled(np.subtract.outer(g, locs), sigma)
    for arr in (locs, g, A):
        arr.setflags(write=False)
    return PulseDictionary(K, float(sigma), locs, g, A)


class PulseModel(SpikeModel):
    """Pulse samples as a function of delays and amplitudes."""

    manifold = "real_line"
    dim = 1

    def __init__(self, y: PulseSamples, kernel: PulseKernel, sigma: float):
        super().__init__(y.values)
        self.kernel, self.sigma, self.grid = kernel, sigma, y.grid
        self.resolution = sigma

    def design(self, points) -> np.ndarray:
        return self.kernel.scaled(np.subtract.outer(self.grid, np.asarray(points, dtype=float).reshape(-1)), self.sigma)

    def support(self, points) -> RealLineSupport:
        return RealLineSupport(points)

    def empty(self) -> RealLineSupport:
        return RealLineSupport([])

    def distances(self, a, b) -> np.ndarray:
        return np.abs(np.subtract.outer(np.asarray(a, dtype=float).reshape(-1), np.asarray(b, dtype=float).reshape(-1)))

    def offset(self, P0, off):
        return P0 + off[:, 0]

    def offset_jacobian(self, P0, off):
        d = np.subtract.outer(self.grid, self.offset(P0, off))
        return [-self.kernel.scaled(d, self.sigma, 1)]


@dataclass(frozen=True)
class PulseDual:
    """Dual function ``q(t) = sum_i c_i K_sigma(t_i - t)`` of the sampled problem."""

    kernel: PulseKernel
    sigma: float
    grid: np.ndarray
    coefficients: np.ndarray

    def derivatives(self, t, order: int = 2) -> list:
        d = np.subtract.outer(self.grid, np.asarray(t, dtype=float).reshape(-1))
        return [(-1) ** k * self.kernel.scaled(d, self.sigma, k).T @ self.coefficients for k in range(order + 1)]

    def __call__(self, t) -> np.ndarray:
        return self.derivatives(t, 0)[0]


def pulse_dual(r: SolverResult, D: PulseDictionary) -> PulseDual:
    return PulseDual(D.kernel, D.sigma, D.sample_grid, np.asarray(r.dual, dtype=float))


def _polish(q: PulseDual, t: np.ndarray, lo: float, hi: float, step_cap: float, max_steps: int = 50) -> np.ndarray:
    """Newton ascent of ``|q|`` from ``t``; non-maxima come back as ``nan``."""
    t = t.astype(float).copy()
    for _ in range(max_steps):
        v, g, h = q.derivatives(t)
        sgn = np.sign(v)
        g, h = sgn * g, sgn * h
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(h < 0, -g / h, np.sign(g) * step_cap)
        step = np.clip(step, -step_cap, step_cap)
        t = np.clip(t + step, lo, hi)
        if np.max(np.abs(step), initial=0.0) < 1e-13:
            break
    v, g, h = q.derivatives(t)
    t[np.sign(v) * h >= 0] = np.nan
    return t


def detect_pulses(q: PulseDual, lo: float, hi: float, tau: float = 1e-4, radius: float | None = None, density: int = 64, coarse: float = 0.05, nonneg: bool = False) -> RealLineSupport:
    """Peaks of ``|q|`` (of ``q`` when ``nonneg``) within ``tau`` of one on ``[lo, hi]``."""
    radius = 0.1 * q.sigma if radius is None else radius
    n = int(math.ceil((hi - lo) * density / q.sigma)) + 1
    X = np.linspace(lo, hi, n)
    v = q(X) if nonneg else np.abs(q(X))
    left = np.concatenate([[-np.inf], v[:-1]])
    right = np.concatenate([v[1:], [-np.inf]])
    cand = X[(v >= left) & (v >= right) & (v > 1 - coarse)]
    if len(cand) == 0:
        return RealLineSupport([])
    t = _polish(q, cand, lo, hi, 0.25 * q.sigma)
    t = t[np.isfinite(t)]
    val = q(t) if nonneg else np.abs(q(t))
    keep = 1 - np.minimum(val, 1.0) < tau
    t, val = t[keep], val[keep]
    chosen: list[float] = []
    for i in np.argsort(-val):
        if all(abs(t[i] - c) > radius for c in chosen):
            chosen.append(float(t[i]))
    return RealLineSupport(sorted(chosen))


def _mass_gate(D: PulseDictionary, w: np.ndarray, T: RealLineSupport, gate: float) -> RealLineSupport:
    if len(T) == 0 or gate <= 0:
        return T
    d = np.abs(np.subtract.outer(D.locations, T.points))
    near = d.argmin(axis=1)
    close = d[np.arange(len(near)), near] <= 0.25 * D.sigma
    mass = np.bincount(near[close], weights=np.abs(w[close]), minlength=len(T))
    if mass.max() <= 0:
        return T
    return RealLineSupport(T.points[mass >= gate * mass.max()])


def recover_pulses(
    y: PulseSamples,
    kernel=None,
    sigma: float | None = None,
    cfg: RecoveryConfig | None = None,
    truth: SpikeTrain | None = None,
    dictionary: PulseDictionary | None = None,
    relax: float = GRID_RELAX,
) -> RecoveryResult:
    """Estimate delays and amplitudes of a pulse stream.

    ``kernel`` and ``sigma`` default to those recorded in ``y``.
    ``cfg.grid`` may hold candidate delays; otherwise they are spaced
    ``sigma / 16`` apart.  ``cfg.solver.nonneg`` restricts to non-negative
    amplitudes.  The noise radius defaults to the chi-square bound for
    ``len(y.values)`` samples of standard deviation ``cfg.noise_sd`` and
    is never below ``relax * ||y||``: the grid stage only seeds the
    refinement, which fits the samples exactly.
    """
    cfg = cfg or RecoveryConfig()
    K = get_kernel(kernel if kernel is not None else y.kernel)
    sigma = float(y.sigma if sigma is None else sigma)
    if K.name != y.kernel or not math.isclose(sigma, y.sigma):
        raise ValueError("kernel and sigma must match the samples")
    flags: list[str] = []
    est = RealLineSupport([])
    if not np.any(y.values):
        x = SpikeTrain(est, np.zeros(0))
        err = support_error(truth.support, est) if truth is not None else None
        return RecoveryResult(x, [], 0.0, 1.0, flags, {}, 0, None if err is None else err.distances, err, _config(cfg, K, sigma, relax))
    D = dictionary or build_pulse_dictionary(K, sigma, cfg.grid, y.grid)
    delta = cfg.delta if cfg.delta is not None else (chi_radius(len(y.values), cfg.noise_sd) if cfg.noise_sd > 0 else 0.0)
    delta = max(delta, relax * float(np.linalg.norm(y.values)))
    scfg = replace(cfg.solver, delta=float(delta))
    r = solve_real(D.matrix, y.values, scfg)
    if not r.converged:
        flags.append("solver_not_converged")
    q = pulse_dual(r, D)
    lo, hi = D.locations[0], D.locations[-1]
    radius = cfg.merge_factor * sigma
    T = detect_pulses(q, lo, hi, cfg.tau, radius, nonneg=scfg.nonneg)
    ncand = len(T)
    T = _mass_gate(D, r.weights, T, cfg.mass_gate)
    model = PulseModel(y, K, sigma)
    scan = np.linspace(lo, hi, int(math.ceil((hi - lo) * 64 / sigma)) + 1)
    fit = select_and_slide(
        T, model, cfg.noise_sd, cfg.prune, cfg.noise_floor, radius, cfg.slide, scan=scan, explore=cfg.explore
    )
    if fit.flagged:
        flags.append("ill_conditioned_fit")
    train = fit.train
    order = np.argsort(train.points)
    train = SpikeTrain(RealLineSupport(train.points[order]), train.amplitudes[order])
    peaks = np.abs(q(train.points)).tolist()
    err = support_error(truth.support, train.support) if truth is not None else None
    return RecoveryResult(
        estimate=train,
        peak_values=peaks,
        residual=fit.residual,
        condition=fit.condition,
        flags=flags,
        solver=_solver_summary(r),
        candidates=ncand,
        localization=None if err is None else err.distances,
        error=err,
        config=_config(cfg, K, sigma, relax),
    )


def _config(cfg: RecoveryConfig, K: PulseKernel, sigma: float, relax: float) -> dict:
    d = cfg.to_dict()
    d.update(kernel=K.name, sigma=sigma, relax=relax)
    return d
