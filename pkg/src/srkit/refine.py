"""Post-processing of a grid solve into an off-grid spike estimate.

The pipeline is ``solve -> dual_polynomial -> detect_support -> polish ->
fit_amplitudes``, followed by pruning of negligible amplitudes and an
optional joint least-squares adjustment of locations and amplitudes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.linalg import lstsq
from scipy.optimize import least_squares, linear_sum_assignment
from scipy.spatial import cKDTree

from .certificate import BandlimitedFunction
from .manifold import ManifoldError, Support, exp_map, fibonacci_sphere, pairwise_distances, tangent_bases
from .harmonics import normalized_legendre_all
from .signal import MeasurementSet, SpikeTrain, atoms, eval_lowres, noise_ball_radius
from .solver import Dictionary, SolverConfig, SolverResult, build_dictionary, solve

MAX_CONDITION = 1e12


def resolution(manifold: str, N: int) -> float:
    """Metric length of one resolution cell: ``1/N`` on the torus, ``2 pi / N`` otherwise."""
    return 1.0 / N if manifold == "torus" else 2 * math.pi / N


def merge_radius(manifold: str, N: int, factor: float = 0.1) -> float:
    return factor * resolution(manifold, N)


# ---------------------------------------------------------------------------
# dual polynomial and peak finding


def dual_polynomial(r: SolverResult, D: Dictionary) -> BandlimitedFunction:
    """The function ``A^* c`` for the solver's dual vector, as a bandlimited expansion."""
    return BandlimitedFunction(D.manifold, D.N, r.dual)


def _scan(manifold: str, N: int, n: int | None):
    if manifold == "torus":
        n = n or max(2**14, 256 * N)
        return np.arange(n) / n
    if manifold == "interval":
        n = n or max(2**14, 256 * N)
        return np.cos(np.pi * np.arange(n) / (n - 1))
    return fibonacci_sphere(n or max(20_000, 400 * (N + 1) ** 2))


def _local_maxima(manifold: str, X: np.ndarray, v: np.ndarray) -> np.ndarray:
    if manifold == "torus":
        return (v >= np.roll(v, 1)) & (v >= np.roll(v, -1))
    if manifold == "interval":
        # the scan is monotone in arccos; endpoints compare to one neighbour
        left = np.concatenate([[-np.inf], v[:-1]])
        right = np.concatenate([v[1:], [-np.inf]])
        return (v >= left) & (v >= right)
    _, nb = cKDTree(X).query(X, k=9)
    return np.all(v[:, None] >= v[nb[:, 1:]], axis=1)


def _dedupe(manifold: str, pts: np.ndarray, score: np.ndarray, radius: float) -> np.ndarray:
    """Indices of points kept after greedy merging, highest score first."""
    order = np.argsort(-score, kind="stable")
    keep: list[int] = []
    for i in order:
        if keep and pairwise_distances(manifold, pts[i], pts[keep]).min() <= radius:
            continue
        keep.append(i)
    return np.array(sorted(keep), dtype=int)


def detect_support(
    q: BandlimitedFunction,
    tau: float = 1e-4,
    radius: float | None = None,
    scan: int | None = None,
    coarse: float = 0.05,
) -> Support:
    """Peaks of ``|q|`` within ``tau`` of one.

    Local maxima of ``|q|`` on a dense scan that come within ``coarse`` of
    one are refined with :func:`polish`; a refined peak is kept when
    ``1 - min(|q|, 1) < tau``.  Values above one are rounding errors of a
    feasible dual and count as one.
    """
    manifold, N = q.manifold, q.N
    radius = merge_radius(manifold, N) if radius is None else radius
    X = _scan(manifold, N, scan)
    v = np.abs(q(X))
    cand = _local_maxima(manifold, X, v) & (v > 1.0 - max(coarse, tau))
    if not np.any(cand):
        return Support.empty(manifold)
    pts = X[cand]
    polished = polish(Support(manifold, _unique_rows(manifold, pts)), q)
    if len(polished) == 0:
        return polished
    peak = np.minimum(np.abs(q(polished.points)), 1.0)
    ok = 1.0 - peak < tau
    P, peak = polished.points[ok], peak[ok]
    if len(P) == 0:
        return Support.empty(manifold)
    return Support(manifold, P[_dedupe(manifold, P, peak, radius)])


def _unique_rows(manifold: str, pts: np.ndarray) -> np.ndarray:
    if manifold == "sphere":
        return np.unique(pts, axis=0)
    return np.unique(pts)


def polish(
    candidates: Support,
    q: BandlimitedFunction,
    max_steps: int = 50,
    step_tol: float = 1e-12,
    min_peak: float = 0.5,
    radius: float | None = None,
) -> Support:
    """Newton iteration for critical points of ``|q|^2`` started at each candidate.

    Steps are capped at a quarter resolution cell.  Candidates that do not
    converge within ``max_steps``, that end at a point which is not a local
    maximum of ``|q|``, or whose peak is below ``min_peak`` are dropped;
    survivors closer than ``radius`` are merged.
    """
    manifold, N = q.manifold, q.N
    if len(candidates) == 0:
        return candidates
    cap = 0.25 * resolution(manifold, N)
    if manifold == "sphere":
        x = np.array(candidates.points)
    elif manifold == "interval":
        x = np.arccos(np.clip(candidates.points, -1, 1))
    else:
        x = np.array(candidates.points)
    active = np.ones(len(x), dtype=bool)
    converged = np.zeros(len(x), dtype=bool)
    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        step_norm = _newton_step(manifold, q, x, idx, cap)
        done = step_norm < step_tol
        converged[idx[done]] = True
        active[idx[done]] = False
    pts = _to_points(manifold, x[converged])
    if len(pts) == 0:
        return Support.empty(manifold)
    val, g, H = _local_derivs(manifold, q, pts)
    sign = np.sign(val)
    if manifold == "sphere":
        is_max = np.linalg.eigvalsh(sign[:, None, None] * H)[:, -1] < 0
    else:
        is_max = sign * H < 0
    ok = (np.abs(val) >= min_peak) & is_max
    pts, val = pts[ok], val[ok]
    if len(pts) == 0:
        return Support.empty(manifold)
    radius = merge_radius(manifold, N) if radius is None else radius
    keep = _dedupe(manifold, pts, np.abs(val), radius)
    return Support(manifold, pts[keep])


def _to_points(manifold, x):
    if manifold == "interval":
        return np.cos(x)
    if manifold == "torus":
        return np.mod(x, 1.0)
    return x


def _local_derivs(manifold, q, pts):
    """Value, gradient and Hessian in the Newton coordinate (arccos on the interval)."""
    val, g, H = q.derivatives(pts)
    if manifold == "interval":
        sin = np.sqrt(np.clip(1 - pts * pts, 0, None))
        g, H = -sin * g, sin * sin * H - pts * g
    return val, g, H


def _newton_step(manifold, q, x, idx, cap) -> np.ndarray:
    pts = _to_points(manifold, x[idx])
    _, g, H = _local_derivs(manifold, q, pts)
    if manifold != "sphere":
        with np.errstate(divide="ignore", invalid="ignore"):
            step = -g / H
        step = np.where(np.isfinite(step), np.clip(step, -cap, cap), 0.0)
        new = x[idx] + step
        if manifold == "interval":
            # reflect through the endpoints theta = 0 and theta = pi
            new = np.abs(new)
            new = np.where(new > np.pi, 2 * np.pi - new, new)
        x[idx] = new
        return np.abs(step)
    e1, e2 = tangent_bases(pts)
    norms = np.empty(len(idx))
    for j, i in enumerate(idx):
        try:
            v = -np.linalg.solve(H[j], g[j])
        except np.linalg.LinAlgError:
            v = np.zeros(2)
        r = float(np.linalg.norm(v))
        if r > cap:
            v *= cap / r
            r = cap
        x[i] = exp_map(x[i], v[0] * e1[j] + v[1] * e2[j])
        norms[j] = r
    return norms


# ---------------------------------------------------------------------------
# measurement models


def _stack(M: np.ndarray) -> np.ndarray:
    """Real and imaginary parts on top of each other (rows for matrices)."""
    return np.concatenate([M.real, M.imag]) if np.iscomplexobj(M) else np.asarray(M, dtype=float)


class SpikeModel:
    """Linear-in-amplitude observation model used by the fitting stages.

    Subclasses provide the real design matrix of unit spikes, a local
    parametrisation of locations by offsets (``dim`` per spike) with its
    derivative, the metric and a resolution length.
    """

    manifold: str
    dim: int = 1
    resolution: float = 1.0

    def __init__(self, data: np.ndarray):
        self.data = _stack(np.asarray(data))

    def design(self, points) -> np.ndarray:
        raise NotImplementedError

    def support(self, points) -> Support:
        return Support(self.manifold, points)

    def empty(self) -> Support:
        return Support.empty(self.manifold)

    def distances(self, a, b) -> np.ndarray:
        return pairwise_distances(self.manifold, a, b)

    def offset(self, P0: np.ndarray, off: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def offset_jacobian(self, P0: np.ndarray, off: np.ndarray) -> list:
        """Per offset coordinate, the derivative of each spike's design column."""
        raise NotImplementedError


class SpectralModel(SpikeModel):
    """Low-resolution coefficients on the torus, the interval or the sphere."""

    def __init__(self, y: MeasurementSet):
        super().__init__(y.coefficients)
        self.manifold, self.N = y.manifold, y.N
        self.dim = 2 if self.manifold == "sphere" else 1
        self.resolution = resolution(self.manifold, self.N)
        self._frame = None

    def design(self, points) -> np.ndarray:
        return _stack(atoms(self.manifold, self.N, points))

    def offset(self, P0, off):
        if self.manifold == "torus":
            return np.mod(P0 + off[:, 0], 1.0)
        if self.manifold == "interval":
            return np.cos(np.arccos(np.clip(P0, -1, 1)) + off[:, 0])
        if self._frame is None or self._frame[0] is not P0:
            self._frame = (P0, *tangent_bases(P0))
        return _sphere_offsets(*self._frame, off)

    def offset_jacobian(self, P0, off):
        pts = self.offset(P0, off)
        if self.manifold == "torus":
            k = np.arange(-self.N, self.N + 1)
            return [_stack(-2j * np.pi * k[:, None] * atoms("torus", self.N, pts))]
        if self.manifold == "interval":
            sin = np.sin(np.arccos(np.clip(P0, -1, 1)) + off[:, 0])
            return [-sin * normalized_legendre_all(self.N, pts, 1)]
        h = 1e-6
        out = []
        for l in range(2):
            dz = np.zeros_like(off)
            dz[:, l] = h
            out.append((self.design(self.offset(P0, off + dz)) - self.design(self.offset(P0, off - dz))) / (2 * h))
        return out


def _sphere_offsets(P0, e1, e2, off):
    """Vectorised exponential map from ``P0`` along tangent offsets ``off``."""
    v = off[:, :1] * e1 + off[:, 1:] * e2
    r = np.linalg.norm(v, axis=1)[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(r > 0, v / r, 0.0)
    p = np.cos(r) * P0 + np.sin(r) * u
    return p / np.linalg.norm(p, axis=1)[:, None]


# ---------------------------------------------------------------------------
# amplitudes and errors


@dataclass
class AmplitudeFit:
    train: SpikeTrain
    residual: float
    condition: float
    flagged: bool


def _fit(model: SpikeModel, support: Support) -> AmplitudeFit:
    b = model.data
    if len(support) == 0:
        return AmplitudeFit(SpikeTrain(support, np.zeros(0)), float(np.linalg.norm(b)), 1.0, False)
    A = model.design(support.points)
    if len(support) > A.shape[0]:
        raise ValueError("more support points than real measurements")
    c, _, rank, sv = lstsq(A, b, lapack_driver="gelsd")
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    resid = float(np.linalg.norm(A @ c - b))
    return AmplitudeFit(SpikeTrain(support, c), resid, cond, bool(cond > MAX_CONDITION or rank < len(support)))


def fit_amplitudes(support: Support, y: MeasurementSet) -> AmplitudeFit:
    """Real amplitudes minimising ``||A_T c - y||_2``.

    Solved by an SVD-based least-squares routine, which returns the
    minimum-norm solution when ``A_T`` is rank deficient; a condition
    number above ``1e12`` flags the fit.
    """
    if support.manifold != y.manifold:
        raise ValueError("support and measurements live on different manifolds")
    return _fit(SpectralModel(y), support)


@dataclass
class SupportError:
    mean: float
    max: float
    distances: list
    matches: list
    unmatched_true: int
    unmatched_est: int

    def to_dict(self) -> dict:
        return asdict(self)


def support_error(T_true: Support, T_est: Support, gate: float | None = None) -> SupportError:
    """Optimal one-to-one matching of two supports by total metric distance.

    Matched pairs give ``mean`` and ``max``; extra points on either side are
    counted as unmatched.  With ``gate`` only pairs at distance ``<= gate``
    may match: the matching first maximises the number of such pairs, then
    minimises their total distance.  With no matched pair both statistics
    are ``0`` if both supports are empty and ``nan`` otherwise.
    """
    if T_true.manifold != T_est.manifold:
        raise ValueError(f"cannot compare {T_true.manifold} and {T_est.manifold} supports")
    nt, ne = len(T_true), len(T_est)
    if nt == 0 or ne == 0:
        stat = 0.0 if nt == ne else math.nan
        return SupportError(stat, stat, [], [], nt, ne)
    if T_true.manifold == "real_line":
        Dm = np.abs(np.subtract.outer(T_true.points, T_est.points))
    else:
        Dm = pairwise_distances(T_true.manifold, T_true.points, T_est.points)
    cost = Dm
    if gate is not None:
        # any admissible pair outweighs the total distance of all others
        big = 1.0 + float(np.sum(Dm[Dm <= gate]))
        cost = np.where(Dm <= gate, Dm, big)
    rows, cols = linear_sum_assignment(cost)
    if gate is not None:
        ok = Dm[rows, cols] <= gate
        rows, cols = rows[ok], cols[ok]
    if len(rows) == 0:
        return SupportError(math.nan, math.nan, [], [], nt, ne)
    d = Dm[rows, cols]
    return SupportError(
        float(d.mean()),
        float(d.max()),
        d.tolist(),
        [[int(r), int(c)] for r, c in zip(rows, cols)],
        nt - len(rows),
        ne - len(rows),
    )


# ---------------------------------------------------------------------------
# joint location/amplitude adjustment


def _slide(model: SpikeModel, train: SpikeTrain, radius: float, max_nfev: int = 200, passes: int = 3):
    """Nonlinear least squares over locations and amplitudes, started at ``train``.

    Locations are parametrised by offsets from the current start; a pass
    that still lowers the residual by half restarts from its end point.
    Returns the slid train, its residual norm and a mask of spikes that
    moved farther than ``radius`` from where they started.
    """
    s, dim = len(train), model.dim
    start = np.asarray(train.points)
    b = model.data

    def one_pass(P0, c0):
        def split(z):
            return z[: dim * s].reshape(s, dim), z[dim * s :]

        def resid(z):
            off, c = split(z)
            return model.design(model.offset(P0, off)) @ c - b

        def jac(z):
            off, c = split(z)
            J = np.empty((len(b), (dim + 1) * s))
            J[:, dim * s :] = model.design(model.offset(P0, off))
            for l, dA in enumerate(model.offset_jacobian(P0, off)):
                J[:, l : dim * s : dim] = dA * c
            return J

        z0 = np.concatenate([np.zeros(dim * s), c0])
        # Levenberg-Marquardt copes with the rank deficiency of vanishing spikes
        res = least_squares(resid, z0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
        off, c = split(res.x)
        return model.offset(P0, off), c, float(np.linalg.norm(res.fun))

    P, c = start, np.asarray(train.amplitudes, dtype=float)
    prev = float(np.linalg.norm(model.design(P) @ c - b))
    for _ in range(passes):
        P, c, r = one_pass(P, c)
        if not (0 < r < 0.5 * prev):
            break
        prev = r
    moved = np.diag(model.distances(start, P))
    return SpikeTrain(model.support(P), c), r, moved > radius


# end-to-end


@dataclass
class RecoveryConfig:
    """Settings of :func:`recover`.

    ``noise_sd`` is the noise level per real measurement coordinate; the
    grid problem uses the noise ball of radius ``delta`` (derived from
    ``noise_sd`` when left unset) and basis pursuit when it is zero.
    ``mass_gate`` discards detected peaks whose nearby grid weight is below
    ``mass_gate`` times the largest such weight; a degenerate grid dual can
    reach modulus one far from any spike.  Fitted spikes with
    ``|c| < prune * max |c|`` or below ``noise_floor`` amplitude standard
    deviations are dropped.  ``slide`` enables the joint least-squares
    adjustment of locations and amplitudes.  ``explore`` bounds the number
    of extra candidates taken from residual correlation on the scan.
    """

    grid: object = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    noise_sd: float = 0.0
    delta: float | None = None
    tau: float = 1e-4
    merge_factor: float = 0.1
    mass_gate: float = 1e-3
    prune: float = 1e-6
    noise_floor: float = 4.0
    slide: bool = True
    scan: int | None = None
    explore: int = 5

    def resolved_delta(self, manifold: str, N: int) -> float:
        if self.delta is not None:
            return float(self.delta)
        return noise_ball_radius(manifold, N, self.noise_sd) if self.noise_sd > 0 else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(self.grid, np.ndarray):
            d["grid"] = f"array[{len(self.grid)}]"
        return d


@dataclass
class RecoveryResult:
    estimate: SpikeTrain
    peak_values: list
    residual: float
    condition: float
    flags: list
    solver: dict
    candidates: int
    localization: list | None = None
    error: SupportError | None = None
    config: dict | None = None

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate.to_dict(),
            "peak_values": self.peak_values,
            "residual": self.residual,
            "condition": self.condition,
            "flags": self.flags,
            "solver": self.solver,
            "candidates": self.candidates,
            "localization": self.localization,
            "error": None if self.error is None else self.error.to_dict(),
            "config": self.config,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self, truth: SpikeTrain | None = None) -> str:
        """Rows of ``(true point, true amplitude, estimated point, estimated amplitude, error)``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true_point", "true_amplitude", "est_point", "est_amplitude", "error"])
        est = self.estimate
        fmt = lambda p: " ".join(repr(float(v)) for v in np.atleast_1d(p))  # noqa: E731
        if truth is None or self.error is None:
            for p, c in zip(est.points, est.amplitudes):
                w.writerow(["", "", fmt(p), repr(float(c)), ""])
            return buf.getvalue()
        matched_est = set()
        for (i, j), d in zip(self.error.matches, self.error.distances):
            matched_est.add(j)
            w.writerow([fmt(truth.points[i]), repr(float(truth.amplitudes[i])), fmt(est.points[j]),
                        repr(float(est.amplitudes[j])), repr(d)])
        matched_true = {i for i, _ in self.error.matches}
        for i in range(len(truth)):
            if i not in matched_true:
                w.writerow([fmt(truth.points[i]), repr(float(truth.amplitudes[i])), "", "", ""])
        for j in range(len(est)):
            if j not in matched_est:
                w.writerow(["", "", fmt(est.points[j]), repr(float(est.amplitudes[j])), ""])
        return buf.getvalue()


def amplitude_noise(manifold: str, N: int, points, noise_sd: float) -> np.ndarray:
    """Standard deviation of a single-spike amplitude estimate.

    Noise of standard deviation ``noise_sd`` per real coordinate, divided
    by the norm of the spike's measurement vector.
    """
    pts = np.asarray(points)
    if noise_sd <= 0 or len(pts) == 0:
        return np.zeros(len(pts))
    return noise_sd / np.linalg.norm(_stack(atoms(manifold, N, pts)), axis=0)


def _amplitude_noise(model: SpikeModel, points, noise_sd: float) -> np.ndarray:
    pts = np.asarray(points)
    if noise_sd <= 0 or len(pts) == 0:
        return np.zeros(len(pts))
    return noise_sd / np.linalg.norm(model.design(pts), axis=0)


def _min_separation(model: SpikeModel, points) -> float:
    if len(points) < 2:
        return math.inf
    d = model.distances(points, points)
    return float(d[np.triu_indices(len(points), 1)].min())


def _as_model(y) -> SpikeModel:
    return y if isinstance(y, SpikeModel) else SpectralModel(y)


def prune_and_fit(support: Support, y, prune: float, noise_sd: float = 0.0, noise_floor: float = 4.0) -> AmplitudeFit:
    """Least-squares fit with backward elimination of negligible spikes.

    A spike is negligible when ``|c| < prune * max |c|`` or when ``|c|`` is
    below ``noise_floor`` amplitude standard deviations.  The weakest spike
    relative to its threshold is removed and the fit repeated until none
    is negligible.  ``y`` is a :class:`MeasurementSet` or a
    :class:`SpikeModel`.
    """
    model = _as_model(y)
    fit = _fit(model, support)
    while len(fit.train):
        pts = fit.train.points
        a = np.abs(fit.train.amplitudes)
        thr = np.maximum(prune * a.max(), noise_floor * _amplitude_noise(model, pts, noise_sd))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(thr > 0, a / thr, np.inf)
        worst = int(np.argmin(ratio))
        if ratio[worst] >= 1.0:
            break
        fit = _fit(model, model.support(np.delete(pts, worst, axis=0)))
    return fit


def grid_mass_gate(D: Dictionary, weights: np.ndarray, support: Support, gate: float) -> Support:
    """Keep peaks carrying at least ``gate`` of the largest local grid weight.

    Each grid point within a quarter resolution cell of a peak contributes
    ``|w|`` to its nearest peak.
    """
    if len(support) == 0 or gate <= 0:
        return support
    d = pairwise_distances(D.manifold, D.grid, support.points)
    near = d.argmin(axis=1)
    close = d[np.arange(len(near)), near] <= 0.25 * resolution(D.manifold, D.N)
    mass = np.bincount(near[close], weights=np.abs(weights[close]), minlength=len(support))
    if mass.max() <= 0:
        return support
    return Support(D.manifold, support.points[mass >= gate * mass.max()])


def slide_fit(fit: AmplitudeFit, y, merge: float) -> AmplitudeFit | None:
    """Joint least-squares adjustment of a fit, or ``None`` when it breaks down.

    The adjustment is rejected when a spike leaves its half-cell trust
    region, when two spikes come within ``merge`` of each other, or when
    the amplitude fit at the new locations is ill-conditioned.
    """
    model = _as_model(y)
    if len(fit.train) == 0:
        return fit
    try:
        slid, resid, strayed = _slide(model, fit.train, 0.5 * model.resolution)
    except (ManifoldError, ValueError):
        return None
    if np.any(strayed) or _min_separation(model, slid.points) <= merge:
        return None
    check = _fit(model, slid.support)
    if check.flagged or check.condition > 1e8:
        return None
    if resid > fit.residual:
        return fit
    return AmplitudeFit(slid, resid, check.condition, False)


def select_and_slide(
    pool: Support,
    y,
    noise_sd: float = 0.0,
    prune: float = 1e-6,
    noise_floor: float = 4.0,
    merge: float | None = None,
    slide: bool = True,
    rtol: float = 1e-8,
    scan=None,
    explore: int = 0,
) -> AmplitudeFit:
    """Forward selection of spikes from a candidate pool.

    The candidate most correlated with the current residual is added, the
    amplitudes refitted and, with ``slide``, all locations and amplitudes
    adjusted jointly.  An addition is kept only if it lowers the residual,
    the adjustment stays well-posed and the new amplitude clears
    ``noise_floor`` standard deviations.  Selection stops once the residual
    reaches the expected noise norm (``rtol * ||y||`` without noise).

    Up to ``explore`` further candidates are drawn from the ``scan``
    points as maxima of the normalised residual correlation, whenever the
    best scan point correlates more than twice as well as the best open
    pool candidate; this finds spikes too weak to show in the grid dual.
    ``y`` is a :class:`MeasurementSet` or a :class:`SpikeModel`.
    """
    model = _as_model(y)
    merge = 0.1 * model.resolution if merge is None else merge
    b = model.data
    target = max(rtol * float(np.linalg.norm(b)), noise_sd * math.sqrt(len(b)))
    fit = _fit(model, model.empty())
    cands = [p for p in pool.points]
    P = model.design(pool.points) if len(pool) else np.zeros((len(b), 0))
    norms = np.linalg.norm(P, axis=0)
    open_ = np.ones(len(cands), dtype=bool)
    if scan is not None and explore > 0:
        S = model.design(scan)
        snorm = np.linalg.norm(S, axis=0)

    def residual():
        r = b.copy()
        if len(fit.train):
            r -= model.design(fit.train.points) @ fit.train.amplitudes
        return r

    while fit.residual > target:
        r = residual()
        corr = np.abs(P.T @ r) / norms
        corr[~open_] = -1.0
        j = int(np.argmax(corr)) if len(corr) else -1
        best = corr[j] if j >= 0 else -1.0
        if scan is not None and explore > 0:
            scorr = np.abs(S.T @ r) / snorm
            k = int(np.argmax(scorr))
            # a pool candidate explaining much less than the best scan point is likely spurious
            if scorr[k] > 2.0 * best:
                explore -= 1
                cands.append(np.asarray(scan)[k])
                P = np.column_stack([P, S[:, k]])
                norms = np.append(norms, snorm[k])
                open_ = np.append(open_, True)
                j = len(cands) - 1
        if j < 0 or not open_[j]:
            break
        open_[j] = False
        cand = np.asarray(cands[j])[None]
        if len(fit.train) and model.distances(cand, fit.train.points).min() <= merge:
            continue
        pts = cand if not len(fit.train) else np.concatenate([fit.train.points, cand])
        trial = _fit(model, model.support(pts))
        if trial.flagged or trial.residual >= fit.residual:
            continue
        if slide:
            trial = slide_fit(trial, model, merge)
            if trial is None:
                continue
        new_amp = abs(trial.train.amplitudes[-1])
        if new_amp < noise_floor * _amplitude_noise(model, trial.train.points[-1:], noise_sd)[0]:
            continue
        fit = trial
    pruned = prune_and_fit(fit.train.support, model, prune, noise_sd, noise_floor)
    if len(pruned.train) < len(fit.train):
        fit = pruned
        if slide:
            fit = slide_fit(fit, model, merge) or fit
    return fit


def recover(
    y: MeasurementSet,
    cfg: RecoveryConfig | None = None,
    truth: SpikeTrain | None = None,
    dictionary: Dictionary | None = None,
) -> RecoveryResult:
    """Estimate a spike train from low-resolution measurements.

    With a positive noise radius the grid problem is the noise-ball
    program, otherwise basis pursuit.  When ``truth`` is given the result carries
    per-spike localization errors and the matched support error.
    """
    cfg = cfg or RecoveryConfig()
    manifold, N = y.manifold, y.N
    flags: list[str] = []
    if not np.any(y.coefficients):
        est = SpikeTrain.empty(manifold)
        err = support_error(truth.support, est.support) if truth is not None else None
        return RecoveryResult(est, [], 0.0, 1.0, flags, {}, 0, [] if truth is not None else None, err, cfg.to_dict())

    D = dictionary if dictionary is not None else build_dictionary(manifold, N, cfg.grid)
    delta = cfg.resolved_delta(manifold, N)
    scfg = replace(cfg.solver, delta=delta)
    r = solve(D, y, scfg)
    if not r.converged:
        flags.append("solver_not_converged")
    q = dual_polynomial(r, D)
    radius = merge_radius(manifold, N, cfg.merge_factor)
    T = detect_support(q, cfg.tau, radius, cfg.scan)
    ncand = len(T)
    T = grid_mass_gate(D, r.weights, T, cfg.mass_gate)
    fit = select_and_slide(
        T, y, cfg.noise_sd, cfg.prune, cfg.noise_floor, radius, cfg.slide,
        scan=_scan(manifold, N, cfg.scan), explore=cfg.explore,
    )
    est, resid = fit.train, fit.residual
    if fit.flagged:
        flags.append("ill_conditioned_fit")
    peaks = np.abs(q(est.points)).tolist() if len(est) else []
    loc = err = None
    if truth is not None:
        err = support_error(truth.support, est.support)
        loc = err.distances
    return RecoveryResult(
        estimate=est,
        peak_values=peaks,
        residual=resid,
        condition=fit.condition,
        flags=flags,
        solver=_solver_summary(r),
        candidates=ncand,
        localization=loc,
        error=err,
        config=cfg.to_dict(),
    )


def _solver_summary(r: SolverResult) -> dict:
    return {
        "method": r.method,
        "iterations": r.iterations,
        "primal": r.primal,
        "dual_objective": r.dual_objective,
        "gap": r.gap,
        "rel_gap": r.rel_gap,
        "converged": r.converged,
    }


def display_samples(y: MeasurementSet, points) -> str:
    """CSV of the low-resolution projection on a display grid."""
    vals = eval_lowres(y, points)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 2:
        w.writerow(["x", "y", "z", "value"])
        for p, v in zip(pts, vals):
            w.writerow([*map(repr, map(float, p)), repr(float(v))])
    else:
        w.writerow(["t", "value"])
        for p, v in zip(pts, vals):
            w.writerow([repr(float(p)), repr(float(v))])
    return buf.getvalue()
