"""Grid-discretised TV (l1) minimisation.

The continuous problem ``min ||x||_TV  s.t.  A x = y`` restricted to a fixed
grid of candidate locations is basis pursuit

    min ||x||_1  s.t.  A x = y                (equality mode)
    min ||x||_1  s.t.  ||A x - y||_2 <= delta  (noise-ball mode)

optionally with ``x >= 0``.  Two solvers are provided:

``homotopy`` (default)
    The l1 homotopy (LASSO path followed down to ``lambda -> 0``, or until
    the residual reaches ``delta``).  An exact active-set method; it
    terminates with a primal-dual pair whose gap is at rounding level.
``pdhg``
    The Chambolle-Pock first-order primal-dual iteration with residual
    balancing of the step sizes and an active-set finishing step.

Complex measurement spaces are mapped isometrically onto a real space by
stacking the real and imaginary parts of the independent coefficients
(a real measure has conjugate-symmetric coefficients).  Every solve
returns the dual vector ``c`` with ``max |A^* c| <= 1`` on the grid; the
dual polynomial is ``A^* c``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import manifold as mf
from .certificate import nonneg_certificate_value
from .harmonics import sh_degrees
from .signal import MeasurementSet, atoms, measurement_dim

log = logging.getLogger(__name__)

METHODS = ("homotopy", "pdhg")


class DictionaryError(ValueError):
    pass


def default_grid_size(manifold: str, N: int) -> int:
    if manifold == "torus":
        return max(4096, 64 * N)
    if manifold == "interval":
        return max(2048, 64 * N)
    return max(4000, 40 * (N + 1) ** 2)


def _real_isometry(manifold: str, N: int) -> np.ndarray | None:
    """Rows map stacked ``[Re; Im]`` coefficients onto the conjugate-symmetric subspace.

    The rows are orthonormal and isometric on coefficient vectors of real
    measures.  ``None`` for the (already real) interval.
    """
    if manifold == "interval":
        return None
    dim = measurement_dim(manifold, N)
    if manifold == "torus":
        k = np.arange(-N, N + 1)
        partner = N - k  # index of -k
        sign = np.ones(dim)
    else:
        _, kk = sh_degrees(N)
        partner = np.arange(dim) - 2 * kk  # n^2 + n - k
        sign = (-1.0) ** np.abs(kk)
        k = kk
    rows = []
    r2 = 1.0 / math.sqrt(2.0)
    for i in range(dim):
        if k[i] == 0:
            row = np.zeros(2 * dim)
            row[i] = 1.0
            rows.append(row)
        elif k[i] > 0:
            p = partner[i]
            re = np.zeros(2 * dim)
            re[i], re[p] = r2, r2 * sign[i]
            im = np.zeros(2 * dim)
            im[dim + i], im[dim + p] = r2, -r2 * sign[i]
            rows.extend([re, im])
    return np.array(rows)


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Linear map from grid weights to measurement coefficients.

    ``matrix`` holds the atoms (one column per grid point, complex on the
    torus and the sphere); ``real_matrix`` is the equivalent real operator
    the solvers work with.
    """

    manifold: str
    N: int
    grid: np.ndarray
    matrix: np.ndarray
    real_matrix: np.ndarray
    isometry: np.ndarray | None = field(default=None, repr=False)

    @property
    def G(self) -> int:
        return len(self.grid)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.matrix)

    def stack(self, coeffs) -> np.ndarray:
        coeffs = np.asarray(coeffs)
        if self.is_complex:
            return np.concatenate([coeffs.real, coeffs.imag])
        return np.asarray(coeffs, dtype=float)

    def unstack(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.is_complex:
            m = len(v) // 2
            return v[:m] + 1j * v[m:]
        return v

    def to_real(self, coeffs) -> tuple[np.ndarray, float]:
        """Real coordinates of ``coeffs`` and the norm of the part no real measure can explain."""
        v = self.stack(coeffs)
        if self.isometry is None:
            return v, 0.0
        yr = self.isometry @ v
        off = v - self.isometry.T @ yr
        return yr, float(np.linalg.norm(off))

    def dual_from_real(self, c) -> np.ndarray:
        """Coefficient-space dual vector whose adjoint equals ``real_matrix.T @ c``."""
        c = np.asarray(c, dtype=float)
        if self.isometry is None:
            return c
        return self.unstack(self.isometry.T @ c)

    def apply(self, w) -> np.ndarray:
        """Coefficients of the grid measure with weights ``w``."""
        return self.matrix @ np.asarray(w, dtype=float)

    def adjoint(self, c) -> np.ndarray:
        """``Re(A^H c)``, the adjoint for the inner product ``Re <u, v>``."""
        c = np.asarray(c)
        if self.is_complex:
            return self.matrix.real.T @ c.real + self.matrix.imag.T @ c.imag
        return self.matrix.T @ c


def build_dictionary(manifold: str, N: int, grid=None) -> Dictionary:
    """Dictionary on ``grid`` (an int size, an explicit point array, or ``None`` for the default)."""
    mf._check_manifold(manifold)
    if grid is None:
        grid = default_grid_size(manifold, N)
    if np.isscalar(grid):
        G = int(grid)
        if G < measurement_dim(manifold, N):
            raise DictionaryError(f"grid of {G} points is smaller than the measurement dimension")
        pts = mf.uniform_grid(manifold, G)
    else:
        pts = mf.canonical_points(manifold, grid)
        if len(pts) < measurement_dim(manifold, N):
            raise DictionaryError("grid is smaller than the measurement dimension")
    Phi = atoms(manifold, N, pts)
    T = _real_isometry(manifold, N)
    if T is None:
        real = np.array(Phi, dtype=float)
    else:
        real = T @ np.vstack([Phi.real, Phi.imag])
    for arr in (pts, Phi, real) + (() if T is None else (T,)):
        arr.setflags(write=False)
    return Dictionary(manifold, N, pts, Phi, np.ascontiguousarray(real), T)


def operator_norm(D, tol: float = 1e-4, max_iters: int = 5000, seed: int = 0) -> float:
    """Spectral norm of the real operator by power iteration on ``A^T A``."""
    A = D.real_matrix if isinstance(D, Dictionary) else np.asarray(D, dtype=float)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = A.T @ (A @ v)
        lam_new = float(np.linalg.norm(w))
        if lam_new == 0.0:
            return 0.0
        v = w / lam_new
        done = abs(lam_new - lam) <= 0.01 * tol * lam_new
        lam = lam_new
        if done:
            break
    return math.sqrt(lam)


@dataclass
class SolverConfig:
    """Solver settings.  ``delta`` is the noise radius used by :func:`solve`."""

    method: str = "homotopy"
    max_iters: int = 50_000
    tol: float = 1e-9
    tau: float | None = None
    sigma: float | None = None
    nonneg: bool = False
    delta: float = 0.0
    feas_tol: float | None = None
    check_every: int = 25
    finish_every: int = 100
    log_every: int = 500

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if (self.tau is None) != (self.sigma is None):
            raise ValueError("set both tau and sigma, or neither")


@dataclass
class SolverResult:
    weights: np.ndarray
    dual: np.ndarray
    gap: float
    rel_gap: float
    primal: float
    dual_objective: float
    iterations: int
    feasibility: float
    dual_feasibility: float
    converged: bool
    method: str = "homotopy"
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        idx = np.flatnonzero(np.abs(self.weights) > 1e-10)
        dual = self.dual
        dual_out = (
            [[float(z.real), float(z.imag)] for z in dual] if np.iscomplexobj(dual) else [float(v) for v in dual]
        )
        return {
            "method": self.method,
            "grid_size": int(len(self.weights)),
            "support": {"indices": idx.tolist(), "weights": self.weights[idx].tolist()},
            "dual": dual_out,
            "gap": self.gap,
            "rel_gap": self.rel_gap,
            "primal": self.primal,
            "dual_objective": self.dual_objective,
            "iterations": self.iterations,
            "feasibility": self.feasibility,
            "dual_feasibility": self.dual_feasibility,
            "converged": self.converged,
        }


class _Problem:
    """Real-space problem data and the primal/dual objective evaluations."""

    def __init__(self, A: np.ndarray, y: np.ndarray, delta: float, nonneg: bool):
        self.A = A
        self.y = y
        self.delta = delta
        self.nonneg = nonneg
        self.ynorm = float(np.linalg.norm(y))
        self._pinv = None

    @property
    def pinv(self):
        if self._pinv is None:
            self._pinv = np.linalg.pinv(self.A)
        return self._pinv

    def dual_violation(self, c) -> float:
        q = self.A.T @ c
        return float(q.max(initial=0.0)) if self.nonneg else float(np.abs(q).max(initial=0.0))

    def scaled_dual(self, c):
        """Scale ``c`` into the dual feasible set; return it with its objective."""
        cf = c / max(1.0, self.dual_violation(c))
        return cf, float(cf @ self.y) - self.delta * float(np.linalg.norm(cf))

    def feasible_primal_value(self, x) -> float:
        """``||x'||_1`` for the smallest correction ``x'`` of ``x`` meeting the data constraint."""
        r = self.y - self.A @ x
        rn = float(np.linalg.norm(r))
        if rn > self.delta:
            if self.delta > 0:
                r = r * (1.0 - self.delta / rn)
            x = x + self.pinv @ r
        if self.nonneg and np.any(x < 0):
            # the correction may push zero weights below zero by rounding only
            if np.min(x) < -1e-12 * (1.0 + float(np.abs(x).max())):
                return math.inf
            x = np.maximum(x, 0.0)
        return float(np.abs(x).sum())

    def bounds(self, x, c) -> tuple[float, float]:
        return self.feasible_primal_value(x), self.scaled_dual(c)[1]


# ---------------------------------------------------------------------------
# homotopy


def _homotopy(prob: _Problem, cfg: SolverConfig):
    """Follow the LASSO path ``min lam ||x||_1 + ||Ax - y||^2 / 2`` down from ``lam_max``.

    Returns ``(x, c, steps, history)`` where ``c`` is the limiting dual vector.
    """
    A, y, delta = prob.A, prob.y, prob.delta
    m, G = A.shape
    x = np.zeros(G)
    r = y.copy()
    corr = A.T @ r
    j = int(np.argmax(corr)) if prob.nonneg else int(np.argmax(np.abs(corr)))
    lam = float(corr[j]) if prob.nonneg else float(abs(corr[j]))
    history = []
    if lam <= 0.0:
        # no positive correlation: nonneg problem infeasible unless y = 0
        return x, np.zeros(m), 0, history
    lam0 = lam
    active = [j]
    signs = [1.0 if corr[j] > 0 else -1.0]
    just_left = -1
    u = np.zeros(m)
    for step in range(1, cfg.max_iters + 1):
        S = np.array(active)
        s = np.array(signs)
        AS = A[:, S]
        Q, R = np.linalg.qr(AS)
        v = np.linalg.solve(R.T, s)
        d = np.linalg.solve(R, v)
        # from the factors: forming AS @ d would square the conditioning
        u = Q @ v
        a = A.T @ u
        blocked = np.zeros(G, dtype=bool)
        blocked[S] = True
        if just_left >= 0:
            blocked[just_left] = True
        tiny = 1e-14 * lam
        with np.errstate(divide="ignore", invalid="ignore"):
            g_up = (lam - corr) / (1.0 - a)
            g_dn = (lam + corr) / (1.0 + a)
            # a weight moving against its sign leaves when it reaches zero, possibly at once
            g_out = np.where(s * d < 0, np.maximum(-x[S] / d, 0.0), np.inf)
        g_up[blocked | ~(g_up > tiny)] = np.inf
        g_dn[blocked | ~(g_dn > tiny)] = np.inf
        if prob.nonneg:
            g_dn[:] = np.inf
        if len(S) >= m:
            # full rank: nothing can enter without breaking the active set
            g_up[:] = np.inf
            g_dn[:] = np.inf

        gam, event, k = lam, "end", -1
        # when y lies in the active span every entry step ties with lam at the path end
        end_tie = lam - 1e-12 * lam0
        for kind, arr in (("up", g_up), ("dn", g_dn), ("out", g_out)):
            i = int(np.argmin(arr))
            if arr[i] < min(gam, end_tie):
                gam, event, k = float(arr[i]), kind, i
        if delta > 0:
            # residual r - g u reaches the noise ball
            aa, bb, cc = u @ u, -2.0 * (r @ u), r @ r - delta * delta
            disc = bb * bb - 4.0 * aa * cc
            if aa > 0 and disc >= 0:
                g_ball = (-bb - math.sqrt(disc)) / (2.0 * aa)
                if 0.0 <= g_ball <= gam:
                    gam, event = g_ball, "ball"

        x[S] += gam * d
        lam -= gam
        r = y - A @ x
        corr = A.T @ r
        if step % cfg.log_every == 0:
            c_now = r / lam if lam > 0 else u
            history.append((step,) + prob.bounds(x, c_now))
        if event == "end":
            return x, u, step, history
        if event == "ball":
            return x, r / lam, step, history
        just_left = -1
        if event == "out":
            jj = active.pop(k)
            signs.pop(k)
            x[jj] = 0.0
            just_left = jj
        else:
            active.append(k)
            signs.append(1.0 if event == "up" else -1.0)
    log.warning("homotopy stopped after %d steps", cfg.max_iters)
    return x, (r / lam if lam > 0 else u), cfg.max_iters, history


# ---------------------------------------------------------------------------
# Chambolle-Pock


def _finish(prob: _Problem, x: np.ndarray, c: np.ndarray, feas_tol: float, dual_hint=None):
    """Exact solve on the support identified by ``x``; ``None`` if it is not usable.

    ``dual_hint(S)`` may supply further candidate dual vectors for the
    support indices ``S`` of a basis pursuit problem.
    """
    A, y = prob.A, prob.y
    xmax = float(np.abs(x).max(initial=0.0))
    if xmax == 0.0:
        return None
    # every candidate support must fit exactly and carry a certified dual
    for rel in (1e-2, 1e-3, 1e-4, 1e-6, 3e-2, 1e-1):
        S = np.flatnonzero(np.abs(x) > rel * xmax)
        if len(S) == 0 or len(S) > A.shape[0]:
            continue
        AS = A[:, S]
        s = np.sign(x[S])
        Q, R = np.linalg.qr(AS)
        diag = np.abs(np.diag(R))
        if diag.min() <= 1e-10 * diag.max():
            continue
        z_ls = np.linalg.solve(R, Q.T @ y)
        r_ls = y - AS @ z_ls
        rn = float(np.linalg.norm(r_ls))
        Ginv_s = np.linalg.solve(R, np.linalg.solve(R.T, s))
        if prob.delta == 0.0:
            if rn > feas_tol:
                continue
            z = z_ls
            # the corrected iterate first, then the minimum-norm interpolating dual
            duals = [c + Q @ np.linalg.solve(R.T, s - AS.T @ c), Q @ np.linalg.solve(R.T, s)]
            if dual_hint is not None:
                duals += dual_hint(S)
        else:
            u = AS @ Ginv_s
            un = float(np.linalg.norm(u))
            if rn >= prob.delta or un == 0.0:
                continue
            lam = math.sqrt(prob.delta**2 - rn**2) / un
            z = z_ls - lam * Ginv_s
            duals = [(r_ls + lam * u) / lam]
        if np.any(np.sign(z) != s):
            continue
        for cn in duals:
            if prob.dual_violation(cn) <= 1.0 + 1e-9:
                xn = np.zeros_like(x)
                xn[S] = z
                return xn, cn
    return None


def _pdhg(prob: _Problem, cfg: SolverConfig, feas_tol: float):
    A, yv, delta = prob.A, prob.y, prob.delta
    m, G = A.shape
    x = np.zeros(G)
    c = np.zeros(m)  # saddle variable; the dual vector is -c
    history = []
    L = operator_norm(A)
    if cfg.tau is not None:
        tau, sig = cfg.tau, cfg.sigma
        if tau * sig * L * L > 1.0 + 1e-12:
            raise ValueError("step sizes violate tau * sigma * ||A||^2 <= 1")
        adaptive = False
    else:
        ratio = max(prob.ynorm / L, 1e-3)
        tau, sig = ratio / L, 1.0 / (ratio * L)
        adaptive = True

    for it in range(1, cfg.max_iters + 1):
        v = x - tau * (A.T @ c)
        if cfg.nonneg:
            x_new = np.maximum(v - tau, 0.0)
        else:
            x_new = np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)
        w = c + sig * (A @ (2.0 * x_new - x))
        if delta == 0.0:
            c_new = w - sig * yv
        else:
            p = w / sig - yv
            pn = np.linalg.norm(p)
            c_new = w - sig * (yv + (p if pn <= delta else p * (delta / pn)))

        if adaptive and it % cfg.check_every == 0:
            # residual balancing; tau * sigma stays fixed
            pres = np.linalg.norm((x - x_new) / tau - A.T @ (c - c_new))
            dres = np.linalg.norm((c - c_new) / sig - A @ (x - x_new))
            if pres > 10 * dres:
                tau, sig = tau * 1.5, sig / 1.5
            elif dres > 10 * pres:
                tau, sig = tau / 1.5, sig * 1.5
        x, c = x_new, c_new

        if it % cfg.log_every == 0:
            history.append((it,) + prob.bounds(x, -c))
        if it % cfg.finish_every == 0:
            cand = _finish(prob, x, -c, feas_tol)
            if cand is not None:
                p, d = prob.bounds(*cand)
                if abs(p - d) <= cfg.tol * max(1.0, abs(p)):
                    return cand[0], cand[1], it, history
            p, d = prob.bounds(x, -c)
            if abs(p - d) <= cfg.tol * max(1.0, abs(p)):
                return x, -c, it, history
    log.warning("pdhg stopped after %d iterations", cfg.max_iters)
    return x, -c, cfg.max_iters, history


# ---------------------------------------------------------------------------


def _solve(D: Dictionary, y: MeasurementSet, cfg: SolverConfig, delta: float) -> SolverResult:
    if y.manifold != D.manifold or y.N != D.N:
        raise DictionaryError("measurements do not match the dictionary")
    A = D.real_matrix
    yv, off = D.to_real(y.coefficients)
    if delta > 0:
        if off > delta:
            raise ValueError("noise radius is smaller than the non-physical part of the data")
        delta_eff = math.sqrt(delta * delta - off * off)
    else:
        delta_eff = 0.0
    prob = _Problem(A, yv, delta_eff, cfg.nonneg)
    hint = _nonneg_torus_dual(D) if cfg.nonneg and D.manifold == "torus" else None
    x, cf, its, history, stats = _run(prob, cfg, hint)
    stats.pop("dual")
    dual = D.dual_from_real(cf)
    if delta > 0 and off > 0 and delta_eff > 0:
        # component along the non-physical data part that completes the coefficient-space dual
        yfull = D.stack(y.coefficients)
        e = yfull - (D.isometry.T @ yv)
        beta = off * float(np.linalg.norm(cf)) / delta_eff
        dual = dual + D.unstack(beta * e / off)
    return SolverResult(weights=x, dual=dual, iterations=its, method=cfg.method, history=history, **stats)


def _nonneg_torus_dual(D: Dictionary):
    """Candidate duals from the closed-form non-negative certificate.

    On clustered supports the minimum-norm interpolating dual overshoots
    one between the spikes, while the product certificate stays below one
    whenever the support has at most ``N`` points.
    """

    def hint(S):
        if len(S) > D.N:
            return []
        q = nonneg_certificate_value(mf.Support("torus", D.grid[S]), D.grid)
        return [np.linalg.lstsq(D.real_matrix.T, q, rcond=None)[0]]

    return hint


def solve_real(A: np.ndarray, y: np.ndarray, cfg: SolverConfig | None = None) -> SolverResult:
    """Grid l1 problem for an explicit real matrix; ``cfg.delta`` selects the noise ball."""
    cfg = cfg or SolverConfig()
    A = np.asarray(A, dtype=float)
    yv = np.asarray(y, dtype=float).reshape(-1)
    if A.shape[0] != len(yv):
        raise DictionaryError("matrix rows and data length differ")
    prob = _Problem(A, yv, float(cfg.delta), cfg.nonneg)
    x, c, its, history, stats = _run(prob, cfg)
    return SolverResult(weights=x, dual=stats.pop("dual"), iterations=its, method=cfg.method, history=history, **stats)


def _run(prob: _Problem, cfg: SolverConfig, dual_hint=None):
    """Run the configured method and evaluate the certified gap."""
    A, yv, delta = prob.A, prob.y, prob.delta
    feas_tol = cfg.feas_tol if cfg.feas_tol is not None else 1e-8 * (1.0 + prob.ynorm)
    if prob.ynorm <= delta:
        x, c, its, history = np.zeros(A.shape[1]), np.zeros(A.shape[0]), 0, []
    elif cfg.method == "homotopy":
        x, c, its, history = _homotopy(prob, cfg)
    else:
        x, c, its, history = _pdhg(prob, cfg, feas_tol)
    if cfg.nonneg:
        x = np.maximum(x, 0.0)
    cf, dval = prob.scaled_dual(c)
    pval = prob.feasible_primal_value(x)
    gap = pval - dval
    rel = abs(gap) / max(1.0, abs(pval)) if math.isfinite(gap) else math.inf
    if rel > cfg.tol and cfg.method == "homotopy" and prob.ynorm > delta:
        # near-duplicate columns can spoil the path end; repair on the identified support
        fin = _finish(prob, x, c, feas_tol, dual_hint)
        if fin is not None:
            x, c = fin
            cf, dval = prob.scaled_dual(c)
            pval = prob.feasible_primal_value(x)
            gap = pval - dval
            rel = abs(gap) / max(1.0, abs(pval)) if math.isfinite(gap) else math.inf
    feas = max(float(np.linalg.norm(A @ x - yv)) - delta, 0.0)
    viol = prob.dual_violation(cf)
    converged = rel <= cfg.tol and feas <= feas_tol
    if not converged:
        log.warning("solve not converged: relative gap %.3e, infeasibility %.3e", rel, feas)
    stats = {
        "dual": cf,
        "gap": float(gap),
        "rel_gap": float(rel),
        "primal": pval,
        "dual_objective": dval,
        "feasibility": feas,
        "dual_feasibility": viol,
        "converged": bool(converged),
    }
    return x, cf, its, history, stats


def solve_bp(D: Dictionary, y: MeasurementSet, cfg: SolverConfig | None = None) -> SolverResult:
    """Grid basis pursuit ``min ||x||_1 s.t. A x = y``."""
    return _solve(D, y, cfg or SolverConfig(), 0.0)


def solve_bpdn(D: Dictionary, y: MeasurementSet, delta: float, cfg: SolverConfig | None = None) -> SolverResult:
    """Grid basis pursuit denoising ``min ||x||_1 s.t. ||A x - y||_2 <= delta``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return _solve(D, y, cfg or SolverConfig(), delta)


def solve(D: Dictionary, y: MeasurementSet, cfg: SolverConfig | None = None) -> SolverResult:
    """Dispatch on ``cfg.delta``: basis pursuit when zero, denoising otherwise."""
    cfg = cfg or SolverConfig()
    if cfg.delta > 0:
        return solve_bpdn(D, y, cfg.delta, cfg)
    return solve_bp(D, y, cfg)
