"""Points, metrics and separation logic on the torus, the interval and the sphere.

Conventions
-----------
* ``"torus"``: scalar coordinate in ``[0, 1)`` (period one).
* ``"interval"``: scalar coordinate in ``[-1, 1]`` with the arccos metric.
* ``"sphere"``: unit vectors in R^3 with the geodesic metric.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
import numpy as np

MANIFOLDS = ("torus", "interval", "sphere")

#: diameter of each manifold in its own metric
DIAMETER = {"torus": 0.5, "interval": math.pi, "sphere": math.pi}

_POLE_TOL = 1e-6
MAX_REJECTIONS = 10_000


class ManifoldError(ValueError):
    """Raised on malformed points or on mixing points from different manifolds."""


def _check_manifold(manifold: str) -> None:
    if manifold not in MANIFOLDS:
        raise ManifoldError(f"unknown manifold {manifold!r}; expected one of {MANIFOLDS}")


def canonical_points(manifold: str, points) -> np.ndarray:
    """Return a float array of points reduced to the manifold's canonical form.

    Torus coordinates are wrapped into ``[0, 1)``, interval coordinates are
    checked against ``[-1, 1]`` and sphere vectors are normalised.
    """
    _check_manifold(manifold)
    if manifold == "sphere":
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        norms = np.linalg.norm(pts, axis=1)
        if np.any(norms == 0) or not np.all(np.isfinite(pts)):
            raise ManifoldError("sphere points must be finite and nonzero")
        return pts / norms[:, None]
    pts = np.asarray(points, dtype=float).reshape(-1)
    if not np.all(np.isfinite(pts)):
        raise ManifoldError("points must be finite")
    if manifold == "torus":
        pts = np.mod(pts, 1.0)
        # mod can round 1 - eps up to exactly 1.0
        pts[pts >= 1.0] = 0.0
        return pts
    if np.any(np.abs(pts) > 1.0 + 1e-12):
        raise ManifoldError("interval points must lie in [-1, 1]")
    return np.clip(pts, -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class Support:
    """An ordered set of distinct points on one manifold."""

    manifold: str
    points: np.ndarray

    def __post_init__(self):
        pts = canonical_points(self.manifold, self.points)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if len(pts) > 1:
            d = pairwise_distances(self.manifold, pts)
            iu = np.triu_indices(len(pts), 1)
            if np.any(d[iu] <= 0.0):
                raise ManifoldError("support contains duplicate points")

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Support)
            and self.manifold == other.manifold
            and self.points.shape == other.points.shape
            and bool(np.all(self.points == other.points))
        )

    @classmethod
    def empty(cls, manifold: str) -> "Support":
        shape = (0, 3) if manifold == "sphere" else (0,)
        return cls(manifold, np.zeros(shape))

    def to_json(self) -> str:
        return json.dumps(self.points.tolist())

    @classmethod
    def from_json(cls, manifold: str, text: str) -> "Support":
        data = json.loads(text)
        if manifold == "sphere":
            return cls(manifold, np.asarray(data, dtype=float).reshape(-1, 3))
        return cls(manifold, np.asarray(data, dtype=float).reshape(-1))


def _distance_arrays(manifold: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if manifold == "torus":
        d = np.abs(a - b) % 1.0
        return np.minimum(d, 1.0 - d)
    if manifold == "interval":
        return np.abs(np.arccos(np.clip(a, -1, 1)) - np.arccos(np.clip(b, -1, 1)))
    dots = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    # arccos loses half the digits near 0; use atan2 of |cross| and dot
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    return np.arctan2(cross, dots)


def distance(manifold: str, a, b) -> float:
    """Metric distance between two points of ``manifold``.

    >>> distance("torus", 0.1, 0.9)  # doctest: +ELLIPSIS
    0.2...
    """
    _check_manifold(manifold)
    pa = canonical_points(manifold, a)
    pb = canonical_points(manifold, b)
    if len(pa) != 1 or len(pb) != 1:
        raise ManifoldError("distance expects exactly one point per argument")
    return float(_distance_arrays(manifold, pa[0], pb[0]))


def point_distance(a, b) -> float:
    """Distance between two tagged points ``(manifold, value)``."""
    (ma, va), (mb, vb) = a, b
    if ma != mb:
        raise ManifoldError(f"cannot measure distance between {ma} and {mb} points")
    return distance(ma, va, vb)


def pairwise_distances(manifold: str, a, b=None) -> np.ndarray:
    """Matrix of distances between two point arrays (``b`` defaults to ``a``)."""
    a = canonical_points(manifold, a)
    b = a if b is None else canonical_points(manifold, b)
    if manifold == "sphere":
        return _distance_arrays(manifold, a[:, None, :], b[None, :, :])
    return _distance_arrays(manifold, a[:, None], b[None, :])


def min_separation(support: Support) -> float:
    """Smallest pairwise distance, ``inf`` for fewer than two points."""
    if len(support) < 2:
        return math.inf
    d = pairwise_distances(support.manifold, support.points)
    return float(d[np.triu_indices(len(support), 1)].min())


def check_separation(support: Support, N: int, nu: float) -> bool:
    """True iff the minimal separation is at least ``nu / N``."""
    if N < 1 or nu <= 0:
        raise ManifoldError("need N >= 1 and nu > 0")
    return min_separation(support) >= nu / N


def _propose(manifold: str, rng: np.random.Generator) -> np.ndarray:
    if manifold == "torus":
        return np.array([rng.random()])
    if manifold == "interval":
        # uniform in the arccos coordinate, matching the metric
        return np.array([math.cos(math.pi * rng.random())])
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def random_separated_support(
    manifold: str,
    N: int,
    nu: float,
    target_count: int,
    seed: int | None = None,
    max_rejections: int = MAX_REJECTIONS,
) -> Support:
    """Draw uniform points one at a time, keeping those that respect ``nu / N``.

    Sampling stops when ``target_count`` points are accepted or after
    ``max_rejections`` consecutive rejected proposals, so the returned
    support may be smaller than requested.
    """
    _check_manifold(manifold)
    sep = nu / N
    if sep >= DIAMETER[manifold]:
        raise ManifoldError(f"separation {sep} exceeds the {manifold} diameter")
    rng = np.random.default_rng(seed)
    accepted: list[np.ndarray] = []
    rejections = 0
    while len(accepted) < target_count and rejections < max_rejections:
        p = _propose(manifold, rng)
        if accepted:
            pts = np.array(accepted) if manifold == "sphere" else np.concatenate(accepted)
            d = pairwise_distances(manifold, p, pts)
            if d.min() < sep:
                rejections += 1
                continue
        accepted.append(p)
        rejections = 0
    if not accepted:
        return Support.empty(manifold)
    pts = np.array(accepted) if manifold == "sphere" else np.concatenate(accepted)
    return Support(manifold, pts)


def tangent_basis(xi) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal tangent frame ``(e1, e2)`` at the unit vector ``xi``.

    ``e1`` is the normalised ``z x xi`` and ``e2 = xi x e1``; within 1e-6
    of a pole the frame falls back to ``e1 = x``, ``e2 = xi x x``.
    """
    xi = np.asarray(xi, dtype=float)
    xi = xi / np.linalg.norm(xi)
    e1 = np.cross([0.0, 0.0, 1.0], xi)
    n1 = np.linalg.norm(e1)
    if n1 < _POLE_TOL:
        e1 = np.array([1.0, 0.0, 0.0])
    else:
        e1 = e1 / n1
    e2 = np.cross(xi, e1)
    e2 = e2 / np.linalg.norm(e2)
    return e1, e2


def tangent_bases(xis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`tangent_basis` over an ``(n, 3)`` array."""
    xis = np.asarray(xis, dtype=float).reshape(-1, 3)
    e1 = np.cross(np.array([0.0, 0.0, 1.0]), xis)
    n1 = np.linalg.norm(e1, axis=1)
    polar = n1 < _POLE_TOL
    e1[polar] = [1.0, 0.0, 0.0]
    n1[polar] = 1.0
    e1 = e1 / n1[:, None]
    e2 = np.cross(xis, e1)
    e2 = e2 / np.linalg.norm(e2, axis=1)[:, None]
    return e1, e2


def exp_map(xi: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Move from ``xi`` along the geodesic with initial tangent ``v``."""
    r = np.linalg.norm(v)
    if r == 0.0:
        return np.array(xi, dtype=float)
    out = math.cos(r) * xi + math.sin(r) * (v / r)
    return out / np.linalg.norm(out)


def fibonacci_sphere(G: int) -> np.ndarray:
    """Fibonacci lattice of ``G`` nearly uniform unit vectors."""
    i = np.arange(G) + 0.5
    z = 1.0 - 2.0 * i / G
    golden = math.pi * (3.0 - math.sqrt(5.0))
    phi = golden * np.arange(G)
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def uniform_grid(manifold: str, G: int) -> np.ndarray:
    """Deterministic grid of ``G`` points covering the manifold.

    Torus: ``g / G``. Interval: ``cos`` of equispaced angles in ``[0, pi]``
    (endpoints included). Sphere: Fibonacci lattice.
    """
    _check_manifold(manifold)
    if manifold == "torus":
        return np.arange(G) / G
    if manifold == "interval":
        return np.cos(np.pi * np.arange(G) / (G - 1))
    return fibonacci_sphere(G)

