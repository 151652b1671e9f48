"""Dual certificates: the interpolating polynomials behind exact recovery.

Run: python3 demos/certificates.py
"""
import math

import numpy as np

from srkit.certificate import build_certificate, nonneg_certificate_torus, verify_certificate
from srkit.manifold import Support, random_separated_support

# A torus certificate interpolates random signs and stays below one elsewhere.
N = 64
T = random_separated_support("torus", N, 2.5, 16, seed=3)
u = np.random.default_rng(3).choice([-1.0, 1.0], len(T))
rep = verify_certificate(build_certificate(T, u, N), T, u)
print(f"torus N={N}, {len(T)} spikes: valid={rep.verdict}, off-support max |q| = {rep.off_support_max:.4f}")

# On the sphere the same idea uses a localized zonal kernel and two tangent derivatives.
N = 10
T = random_separated_support("sphere", N, 2 * math.pi, 10, seed=3)
u = np.random.default_rng(4).choice([-1.0, 1.0], len(T))
rep = verify_certificate(build_certificate(T, u, N), T, u)
print(f"sphere N={N}, {len(T)} spikes: valid={rep.verdict}, off-support max |q| = {rep.off_support_max:.4f}")

# Positive spikes need no separation: a product of raised cosines certifies any s <= N points.
T = Support("torus", [0.40, 0.41, 0.43, 0.44])
q = nonneg_certificate_torus(T, 16)
t = np.linspace(0, 1, 4097)
print(f"clustered positive support {T.points}: q = {q(T.points).round(12)} there, min q = {q(t).min():.3f}")
