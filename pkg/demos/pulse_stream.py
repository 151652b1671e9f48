"""Deconvolve a stream of pulses on the real line.

Run: python3 demos/pulse_stream.py
"""
import numpy as np

from srkit.certificate import admissibility_check
from srkit.signal import add_noise, real_line_train, sop_forward
from srkit.refine import RecoveryConfig
from srkit.sop import recover_pulses

# Gaussian and Cauchy pulses are admissible; the triangle is not smooth enough.
for kernel in ("gaussian", "cauchy", "triangle"):
    rep = admissibility_check(kernel)
    print(f"{kernel:9s} admissible={rep.passed} {'; '.join(rep.reasons)}")

# Three mixed-sign pulses four widths apart.
x = real_line_train([0.13, 4.13, 8.13], [1.5, -1.0, 2.0])
for kernel in ("gaussian", "cauchy"):
    y = sop_forward(x, kernel, 1.0)
    r = recover_pulses(y, truth=x)
    print(f"{kernel}: delays {np.round(r.estimate.points, 6)}, amplitudes {np.round(r.estimate.amplitudes, 6)}")

# With sample noise the error grows with the noise level.
y = sop_forward(x, "gaussian", 1.0)
for sd in (1e-3, 1e-2):
    r = recover_pulses(add_noise(y, sd, seed=1), cfg=RecoveryConfig(noise_sd=sd), truth=x)
    print(f"noise sd {sd}: max delay error {r.error.max:.1e}")
