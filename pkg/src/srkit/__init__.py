"""Sparse spike recovery by total-variation minimisation.

Low-resolution measurements of a signed spike train on the torus, the
interval or the sphere are inverted by a grid l1 program followed by
dual-peak detection and least-squares refinement.  Dual certificates can
be built and verified, and pulse streams on the real line are
deconvolved with the same machinery.
"""
from .certificate import (
    admissibility_check,
    build_certificate,
    nonneg_certificate_torus,
    sop_certificate,
    verify_certificate,
)
from .manifold import Support, min_separation, pairwise_distances, random_separated_support
from .refine import RecoveryConfig, RecoveryResult, detect_support, fit_amplitudes, recover, support_error
from .signal import MeasurementSet, PulseSamples, SpikeTrain, add_noise, forward, sop_forward
from .solver import SolverConfig, build_dictionary, solve, solve_bp, solve_bpdn
from .sop import build_pulse_dictionary, recover_pulses

__all__ = [
    "MeasurementSet",
    "PulseSamples",
    "RecoveryConfig",
    "RecoveryResult",
    "SolverConfig",
    "SpikeTrain",
    "Support",
    "add_noise",
    "admissibility_check",
    "build_certificate",
    "build_dictionary",
    "build_pulse_dictionary",
    "detect_support",
    "fit_amplitudes",
    "forward",
    "min_separation",
    "nonneg_certificate_torus",
    "pairwise_distances",
    "random_separated_support",
    "recover",
    "recover_pulses",
    "solve",
    "solve_bp",
    "solve_bpdn",
    "sop_certificate",
    "sop_forward",
    "support_error",
    "verify_certificate",
]
