"""Sampled-data state-feedback design for plants with quantized actuators."""
from .hybrid import (HybridArc, HybridState, LyapunovDesign, attractor_membership,
                     attractor_outer_radius, certify_arc, jump_map, lyapunov_value, simulate,
                     upsilon_bound, varpi)
from .plant import PlantSpec, build_closed_loop, psi, psi_kras, quantize, sector_check
from .synthesis import (CertificateVars, SynthesisResult, certify_gain, check_theorem1,
                        find_multipliers, initial_design, run_algorithm1, sigma_star)

__all__ = [
    "CertificateVars", "HybridArc", "HybridState", "LyapunovDesign", "PlantSpec",
    "SynthesisResult", "attractor_membership", "attractor_outer_radius", "build_closed_loop",
    "certify_arc", "certify_gain", "check_theorem1", "find_multipliers", "initial_design",
    "jump_map", "lyapunov_value", "psi", "psi_kras", "quantize", "run_algorithm1",
    "sector_check", "sigma_star", "simulate", "upsilon_bound", "varpi",
]
