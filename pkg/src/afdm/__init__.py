"""Link-level simulation of affine frequency division multiplexing (AFDM).

Chirp-domain transforms, doubly dispersive channels, pilot-based channel
estimation, detectors, multi-user allocation and a Monte Carlo harness.
"""

from .channel import (Ecm, NoiseSpec, add_awgn, apply_ddc, build_ecm, load_profile,
                      predict_support, random_profile, save_profile)
from .core import (AfdmParams, Constellation, DdPath, DdProfile, GridSpec, ValidationReport,
                   noise_variance, rng_stream, validate_params)
from .detection import BerStats, DetectorConfig, DetectorKind, detect
from .estimation import PilotConfig, ThresholdRule, estimate_paths_epa, nmse, reconstruct_ecm_epa_dr
from .multiaccess import AllocationPlan, Direction, UserSpec, allocate_afdma, compute_guard
from .transforms import DaftPlan, ShapingWindow, WindowKind, daft, idaft, receive, transmit

__version__ = "0.1.0"

__all__ = [
    "AfdmParams", "AllocationPlan", "BerStats", "Constellation", "DaftPlan", "DdPath", "DdProfile",
    "DetectorConfig", "DetectorKind", "Direction", "Ecm", "GridSpec", "NoiseSpec", "PilotConfig",
    "ShapingWindow", "ThresholdRule", "UserSpec", "ValidationReport", "WindowKind", "add_awgn",
    "allocate_afdma", "apply_ddc", "build_ecm", "compute_guard", "daft", "detect",
    "estimate_paths_epa", "idaft", "load_profile", "nmse", "noise_variance", "predict_support",
    "random_profile", "receive", "reconstruct_ecm_epa_dr", "rng_stream", "save_profile",
    "transmit", "validate_params",
]
