"""NLOS intrusion detection on OFDM/TDD channel state information.

Stages: synthetic CSI (:mod:`scene`), range-Doppler sensing (:mod:`sensing`),
track confirmation (:mod:`kf`, :mod:`phd`) and window-level ROC evaluation
(:mod:`evaluation`).
"""
from .core import SystemConfig, axis_map, build_tdd_mask
from .scene import Scatterer, Scene, synthesize_csi, generate_dataset
from .sensing import CfarConfig, Detector, Peak, SensingConfig, compute_periodogram
from .kf import KfConfig, KfTracker
from .phd import PhdConfig, PhdFilter
from .evaluation import ClutterConfig, WindowSpec, roc_sweep

__all__ = [
    "SystemConfig", "axis_map", "build_tdd_mask",
    "Scatterer", "Scene", "synthesize_csi", "generate_dataset",
    "CfarConfig", "Detector", "Peak", "SensingConfig", "compute_periodogram",
    "KfConfig", "KfTracker", "PhdConfig", "PhdFilter",
    "ClutterConfig", "WindowSpec", "roc_sweep",
]
__version__ = "0.1.0"
