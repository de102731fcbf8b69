"""Simulation and analysis toolkit for microsphere-assisted confocal imaging.

Submodules group by physical layer: ``optics`` (geometric image
relations), ``fdtd`` and ``mie`` (wave solves of the sphere focus),
``scan`` and ``peaks`` (synthetic confocal maps and resolution fits),
``photon`` (emission statistics), ``odmr`` (spin-resonance spectra),
and ``pipeline``/``cli`` for orchestration.  The names re-exported here
are the stable entry points.
"""

from .config import ScenarioConfig, default_config, parse_config
from .fdtd import FdtdConfig, build_scene, extract_focus, run_fdtd
from .odmr import MagneticField, OdmrModel, fit_odmr, nv_axes, odmr_spectrum, zeeman_splitting
from .optics import (
    EmitterGeometry,
    ImagingSystem,
    Microsphere,
    focal_length,
    magnification,
    magnification_at_plane,
    paraxial_focal_length,
    relative_index,
    virtual_image_distance,
)
from .peaks import abbe_limit, fit_gaussian_1d, resolution_factor, select_peak_count
from .photon import (
    EmitterEnsemble,
    EmitterSpec,
    fit_g2,
    g2_zero_analytic,
    hbt_correlate,
    simulate_stream,
)
from .pipeline import RunReport, run_pipeline
from .scan import DefectSite, ScanMode, psf_model, render_scan, sample_defects, snr

__version__ = "0.1.0"

__all__ = [
    "ScenarioConfig", "default_config", "parse_config",
    "FdtdConfig", "build_scene", "extract_focus", "run_fdtd",
    "MagneticField", "OdmrModel", "fit_odmr", "nv_axes", "odmr_spectrum",
    "zeeman_splitting",
    "EmitterGeometry", "ImagingSystem", "Microsphere", "focal_length",
    "magnification", "magnification_at_plane", "paraxial_focal_length",
    "relative_index", "virtual_image_distance",
    "abbe_limit", "fit_gaussian_1d", "resolution_factor", "select_peak_count",
    "EmitterEnsemble", "EmitterSpec", "fit_g2", "g2_zero_analytic",
    "hbt_correlate", "simulate_stream",
    "RunReport", "run_pipeline",
    "DefectSite", "ScanMode", "psf_model", "render_scan", "sample_defects", "snr",
    "__version__",
]
