"""Simulation and estimation toolkit for homodyne quantum state tomography."""
from .states import FockDensityMatrix, coherent_state, fock_state, thermal_state, physicalize
from .forward import NoiseParams, density_pdf, noisy_pdf, wigner
from .patterns import PatternTable, build_table, pattern
from .sampling import CalibDataset, TomographyDataset, sample_photocounter, sample_tomography
from .projection import PenaltyConfig, estimate_projection
from .mle import MleConfig, mle_fit, mle_select
from .photocounter import CalibConfig, calib_mle, calib_projection
from .metrics import hellinger_sq, kullback, l2_distance, risk_monte_carlo

__all__ = [
    "FockDensityMatrix", "coherent_state", "fock_state", "thermal_state", "physicalize",
    "NoiseParams", "density_pdf", "noisy_pdf", "wigner",
    "PatternTable", "build_table", "pattern",
    "CalibDataset", "TomographyDataset", "sample_photocounter", "sample_tomography",
    "PenaltyConfig", "estimate_projection",
    "MleConfig", "mle_fit", "mle_select",
    "CalibConfig", "calib_mle", "calib_projection",
    "hellinger_sq", "kullback", "l2_distance", "risk_monte_carlo",
]
