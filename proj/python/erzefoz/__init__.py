"""Er:YSO hyperfine spectra, ZEFOZ refinement and magnetic noise estimates."""

from ._core import (
    ErzefozError,
    analytic_er_fluctuation,
    anisotropy_map,
    dataset_version,
    frozen_core,
    noise_mc,
    reference_optimum,
    refine,
    sensitivity,
    spectrum,
    transition_frequency,
    zero_field_map,
)

__all__ = [
    "ErzefozError",
    "analytic_er_fluctuation",
    "anisotropy_map",
    "dataset_version",
    "frozen_core",
    "noise_mc",
    "reference_optimum",
    "refine",
    "sensitivity",
    "spectrum",
    "transition_frequency",
    "zero_field_map",
]
