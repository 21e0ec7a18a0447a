"""Lossless postselected metrology for quasi-pure mixed states."""

from .errors import QpsError
from .linalg import eig_hermitian, span_projector, sqrt_psd
from .postselect import (
    build_povm,
    lossless_povm,
    postselection_report,
    saturation_threshold,
    validate_povm,
)
from .qfi import (
    ensemble_decomposition,
    qfi,
    qfi_quasipure,
    sld_general,
    sld_quasipure,
    state_qfi,
)
from .quasipure import criteria_report, is_approximately_quasipure, is_quasipure
from .state import ParametricState, density_at, derivative_at, spectral_at, tangent_projector

__version__ = "0.1.0"

__all__ = [
    "ParametricState",
    "QpsError",
    "build_povm",
    "criteria_report",
    "density_at",
    "derivative_at",
    "eig_hermitian",
    "ensemble_decomposition",
    "is_approximately_quasipure",
    "is_quasipure",
    "lossless_povm",
    "postselection_report",
    "qfi",
    "qfi_quasipure",
    "saturation_threshold",
    "sld_general",
    "sld_quasipure",
    "span_projector",
    "spectral_at",
    "sqrt_psd",
    "state_qfi",
    "tangent_projector",
    "validate_povm",
]
