"""Simulator and analysis pipeline for an AWG-based entangled-pair source.

The package splits along the bench layout: `awg_optics` designs the
grating and its ports, `pair_source` models the photon-pair spectra,
`entangled_state` turns two source paths into fringe parameters,
`experiment_sim` runs the Monte Carlo coincidence experiment, `analysis`
fits the binned fringes and evaluates the CHSH quantity, and `config`
holds the paper-scale defaults everything starts from.  `awgsim.cli`
exposes the same flow as subcommands.
"""

from .errors import ValidationError
from .awg_optics import (
    AwgDesign,
    PassbandModel,
    PortAssignment,
    TransmissionSpectrum,
    channel_spacing,
    design_report,
    make_passband,
    plan_ports,
    port_transmission,
    spatial_dispersion,
    tolerance_propagation,
)
from .pair_source import (
    JointSpectralAmplitude,
    JointSpectralIntensity,
    PumpSpec,
    build_jsa_quasi_cw,
    build_jsi_pulsed,
    sfwm_channel_pair,
)
from .entangled_state import (
    PathState,
    ProjectionSetting,
    build_state,
    coincidence_probability,
    fringe_coefficients,
    fringe_model_parameters,
    state_from_spectra,
    visibility_from_spectra,
)
from .experiment_sim import (
    DetectorSpec,
    DriftModel,
    GateTally,
    LossBudget,
    RunRecords,
    accidental_probability,
    axis_bin_centers_rad,
    axis_bin_widths_rad,
    per_gate_probabilities,
    retrieve_phase,
    simulate_gates,
    simulate_run,
)
from .analysis import (
    ChshResult,
    CoincidenceMap,
    FitNonConvergedError,
    FringeFit,
    SliceFit,
    bell_violation,
    bin_records,
    chsh_scan,
    correlation_matrix,
    fit_fringe,
    make_synthetic_map,
    slice_fringe,
    subtracted_counts,
    visibility_exceeds_bell_threshold,
)
from .config import PRESET_NAMES, RunConfig, load_config, paper_preset, parse_config

__version__ = "0.1.0"

__all__ = [
    "ValidationError",
    "AwgDesign",
    "PassbandModel",
    "PortAssignment",
    "TransmissionSpectrum",
    "channel_spacing",
    "design_report",
    "make_passband",
    "plan_ports",
    "port_transmission",
    "spatial_dispersion",
    "tolerance_propagation",
    "JointSpectralAmplitude",
    "JointSpectralIntensity",
    "PumpSpec",
    "build_jsa_quasi_cw",
    "build_jsi_pulsed",
    "sfwm_channel_pair",
    "PathState",
    "ProjectionSetting",
    "build_state",
    "coincidence_probability",
    "fringe_coefficients",
    "fringe_model_parameters",
    "state_from_spectra",
    "visibility_from_spectra",
    "DetectorSpec",
    "DriftModel",
    "GateTally",
    "LossBudget",
    "RunRecords",
    "accidental_probability",
    "axis_bin_centers_rad",
    "axis_bin_widths_rad",
    "per_gate_probabilities",
    "retrieve_phase",
    "simulate_gates",
    "simulate_run",
    "ChshResult",
    "CoincidenceMap",
    "FitNonConvergedError",
    "FringeFit",
    "SliceFit",
    "bell_violation",
    "bin_records",
    "chsh_scan",
    "correlation_matrix",
    "fit_fringe",
    "make_synthetic_map",
    "slice_fringe",
    "subtracted_counts",
    "visibility_exceeds_bell_threshold",
    "PRESET_NAMES",
    "RunConfig",
    "load_config",
    "paper_preset",
    "parse_config",
    "__version__",
]
