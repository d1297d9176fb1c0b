"""Dissociation-time-entanglement Bell test toolkit.

A two-particle matter-wave interferometry simulator: momentum
distributions from pulsed Feshbach dissociation, joint detection
probabilities through switched unbalanced interferometers, CHSH
analysis, and Monte Carlo event generation, with a CLI front end.
"""

from .scenario import (
    BelowThresholdError,
    Constants,
    CONSTANTS,
    InterferometerBlock,
    PulseSequence,
    Resonance,
    ScaledUnits,
    Scenario,
    Species,
    TimescaleSummary,
    TrapGuide,
    ValidationError,
    derive_scales,
    reference_scenario,
    scales_from_scenario,
)
from .dissociation import (
    FeshbachDistribution,
    GaussianMode,
    GaussianPair,
    StabilityReport,
    dissociation_probability,
    distribution_from_scenario,
    gaussian_approximation,
    phase_stability,
    phi_tau,
)
from .correlation import (
    CorrelationResult,
    DtePair,
    GaussianPairDistribution,
    InterferometerSetting,
    QuadratureError,
    correlate_closed_form,
    correlate_quadrature,
    fringe_phase,
    smatrix_amplitude,
)
from .bell import (
    BellOutcome,
    ChshSettings,
    FeasibilityReport,
    OptimizationResult,
    TSIRELSON_BOUND,
    chsh_value,
    closed_form_correlator,
    feasible,
    optimize_settings,
    periods_above_threshold,
    seed_settings,
    spin_reference_correlation,
    visibility,
)
# montecarlo.run stays on the submodule; a bare `run` is too generic here
from .montecarlo import (
    ChshEstimate,
    CountTable,
    InsufficientDataError,
    RunConfig,
    estimate_chsh,
    multi_dissociation_rate,
    pair_rng,
    sample_event,
)
from .cli import ConfigDocument, ConfigError, load_config

__version__ = "0.1.0"

__all__ = [
    "BellOutcome",
    "BelowThresholdError",
    "CONSTANTS",
    "ChshEstimate",
    "ChshSettings",
    "ConfigDocument",
    "ConfigError",
    "Constants",
    "CorrelationResult",
    "CountTable",
    "DtePair",
    "FeasibilityReport",
    "FeshbachDistribution",
    "GaussianMode",
    "GaussianPair",
    "GaussianPairDistribution",
    "InsufficientDataError",
    "InterferometerBlock",
    "InterferometerSetting",
    "OptimizationResult",
    "PulseSequence",
    "QuadratureError",
    "Resonance",
    "RunConfig",
    "ScaledUnits",
    "Scenario",
    "Species",
    "StabilityReport",
    "TSIRELSON_BOUND",
    "TimescaleSummary",
    "TrapGuide",
    "ValidationError",
    "chsh_value",
    "closed_form_correlator",
    "correlate_closed_form",
    "correlate_quadrature",
    "derive_scales",
    "dissociation_probability",
    "distribution_from_scenario",
    "estimate_chsh",
    "feasible",
    "fringe_phase",
    "gaussian_approximation",
    "load_config",
    "multi_dissociation_rate",
    "optimize_settings",
    "pair_rng",
    "periods_above_threshold",
    "phase_stability",
    "phi_tau",
    "reference_scenario",
    "sample_event",
    "scales_from_scenario",
    "seed_settings",
    "smatrix_amplitude",
    "spin_reference_correlation",
    "visibility",
]
