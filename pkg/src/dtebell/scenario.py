"""Experimental scenario description and derived dispersion scales.

Everything crossing the public API is SI.  Internally the oscillatory
integrals are evaluated in scenario-adapted units (momenta in units of
the relative-motion momentum, times in units of the interrogation time,
lengths in units of the reduced fringe wavelength); :class:`ScaledUnits`
performs the conversions and keeps hbar exactly 1 on the inside.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

__all__ = [
    "ValidationError",
    "BelowThresholdError",
    "Constants",
    "CONSTANTS",
    "Species",
    "TrapGuide",
    "Resonance",
    "PulseSequence",
    "InterferometerBlock",
    "Scenario",
    "TimescaleSummary",
    "ScaledUnits",
    "SINC_WIDTH_FACTOR",
    "derive_scales",
    "scales_from_scenario",
    "reference_scenario",
]


class ValidationError(ValueError):
    """Raised when a scenario or configuration value is out of contract."""


class BelowThresholdError(ValidationError):
    """Raised when the pulse fields do not reach the dissociation threshold."""


# Gaussian width factor for the main lobe of a squared-sinc momentum
# profile, amplitude-pinned least squares over the central lobe.
SINC_WIDTH_FACTOR = 1.196


@dataclass(frozen=True)
class Constants:
    """CODATA 2018 values, SI.  Frozen so results are bit-reproducible."""

    hbar: float = 1.0545718176461565e-34       # J s
    k_boltzmann: float = 1.380649e-23          # J/K (exact)
    bohr_magneton: float = 9.2740100783e-24    # J/T
    bohr_radius: float = 5.29177210903e-11     # m
    atomic_mass_unit: float = 1.66053906660e-27  # kg


CONSTANTS = Constants()


@dataclass(frozen=True)
class Species:
    """Atomic species forming the diatomic molecule.

    ``molecule_mass`` is exactly twice ``atom_mass``; binding-energy
    corrections are far below every tolerance used here.
    """

    name: str
    atom_mass: float  # kg

    def __post_init__(self) -> None:
        if not (self.atom_mass > 0.0 and math.isfinite(self.atom_mass)):
            raise ValidationError(f"atom_mass must be positive and finite, got {self.atom_mass}")

    @property
    def molecule_mass(self) -> float:
        return 2.0 * self.atom_mass


@dataclass(frozen=True)
class TrapGuide:
    """Harmonic trap holding the molecule plus the waveguide the atoms fly in.

    omega_trap: angular frequency of the molecule trap along the guide, rad/s.
    omega_guide: transverse angular frequency of the waveguide, rad/s.
    trap_depth: potential offset released per atom at dissociation, J.
    """

    omega_trap: float
    omega_guide: float
    trap_depth: float

    def __post_init__(self) -> None:
        for name in ("omega_trap", "omega_guide", "trap_depth"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValidationError(f"{name} must be positive and finite, got {value}")
        # The quasi-1D treatment assumes the trap is soft compared with the
        # transverse guide confinement.  Not fatal, but worth flagging.
        if self.omega_trap * 10.0 > self.omega_guide:
            warnings.warn(
                "omega_trap is not small compared with omega_guide; "
                "the longitudinal reduction is marginal",
                stacklevel=2,
            )


@dataclass(frozen=True)
class Resonance:
    """Magnetic Feshbach resonance parameters.

    width: resonance width, T.
    moment_difference: magnetic-moment difference between the bound and
        open channels, J/T.
    background_scattering_length: m.
    position: resonance field, T.
    """

    width: float
    moment_difference: float
    background_scattering_length: float
    position: float

    def __post_init__(self) -> None:
        for name in ("width", "moment_difference", "position"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValidationError(f"{name} must be positive and finite, got {value}")
        # scattering lengths are signed; only zero is meaningless
        a_bg = self.background_scattering_length
        if not (a_bg != 0.0 and math.isfinite(a_bg)):
            raise ValidationError(
                f"background_scattering_length must be nonzero and finite, got {a_bg}"
            )


@dataclass(frozen=True)
class PulseSequence:
    """Two identical square magnetic-field pulses.

    base_field: field between pulses, T.
    pulse_height: field increment during a pulse, T.
    pulse_duration: length of each pulse, s.
    pulse_separation: time between pulse centers (interrogation time), s.
    """

    base_field: float
    pulse_height: float
    pulse_duration: float
    pulse_separation: float

    def __post_init__(self) -> None:
        for name in ("base_field", "pulse_height", "pulse_duration", "pulse_separation"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValidationError(f"{name} must be positive and finite, got {value}")
        if self.pulse_separation <= self.pulse_duration:
            raise ValidationError(
                "pulse_separation must exceed pulse_duration, got "
                f"{self.pulse_separation} <= {self.pulse_duration}"
            )


@dataclass(frozen=True)
class InterferometerBlock:
    """Optional default interferometer geometry carried by a scenario."""

    ell1: float  # m
    ell2: float  # m
    theta1: float  # rad
    theta2: float  # rad
    mode: str = "Switched"

    def __post_init__(self) -> None:
        for name in ("theta1", "theta2"):
            value = getattr(self, name)
            if not (0.0 <= value <= math.pi / 2.0):
                raise ValidationError(f"{name} must lie in [0, pi/2], got {value}")
        for name in ("ell1", "ell2"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        if self.mode not in ("Switched", "BeamSplitter"):
            raise ValidationError(f"mode must be 'Switched' or 'BeamSplitter', got {self.mode!r}")


@dataclass(frozen=True)
class Scenario:
    """Complete physical input set for one experimental configuration."""

    species: Species
    trap_guide: TrapGuide
    resonance: Resonance
    pulses: PulseSequence
    interferometer: InterferometerBlock | None = None
    constants: Constants = field(default=CONSTANTS)


@dataclass(frozen=True)
class TimescaleSummary:
    """Kinematic and dispersion scales derived from a scenario.

    t_cm, t_rel: dispersion times of the centre-of-mass and relative
        wave packets, s.
    lambda_bar_rel: reduced fringe wavelength hbar/p0_rel, m.
    v_rel: relative velocity between the two atoms, m/s.
    sigma_p_cm, sigma_p_rel: momentum spreads, kg m/s.
    p0_rel: mean relative momentum, kg m/s.
    """

    t_cm: float
    t_rel: float
    lambda_bar_rel: float
    v_rel: float
    sigma_p_cm: float
    sigma_p_rel: float
    p0_rel: float


def _energy_bracket(scenario: Scenario) -> float:
    """Kinetic energy released into the relative motion, p0^2/m per atom pair."""
    c = scenario.constants
    mu = scenario.resonance.moment_difference
    detuning = (
        scenario.pulses.base_field
        + scenario.pulses.pulse_height
        - scenario.resonance.position
    )
    return (
        mu * detuning
        - 2.0 * scenario.trap_guide.trap_depth
        - c.hbar * scenario.trap_guide.omega_guide
    )


def _p0_from_fields(scenario: Scenario) -> float:
    bracket = _energy_bracket(scenario)
    if bracket <= 0.0:
        raise BelowThresholdError(
            "below-threshold pulse: field detuning does not overcome trap depth "
            f"and guide zero-point energy (energy bracket {bracket:.6e} J)"
        )
    return math.sqrt(scenario.species.atom_mass * bracket)


def _sigma_p_rel_two_pulse(scenario: Scenario, p0_rel: float) -> float:
    # Width of the Gaussian fitted to the squared-sinc main lobe produced
    # by two pulses separated by pulse_duration.
    c = scenario.constants
    m = scenario.species.atom_mass
    return SINC_WIDTH_FACTOR * m * c.hbar / (p0_rel * scenario.pulses.pulse_duration)


def _sigma_p_cm_ground_state(scenario: Scenario) -> float:
    # Momentum spread of the molecular (mass 2m) trap ground state.
    c = scenario.constants
    big_m = scenario.species.molecule_mass
    return math.sqrt(c.hbar * scenario.trap_guide.omega_trap * big_m / 2.0)


def derive_scales(
    species: Species,
    sigma_p_cm: float,
    sigma_p_rel: float,
    p0_rel: float,
    constants: Constants = CONSTANTS,
) -> TimescaleSummary:
    """Dispersion times and fringe scales from momentum-space widths.

    t_cm = 2 m hbar / sigma_p_cm^2 and t_rel = m hbar / (2 sigma_p_rel^2):
    the time for the respective coordinate-space width to grow by sqrt(2),
    written with the atom mass m (the centre of mass carries mass 2m, the
    relative coordinate the reduced mass m/2).
    """
    for name, value in (
        ("sigma_p_cm", sigma_p_cm),
        ("sigma_p_rel", sigma_p_rel),
        ("p0_rel", p0_rel),
    ):
        if not (value > 0.0 and math.isfinite(value)):
            raise ValidationError(f"{name} must be positive and finite, got {value}")
    m = species.atom_mass
    hbar = constants.hbar
    return TimescaleSummary(
        t_cm=2.0 * m * hbar / sigma_p_cm**2,
        t_rel=m * hbar / (2.0 * sigma_p_rel**2),
        lambda_bar_rel=hbar / p0_rel,
        v_rel=2.0 * p0_rel / m,
        sigma_p_cm=sigma_p_cm,
        sigma_p_rel=sigma_p_rel,
        p0_rel=p0_rel,
    )


def scales_from_scenario(scenario: Scenario) -> TimescaleSummary:
    """Scales for a scenario: threshold kinematics plus Gaussian-equivalent widths."""
    p0 = _p0_from_fields(scenario)
    return derive_scales(
        scenario.species,
        sigma_p_cm=_sigma_p_cm_ground_state(scenario),
        sigma_p_rel=_sigma_p_rel_two_pulse(scenario, p0),
        p0_rel=p0,
        constants=scenario.constants,
    )


# Unit kinds expressed as exponents of (momentum, time, length).
_UNIT_EXPONENTS = {
    "momentum": (1, 0, 0),
    "time": (0, 1, 0),
    "length": (0, 0, 1),
    "velocity": (0, -1, 1),
    "mass": (1, 1, -1),
    "energy": (1, -1, 1),
    "frequency": (0, -1, 0),
    "action": (1, 0, 1),
    "momentum_density_2d": (-2, 0, 0),
    "dimensionless": (0, 0, 0),
}


@dataclass(frozen=True)
class ScaledUnits:
    """Conversion between SI and scenario-adapted internal units.

    The base units are a momentum scale and a time scale; the length unit
    is tied to them as hbar/momentum so that hbar is exactly 1 internally.
    The derived mass unit is then momentum*time/length and internal masses
    come out small for heavy slow particles, which is what keeps the phase
    factors O(1) on the grid.
    """

    momentum: float
    time: float
    constants: Constants = field(default=CONSTANTS)

    def __post_init__(self) -> None:
        for name in ("momentum", "time"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValidationError(f"{name} unit must be positive and finite, got {value}")

    @classmethod
    def from_scales(cls, scales: TimescaleSummary, tau: float,
                    constants: Constants = CONSTANTS) -> "ScaledUnits":
        if not (tau > 0.0 and math.isfinite(tau)):
            raise ValidationError(f"tau must be positive and finite, got {tau}")
        return cls(momentum=scales.p0_rel, time=tau, constants=constants)

    @property
    def length(self) -> float:
        return self.constants.hbar / self.momentum

    def unit_for(self, kind: str) -> float:
        """SI size of one internal unit of ``kind``."""
        try:
            a, b, c = _UNIT_EXPONENTS[kind]
        except KeyError:
            raise ValidationError(f"unknown unit kind {kind!r}") from None
        return self.momentum**a * self.time**b * self.length**c

    def to_internal(self, value, kind: str):
        return value / self.unit_for(kind)

    def to_si(self, value, kind: str):
        return value * self.unit_for(kind)

    @property
    def hbar_internal(self) -> float:
        # hbar / (momentum * length) == 1 by construction
        return self.constants.hbar / (self.momentum * self.length)


def reference_scenario() -> Scenario:
    """The bundled lithium-6 scenario (same numbers as data/paper-li6.cfg).

    Feshbach molecules of 6Li in a shallow 0.5 Hz, 100 nK trap inside a
    300 Hz waveguide, dissociated at a narrow resonance (1 mG width,
    0.01 Bohr magneton moment difference) by two 60 ms pulses of 400 mG
    height reaching 350 mG of effective detuning, separated by 1 s.
    Defaults to a symmetric switched interferometer with arms at half
    the separation the atoms acquire during that second.
    """
    c = CONSTANTS
    species = Species(name="Li6", atom_mass=6.0151228 * c.atomic_mass_unit)
    trap_guide = TrapGuide(
        omega_trap=2.0 * math.pi * 0.5,
        omega_guide=2.0 * math.pi * 300.0,
        trap_depth=c.k_boltzmann * 100e-9,
    )
    resonance = Resonance(
        width=1e-7,                         # 1 mG in T
        moment_difference=0.01 * c.bohr_magneton,
        background_scattering_length=100.0 * c.bohr_radius,
        position=543.25e-4,                 # 543.25 G in T
    )
    pulses = PulseSequence(
        base_field=543.20e-4,
        pulse_height=400e-7,
        pulse_duration=60e-3,
        pulse_separation=1.0,
    )
    base = Scenario(species=species, trap_guide=trap_guide,
                    resonance=resonance, pulses=pulses)
    scales = scales_from_scenario(base)
    half_sep = scales.v_rel * pulses.pulse_separation / 2.0
    interferometer = InterferometerBlock(
        ell1=half_sep, ell2=-half_sep,
        theta1=math.pi / 4.0, theta2=math.pi / 4.0,
        mode="Switched",
    )
    return Scenario(species=species, trap_guide=trap_guide, resonance=resonance,
                    pulses=pulses, interferometer=interferometer)
