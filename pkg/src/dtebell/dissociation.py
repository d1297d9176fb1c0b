"""Two-pulse dissociation at a narrow magnetic resonance.

Provides the joint momentum distribution of the atom pair (squared-sinc
interference of the two dissociation pulses times a Lorentzian resonance
factor and the trap ground-state profile), its Gaussian approximation,
the accumulated two-pulse phase and its stability budget, and the mean
dissociation yield.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.optimize import curve_fit

from .scenario import (
    CONSTANTS,
    SINC_WIDTH_FACTOR,
    Scenario,
    TrapGuide,
    Species,
    ValidationError,
    _p0_from_fields,
    _sigma_p_cm_ground_state,
)

__all__ = [
    "GaussianMode",
    "GaussianPair",
    "FeshbachDistribution",
    "StabilityReport",
    "DissociationSummary",
    "p0_from_fields",
    "feshbach_density",
    "distribution_from_scenario",
    "gaussian_approximation",
    "fit_sinc_width_factor",
    "phi_tau",
    "phase_stability",
    "dissociation_probability",
    "required_c_tilde_norm_sq",
    "dissociation_summary",
    "PHASE_BUDGET",
]

# relative envelope level at which the momentum support is truncated
TRUNCATION_LEVEL = 1e-10

# drift budget for the interferometric phase, rad
PHASE_BUDGET = 0.05


@dataclass(frozen=True)
class GaussianMode:
    """1D Gaussian momentum mode, SI."""

    mean_p: float
    sigma_p: float

    def __post_init__(self) -> None:
        if not (self.sigma_p > 0.0 and math.isfinite(self.sigma_p)):
            raise ValidationError(f"sigma_p must be positive and finite, got {self.sigma_p}")
        if not math.isfinite(self.mean_p):
            raise ValidationError("mean_p must be finite")

    def density(self, p):
        z = (np.asarray(p, dtype=float) - self.mean_p) / self.sigma_p
        return np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * self.sigma_p)


@dataclass(frozen=True)
class GaussianPair:
    """Centre-of-mass and relative Gaussian modes of the dissociated pair."""

    cm: GaussianMode
    rel: GaussianMode


def p0_from_fields(scenario: Scenario) -> float:
    """Mean relative momentum from the field protocol.

    p0^2/m equals the magnetic energy above resonance at the pulse top,
    minus twice the trap depth and the transverse zero-point energy.
    Raises BelowThresholdError when that budget is not positive.
    """
    return _p0_from_fields(scenario)


def _gauss_legendre(n: int):
    # cached nodes/weights on [-1, 1]
    cached = _gauss_legendre._cache.get(n)
    if cached is None:
        cached = np.polynomial.legendre.leggauss(n)
        _gauss_legendre._cache[n] = cached
    return cached


_gauss_legendre._cache = {}


@dataclass(frozen=True)
class FeshbachDistribution:
    """Joint (p_cm, p_rel) distribution after two square pulses.

    In units of the mean relative momentum p0, with c = p_cm/p0 and
    r = p_rel/p0, the density is

        N * (kappa b^2 / pi) * sinc^2(x) * f_cm(p_cm) / (p0 * (x/kappa + b)^2)

    where x = kappa*(c^2/4 + r^2 - 1), kappa = (p0/delta_p)^2 and
    b = (p_bar/p0)^2.  sinc(x) = sin(x)/x with sinc(0) = 1.  N is fixed
    numerically so the density integrates to one; the analytic limit
    delta_p, sigma_cm << p0 gives N -> 1.
    """

    p0: float
    p_bar: float
    delta_p: float
    cm_state: GaussianMode
    normalization: float = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        for name in ("p0", "p_bar", "delta_p"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValidationError(f"{name} must be positive and finite, got {value}")
        if self.delta_p / self.p0 > 0.2:
            raise ValidationError(
                "narrow-spectrum precondition violated: delta_p/p0 = "
                f"{self.delta_p / self.p0:.4f} > 0.2"
            )
        if self.cm_state.sigma_p / self.p0 > 0.2:
            raise ValidationError(
                "narrow-spectrum precondition violated: sigma_p_cm/p0 = "
                f"{self.cm_state.sigma_p / self.p0:.4f} > 0.2"
            )
        if self.p_bar <= self.p0:
            # (x/kappa + b) vanishes on a momentum shell when b < 1: the
            # resonance pole enters the kinematically allowed domain
            raise ValidationError(
                "resonance pole inside the momentum domain: requires p_bar > p0, "
                f"got p_bar/p0 = {self.p_bar / self.p0:.4f}"
            )
        if self.normalization is None:
            object.__setattr__(self, "normalization", 1.0)
            raw, err = self._raw_integral()
            object.__setattr__(self, "normalization", 1.0 / raw)
            object.__setattr__(self, "_norm_error_estimate", err / raw)
        else:
            object.__setattr__(self, "_norm_error_estimate", 0.0)

    # -- scaled parameters ------------------------------------------------

    @property
    def kappa(self) -> float:
        return (self.p0 / self.delta_p) ** 2

    @property
    def b(self) -> float:
        return (self.p_bar / self.p0) ** 2

    @property
    def x_cut(self) -> float:
        """Positive sinc-argument cutoff where the combined 1/x^2 sinc
        envelope times the squared Lorentzian falls to TRUNCATION_LEVEL."""
        a = 1.0 / (self.kappa * self.b)
        target = 1.0 / math.sqrt(TRUNCATION_LEVEL)
        return (-1.0 + math.sqrt(1.0 + 4.0 * a * target)) / (2.0 * a)

    def r_hi(self, u: float = 0.0) -> float:
        """Upper |p_rel|/p0 of the truncated support at c^2/4 = u."""
        return math.sqrt(1.0 - u + self.x_cut / self.kappa)

    def tail_bound(self) -> float:
        """Analytic bound on the relative mass beyond the truncation.

        Integrates the envelope 1/(x^2 (1+ax)^2) past x_cut in closed
        form (partial fractions) and compares with the in-domain peak
        contribution; conservative by construction.
        """
        a = 1.0 / (self.kappa * self.b)
        xc = self.x_cut
        tail_env = (
            2.0 * a * math.log(a * xc / (1.0 + a * xc))
            + 1.0 / xc
            + a / (1.0 + a * xc)
        )
        # envelope integral over the retained domain is >= pi/2 * 1/(1+..)^2
        # near the sinc peak; normalize against sinc^2 mass ~ pi
        return tail_env / math.pi

    # -- quadrature scaffolding --------------------------------------------

    def rel_panel_edges(self, u, n_extra: int = 0):
        """Panel edges in r > 0 aligned with the sinc zeros x = k*pi.

        ``u`` is an array of c^2/4 values; returns edges of shape
        (len(u), n_panels+1).  Panels clipped to zero width where the
        corresponding zero lies below r = 0, so a single static panel
        count serves every u.
        """
        u = np.atleast_1d(np.asarray(u, dtype=float))
        kappa = self.kappa
        k_lo = math.floor(-kappa / math.pi) - 1
        k_hi = math.ceil(self.x_cut / math.pi)
        k = np.arange(k_lo, k_hi + 1, dtype=float)
        arg = 1.0 - u[:, None] + (k[None, :] * math.pi) / kappa
        edges = np.sqrt(np.clip(arg, 0.0, None))
        # force exact domain ends
        lo = np.zeros((len(u), 1))
        hi = np.sqrt(1.0 - u + self.x_cut / kappa)[:, None]
        edges = np.clip(edges, 0.0, hi)
        return np.concatenate([lo, edges, hi], axis=1)

    def _scaled_kernel(self, u, r):
        # sinc^2(x) / (x/kappa + b)^2 in (u, r); the c.m. profile and the
        # kappa b^2/pi prefactor are applied by the callers
        x = self.kappa * (u + r * r - 1.0)
        denom = u + r * r - 1.0 + self.b
        return np.sinc(x / math.pi) ** 2 / (denom * denom)

    def _rel_integral(self, u, nodes_per_panel: int = 12):
        """2 * integral over r > 0 of the scaled kernel, per u value."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        edges = self.rel_panel_edges(u)
        gl_x, gl_w = _gauss_legendre(nodes_per_panel)
        half = 0.5 * (edges[:, 1:] - edges[:, :-1])  # (nu, np)
        mid = 0.5 * (edges[:, 1:] + edges[:, :-1])
        r = mid[:, :, None] + half[:, :, None] * gl_x  # (nu, np, nn)
        vals = self._scaled_kernel(u[:, None, None], r)
        per_panel = (vals * gl_w).sum(axis=2) * half
        return 2.0 * per_panel.sum(axis=1)

    def _raw_integral(self, nodes_per_panel: int = 12):
        """Full 2D integral (normalization=1) plus a doubling error estimate."""

        def once(n_out, n_in):
            gl_x, gl_w = _gauss_legendre(n_out)
            cm = self.cm_state
            c_mean = cm.mean_p / self.p0
            c_sig = cm.sigma_p / self.p0
            c = c_mean + 8.5 * c_sig * gl_x
            w = 8.5 * c_sig * gl_w
            f_cm = np.exp(-0.5 * ((c - c_mean) / c_sig) ** 2) / (
                math.sqrt(2.0 * math.pi) * c_sig
            )
            inner = self._rel_integral(c * c / 4.0, n_in)
            pref = self.kappa * self.b**2 / math.pi
            return pref * float((w * f_cm * inner).sum())

        # the inner integral oscillates in u = c^2/4 with period 2pi/kappa;
        # resolve however many cycles the c.m. window spans
        u_max = ((abs(self.cm_state.mean_p) + 8.5 * self.cm_state.sigma_p) / self.p0) ** 2 / 4.0
        n_cycles = u_max * self.kappa / (2.0 * math.pi)
        n_outer = max(48, int(math.ceil(8.0 * n_cycles)) + 32)
        while True:
            coarse = once(n_outer, nodes_per_panel)
            fine = once(2 * n_outer, 2 * nodes_per_panel)
            err = abs(fine - coarse)
            if err < 3e-7 or n_outer >= 1536:
                break
            n_outer *= 2
        return fine, err + self.tail_bound() * fine

    # -- public evaluation --------------------------------------------------

    def density(self, p_cm, p_rel):
        """Joint density in SI (per momentum squared), vectorized."""
        c = np.asarray(p_cm, dtype=float) / self.p0
        r = np.asarray(p_rel, dtype=float) / self.p0
        u = c * c / 4.0
        pref = self.normalization * self.kappa * self.b**2 / math.pi
        return pref * self._scaled_kernel(u, r) * self.cm_state.density(p_cm) / self.p0

    def density_particle_frame(self, p1, p2):
        """Same density addressed by single-particle momenta (unit Jacobian)."""
        p1 = np.asarray(p1, dtype=float)
        p2 = np.asarray(p2, dtype=float)
        return self.density(p1 + p2, 0.5 * (p1 - p2))

    @property
    def norm_error_estimate(self) -> float:
        return self._norm_error_estimate


def feshbach_density(dist: FeshbachDistribution, p_cm, p_rel):
    """Module-level alias for :meth:`FeshbachDistribution.density`."""
    return dist.density(p_cm, p_rel)


def distribution_from_scenario(scenario: Scenario) -> FeshbachDistribution:
    """Canonical distribution for a scenario.

    p_bar^2 = m * mu * pulse_height (resonance passage depth) and
    delta_p^2 = 2 m hbar / pulse_duration (spectral width of one pulse);
    the c.m. mode is the molecular trap ground state.
    """
    c = scenario.constants
    m = scenario.species.atom_mass
    p0 = _p0_from_fields(scenario)
    p_bar = math.sqrt(m * scenario.resonance.moment_difference * scenario.pulses.pulse_height)
    delta_p = math.sqrt(2.0 * m * c.hbar / scenario.pulses.pulse_duration)
    cm_state = GaussianMode(mean_p=0.0, sigma_p=_sigma_p_cm_ground_state(scenario))
    return FeshbachDistribution(p0=p0, p_bar=p_bar, delta_p=delta_p, cm_state=cm_state)


def gaussian_approximation(
    dist: FeshbachDistribution,
    species: Species | None = None,
    trap_guide: TrapGuide | None = None,
) -> GaussianPair:
    """Gaussian pair matching the distribution's lobes.

    The relative mode keeps the pinned main-lobe width factor (the fit
    routine exists to validate it, not to replace it); sigma_p_rel =
    factor * delta_p^2 / (2 p0), which is the mass-free form of
    factor * m hbar / (p0 T).  The c.m. mode is taken from the
    distribution unless an explicit trap ground state is requested.
    """
    rel = GaussianMode(
        mean_p=dist.p0,
        sigma_p=SINC_WIDTH_FACTOR * dist.delta_p**2 / (2.0 * dist.p0),
    )
    if trap_guide is not None and species is not None:
        sigma_cm = math.sqrt(CONSTANTS.hbar * trap_guide.omega_trap * species.molecule_mass / 2.0)
        cm = GaussianMode(mean_p=dist.cm_state.mean_p, sigma_p=sigma_cm)
    else:
        cm = dist.cm_state
    return GaussianPair(cm=cm, rel=rel)


def fit_sinc_width_factor(dist: FeshbachDistribution, n_samples: int = 201) -> float:
    """Least-squares Gaussian width of the central momentum lobe.

    Samples the relative profile at p_cm = 0 on a uniform grid across
    the main lobe (|x| < pi), normalizes to the on-shell peak, and fits
    exp(-dp^2 / 2 sigma^2) with the amplitude pinned at one; returns the
    width as the dimensionless factor sigma * 2 kappa / p0, comparable
    to SINC_WIDTH_FACTOR.
    """
    kappa = dist.kappa
    r_lo = math.sqrt(1.0 - math.pi / kappa)
    r_hi = math.sqrt(1.0 + math.pi / kappa)
    r = np.linspace(r_lo, r_hi, n_samples)
    profile = dist.density(0.0, r * dist.p0)
    profile = profile / dist.density(0.0, dist.p0)
    dp = r - 1.0

    def model(x, sigma):
        return np.exp(-0.5 * (x / sigma) ** 2)

    sigma0 = SINC_WIDTH_FACTOR / (2.0 * kappa)
    (sigma_fit,), _ = curve_fit(model, dp, profile, p0=[sigma0])
    return float(abs(sigma_fit) * 2.0 * kappa)


def phi_tau(scenario: Scenario, wrap: bool = False) -> float:
    """Relative phase accumulated between the two dissociation branches.

    [2 U_T tau - mu dB T + mu (B_res - B_0) tau] / hbar + omega_G tau,
    reported unwrapped by default: drift budgets concern absolute phase
    change, not the principal value.
    """
    c = scenario.constants
    mu = scenario.resonance.moment_difference
    p = scenario.pulses
    g = scenario.trap_guide
    phase = (
        2.0 * g.trap_depth * p.pulse_separation
        - mu * p.pulse_height * p.pulse_duration
        + mu * (scenario.resonance.position - p.base_field) * p.pulse_separation
    ) / c.hbar + g.omega_guide * p.pulse_separation
    if wrap:
        phase = (phase + math.pi) % (2.0 * math.pi) - math.pi
    return phase


_STABILITY_PARAMS = (
    "base_field",
    "pulse_height",
    "resonance_position",
    "pulse_duration",
    "pulse_separation",
    "trap_depth",
)


@dataclass(frozen=True)
class StabilityReport:
    """Shot-to-shot phase drift budget.

    drifts: absolute phase drift per parameter, rad, for the supplied
        relative reproducibility of that parameter.
    sensitivities: d(phase)/d(parameter) in rad per SI unit.
    total: root-sum-square of the drifts (independent errors).
    budget: the drift allowance each parameter is compared against.
    passes: per-parameter drift <= budget.
    common_mode_field_drift: drift when base_field and resonance_position
        move together; identically zero because only their difference
        enters, included to document the cancellation.
    """

    drifts: dict
    sensitivities: dict
    relative_errors: dict
    total: float
    budget: float
    passes: dict
    common_mode_field_drift: float

    @property
    def all_pass(self) -> bool:
        return all(self.passes.values())


def phase_stability(
    scenario: Scenario,
    relative_errors: Mapping[str, float] | float = 1e-5,
    budget: float = PHASE_BUDGET,
) -> StabilityReport:
    """Propagate relative parameter errors into phase drift.

    ``relative_errors`` is either one number applied to every parameter
    or a mapping over base_field, pulse_height, resonance_position,
    pulse_duration, pulse_separation, trap_depth.  Absolute drift per
    parameter is |d(phase)/dx| * r * |x|; the total combines them in
    quadrature.
    """
    if isinstance(relative_errors, Mapping):
        unknown = set(relative_errors) - set(_STABILITY_PARAMS)
        if unknown:
            raise ValidationError(f"unknown stability parameters: {sorted(unknown)}")
        rel = {name: float(relative_errors.get(name, 0.0)) for name in _STABILITY_PARAMS}
    else:
        rel = {name: float(relative_errors) for name in _STABILITY_PARAMS}
    for name, r in rel.items():
        if r < 0.0 or not math.isfinite(r):
            raise ValidationError(f"relative error for {name} must be >= 0, got {r}")

    c = scenario.constants
    mu = scenario.resonance.moment_difference
    p = scenario.pulses
    g = scenario.trap_guide
    tau = p.pulse_separation

    values = {
        "base_field": p.base_field,
        "pulse_height": p.pulse_height,
        "resonance_position": scenario.resonance.position,
        "pulse_duration": p.pulse_duration,
        "pulse_separation": tau,
        "trap_depth": g.trap_depth,
    }
    sensitivities = {
        "base_field": -mu * tau / c.hbar,
        "pulse_height": -mu * p.pulse_duration / c.hbar,
        "resonance_position": mu * tau / c.hbar,
        "pulse_duration": -mu * p.pulse_height / c.hbar,
        "pulse_separation": (
            2.0 * g.trap_depth + mu * (scenario.resonance.position - p.base_field)
        ) / c.hbar + g.omega_guide,
        "trap_depth": 2.0 * tau / c.hbar,
    }
    drifts = {
        name: abs(sensitivities[name]) * rel[name] * abs(values[name])
        for name in _STABILITY_PARAMS
    }
    total = math.sqrt(sum(d * d for d in drifts.values()))
    passes = {name: drifts[name] <= budget for name in _STABILITY_PARAMS}
    common = abs(sensitivities["base_field"] + sensitivities["resonance_position"])
    return StabilityReport(
        drifts=drifts,
        sensitivities=sensitivities,
        relative_errors=rel,
        total=total,
        budget=budget,
        passes=passes,
        common_mode_field_drift=common,
    )


def dissociation_probability(scenario: Scenario, c_tilde_norm_sq: float) -> float:
    """Mean dissociation yield per molecule.

    omega_G * a_bg * mu * width * ||C~||^2 / (pi hbar^2), linear in each
    factor.  ||C~||^2 (momentum * time^2, SI) is caller-supplied: the
    pulse amplitude spectrum has no closed form pinned here, see
    required_c_tilde_norm_sq for the inversion.
    """
    if c_tilde_norm_sq < 0.0:
        raise ValidationError(f"c_tilde_norm_sq must be >= 0, got {c_tilde_norm_sq}")
    a_bg = scenario.resonance.background_scattering_length
    if a_bg <= 0.0:
        raise ValidationError(
            "dissociation yield model requires a positive background "
            f"scattering length, got {a_bg}"
        )
    c = scenario.constants
    return (
        scenario.trap_guide.omega_guide
        * a_bg
        * scenario.resonance.moment_difference
        * scenario.resonance.width
        * c_tilde_norm_sq
        / (math.pi * c.hbar**2)
    )


def required_c_tilde_norm_sq(
    scenario: Scenario, n_molecules: int, target_mean: float = 1.0
) -> float:
    """||C~||^2 making n_molecules * yield equal target_mean dissociations."""
    if n_molecules < 1:
        raise ValidationError(f"n_molecules must be >= 1, got {n_molecules}")
    per_unit = dissociation_probability(scenario, 1.0)
    return target_mean / (n_molecules * per_unit)


@dataclass(frozen=True)
class DissociationSummary:
    distribution: FeshbachDistribution
    gaussians: GaussianPair
    phi_tau: float
    probability: float | None


def dissociation_summary(
    scenario: Scenario, c_tilde_norm_sq: float | None = None
) -> DissociationSummary:
    dist = distribution_from_scenario(scenario)
    prob = None
    if c_tilde_norm_sq is not None:
        prob = dissociation_probability(scenario, c_tilde_norm_sq)
    return DissociationSummary(
        distribution=dist,
        gaussians=gaussian_approximation(dist),
        phi_tau=phi_tau(scenario),
        probability=prob,
    )
