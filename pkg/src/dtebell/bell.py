"""Bell-test analysis: visibility, feasibility, CHSH value and optimization.

The correlator abstraction is a callable (setting, setting) -> CorrelationResult,
so the same CHSH machinery runs on the spin-1/2 reference model (settings are
angles), the Gaussian closed form, or full quadrature (settings are
interferometer configurations with arm lengths).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .correlation import (
    CorrelationResult,
    InterferometerSetting,
    fringe_phase,
    closed_form_parts,
    correlate_closed_form,
)
from .dissociation import GaussianPair
from .scenario import Species, TimescaleSummary, ValidationError

__all__ = [
    "TSIRELSON_BOUND",
    "ChshSettings",
    "BellOutcome",
    "FeasibilityReport",
    "OptimizationResult",
    "spin_reference_correlation",
    "visibility",
    "feasible",
    "chsh_value",
    "optimize_settings",
    "seed_settings",
    "closed_form_correlator",
    "periods_above_threshold",
]

TSIRELSON_BOUND = 2.0 * math.sqrt(2.0)
_TSIRELSON_TOL = 1e-9


@dataclass(frozen=True)
class ChshSettings:
    """The four measurement settings of a CHSH run.

    Each entry is an InterferometerSetting (length mode) or a plain angle
    in radians (reference-model mode); the four must agree in kind.
    """

    a: InterferometerSetting | float
    a_prime: InterferometerSetting | float
    b: InterferometerSetting | float
    b_prime: InterferometerSetting | float

    def __post_init__(self) -> None:
        kinds = {isinstance(s, InterferometerSetting) for s in self.as_tuple()}
        if len(kinds) != 1:
            raise ValidationError("settings must be all lengths or all angles")
        if not self.length_mode:
            for value in self.as_tuple():
                if not math.isfinite(value):
                    raise ValidationError("angle settings must be finite")

    def as_tuple(self):
        return (self.a, self.a_prime, self.b, self.b_prime)

    @property
    def length_mode(self) -> bool:
        return isinstance(self.a, InterferometerSetting)

    def pairs(self):
        """Setting pairs in CHSH order with their combination signs."""
        return (
            (self.a, self.b, 1.0),
            (self.a, self.b_prime, -1.0),
            (self.a_prime, self.b, 1.0),
            (self.a_prime, self.b_prime, 1.0),
        )


@dataclass(frozen=True)
class BellOutcome:
    """CHSH verdict; construction enforces the quantum bound."""

    s_value: float
    visibility: float
    settings: ChshSettings
    violated: bool = None  # type: ignore[assignment]
    margin: float = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.s_value < 0.0 or self.s_value > TSIRELSON_BOUND + _TSIRELSON_TOL:
            raise ValidationError(
                f"CHSH value {self.s_value} outside [0, 2*sqrt(2)] - "
                "either the correlator is unphysical or the combination is wrong"
            )
        if not (0.0 <= self.visibility <= 1.0):
            raise ValidationError(f"visibility {self.visibility} outside [0, 1]")
        derived_violated = bool(self.s_value > 2.0)
        derived_margin = self.s_value - 2.0
        if self.violated is None:
            object.__setattr__(self, "violated", derived_violated)
        elif bool(self.violated) != derived_violated:
            raise ValidationError("violated flag inconsistent with s_value")
        if self.margin is None:
            object.__setattr__(self, "margin", derived_margin)
        elif self.margin != derived_margin:
            raise ValidationError("margin inconsistent with s_value")


@dataclass(frozen=True)
class FeasibilityReport:
    """Dispersion-product inequality plus the short-wavelength guard."""

    product: float
    product_ok: bool
    lambda_ratio: float
    lambda_ratio_guard: float
    side_condition_ok: bool

    @property
    def feasible(self) -> bool:
        return self.product_ok and self.side_condition_ok

    def __bool__(self) -> bool:
        return self.feasible


@dataclass(frozen=True)
class OptimizationResult:
    settings: ChshSettings
    s_value: float
    outcome: BellOutcome
    converged: bool
    sweeps: int


def spin_reference_correlation(phi1: float, phi2: float) -> CorrelationResult:
    """Two-spin singlet-style reference: P = {1 + s1 s2 cos(phi1-phi2)}/4."""
    if not (math.isfinite(phi1) and math.isfinite(phi2)):
        raise ValidationError("reference angles must be finite")
    e = math.cos(phi1 - phi2)
    p = {(s1, s2): 0.25 * (1.0 + s1 * s2 * e) for s1 in (1, -1) for s2 in (1, -1)}
    e_value = p[(1, 1)] - p[(1, -1)] - p[(-1, 1)] + p[(-1, -1)]
    return CorrelationResult(
        p=p, e_value=e_value, method="ClosedForm", quadrature_error_estimate=0.0
    )


def visibility(scales: TimescaleSummary, tau: float) -> float:
    """Fringe-center visibility; envelope factors excluded."""
    if tau < 0.0 or not math.isfinite(tau):
        raise ValidationError(f"tau must be >= 0, got {tau}")
    product = (1.0 + (tau / scales.t_cm) ** 2) * (1.0 + (tau / scales.t_rel) ** 2)
    return product**-0.25


def feasible(
    scales: TimescaleSummary, tau: float, lambda_ratio_guard: float = 0.01
) -> FeasibilityReport:
    """Violation is possible iff the dispersion product stays below 4
    (strict) while the fringe wavelength stays far below the packet
    separation."""
    if tau < 0.0 or not math.isfinite(tau):
        raise ValidationError(f"tau must be >= 0, got {tau}")
    if lambda_ratio_guard <= 0.0:
        raise ValidationError("lambda_ratio_guard must be positive")
    product = (1.0 + (tau / scales.t_cm) ** 2) * (1.0 + (tau / scales.t_rel) ** 2)
    separation = tau * scales.v_rel
    ratio = math.inf if separation == 0.0 else scales.lambda_bar_rel / separation
    return FeasibilityReport(
        product=product,
        product_ok=product < 4.0,
        lambda_ratio=ratio,
        lambda_ratio_guard=lambda_ratio_guard,
        side_condition_ok=ratio < lambda_ratio_guard,
    )


def _signed_chsh(correlator, settings: ChshSettings) -> float:
    total = 0.0
    for x, y, sign in settings.pairs():
        total += sign * correlator(x, y).e_value
    return total


def _shift(setting, delta: float):
    if isinstance(setting, InterferometerSetting):
        return InterferometerSetting(
            ell=setting.ell + delta, theta=setting.theta, switch_mode=setting.switch_mode
        )
    return setting + delta


def _fringe_amplitude(correlator, settings: ChshSettings, period: float, n: int = 32) -> float:
    """Amplitude of E while sliding the first setting over one fringe period.

    First DFT bin of the sampled trace: exact for a pure cosine at any
    phase, and insensitive to the slow envelope drift across the period.
    """
    values = np.array(
        [correlator(_shift(settings.a, period * k / n), settings.b).e_value for k in range(n)]
    )
    phases = np.exp(-2j * np.pi * np.arange(n) / n)
    return float(2.0 * abs(np.sum(values * phases)) / n)


def chsh_value(
    correlator: Callable[[object, object], CorrelationResult],
    settings: ChshSettings,
    fringe_period: Optional[float] = None,
) -> BellOutcome:
    """CHSH combination S = |E(a,b) - E(a,b') + E(a',b) + E(a',b')|.

    The visibility estimate scans the correlator over one fringe period
    around the first setting (2*pi for angle settings).  Without a known
    period in length mode it falls back to the lower bound S/(2*sqrt(2)).
    """
    signed = _signed_chsh(correlator, settings)
    s = abs(signed)
    if fringe_period is None and not settings.length_mode:
        fringe_period = 2.0 * math.pi
    if fringe_period is not None:
        if fringe_period <= 0.0:
            raise ValidationError("fringe_period must be positive")
        vis = _fringe_amplitude(correlator, settings, fringe_period)
    else:
        vis = s / TSIRELSON_BOUND
    vis = min(1.0, max(0.0, vis))
    return BellOutcome(s_value=s, visibility=vis, settings=settings)


def _wrap_near_zero(angle: float) -> float:
    wrapped = math.fmod(angle, 2.0 * math.pi)
    if wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    elif wrapped < -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def closed_form_correlator(
    gaussians: GaussianPair, species: Species, tau: float, phi_tau: float
):
    """Adapter: (setting, setting) -> CorrelationResult via the closed form."""

    def correlator(s1: InterferometerSetting, s2: InterferometerSetting) -> CorrelationResult:
        return correlate_closed_form(gaussians, species, tau, phi_tau, s1.ell, s2.ell)

    return correlator


def seed_settings(
    gaussians: GaussianPair,
    species: Species,
    tau: float,
    phi_tau: float,
    gauge_samples: int = 64,
) -> ChshSettings:
    """Initial CHSH length settings from the fringe phase.

    Target effective analyzer angles (0, pi/2) x (pi/4, 3pi/4) are
    converted to arm-length offsets around the envelope center; a global
    phase gauge shared by both sides is scanned to trade fringe-phase
    placement against envelope suppression, which the plain textbook
    angles ignore.
    """
    _, _, _, scales = closed_form_parts(gaussians, species, tau, phi_tau, 0.0, 0.0)
    lam = scales.lambda_bar_rel
    center1 = 0.5 * tau * scales.v_rel
    center2 = -0.5 * tau * scales.v_rel
    phi_center = fringe_phase(gaussians, species, tau, phi_tau, center1, center2)
    correlator = closed_form_correlator(gaussians, species, tau, phi_tau)

    def build(chi: float) -> ChshSettings:
        def setting1(alpha: float) -> InterferometerSetting:
            delta = _wrap_near_zero(alpha + chi - phi_center) * lam
            return InterferometerSetting(ell=center1 + delta)

        def setting2(beta: float) -> InterferometerSetting:
            delta = _wrap_near_zero(beta + chi) * lam
            return InterferometerSetting(ell=center2 + delta)

        return ChshSettings(
            a=setting1(0.0),
            a_prime=setting1(0.5 * math.pi),
            b=setting2(0.25 * math.pi),
            b_prime=setting2(0.75 * math.pi),
        )

    best = None
    best_s = -math.inf
    for chi in np.linspace(0.0, 2.0 * math.pi, gauge_samples, endpoint=False):
        candidate = build(float(chi))
        s = abs(_signed_chsh(correlator, candidate))
        if s > best_s:
            best_s = s
            best = candidate
    return best


def optimize_settings(
    correlator: Callable[[object, object], CorrelationResult],
    initial: ChshSettings,
    constraints: Optional[Sequence[tuple[float, float]] | tuple[float, float]] = None,
    local_scale: Optional[float] = None,
    max_sweeps: int = 40,
    tol: float = 1e-12,
) -> OptimizationResult:
    """Coordinate descent over the four settings maximizing |S|.

    Each pass scans one coordinate on a grid spanning ``2 * local_scale``
    to either side of its current value (clipped to ``constraints`` --
    one (lo, hi) pair for all coordinates or a sequence of four), then
    refines the best grid cell with a bounded scalar search.  The grid
    step keeps the refinement from tunneling to a neighboring fringe.
    ``local_scale`` defaults to the larger same-side spacing
    |a - a_prime|, |b - b_prime|, which for phase-derived seeds is a
    fraction of the fringe period.  Local search only: the result is the
    nearest optimum, deterministic given the initial settings.
    """
    from scipy.optimize import minimize_scalar

    values = [
        s.ell if isinstance(s, InterferometerSetting) else float(s)
        for s in initial.as_tuple()
    ]
    templates = initial.as_tuple()

    if local_scale is None:
        local_scale = max(abs(values[0] - values[1]), abs(values[2] - values[3]))
        if local_scale <= 0.0:
            local_scale = max(abs(v) for v in values) * 1e-6
        if local_scale <= 0.0:
            local_scale = 1.0 if not initial.length_mode else 1e-6
    elif local_scale <= 0.0 or not math.isfinite(local_scale):
        raise ValidationError("local_scale must be positive and finite")

    if constraints is None:
        box = [(-math.inf, math.inf)] * 4
    elif isinstance(constraints[0], (int, float)):
        box = [(float(constraints[0]), float(constraints[1]))] * 4
    else:
        box = [(float(lo), float(hi)) for lo, hi in constraints]
        if len(box) != 4:
            raise ValidationError("constraints must give bounds for all four settings")
    for (lo, hi), v in zip(box, values):
        if not lo <= v <= hi:
            raise ValidationError(f"initial setting {v} outside bounds ({lo}, {hi})")

    def rebuild(vals) -> ChshSettings:
        built = []
        for template, v in zip(templates, vals):
            if isinstance(template, InterferometerSetting):
                built.append(
                    InterferometerSetting(
                        ell=v, theta=template.theta, switch_mode=template.switch_mode
                    )
                )
            else:
                built.append(v)
        return ChshSettings(*built)

    def objective_at(vals) -> float:
        return abs(_signed_chsh(correlator, rebuild(vals)))

    n_grid = 21
    best = objective_at(values)
    converged = False
    sweeps_done = 0
    for sweep in range(max_sweeps):
        sweeps_done = sweep + 1
        previous = best
        for i in range(4):
            lo = max(box[i][0], values[i] - 2.0 * local_scale)
            hi = min(box[i][1], values[i] + 2.0 * local_scale)
            if not hi > lo:
                continue
            grid = np.linspace(lo, hi, n_grid)

            def at(x, index=i):
                trial = list(values)
                trial[index] = x
                return objective_at(trial)

            scores = [at(float(x)) for x in grid]
            k = int(np.argmax(scores))
            b_lo = grid[max(k - 1, 0)]
            b_hi = grid[min(k + 1, n_grid - 1)]
            res = minimize_scalar(
                lambda x: -at(float(x)),
                bounds=(b_lo, b_hi),
                method="bounded",
                options={"xatol": max(abs(values[i]) * 1e-12, (b_hi - b_lo) * 1e-9)},
            )
            candidates = [(scores[k], float(grid[k])), (-res.fun, float(res.x))]
            cand_best, cand_x = max(candidates)
            if cand_best > best:
                best = cand_best
                values[i] = cand_x
        if best - previous < tol:
            converged = True
            break

    settings = rebuild(values)
    s_value = abs(_signed_chsh(correlator, settings))
    outcome = chsh_value(correlator, settings)
    return OptimizationResult(
        settings=settings,
        s_value=s_value,
        outcome=outcome,
        converged=converged,
        sweeps=sweeps_done,
    )


def periods_above_threshold(scales: TimescaleSummary, tau: float) -> float:
    """Number of fringe periods around the envelope center where the
    envelope-adjusted visibility still exceeds 1/sqrt(2).

    Counted along the length-difference axis at zero length sum.  Zero
    when even the center visibility is below threshold.
    """
    v_center = visibility(scales, tau)
    threshold = 1.0 / math.sqrt(2.0)
    if v_center <= threshold:
        return 0.0
    t_rel = scales.t_rel
    lam = scales.lambda_bar_rel
    v = scales.v_rel
    k_rel = (t_rel / (t_rel**2 + tau**2)) / (2.0 * v * lam)
    delta_max = math.sqrt(math.log(v_center * math.sqrt(2.0)) / k_rel)
    period = 2.0 * math.pi * lam
    return 2.0 * delta_max / period
