"""Command-line front end.

Config files are INI-style key-value documents in lab units (mG, Bohr
magneton, Bohr radius, nK, ms, um, degrees); unknown sections or keys are
rejected, and anything omitted falls back to the bundled lithium-6
scenario (data/paper-li6.cfg).  Units are converted to SI once at
ingestion.

Machine output goes to stdout, human-readable summaries and reports to
stderr.  Analysis commands (scan, bell, montecarlo) share one CSV schema,
RESULT_COLUMNS: inputs echoed first, then P_pp, P_pm, P_mp, P_mm, E, V,
S, stderr, error - cells that do not apply stay empty.  The feasibility
frontier has its own schema, FEASIBILITY_COLUMNS.  Floats are written
with repr, so every emitted number parses back to the exact binary value.

Exit codes: 0 success, 1 runtime or quadrature failure, 2 config or
usage failure.  Identical (config, flags, seed) produce byte-identical
output.  DTEBELL_THREADS > 1 computes scan rows in a thread pool
(emission order is unchanged); --seed overrides the config seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Optional, Sequence

import numpy as np

from .bell import (
    ChshSettings,
    TSIRELSON_BOUND,
    chsh_value,
    closed_form_correlator,
    feasible,
    optimize_settings,
    periods_above_threshold,
    seed_settings,
    visibility,
)
from .correlation import (
    DtePair,
    GaussianPairDistribution,
    InterferometerSetting,
    QuadratureError,
    closed_form_parts,
    correlate_closed_form,
    correlate_quadrature,
)
from .dissociation import (
    distribution_from_scenario,
    gaussian_approximation,
    phase_stability,
    phi_tau,
)
from .montecarlo import RunConfig, estimate_chsh
from .montecarlo import run as run_events
from .scenario import (
    BelowThresholdError,
    CONSTANTS,
    InterferometerBlock,
    PulseSequence,
    Resonance,
    Scenario,
    Species,
    TrapGuide,
    ValidationError,
    scales_from_scenario,
)

__all__ = [
    "CONFIG_SCHEMA",
    "ConfigDocument",
    "ConfigError",
    "FEASIBILITY_COLUMNS",
    "RESULT_COLUMNS",
    "load_config",
    "main",
]


class ConfigError(ValidationError):
    """Config document or command usage problem (exit code 2)."""


# section -> key -> type tag ("float", "int", "str")
CONFIG_SCHEMA: Mapping[str, Mapping[str, str]] = {
    "scenario": {
        "mass_amu": "float",
        "omega_guide_hz": "float",
        "omega_trap_hz": "float",
        "trap_depth_nK": "float",
    },
    "resonance": {
        "width_mG": "float",
        "moment_diff_muB": "float",
        "a_bg_a0": "float",
        "position_mG": "float",
    },
    "pulses": {
        "base_field_mG": "float",
        "height_mG": "float",
        "duration_ms": "float",
        "separation_s": "float",
    },
    "interferometer": {
        "ell1_um": "float",
        "ell2_um": "float",
        "theta1_deg": "float",
        "theta2_deg": "float",
        "mode": "str",
    },
    "run": {
        "events": "int",
        "seed": "int",
    },
}

# the bundled lithium-6 scenario; must match data/paper-li6.cfg
BUNDLED_DEFAULTS: Mapping[str, Mapping[str, object]] = {
    "scenario": {
        "mass_amu": 6.0151228,
        "omega_guide_hz": 300.0,
        "omega_trap_hz": 0.5,
        "trap_depth_nK": 100.0,
    },
    "resonance": {
        "width_mG": 1.0,
        "moment_diff_muB": 0.01,
        "a_bg_a0": 100.0,
        "position_mG": 543250.0,
    },
    "pulses": {
        "base_field_mG": 543200.0,
        "height_mG": 400.0,
        "duration_ms": 60.0,
        "separation_s": 1.0,
    },
    "interferometer": {
        "ell1_um": 5349.3635026632135,
        "ell2_um": -5349.3635026632135,
        "theta1_deg": 45.0,
        "theta2_deg": 45.0,
        "mode": "Switched",
    },
    "run": {
        "events": 10000,
        "seed": 1,
    },
}

MILLIGAUSS = 1e-7  # tesla


@dataclass(frozen=True)
class ConfigDocument:
    """Validated lab-unit parameter document."""

    values: Mapping[str, Mapping[str, object]]

    def get(self, section: str, key: str):
        return self.values[section][key]

    def replace(self, section: str, key: str, value) -> "ConfigDocument":
        merged = {name: dict(body) for name, body in self.values.items()}
        merged[section][key] = value
        return ConfigDocument(values=merged)

    def to_scenario(self) -> Scenario:
        """Convert to SI once; physical validation happens downstream."""
        v = self.values
        c = CONSTANTS
        species = Species(
            name="config", atom_mass=v["scenario"]["mass_amu"] * c.atomic_mass_unit
        )
        trap_guide = TrapGuide(
            omega_trap=2.0 * math.pi * v["scenario"]["omega_trap_hz"],
            omega_guide=2.0 * math.pi * v["scenario"]["omega_guide_hz"],
            trap_depth=c.k_boltzmann * v["scenario"]["trap_depth_nK"] * 1e-9,
        )
        resonance = Resonance(
            width=v["resonance"]["width_mG"] * MILLIGAUSS,
            moment_difference=v["resonance"]["moment_diff_muB"] * c.bohr_magneton,
            background_scattering_length=v["resonance"]["a_bg_a0"] * c.bohr_radius,
            position=v["resonance"]["position_mG"] * MILLIGAUSS,
        )
        pulses = PulseSequence(
            base_field=v["pulses"]["base_field_mG"] * MILLIGAUSS,
            pulse_height=v["pulses"]["height_mG"] * MILLIGAUSS,
            pulse_duration=v["pulses"]["duration_ms"] * 1e-3,
            pulse_separation=v["pulses"]["separation_s"],
        )
        interferometer = InterferometerBlock(
            ell1=v["interferometer"]["ell1_um"] * 1e-6,
            ell2=v["interferometer"]["ell2_um"] * 1e-6,
            theta1=math.radians(v["interferometer"]["theta1_deg"]),
            theta2=math.radians(v["interferometer"]["theta2_deg"]),
            mode=v["interferometer"]["mode"],
        )
        return Scenario(
            species=species,
            trap_guide=trap_guide,
            resonance=resonance,
            pulses=pulses,
            interferometer=interferometer,
        )

    @property
    def events(self) -> int:
        return self.values["run"]["events"]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]


def _convert(section: str, key: str, raw: str):
    kind = CONFIG_SCHEMA[section][key]
    try:
        if kind == "float":
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError("not finite")
            return value
        if kind == "int":
            return int(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"invalid value for {section}.{key}: {raw!r} ({exc})") from exc


def load_config(path: Optional[str] = None) -> ConfigDocument:
    """Parse and validate a config file; None loads the bundled scenario.

    Missing sections and keys take the bundled values, so a document can
    override a single parameter.
    """
    import configparser

    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys carry unit suffixes like _nK; keep case
    if path is None:
        text = (
            resources.files("dtebell").joinpath("data/paper-li6.cfg").read_text("utf-8")
        )
        parser.read_string(text)
    else:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as handle:
            try:
                parser.read_file(handle)
            except configparser.Error as exc:
                raise ConfigError(f"malformed config {path}: {exc}") from exc

    values = {name: dict(body) for name, body in BUNDLED_DEFAULTS.items()}
    for section in parser.sections():
        if section not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in CONFIG_SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            values[section][key] = _convert(section, key, raw)
    document = ConfigDocument(values=values)
    mode = document.get("interferometer", "mode")
    if mode not in ("Switched", "BeamSplitter"):
        raise ConfigError(
            f"invalid value for interferometer.mode: {mode!r} "
            "(expected Switched or BeamSplitter)"
        )
    if document.events < 1:
        raise ConfigError(f"run.events must be >= 1, got {document.events}")
    if not 0 <= document.seed < 2**64:
        raise ConfigError(f"run.seed must fit in 64 bits, got {document.seed}")
    return document


# --------------------------------------------------------------- CSV output

RESULT_COLUMNS = (
    "source",
    "axis",
    "axis_value",
    "ell1_um",
    "ell2_um",
    "tau_s",
    "theta1_deg",
    "theta2_deg",
    "switch_mode",
    "method",
    "events",
    "seed",
    "discarded",
    "P_pp",
    "P_pm",
    "P_mp",
    "P_mm",
    "E",
    "V",
    "S",
    "stderr",
    "error",
)

FEASIBILITY_COLUMNS = (
    "tau_s",
    "dispersion_product",
    "visibility",
    "lambda_ratio",
    "feasible",
    "periods_above_threshold",
)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(stream, columns, rows) -> None:
    writer = csv.writer(stream)  # RFC 4180: CRLF line endings, quoting as needed
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_cell(row.get(name)) for name in columns])


def _thread_count() -> int:
    raw = os.environ.get("DTEBELL_THREADS", "1")
    try:
        count = int(raw)
    except ValueError as exc:
        raise ConfigError(f"DTEBELL_THREADS must be an integer, got {raw!r}") from exc
    if count < 1:
        raise ConfigError(f"DTEBELL_THREADS must be >= 1, got {count}")
    return count


def _map_rows(function, items):
    threads = _thread_count()
    if threads == 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(function, items))


# ------------------------------------------------------------------- scales


def _scales_payload(document: ConfigDocument) -> dict:
    scenario = document.to_scenario()
    scales = scales_from_scenario(scenario)
    tau = scenario.pulses.pulse_separation
    report = feasible(scales, tau)
    return {
        "t_cm_s": scales.t_cm,
        "t_rel_s": scales.t_rel,
        "lambda_bar_rel_m": scales.lambda_bar_rel,
        "v_rel_m_per_s": scales.v_rel,
        "sigma_p_cm_si": scales.sigma_p_cm,
        "sigma_p_rel_si": scales.sigma_p_rel,
        "p0_rel_si": scales.p0_rel,
        "tau_s": tau,
        "visibility": visibility(scales, tau),
        "dispersion_product": report.product,
        "lambda_ratio": report.lambda_ratio,
        "feasible": report.feasible,
    }


def cmd_scales(args, stdout, stderr) -> int:
    payload = _scales_payload(load_config(args.config))
    if args.json:
        stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return 0
    for key, value in payload.items():
        stdout.write(f"{key} = {_format_cell(value)}\n")
    return 0


# --------------------------------------------------------------------- scan

_SCAN_AXES = ("ell1", "ell2", "tau", "field")


@dataclass(frozen=True)
class _ScenarioTools:
    scenario: Scenario
    gaussians: object
    pulse_phase: float
    tau: float


def _tools_for(scenario: Scenario) -> _ScenarioTools:
    gaussians = gaussian_approximation(distribution_from_scenario(scenario))
    return _ScenarioTools(
        scenario=scenario,
        gaussians=gaussians,
        pulse_phase=phi_tau(scenario),
        tau=scenario.pulses.pulse_separation,
    )


def _scan_point(document: ConfigDocument, base: Optional[_ScenarioTools],
                axis: str, value: float, method: str) -> dict:
    """One grid point; computation errors land in the row's error cell."""
    inter = document.values["interferometer"]
    row = {
        "source": "scan",
        "axis": axis,
        "axis_value": float(value),
        "ell1_um": inter["ell1_um"],
        "ell2_um": inter["ell2_um"],
        "tau_s": document.get("pulses", "separation_s"),
        "theta1_deg": inter["theta1_deg"],
        "theta2_deg": inter["theta2_deg"],
        "switch_mode": inter["mode"],
        "method": method,
    }
    try:
        if axis == "ell1":
            row["ell1_um"] = float(value)
            tools = base
        elif axis == "ell2":
            row["ell2_um"] = float(value)
            tools = base
        elif axis == "tau":
            row["tau_s"] = float(value)
            tools = _tools_for(
                document.replace("pulses", "separation_s", float(value)).to_scenario()
            )
        else:  # field
            tools = _tools_for(
                document.replace("pulses", "base_field_mG", float(value)).to_scenario()
            )
        ell1 = row["ell1_um"] * 1e-6
        ell2 = row["ell2_um"] * 1e-6
        species = tools.scenario.species
        if method == "closed":
            result = correlate_closed_form(
                tools.gaussians, species, tools.tau, tools.pulse_phase, ell1, ell2
            )
            prefactor, envelope, _, _ = closed_form_parts(
                tools.gaussians, species, tools.tau, tools.pulse_phase, ell1, ell2
            )
            row["V"] = prefactor * envelope
        else:
            pair = DtePair(
                distribution=GaussianPairDistribution(modes=tools.gaussians),
                tau=tools.tau,
                phi_tau=tools.pulse_phase,
                species=species,
            )
            theta1 = math.radians(row["theta1_deg"])
            theta2 = math.radians(row["theta2_deg"])
            mode = row["switch_mode"]
            result = correlate_quadrature(
                pair,
                InterferometerSetting(ell=ell1, theta=theta1, switch_mode=mode),
                InterferometerSetting(ell=ell2, theta=theta2, switch_mode=mode),
            )
    except (ValidationError, QuadratureError) as exc:
        row["error"] = str(exc).replace("\n", " ")
        return row
    row.update(
        {
            "P_pp": result.probability(1, 1),
            "P_pm": result.probability(1, -1),
            "P_mp": result.probability(-1, 1),
            "P_mm": result.probability(-1, -1),
            "E": result.e_value,
        }
    )
    return row


def cmd_scan(args, stdout, stderr) -> int:
    document = load_config(args.config)
    if args.steps < 2:
        raise ConfigError(f"scan needs steps >= 2, got {args.steps}")
    if not (math.isfinite(args.start) and math.isfinite(args.stop)):
        raise ConfigError("scan range must be finite")
    if args.start == args.stop:
        raise ConfigError("scan range is degenerate (start == stop)")
    if args.method == "closed":
        inter = document.values["interferometer"]
        for key in ("theta1_deg", "theta2_deg"):
            if not math.isclose(inter[key] % 180.0, 45.0, abs_tol=1e-9):
                raise ConfigError(
                    f"method=closed requires interferometer.{key} = 45; "
                    f"got {inter[key]} (use method=quad)"
                )
    base = None
    if args.axis in ("ell1", "ell2"):
        base = _tools_for(document.to_scenario())
    grid = np.linspace(args.start, args.stop, args.steps)
    rows = _map_rows(
        lambda value: _scan_point(document, base, args.axis, float(value), args.method),
        grid,
    )
    _write_csv(stdout, RESULT_COLUMNS, rows)
    return 0


# --------------------------------------------------------------------- bell


def _settings_from_um(document: ConfigDocument, settings_um) -> ChshSettings:
    """Four arm lengths in um -> ChshSettings; a and a' use side-1 angles."""
    inter = document.values["interferometer"]
    for key in ("theta1_deg", "theta2_deg"):
        if not math.isclose(inter[key] % 180.0, 45.0, abs_tol=1e-9):
            raise ConfigError(
                f"closed-form evaluation requires interferometer.{key} = 45; "
                f"got {inter[key]}"
            )
    mode = document.get("interferometer", "mode")
    thetas = [math.radians(inter["theta1_deg"])] * 2
    thetas += [math.radians(inter["theta2_deg"])] * 2
    return ChshSettings(
        *(
            InterferometerSetting(ell=u * 1e-6, theta=theta, switch_mode=mode)
            for u, theta in zip(settings_um, thetas)
        )
    )


def _bell_rows_and_outcome(document: ConfigDocument, tau_override, settings_um,
                           optimize: bool):
    if tau_override is not None:
        if not (tau_override > 0 and math.isfinite(tau_override)):
            raise ConfigError(f"--tau must be positive and finite, got {tau_override}")
        document = document.replace("pulses", "separation_s", float(tau_override))
    scenario = document.to_scenario()
    tools = _tools_for(scenario)
    scales = scales_from_scenario(scenario)
    correlator = closed_form_correlator(
        tools.gaussians, scenario.species, tools.tau, tools.pulse_phase
    )
    inter = document.values["interferometer"]
    if settings_um is not None:
        chosen = _settings_from_um(document, settings_um)
    else:
        chosen = optimize_settings(
            correlator,
            seed_settings(
                tools.gaussians, scenario.species, tools.tau, tools.pulse_phase
            ),
        ).settings
    period = 2.0 * math.pi * scales.lambda_bar_rel
    outcome = chsh_value(correlator, chosen, fringe_period=period)

    # echo --settings inputs exactly; the m <-> um round trip is lossy
    if settings_um is not None:
        um = settings_um
    else:
        um = [s.ell * 1e6 for s in chosen.as_tuple()]
    um_pairs = [(um[0], um[2]), (um[0], um[3]), (um[1], um[2]), (um[1], um[3])]

    rows = []
    pair_names = ("ab", "ab_prime", "a_prime_b", "a_prime_b_prime")
    for name, (x, y, _sign), (u1, u2) in zip(pair_names, chosen.pairs(), um_pairs):
        result = correlator(x, y)
        rows.append(
            {
                "source": f"bell_{name}",
                "ell1_um": u1,
                "ell2_um": u2,
                "tau_s": tools.tau,
                "theta1_deg": inter["theta1_deg"],
                "theta2_deg": inter["theta2_deg"],
                "switch_mode": inter["mode"],
                "method": "closed",
                "P_pp": result.probability(1, 1),
                "P_pm": result.probability(1, -1),
                "P_mp": result.probability(-1, 1),
                "P_mm": result.probability(-1, -1),
                "E": result.e_value,
            }
        )
    rows.append(
        {
            "source": "bell_summary",
            "tau_s": tools.tau,
            "switch_mode": inter["mode"],
            "method": "optimize" if optimize else "settings",
            "S": outcome.s_value,
            "V": outcome.visibility,
        }
    )
    return rows, outcome, chosen


def cmd_bell(args, stdout, stderr) -> int:
    document = load_config(args.config)
    rows, outcome, chosen = _bell_rows_and_outcome(
        document, args.tau, args.settings, args.optimize
    )
    _write_csv(stdout, RESULT_COLUMNS, rows)
    ells = ", ".join(f"{s.ell * 1e6:.6f}" for s in chosen.as_tuple())
    stderr.write(
        f"S = {outcome.s_value:.6f}\n"
        f"violated = {_format_cell(outcome.violated)}\n"
        f"visibility = {outcome.visibility:.6f}\n"
        f"margin = {outcome.margin:.6f}\n"
        f"settings ell (um) = {ells}\n"
    )
    return 0


# --------------------------------------------------------------- montecarlo


def cmd_montecarlo(args, stdout, stderr) -> int:
    document = load_config(args.config)
    if args.events is not None:
        if args.events < 1:
            raise ConfigError(f"--events must be >= 1, got {args.events}")
        document = document.replace("run", "events", int(args.events))
    if args.seed is not None:
        document = document.replace("run", "seed", int(args.seed))
    scenario = document.to_scenario()
    tools = _tools_for(scenario)
    correlator = closed_form_correlator(
        tools.gaussians, scenario.species, tools.tau, tools.pulse_phase
    )
    if args.settings is not None:
        chosen = _settings_from_um(document, args.settings)
    else:
        chosen = optimize_settings(
            correlator,
            seed_settings(
                tools.gaussians, scenario.species, tools.tau, tools.pulse_phase
            ),
        ).settings
    mode = document.get("interferometer", "mode")
    config = RunConfig(
        events_per_setting=document.events,
        seed=document.seed,
        mode=mode,
        settings=chosen,
    )
    table = run_events(correlator, config)
    estimate = estimate_chsh(table)

    inter = document.values["interferometer"]
    rows = []
    pair_names = ("ab", "ab_prime", "a_prime_b", "a_prime_b_prime")
    for i, (name, (x, y, _sign)) in enumerate(zip(pair_names, chosen.pairs())):
        kept = table.kept(i)
        rows.append(
            {
                "source": f"montecarlo_{name}",
                "ell1_um": x.ell * 1e6,
                "ell2_um": y.ell * 1e6,
                "tau_s": tools.tau,
                "theta1_deg": inter["theta1_deg"],
                "theta2_deg": inter["theta2_deg"],
                "switch_mode": mode,
                "method": "montecarlo",
                "events": config.events_per_setting,
                "seed": config.seed,
                "discarded": table.discarded[i],
                "P_pp": table.counts[i][0] / kept,
                "P_pm": table.counts[i][1] / kept,
                "P_mp": table.counts[i][2] / kept,
                "P_mm": table.counts[i][3] / kept,
                "E": estimate.e_values[i],
                "stderr": estimate.e_stderr[i],
            }
        )
    rows.append(
        {
            "source": "montecarlo_summary",
            "tau_s": tools.tau,
            "switch_mode": mode,
            "method": "montecarlo",
            "events": config.events_per_setting,
            "seed": config.seed,
            "S": estimate.s_value,
            "V": estimate.outcome.visibility,
            "stderr": estimate.stderr,
        }
    )
    _write_csv(stdout, RESULT_COLUMNS, rows)
    stderr.write(
        f"S_hat = {estimate.s_value:.6f} +- {estimate.stderr:.6f}\n"
        f"violated = {_format_cell(estimate.outcome.violated)}\n"
        f"events per setting = {config.events_per_setting}, seed = {config.seed}, "
        f"mode = {mode}\n"
    )
    return 0


# -------------------------------------------------------------- feasibility


def cmd_feasibility(args, stdout, stderr) -> int:
    document = load_config(args.config)
    if args.sweep != "tau":
        raise ConfigError(f"only --sweep tau is supported, got {args.sweep!r}")
    if args.steps < 2:
        raise ConfigError(f"sweep needs steps >= 2, got {args.steps}")
    if not (math.isfinite(args.start) and math.isfinite(args.stop)):
        raise ConfigError("sweep range must be finite")
    if args.start < 0 or args.stop <= args.start:
        raise ConfigError("sweep range must satisfy 0 <= start < stop")
    scenario = document.to_scenario()
    scales = scales_from_scenario(scenario)

    rows = []
    for tau in np.linspace(args.start, args.stop, args.steps):
        tau = float(tau)
        report = feasible(scales, tau)
        rows.append(
            {
                "tau_s": tau,
                "dispersion_product": report.product,
                "visibility": visibility(scales, tau),
                "lambda_ratio": report.lambda_ratio,
                "feasible": report.feasible,
                "periods_above_threshold": periods_above_threshold(scales, tau),
            }
        )
    _write_csv(stdout, FEASIBILITY_COLUMNS, rows)

    threshold = 1.0 / math.sqrt(2.0)

    def above(tau: float) -> bool:
        return visibility(scales, tau) > threshold

    if above(args.start if args.start > 0 else 1e-12) and not above(args.stop):
        lo, hi = max(args.start, 1e-12), args.stop
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if above(mid):
                lo = mid
            else:
                hi = mid
        stderr.write(f"visibility crosses 1/sqrt(2) at tau = {0.5 * (lo + hi):.6f} s\n")
    else:
        stderr.write("visibility does not cross 1/sqrt(2) inside the sweep range\n")

    tau0 = scenario.pulses.pulse_separation
    stderr.write(
        f"at tau = {tau0:g} s: visibility = {visibility(scales, tau0):.6f}, "
        f"fringe periods above threshold = {periods_above_threshold(scales, tau0):.3f}\n"
    )

    stability = phase_stability(scenario, relative_errors=args.stability_rel)
    stderr.write(
        f"phase stability at relative error {args.stability_rel:g} "
        f"(budget {stability.budget:g} rad):\n"
    )
    for name in sorted(stability.drifts):
        verdict = "pass" if stability.passes[name] else "FAIL"
        stderr.write(
            f"  {name}: drift {stability.drifts[name]:.3e} rad  {verdict}\n"
        )
    stderr.write(
        f"  total (quadrature sum): {stability.total:.3e} rad  "
        f"{'pass' if stability.total <= stability.budget else 'FAIL'}\n"
    )
    stderr.write(
        f"  common-mode field drift: {stability.common_mode_field_drift:.1e} rad "
        "(base field and resonance position move together)\n"
    )

    if args.source_model_check:
        from .correlation import correlate_quadrature as _quad

        tools = _tools_for(scenario)
        half = 0.5 * tau0 * scales.v_rel
        pair = DtePair(
            distribution=distribution_from_scenario(scenario),
            tau=tau0,
            phi_tau=tools.pulse_phase,
            species=scenario.species,
        )
        # scan a few phases at the envelope center to recover the fringe
        # amplitude of the true two-pulse source
        lam = scales.lambda_bar_rel
        values = []
        for k in range(8):
            shift = lam * 2.0 * math.pi * k / 8.0
            result = _quad(
                pair,
                InterferometerSetting(ell=half + shift),
                InterferometerSetting(ell=-half),
            )
            values.append(result.e_value)
        phases = np.exp(-2j * np.pi * np.arange(8) / 8.0)
        amplitude = float(2.0 * abs(np.dot(values, phases)) / 8.0)
        gaussian_v = visibility(scales, tau0)
        stderr.write(
            f"two-pulse source fringe amplitude at center: {amplitude:.6f} "
            f"(Gaussian-model visibility {gaussian_v:.6f}); "
            f"violation needs > {threshold:.6f}\n"
        )
    return 0


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtebell",
        description="Dissociation-time-entanglement Bell test toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("config", nargs="?", default=None,
                       help="config file (defaults to the bundled scenario)")

    p_scales = sub.add_parser("scales", help="dispersion times, fringe scales, visibility")
    add_config(p_scales)
    p_scales.add_argument("--json", action="store_true", help="machine-readable output")
    p_scales.set_defaults(func=cmd_scales)

    p_scan = sub.add_parser("scan", help="correlation scan along one axis (CSV)")
    add_config(p_scan)
    p_scan.add_argument("--axis", required=True, choices=_SCAN_AXES)
    p_scan.add_argument("--start", required=True, type=float,
                        help="first grid value (um for ell axes, s for tau, mG for field)")
    p_scan.add_argument("--stop", required=True, type=float)
    p_scan.add_argument("--steps", required=True, type=int)
    p_scan.add_argument("--method", default="closed", choices=("closed", "quad"))
    p_scan.set_defaults(func=cmd_scan)

    p_bell = sub.add_parser("bell", help="CHSH verdict (CSV + summary)")
    add_config(p_bell)
    group = p_bell.add_mutually_exclusive_group(required=True)
    group.add_argument("--optimize", action="store_true",
                       help="seed from the fringe phase and optimize the four lengths")
    group.add_argument("--settings", type=float, nargs=4, metavar=("A", "AP", "B", "BP"),
                       help="four arm lengths in um, CHSH order a a' b b'")
    p_bell.add_argument("--tau", type=float, default=None,
                        help="override the pulse separation, s")
    p_bell.set_defaults(func=cmd_bell)

    p_mc = sub.add_parser("montecarlo", help="finite-statistics run (CSV + summary)")
    add_config(p_mc)
    p_mc.add_argument("--events", type=int, default=None, help="override run.events")
    p_mc.add_argument("--seed", type=int, default=None, help="override run.seed")
    p_mc.add_argument("--settings", type=float, nargs=4, metavar=("A", "AP", "B", "BP"),
                      help="four arm lengths in um (default: optimized)")
    p_mc.set_defaults(func=cmd_montecarlo)

    p_feas = sub.add_parser("feasibility", help="violation frontier sweep (CSV + report)")
    add_config(p_feas)
    p_feas.add_argument("--sweep", default="tau", help="sweep axis (only tau)")
    p_feas.add_argument("--start", type=float, default=0.0)
    p_feas.add_argument("--stop", type=float, default=3.0)
    p_feas.add_argument("--steps", type=int, default=61)
    p_feas.add_argument("--stability-rel", type=float, default=1e-5,
                        help="relative parameter reproducibility for the drift report")
    p_feas.add_argument("--source-model-check", action="store_true",
                        help="also compute the true two-pulse source fringe amplitude "
                             "(slow quadrature)")
    p_feas.set_defaults(func=cmd_feasibility)
    return parser


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, stdout, stderr)
    except (ConfigError, BelowThresholdError) as exc:
        stderr.write(f"error: {exc}\n")
        return 2
    except (ValidationError, QuadratureError) as exc:
        stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
