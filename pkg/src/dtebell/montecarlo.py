"""Finite-statistics simulation of CHSH runs.

Events are drawn per setting pair from the model probabilities with a
counter-based RNG (numpy Philox) keyed as key = [seed, pair_index], so
every setting pair owns an independent, reproducible stream and runs
parallelize without coordination.  In Switched mode each event consumes
one uniform (the port draw); in BeamSplitter mode two (discard first,
then port), so sequential single-event sampling and the vectorized run
consume the stream identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .bell import TSIRELSON_BOUND, BellOutcome, ChshSettings
from .correlation import SIGN_PAIRS, CorrelationResult
from .scenario import ValidationError

__all__ = [
    "DISCARDED",
    "MODES",
    "OUTCOMES",
    "ChshEstimate",
    "CountTable",
    "InsufficientDataError",
    "RunConfig",
    "estimate_chsh",
    "multi_dissociation_rate",
    "pair_rng",
    "run",
    "sample_event",
]

OUTCOMES: Tuple[Tuple[int, int], ...] = SIGN_PAIRS
MODES = ("Switched", "BeamSplitter")

# sentinel returned by sample_event for post-selected-out events
DISCARDED = "Discarded"

_CHSH_SIGNS = (1.0, -1.0, 1.0, 1.0)

_MAX_SEED = 2**64


class InsufficientDataError(ValidationError):
    """A setting pair has too few kept events to estimate a correlation."""


@dataclass(frozen=True)
class RunConfig:
    """One finite-statistics CHSH acquisition."""

    events_per_setting: int
    seed: int
    mode: str
    settings: ChshSettings

    def __post_init__(self) -> None:
        if not isinstance(self.events_per_setting, (int, np.integer)):
            raise ValidationError("events_per_setting must be an integer")
        if self.events_per_setting < 1:
            raise ValidationError(
                f"events_per_setting must be >= 1, got {self.events_per_setting}"
            )
        if not isinstance(self.seed, (int, np.integer)):
            raise ValidationError("seed must be an integer")
        if not 0 <= self.seed < _MAX_SEED:
            raise ValidationError(f"seed must fit in 64 bits, got {self.seed}")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not isinstance(self.settings, ChshSettings):
            raise ValidationError("settings must be a ChshSettings")


@dataclass(frozen=True)
class CountTable:
    """Tallies per setting pair, in CHSH order (a,b), (a,b'), (a',b), (a',b').

    counts[i] holds the four port tallies in OUTCOMES order; discarded[i]
    the post-selected-out events of that pair.
    """

    counts: Tuple[Tuple[int, int, int, int], ...]
    discarded: Tuple[int, int, int, int]
    events_per_setting: int
    mode: str
    settings: ChshSettings

    def __post_init__(self) -> None:
        if len(self.counts) != 4 or len(self.discarded) != 4:
            raise ValidationError("CountTable needs tallies for all four setting pairs")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        for i, (row, dropped) in enumerate(zip(self.counts, self.discarded)):
            if len(row) != 4 or any(n < 0 for n in row) or dropped < 0:
                raise ValidationError(f"negative or malformed tally in pair {i}")
            if sum(row) + dropped != self.events_per_setting:
                raise ValidationError(
                    f"pair {i}: kept {sum(row)} + discarded {dropped} "
                    f"!= events_per_setting {self.events_per_setting}"
                )
            if self.mode == "Switched" and dropped != 0:
                raise ValidationError("Switched mode cannot discard events")

    def kept(self, pair_index: int) -> int:
        return sum(self.counts[pair_index])

    def count(self, pair_index: int, outcome: Tuple[int, int]) -> int:
        return self.counts[pair_index][OUTCOMES.index(outcome)]


@dataclass(frozen=True)
class ChshEstimate:
    """CHSH point estimate with multinomial standard errors."""

    outcome: BellOutcome
    s_value: float
    stderr: float
    e_values: Tuple[float, float, float, float]
    e_stderr: Tuple[float, float, float, float]
    n_kept: Tuple[int, int, int, int]


def pair_rng(seed: int, pair_index: int) -> np.random.Generator:
    """The documented per-pair stream: Philox keyed by (seed, pair_index)."""
    key = np.array([seed, pair_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _probability_vector(p: CorrelationResult) -> np.ndarray:
    vec = np.array([p.p[pair] for pair in OUTCOMES], dtype=float)
    total = float(vec.sum())
    if abs(total - 1.0) > 1e-9 or np.any(vec < -1e-12):
        raise ValidationError(f"probabilities not normalized (sum {total})")
    return vec


def sample_event(p: CorrelationResult, mode: str, rng_state: np.random.Generator):
    """One categorical draw over the four outcomes; BeamSplitter mode
    first discards the event with probability 1/2 (independent of the
    outcome), consuming its uniform either way."""
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    vec = _probability_vector(p)
    if mode == "BeamSplitter":
        discard = rng_state.random() < 0.5
        port_u = rng_state.random()
        if discard:
            return DISCARDED
    else:
        port_u = rng_state.random()
    cum = np.cumsum(vec)
    idx = int(np.searchsorted(cum, port_u, side="right"))
    return OUTCOMES[min(idx, 3)]


def run(
    correlator: Callable[[object, object], CorrelationResult], config: RunConfig
) -> CountTable:
    """Simulate all four setting pairs; deterministic given config.

    Correlator errors (validation, quadrature failures) propagate.
    """
    counts = []
    discarded = []
    n = config.events_per_setting
    for index, (x, y, _sign) in enumerate(config.settings.pairs()):
        vec = _probability_vector(correlator(x, y))
        rng = pair_rng(config.seed, index)
        if config.mode == "BeamSplitter":
            u = rng.random((n, 2))
            keep = u[:, 0] >= 0.5
            port_u = u[keep, 1]
        else:
            port_u = rng.random(n)
            keep = np.ones(n, dtype=bool)
        cum = np.cumsum(vec)
        idx = np.minimum(np.searchsorted(cum, port_u, side="right"), 3)
        tally = np.bincount(idx, minlength=4)
        counts.append(tuple(int(t) for t in tally))
        discarded.append(int(n - keep.sum()))
    return CountTable(
        counts=tuple(counts),
        discarded=tuple(discarded),
        events_per_setting=n,
        mode=config.mode,
        settings=config.settings,
    )


def estimate_chsh(counts: CountTable) -> ChshEstimate:
    """Point estimates from tallies.

    E_hat = (n_pp + n_mm - n_pm - n_mp) / n_kept per pair, combined with
    the CHSH signs; var(E_hat) = (1 - E_hat^2)/n_kept (multinomial), and
    the pair errors add in quadrature since the streams are independent.
    The outcome's visibility field carries the lower bound S/(2*sqrt(2))
    -- tallies alone cannot resolve the fringe amplitude.  A finite
    sample can fluctuate past the quantum bound; such an estimate fails
    BellOutcome validation and raises, flagging either absurd luck or a
    broken pipeline.
    """
    e_values = []
    variances = []
    kept_list = []
    for i in range(4):
        n_pp, n_pm, n_mp, n_mm = counts.counts[i]
        kept = n_pp + n_pm + n_mp + n_mm
        if kept < 2:
            raise InsufficientDataError(
                f"setting pair {i} has {kept} kept events; need at least 2"
            )
        e_hat = (n_pp + n_mm - n_pm - n_mp) / kept
        e_values.append(e_hat)
        variances.append((1.0 - e_hat * e_hat) / kept)
        kept_list.append(kept)
    s_signed = sum(sign * e for sign, e in zip(_CHSH_SIGNS, e_values))
    s_value = abs(s_signed)
    stderr = math.sqrt(sum(variances))
    outcome = BellOutcome(
        s_value=s_value,
        visibility=min(1.0, s_value / TSIRELSON_BOUND),
        settings=counts.settings,
    )
    return ChshEstimate(
        outcome=outcome,
        s_value=s_value,
        stderr=stderr,
        e_values=tuple(e_values),
        e_stderr=tuple(math.sqrt(v) for v in variances),
        n_kept=tuple(kept_list),
    )


def multi_dissociation_rate(p_single: float, n_molecules: int) -> float:
    """Probability that more than one molecule dissociates in a shot.

    Binomial tail P(k >= 2) for n_molecules trials at p_single each:
    the fraction of shots the post-selection on single-pair events
    throws away.
    """
    if not 0.0 <= p_single <= 1.0:
        raise ValidationError(f"p_single must be in [0, 1], got {p_single}")
    if not isinstance(n_molecules, (int, np.integer)) or n_molecules < 1:
        raise ValidationError("n_molecules must be a positive integer")
    q = 1.0 - p_single
    return 1.0 - q**n_molecules - n_molecules * p_single * q ** (n_molecules - 1)
