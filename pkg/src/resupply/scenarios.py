"""Launch-delay model, scenario sampling, and per-scenario launch timing.

Delays follow a doubly truncated exponential distribution on
``[0, max_delay]`` days.  Equiprobable scenario sets are drawn by inverse
transform sampling from a counter-based uniform stream (numpy Philox keyed
by the seed), so a (seed, count, launch-count) triple pins the scenario set
byte for byte across runs and platforms.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

__all__ = [
    "TruncExpCdf",
    "Scenario",
    "ScenarioSet",
    "LaunchTimeline",
    "TimeWindows",
    "DegenerateSamples",
    "OutOfRange",
    "HorizonExceeded",
    "fit_delay_cdf",
    "inverse_transform",
    "sample_scenario_set",
    "build_time_windows",
    "load_delay_samples",
]

MIN_RATE = 1e-6


class DegenerateSamples(ValueError):
    """Raised when delay samples cannot identify a rate (e.g. all zero)."""


class OutOfRange(ValueError):
    """Raised when a delay sample falls outside [0, max_delay]."""


class HorizonExceeded(ValueError):
    """Raised when a realized launch time falls outside the network horizon."""


@dataclass(frozen=True)
class TruncExpCdf:
    """Truncated exponential delay distribution on [0, max_delay] days.

    ``rate=math.inf`` denotes the degenerate point mass at zero delay
    (the deterministic no-delay limit).
    """

    rate: float
    max_delay: float = 90.0

    def __post_init__(self):
        if not (self.rate > 0.0):
            raise ValueError(f"rate must be positive, got {self.rate}")
        if not (self.max_delay > 0.0):
            raise ValueError(f"max_delay must be positive, got {self.max_delay}")

    @property
    def is_point_mass(self) -> bool:
        return math.isinf(self.rate)

    def cdf(self, d: float) -> float:
        """F(d) = (1 - exp(-rate*d)) / (1 - exp(-rate*max_delay)), clamped outside."""
        if self.is_point_mass:
            return 1.0 if d >= 0.0 else 0.0
        if d <= 0.0:
            return 0.0
        if d >= self.max_delay:
            return 1.0
        denom = -math.expm1(-self.rate * self.max_delay)
        return -math.expm1(-self.rate * d) / denom

    def mean(self) -> float:
        """Mean of the truncated distribution: 1/rate - max/(exp(rate*max) - 1)."""
        if self.is_point_mass:
            return 0.0
        lam, t = self.rate, self.max_delay
        return 1.0 / lam - t / math.expm1(lam * t)

    def log_likelihood(self, samples: Sequence[float]) -> float:
        if self.is_point_mass:
            raise ValueError("log-likelihood undefined for the point-mass limit")
        lam, t = self.rate, self.max_delay
        n = len(samples)
        return n * math.log(lam) - lam * float(np.sum(samples)) - n * math.log(-math.expm1(-lam * t))


@dataclass(frozen=True)
class Scenario:
    """One realization of per-launch delays, in whole days."""

    scenario_id: int
    delays: tuple[int, ...]
    probability: float

    def __post_init__(self):
        if not (0.0 < self.probability <= 1.0):
            raise ValueError(f"probability must be in (0, 1], got {self.probability}")
        if any(d < 0 for d in self.delays):
            raise ValueError("delays must be nonnegative")


@dataclass(frozen=True)
class ScenarioSet:
    """Equiprobable collection of delay scenarios."""

    scenarios: tuple[Scenario, ...]
    seed: int
    role: str = "operating"

    def __post_init__(self):
        if self.role not in ("operating", "evaluation"):
            raise ValueError(f"role must be operating|evaluation, got {self.role!r}")
        if not self.scenarios:
            raise ValueError("scenario set must not be empty")
        counts = {len(s.delays) for s in self.scenarios}
        if len(counts) != 1:
            raise ValueError("all scenarios must share the same launch count")
        total = math.fsum(s.probability for s in self.scenarios)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"scenario probabilities sum to {total}, expected 1")

    def __len__(self) -> int:
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)

    @property
    def n_launches(self) -> int:
        return len(self.scenarios[0].delays)

    def delays_matrix(self) -> np.ndarray:
        """(n_scenarios, n_launches) integer delay matrix."""
        return np.array([s.delays for s in self.scenarios], dtype=int)

    def to_json(self) -> str:
        payload = {
            "seed": self.seed,
            "role": self.role,
            "scenarios": [
                {"id": s.scenario_id, "delays": list(s.delays), "p": s.probability}
                for s in self.scenarios
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSet":
        payload = json.loads(text)
        scenarios = tuple(
            Scenario(int(s["id"]), tuple(int(d) for d in s["delays"]), float(s["p"]))
            for s in payload["scenarios"]
        )
        return cls(scenarios=scenarios, seed=int(payload["seed"]), role=payload["role"])


def fit_delay_cdf(delay_samples: Sequence[float], max_delay: float = 90.0) -> TruncExpCdf:
    """Maximum-likelihood rate for the truncated exponential on [0, max_delay].

    The rate solves the score equation ``truncated_mean(rate) == sample_mean``
    by bracketed root-finding.  If the sample mean is at or above the
    distribution's supremum mean (max_delay / 2, the rate -> 0 limit), a
    minimal rate of 1e-6 is returned instead of diverging.

    Raises
    ------
    DegenerateSamples
        All samples are zero (the likelihood increases without bound).
    OutOfRange
        Any sample lies outside [0, max_delay].
    """
    samples = np.asarray(delay_samples, dtype=float)
    if samples.size < 2:
        raise DegenerateSamples("need at least 2 delay samples to fit a rate")
    if np.any(samples < 0.0) or np.any(samples > max_delay):
        bad = samples[(samples < 0.0) | (samples > max_delay)][0]
        raise OutOfRange(f"delay sample {bad} outside [0, {max_delay}]")
    mean = float(samples.mean())
    if mean == 0.0:
        raise DegenerateSamples("all delay samples are zero; rate is unbounded")

    sup_mean = TruncExpCdf(MIN_RATE, max_delay).mean()
    if mean >= sup_mean:
        # Mass piled at the truncation point; the score equation has no
        # positive root, so return the flattest admissible distribution.
        import warnings

        warnings.warn(
            f"sample mean {mean:.3f} >= truncated-exponential limit {sup_mean:.3f}; "
            f"returning minimal rate {MIN_RATE}",
            RuntimeWarning,
            stacklevel=2,
        )
        return TruncExpCdf(MIN_RATE, max_delay)

    def score(lam: float) -> float:
        return TruncExpCdf(lam, max_delay).mean() - mean

    lo = MIN_RATE
    hi = 1.0
    while score(hi) > 0.0:
        hi *= 2.0
        if hi > 1e12:  # pragma: no cover - mean would have to be ~0
            break
    rate = optimize.brentq(score, lo, hi, rtol=1e-9, maxiter=200)
    return TruncExpCdf(float(rate), max_delay)


def inverse_transform(cdf: TruncExpCdf, u: float) -> float:
    """Quantile of the truncated exponential: F(inverse_transform(u)) == u.

    Closed form: d = -ln(1 - u * (1 - exp(-rate*max))) / rate.
    """
    if not (0.0 <= u < 1.0):
        raise ValueError(f"u must lie in [0, 1), got {u}")
    if cdf.is_point_mass:
        return 0.0
    denom = -math.expm1(-cdf.rate * cdf.max_delay)
    return -math.log1p(-u * denom) / cdf.rate


def _uniform_stream(seed: int, n_scenarios: int, n_launches: int) -> np.ndarray:
    """Counter-based uniforms: numpy Philox(key=seed), shape (scenarios, launches)."""
    gen = np.random.Generator(np.random.Philox(key=seed))
    return gen.random((n_scenarios, n_launches))


def sample_scenario_set(
    cdf: TruncExpCdf | Sequence[TruncExpCdf],
    n_launches: int,
    n_scenarios: int,
    seed: int,
    role: str = "operating",
) -> ScenarioSet:
    """Draw an equiprobable scenario set of independent per-launch delays.

    Delays are rounded to whole days (half away from zero) to match the
    one-day planning grid; each scenario carries probability 1/n_scenarios.
    Passing a sequence of distributions (one per launch) applies a different
    delay model to each launch column over the same uniform stream.
    """
    if n_scenarios < 1:
        raise ValueError("n_scenarios must be >= 1")
    if n_launches < 1:
        raise ValueError("n_launches must be >= 1")
    if isinstance(cdf, TruncExpCdf):
        cdfs = [cdf] * n_launches
    else:
        cdfs = list(cdf)
        if len(cdfs) != n_launches:
            raise ValueError(f"expected {n_launches} per-launch distributions, got {len(cdfs)}")
    uniforms = _uniform_stream(seed, n_scenarios, n_launches)
    days = np.zeros((n_scenarios, n_launches), dtype=int)
    for col, col_cdf in enumerate(cdfs):
        if col_cdf.is_point_mass:
            continue
        denom = -math.expm1(-col_cdf.rate * col_cdf.max_delay)
        cont = -np.log1p(-uniforms[:, col] * denom) / col_cdf.rate
        days[:, col] = np.floor(cont + 0.5).astype(int)
    p = 1.0 / n_scenarios
    scenarios = tuple(
        Scenario(k, tuple(int(d) for d in days[k]), p) for k in range(n_scenarios)
    )
    return ScenarioSet(scenarios=scenarios, seed=seed, role=role)


@dataclass(frozen=True)
class LaunchTimeline:
    """Nominal launch days plus the per-scenario realized days."""

    nominal_times: tuple[int, ...]

    def __post_init__(self):
        if not self.nominal_times:
            raise ValueError("timeline needs at least one launch")
        if list(self.nominal_times) != sorted(self.nominal_times):
            raise ValueError("nominal launch days must be nondecreasing")

    @property
    def n_launches(self) -> int:
        return len(self.nominal_times)

    def realized_times(self, scenario: Scenario) -> tuple[int, ...]:
        """zeta_k(l) = nominal_l + delay_kl for launches l = 1..L."""
        if len(scenario.delays) != self.n_launches:
            raise ValueError(
                f"scenario has {len(scenario.delays)} delays, timeline has "
                f"{self.n_launches} launches"
            )
        return tuple(t + d for t, d in zip(self.nominal_times, scenario.delays))


@dataclass
class TimeWindows:
    """Per-scenario open days for every scheduled arc.

    Launch arcs open exactly at the scenario's realized launch day; return
    arcs open at their fixed departure day; holdover arcs are always open
    (``open_days`` returns None for them, meaning the full horizon).
    """

    timeline: LaunchTimeline
    scenario_set: ScenarioSet
    _launch_days: dict[tuple[int, int], int] = field(default_factory=dict)

    def open_days(self, scenario_id: int, arc) -> tuple[int, ...] | None:
        if arc.kind == "launch":
            return (self._launch_days[(scenario_id, arc.launch_index)],)
        if arc.kind == "return":
            return (arc.scheduled_day,)
        return None  # holdover: always open

    def is_open(self, scenario_id: int, arc, day: int) -> bool:
        days = self.open_days(scenario_id, arc)
        return True if days is None else day in days

    def launch_day(self, scenario_id: int, launch_index: int) -> int:
        return self._launch_days[(scenario_id, launch_index)]


def build_time_windows(
    timeline: LaunchTimeline, network, scenario_set: ScenarioSet
) -> TimeWindows:
    """Map every (scenario, arc) pair to its open day set.

    Raises HorizonExceeded if any realized launch day (or its arrival)
    falls outside the network horizon.
    """
    horizon_end = network.horizon_end
    windows = TimeWindows(timeline=timeline, scenario_set=scenario_set)
    flight = {arc.launch_index: arc.flight_time for arc in network.arcs if arc.kind == "launch"}
    for scenario in scenario_set:
        realized = timeline.realized_times(scenario)
        for l, day in enumerate(realized):
            arrival = day + flight.get(l, 0)
            if day < 0 or arrival > horizon_end:
                raise HorizonExceeded(
                    f"scenario {scenario.scenario_id} launch {l + 1} realized at day "
                    f"{day} (arrival {arrival}) outside horizon [0, {horizon_end}]"
                )
            windows._launch_days[(scenario.scenario_id, l)] = day
    return windows


def load_delay_samples(path, max_planning_days: float = 90.0) -> list[float]:
    """Read delay samples from a CSV with header days_to_planned_launch,delay_days.

    Only rows whose days_to_planned_launch is <= max_planning_days are used,
    restricting the fit to the short-horizon planning regime.
    """
    samples: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"days_to_planned_launch", "delay_days"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(
                f"delay CSV must have columns {sorted(required)}, got {reader.fieldnames}"
            )
        for row in reader:
            if float(row["days_to_planned_launch"]) <= max_planning_days:
                samples.append(float(row["delay_days"]))
    return samples
