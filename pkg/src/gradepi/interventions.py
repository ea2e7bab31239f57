"""Outbreak-control policies and the control modifier they compose into.

Hard mode draws Bernoulli outcomes and keeps integer "until" days per agent
or venue. Relaxed mode tracks expected fractions instead so the simulator
stays differentiable; the policy effects themselves are treated as
constants with respect to disease parameters.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .errors import InvalidSpec
from .population import VENUE_KINDS, ContactGraph

if TYPE_CHECKING:
    from .epi.state import EpidemicState

SCHOOL = VENUE_KINDS.index("school")
HARD, RELAXED = "hard", "relaxed"


def _check_rate(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise InvalidSpec(f"{name} must lie in [0, 1], got {value}")


def _check_int(name: str, value, low: int, high: int | None = None) -> None:
    if isinstance(value, bool) or int(value) != value:
        raise InvalidSpec(f"{name} must be an integer number of days")
    if value < low or (high is not None and value > high):
        bound = f"[{low}, {high}]" if high is not None else f">= {low}"
        raise InvalidSpec(f"{name} must be {bound}, got {value}")


@dataclass
class ICCPolicy:
    enabled: bool = False
    compliance_rate: float = 0.7
    isolation_days: int = 4
    detection_delay_days: int = 2
    detection_probability: float = 0.8

    def validate(self) -> None:
        _check_rate("icc.compliance_rate", self.compliance_rate)
        _check_rate("icc.detection_probability", self.detection_probability)
        _check_int("icc.isolation_days", self.isolation_days, 4)
        _check_int("icc.detection_delay_days", self.detection_delay_days, 0)


@dataclass
class QECPolicy:
    enabled: bool = False
    tracing_rate: float = 0.5
    quarantine_days: int = 14

    def validate(self) -> None:
        _check_rate("qec.tracing_rate", self.tracing_rate)
        _check_int("qec.quarantine_days", self.quarantine_days, 7, 14)


@dataclass
class SCPolicy:
    enabled: bool = False
    closure_days: int = 7

    def validate(self) -> None:
        _check_int("sc.closure_days", self.closure_days, 7, 14)


@dataclass
class VCPolicy:
    enabled: bool = False
    daily_vaccination_rate: float = 0.02
    active_days: int = 14

    def validate(self) -> None:
        _check_rate("vc.daily_vaccination_rate", self.daily_vaccination_rate)
        _check_int("vc.active_days", self.active_days, 1)


@dataclass
class PolicySet:
    """All four measures. Detection settings live on ``icc`` and are shared."""

    icc: ICCPolicy = field(default_factory=ICCPolicy)
    qec: QECPolicy = field(default_factory=QECPolicy)
    sc: SCPolicy = field(default_factory=SCPolicy)
    vc: VCPolicy = field(default_factory=VCPolicy)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for p in (self.icc, self.qec, self.sc, self.vc):
            p.validate()

    @property
    def any_enabled(self) -> bool:
        return any(p.enabled for p in (self.icc, self.qec, self.sc, self.vc))

    def detection_lag(self, theta_ei: float) -> int:
        """First whole-day lag at which an infection can be detected."""
        return max(1, math.ceil(theta_ei + self.icc.detection_delay_days - 1e-9))

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in ("icc", "qec", "sc", "vc")}

    @classmethod
    def from_dict(cls, data: dict | None) -> "PolicySet":
        data = dict(data or {})
        kinds = {"icc": ICCPolicy, "qec": QECPolicy, "sc": SCPolicy, "vc": VCPolicy}
        unknown = set(data) - set(kinds)
        if unknown:
            raise InvalidSpec(f"unknown policies {sorted(unknown)}")
        built = {}
        for name, kind in kinds.items():
            table = dict(data.get(name, {}))
            allowed = {f.name for f in fields(kind)}
            bad = set(table) - allowed
            if bad:
                raise InvalidSpec(f"policies.{name}: unknown keys {sorted(bad)}")
            built[name] = kind(**table)
        return cls(**built)


# --- state --------------------------------------------------------------------

@dataclass
class PolicyState:
    """Per-run policy bookkeeping.

    "until" arrays hold the first day on which the measure no longer applies;
    a measure is active on day ``t`` when ``t < until``. Relaxed-mode fields
    hold expected masses per day.
    """

    detected: np.ndarray
    detection_day: np.ndarray
    isolated_until: np.ndarray
    quarantined_until: np.ndarray
    closed_until: np.ndarray
    isolation_spans: list[tuple[int, int, int]] = field(default_factory=list)
    quarantine_spans: list[tuple[int, int, int]] = field(default_factory=list)
    closure_spans: list[tuple[int, int, int]] = field(default_factory=list)
    new_detected: np.ndarray | None = None
    det_mass: list[np.ndarray] = field(default_factory=list)
    quarantine_mass: list[np.ndarray] = field(default_factory=list)
    closure_mass: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def empty(cls, n_agents: int, n_venues: int) -> "PolicyState":
        """Fresh state for day 0; relaxed mass lists are indexed by day."""
        return cls(
            detected=np.zeros(n_agents, dtype=bool),
            detection_day=np.full(n_agents, -1, dtype=np.int64),
            isolated_until=np.zeros(n_agents, dtype=np.int64),
            quarantined_until=np.zeros(n_agents, dtype=np.int64),
            closed_until=np.zeros(n_venues, dtype=np.int64),
            new_detected=np.zeros(n_agents),
            det_mass=[np.zeros(n_agents)],
            quarantine_mass=[np.zeros(n_agents)],
            closure_mass=[np.zeros(n_venues)],
        )

    def log(self) -> dict[str, list[tuple[int, int, int]]]:
        """Spans as ``(index, start_day, end_day_exclusive)``."""
        return {
            "isolation": list(self.isolation_spans),
            "quarantine": list(self.quarantine_spans),
            "closure": list(self.closure_spans),
        }


@dataclass
class ControlModifier:
    """Multiplicative factors in [0, 1]; ``None`` means identity."""

    susceptibility: np.ndarray | None = None
    infector: np.ndarray | None = None
    venue: np.ndarray | None = None
    infector_lag: np.ndarray | None = None

    def resolved(self, n_agents: int, n_venues: int) -> "ControlModifier":
        def fill(x, n):
            return np.ones(n) if x is None else x

        return ControlModifier(
            fill(self.susceptibility, n_agents), fill(self.infector, n_agents),
            fill(self.venue, n_venues), self.infector_lag,
        )


def _combine(a: np.ndarray | None, b: np.ndarray | None) -> np.ndarray | None:
    if a is None:
        return None if b is None else np.asarray(b, dtype=np.float64).copy()
    if b is None:
        return a
    if a.shape != b.shape:
        raise InvalidSpec(f"cannot combine control factors of shapes {a.shape} and {b.shape}")
    return a * b


def compose_control_modifier(contributions: Iterable[ControlModifier]) -> ControlModifier:
    out = ControlModifier()
    for c in contributions:
        for name in ("susceptibility", "infector", "venue", "infector_lag"):
            part = getattr(c, name)
            if part is not None and (np.any(part < 0) or np.any(part > 1)):
                raise InvalidSpec(f"control factor {name} outside [0, 1]")
            setattr(out, name, _combine(getattr(out, name), part))
    return out


def _window_sum(history: list[np.ndarray], day: int, length: int) -> np.ndarray | None:
    """Sum of entries started in ``(day - length, day]``."""
    rows = history[max(0, day - length + 1): day + 1]
    return np.sum(rows, axis=0) if rows else None


def _venue_flags(graph: ContactGraph, per_agent: np.ndarray) -> np.ndarray:
    return np.bincount(graph.e_venue, weights=per_agent[graph.e_agent], minlength=graph.n_venues)


def _contact_strength(graph: ContactGraph, per_agent: np.ndarray) -> np.ndarray:
    """Per agent: total mass of *other* members across all shared venues."""
    pressure = _venue_flags(graph, per_agent)
    edge = pressure[graph.e_venue] - per_agent[graph.e_agent]
    return np.bincount(graph.e_agent, weights=edge, minlength=graph.n_agents)


# --- measures ---------------------------------------------------------------------

def detect_cases(state: "EpidemicState", policy: PolicySet, rng: np.random.Generator | None,
                 mode: str = HARD) -> PolicyState:
    """Mark infections reaching the detection lag; each gets one detection draw."""
    ps = state.policy
    t = state.day
    lag0 = policy.detection_lag(state.theta_ei)
    prob = policy.icc.detection_probability
    if mode == HARD:
        u = rng.random(state.n_agents)
        itime = state.infection_time
        eligible = (itime >= 0) & (t - itime == lag0) & ~ps.detected
        new = eligible & (u < prob)
        ps.detected |= new
        ps.detection_day[new] = t
        ps.new_detected = new.astype(np.float64)
    else:
        cohort = t - lag0
        mass = state.history[cohort].data if 0 <= cohort < len(state.history) else None
        new = np.zeros(state.n_agents) if mass is None else prob * np.clip(mass, 0.0, 1.0)
        ps.new_detected = new
        ps.det_mass.append(new)
    return ps


def apply_icc(policy_state: PolicyState, policy: PolicySet, rng: np.random.Generator | None,
              mode: str = HARD, day: int = 0, horizon: int | None = None,
              theta_ei: float | None = None) -> ControlModifier:
    """Isolation of complying detected cases for ``isolation_days`` from detection.

    In relaxed mode the effect is returned as a per-lag infector factor, which
    needs ``horizon`` and ``theta_ei``.
    """
    icc = policy.icc
    if not icc.enabled:
        return ControlModifier()
    ps = policy_state
    if mode == HARD:
        u = rng.random(ps.detected.shape[0])
        starts = (ps.new_detected > 0) & (u < icc.compliance_rate)
        for a in np.flatnonzero(starts):
            end = day + icc.isolation_days
            ps.isolated_until[a] = end
            ps.isolation_spans.append((int(a), day, end))
        active = ps.isolated_until > day
        return ControlModifier(infector=np.where(active, 0.0, 1.0))
    if horizon is None or theta_ei is None:
        raise InvalidSpec("relaxed isolation needs horizon and theta_ei")
    lag0 = policy.detection_lag(theta_ei)
    factor = np.ones(horizon + 1)
    cut = icc.detection_probability * icc.compliance_rate
    factor[lag0: lag0 + icc.isolation_days] = 1.0 - cut
    return ControlModifier(infector_lag=factor)


def apply_qec(policy_state: PolicyState, graph: ContactGraph, policy: PolicySet,
              rng: np.random.Generator | None, mode: str = HARD, day: int = 0,
              vaccinated: np.ndarray | None = None) -> ControlModifier:
    """Quarantine traced unvaccinated co-members of newly detected cases."""
    qec = policy.qec
    if not qec.enabled:
        return ControlModifier()
    ps = policy_state
    n = graph.n_agents
    vacc = np.zeros(n) if vaccinated is None else np.asarray(vaccinated, dtype=np.float64)
    strength = _contact_strength(graph, ps.new_detected)
    if mode == HARD:
        u = rng.random(n)
        exposed = strength > 0.5
        starts = exposed & (vacc < 0.5) & (ps.quarantined_until <= day) & (u < qec.tracing_rate)
        for a in np.flatnonzero(starts):
            end = day + qec.quarantine_days
            ps.quarantined_until[a] = end
            ps.quarantine_spans.append((int(a), day, end))
        active = ps.quarantined_until > day
        factor = np.where(active, 0.0, 1.0)
        return ControlModifier(susceptibility=factor, infector=factor.copy())
    current = _window_sum(ps.quarantine_mass, day - 1, qec.quarantine_days - 1)
    current = np.zeros(n) if current is None else current
    new = qec.tracing_rate * (1.0 - vacc) * np.minimum(1.0, strength) * (1.0 - current)
    ps.quarantine_mass.append(new)
    factor = np.clip(1.0 - (current + new), 0.0, 1.0)
    return ControlModifier(susceptibility=factor, infector=factor.copy())


def apply_school_closure(policy_state: PolicyState, graph: ContactGraph, policy: PolicySet,
                         mode: str = HARD, day: int = 0) -> ControlModifier:
    """Close any school with a newly detected member for ``closure_days``."""
    sc = policy.sc
    if not sc.enabled:
        return ControlModifier()
    ps = policy_state
    is_school = graph.venue_kind == SCHOOL
    hits = _venue_flags(graph, ps.new_detected) * is_school
    if mode == HARD:
        starts = (hits > 0.5) & (ps.closed_until <= day)
        for v in np.flatnonzero(starts):
            end = day + sc.closure_days
            ps.closed_until[v] = end
            ps.closure_spans.append((int(v), day, end))
        return ControlModifier(venue=np.where(ps.closed_until > day, 0.0, 1.0))
    current = _window_sum(ps.closure_mass, day - 1, sc.closure_days - 1)
    current = np.zeros(graph.n_venues) if current is None else current
    new = np.minimum(1.0, hits) * (1.0 - current)
    ps.closure_mass.append(new)
    return ControlModifier(venue=np.clip(1.0 - (current + new), 0.0, 1.0))


def apply_vaccination_campaign(state: "EpidemicState", policy_state: PolicyState,
                               policy: PolicySet, rng: np.random.Generator | None,
                               mode: str = HARD, region: np.ndarray | None = None) -> np.ndarray:
    """Return vaccination status for the next day.

    A region is triggered while it holds a detection from the last
    ``active_days`` days; its unvaccinated agents are then vaccinated with
    probability ``daily_vaccination_rate`` per day.
    """
    vc = policy.vc
    vacc = np.asarray(state.vaccinated, dtype=np.float64)
    if not vc.enabled:
        return vacc
    ps = policy_state
    t = state.day
    n = vacc.shape[0]
    region = np.zeros(n, dtype=np.int64) if region is None else region
    n_regions = int(region.max()) + 1 if n else 0
    if mode == HARD:
        u = rng.random(n)
        recent = ps.detected & (ps.detection_day > t - vc.active_days)
        active = np.bincount(region[recent], minlength=n_regions) > 0
        take = active[region] & (vacc < 0.5) & (u < vc.daily_vaccination_rate)
        out = vacc.copy()
        out[take] = 1.0
        return out
    recent = _window_sum(ps.det_mass, len(ps.det_mass) - 1, vc.active_days)
    if recent is None:
        return vacc
    activity = np.minimum(1.0, np.bincount(region, weights=recent, minlength=n_regions))
    return vacc + (1.0 - vacc) * vc.daily_vaccination_rate * activity[region]


def daily_streams(rng: np.random.Generator | None) -> list[np.random.Generator | None]:
    """Four child generators (detection, ICC, QEC, VC) for one day.

    The parent always advances by the same amount, so runs with different
    policy settings stay on common random numbers.
    """
    if rng is None:
        return [None] * 4
    return [np.random.default_rng(int(s)) for s in rng.integers(0, 2**63 - 1, size=4)]


def policy_day(state: "EpidemicState", graph: ContactGraph, policy: PolicySet,
               streams: list[np.random.Generator | None], mode: str,
               horizon: int) -> ControlModifier:
    """Detection followed by ICC, QEC and SC for ``state.day``; returns the composed modifier."""
    detect_cases(state, policy, streams[0], mode)
    parts = [
        apply_icc(state.policy, policy, streams[1], mode, state.day, horizon, state.theta_ei),
        apply_qec(state.policy, graph, policy, streams[2], mode, state.day, state.vaccinated),
        apply_school_closure(state.policy, graph, policy, mode, state.day),
    ]
    return compose_control_modifier(parts)
