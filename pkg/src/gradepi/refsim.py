"""Object-style reference simulator used as an independent oracle.

Agents are plain objects and every day is a sequential loop over agents and
venues. Nothing numerical is imported from the tensor engine: the
infectiousness profile, the recurrent modulator and the control measures are
re-derived here from the model definition, so agreement between the two is
evidence rather than a tautology. Only input/output types are shared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .epi.modulator import ModulatorWeights
from .epi.params import ATTRIBUTES, DiseaseParams
from .epi.state import EpidemicTrace
from .interventions import PolicySet
from .population import AGE_BAND_EDGES, VENUE_KINDS, ContactGraph, Population

S, E, I, R = "S", "E", "I", "R"


@dataclass
class RefAgent:
    index: int
    age_band: int
    sex: int
    ethnicity: int
    region: int
    vaccinated: bool
    venues: list[int]
    stage: str = S
    infection_day: int | None = None
    detected: bool = False
    detection_day: int | None = None
    isolated_until: int = 0
    quarantined_until: int = 0
    vaccinated_when_infected: bool = False

    def advance(self, day: int, theta_ei: float, theta_ir: float) -> None:
        if self.infection_day is None:
            return
        lag = day - self.infection_day
        new = E if lag < theta_ei else (I if lag < theta_ir else R)
        order = (S, E, I, R)
        if order.index(new) < order.index(self.stage):
            raise AssertionError("stages only move forward")
        self.stage = new


@dataclass
class RefVenue:
    index: int
    kind: int
    members: list[int] = field(default_factory=list)
    closed_until: int = 0


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def profile_value(lag: float, p: DiseaseParams, k: float) -> float:
    """Gamma shape from infectious onset, scaled to 1 at its mode, inside the window."""
    s = lag - p.theta_ei
    if s <= 0:
        return 0.0
    v, lam = p.gamma_shape, p.gamma_scale
    mode = (v - 1.0) * lam
    log_ratio = (v - 1.0) * (math.log(s) - math.log(mode)) - (s - mode) / lam
    window = _sigmoid(k * (lag - p.theta_ei)) * _sigmoid(k * (p.theta_ir - lag))
    return math.exp(log_ratio) * window


class RefModulator:
    """Plain LSTM cell written out gate by gate."""

    def __init__(self, weights: ModulatorWeights):
        self.w = {k: np.array(v, dtype=float) for k, v in weights.arrays.items()}
        self.phi_max = weights.phi_max
        self.scale = weights.input_scale
        size = weights.hidden_size
        self.h = [0.0] * size
        self.c = [0.0] * size

    def _gate(self, g: str, x: float, i: int) -> float:
        total = self.w[f"W_{g}"][i, 0] * x + self.w[f"b_{g}"][i]
        for j, hj in enumerate(self.h):
            total += self.w[f"U_{g}"][i, j] * hj
        return total

    def advance(self, weekly_cases: float, n_agents: int) -> tuple[float, float]:
        x = math.log(1.0 + self.scale * weekly_cases / n_agents)
        size = len(self.h)
        h_new, c_new = [0.0] * size, [0.0] * size
        for i in range(size):
            gi = _sigmoid(self._gate("i", x, i))
            gf = _sigmoid(self._gate("f", x, i))
            go = _sigmoid(self._gate("o", x, i))
            gg = math.tanh(self._gate("g", x, i))
            c_new[i] = gf * self.c[i] + gi * gg
            h_new[i] = go * math.tanh(c_new[i])
        self.h, self.c = h_new, c_new
        r_logit = self.w["b_R"][0] + sum(self.w["W_R"][0, i] * h_new[i] for i in range(size))
        p_logit = self.w["b_phi"][0] + sum(self.w["W_phi"][0, i] * h_new[i] for i in range(size))
        return 2.0 * _sigmoid(r_logit), self.phi_max * _sigmoid(p_logit)


def _age_band(age: int) -> int:
    for i in range(len(AGE_BAND_EDGES) - 1):
        if AGE_BAND_EDGES[i] <= age < AGE_BAND_EDGES[i + 1]:
            return i
    return len(AGE_BAND_EDGES) - 2


def build_world(pop: Population, graph: ContactGraph) -> tuple[list[RefAgent], list[RefVenue]]:
    venues = [RefVenue(v, int(graph.venue_kind[v])) for v in range(graph.n_venues)]
    agents = []
    for a in range(pop.n_agents):
        mine = [int(v) for v in graph.e_venue[graph.agent_offsets[a]:graph.agent_offsets[a + 1]]]
        for v in mine:
            venues[v].members.append(a)
        agents.append(RefAgent(a, _age_band(int(pop.age[a])), int(pop.sex[a]),
                               int(pop.ethnicity[a]), int(pop.region[a]),
                               bool(pop.vaccinated[a]), mine))
    return agents, venues


def run_reference(pop: Population, graph: ContactGraph, params: DiseaseParams,
                  policies: PolicySet | None = None, horizon: int = 70, rng: Any = 0, *,
                  modulator: ModulatorWeights | None = None, restriction: Any = None,
                  gate_sharpness: float = 4.0) -> EpidemicTrace:
    """Simulate one hard-valued epidemic with per-agent Bernoulli draws."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    policies = policies or PolicySet()
    p = params
    agents, venues = build_world(pop, graph)
    n = len(agents)
    kind_ratio = [p.venue_params.rho[k] / p.venue_params.q[k] for k in VENUE_KINDS]
    attr = p.attr_susceptibility.factors
    age_f = [attr["age"][c] for c in ATTRIBUTES["age"]]
    sex_f = [attr["sex"][c] for c in ATTRIBUTES["sex"]]
    eth_f = [attr["ethnicity"][c] for c in ATTRIBUTES["ethnicity"]]
    vac_f = [attr["vaccinated"]["no"], attr["vaccinated"]["yes"]]
    weights = [profile_value(lag, p, gate_sharpness) for lag in range(horizon + 1)]

    allowed = [True] * n
    if restriction is not None:
        if isinstance(restriction, str):
            label = pop.region_labels.index(restriction)
            allowed = [ag.region == label for ag in agents]
        else:
            r = np.asarray(restriction)
            allowed = list(r.astype(bool)) if r.dtype == bool else [False] * n
            if r.dtype != bool:
                for a in r.ravel():
                    allowed[int(a)] = True

    lstm = RefModulator(modulator) if modulator is not None else None
    r_mult, phi = 1.0, p.phi
    daily: list[int] = []
    r_hist, phi_hist = [], []
    spans: dict[str, list[tuple[int, int, int]]] = {"isolation": [], "quarantine": [],
                                                     "closure": []}

    icc, qec, sc, vc = policies.icc, policies.qec, policies.sc, policies.vc
    lag0 = max(1, math.ceil(p.theta_ei + icc.detection_delay_days - 1e-9))

    for t in range(horizon):
        if lstm is not None and t % 7 == 0:
            r_mult, phi = lstm.advance(sum(daily[max(0, t - 7):t]), n)
        r_hist.append(r_mult)
        phi_hist.append(phi)
        if t == 0:
            count = 0
            for ag in agents:
                if rng.random() < p.beta and allowed[ag.index]:
                    ag.infection_day = 0
                    ag.vaccinated_when_infected = ag.vaccinated
                    count += 1
            for ag in agents:
                ag.advance(0, p.theta_ei, p.theta_ir)
            daily.append(count)
            continue

        newly_detected: list[RefAgent] = []
        if policies.any_enabled:
            for ag in agents:
                if (ag.infection_day is not None and not ag.detected
                        and t - ag.infection_day == lag0
                        and rng.random() < icc.detection_probability):
                    ag.detected, ag.detection_day = True, t
                    newly_detected.append(ag)
            if icc.enabled:
                for ag in newly_detected:
                    if rng.random() < icc.compliance_rate:
                        ag.isolated_until = t + icc.isolation_days
                        spans["isolation"].append((ag.index, t, ag.isolated_until))
            if qec.enabled and newly_detected:
                detected_ids = {ag.index for ag in newly_detected}
                for ag in agents:
                    if ag.vaccinated or ag.quarantined_until > t:
                        continue
                    contact = any(
                        m != ag.index and m in detected_ids
                        for v in ag.venues for m in venues[v].members
                    )
                    if contact and rng.random() < qec.tracing_rate:
                        ag.quarantined_until = t + qec.quarantine_days
                        spans["quarantine"].append((ag.index, t, ag.quarantined_until))
            if sc.enabled:
                for ag in newly_detected:
                    for v in ag.venues:
                        venue = venues[v]
                        if VENUE_KINDS[venue.kind] == "school" and venue.closed_until <= t:
                            venue.closed_until = t + sc.closure_days
                            spans["closure"].append((v, t, venue.closed_until))

        # Infectious pressure per venue from currently infected, unrestricted agents.
        pressure: dict[int, float] = {}
        for ag in agents:
            if ag.infection_day is None:
                continue
            w = weights[t - ag.infection_day]
            if w == 0.0 or ag.isolated_until > t or ag.quarantined_until > t:
                continue
            w *= 1.0 - p.psi2 * ag.vaccinated
            for v in ag.venues:
                pressure[v] = pressure.get(v, 0.0) + w

        new_today = []
        for ag in agents:
            if ag.stage != S:
                continue
            hazard = 0.0
            for v in ag.venues:
                if v in pressure and venues[v].closed_until <= t:
                    hazard += kind_ratio[venues[v].kind] * pressure[v]
            h_attr = (age_f[ag.age_band] * sex_f[ag.sex] * eth_f[ag.ethnicity]
                      * vac_f[int(ag.vaccinated)])
            hazard *= p.R * r_mult * h_attr * (1.0 - p.psi1 * ag.vaccinated)
            p_contact = 1.0 - math.exp(-hazard)
            if ag.quarantined_until > t:
                p_contact = 0.0
            hit_contact = rng.random() < p_contact
            hit_random = rng.random() < phi
            if hit_contact or hit_random:
                new_today.append(ag)
        for ag in new_today:
            ag.infection_day = t
            ag.vaccinated_when_infected = ag.vaccinated
        for ag in agents:
            ag.advance(t, p.theta_ei, p.theta_ir)
        daily.append(len(new_today))

        if vc.enabled:
            active_regions = {
                ag.region for ag in agents
                if ag.detected and ag.detection_day > t - vc.active_days
            }
            for ag in agents:
                if (ag.region in active_regions and not ag.vaccinated
                        and rng.random() < vc.daily_vaccination_rate):
                    ag.vaccinated = True

    return _trace(agents, daily, r_hist, phi_hist, p, spans)


def _trace(agents: list[RefAgent], daily: list[int], r_hist: list[float],
           phi_hist: list[float], p: DiseaseParams,
           spans: dict[str, list[tuple[int, int, int]]]) -> EpidemicTrace:
    horizon = len(daily)
    comps = np.zeros((horizon, 4))
    for t in range(horizon):
        counts = {S: 0, E: 0, I: 0, R: 0}
        for ag in agents:
            if ag.infection_day is None or ag.infection_day > t:
                counts[S] += 1
            else:
                lag = t - ag.infection_day
                counts[E if lag < p.theta_ei else (I if lag < p.theta_ir else R)] += 1
        comps[t] = [counts[S], counts[E], counts[I], counts[R]]
    itime = np.array([-1 if ag.infection_day is None else ag.infection_day for ag in agents],
                     dtype=np.int64)
    return EpidemicTrace(
        new_infections=np.array(daily, dtype=np.float64),
        compartments=comps,
        infection_time=itime,
        R_t_multiplier=np.array(r_hist),
        phi_t=np.array(phi_hist),
        vaccinated_at_infection=np.array([float(ag.vaccinated_when_infected) for ag in agents]),
        policy_log=spans,
    )
