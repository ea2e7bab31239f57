"""Daily transmission engine.

One day of the loop: advance the weekly modulator, apply control measures,
compute per-agent infection probabilities from venue co-membership, sample
new infections with the relaxed Bernoulli, and move mass out of S. Stage
membership (E, I, R) follows from the infection day and the two timing
thresholds, so it is never stored per agent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor, draw_uniform, gumbel_softmax_bernoulli
from ..errors import DomainError, InconsistentState, InvalidSpec
from ..interventions import (
    HARD,
    RELAXED,
    ControlModifier,
    PolicySet,
    PolicyState,
    apply_vaccination_campaign,
    daily_streams,
    policy_day,
)
from ..population import ContactGraph, Population
from .modulator import ModulatorWeights, lstm_step, modulator_input
from .params import DiseaseParams, ParamTensors
from .profile import DEFAULT_GATE_SHARPNESS, lag_weights
from .state import NEVER, EpidemicState, EpidemicTrace, stage_totals

MODES = (HARD, RELAXED)


@dataclass
class SimSettings:
    horizon_days: int = 70
    mode: str = HARD
    straight_through: bool = False
    temperature: float = 0.5
    gate_sharpness: float = DEFAULT_GATE_SHARPNESS
    week_length: int = 7

    def validate(self) -> None:
        if self.mode not in MODES:
            raise InvalidSpec(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.horizon_days < 1:
            raise InvalidSpec("horizon_days must be >= 1")
        if self.temperature <= 0:
            raise InvalidSpec("temperature must be positive")
        if self.gate_sharpness <= 0:
            raise InvalidSpec("gate_sharpness must be positive")
        if self.week_length < 1:
            raise InvalidSpec("week_length must be >= 1")

    @property
    def hard_samples(self) -> bool:
        return self.mode == HARD or self.straight_through


@dataclass(frozen=True)
class RunContext:
    """Population-derived arrays shared read-only by every run."""

    graph: ContactGraph
    age_band: np.ndarray
    sex: np.ndarray
    ethnicity: np.ndarray
    region: np.ndarray
    vaccinated: np.ndarray

    @classmethod
    def build(cls, pop: Population, graph: ContactGraph) -> "RunContext":
        if graph.n_agents != pop.n_agents or graph.n_venues != pop.n_venues:
            raise InvalidSpec("contact graph does not match the population")
        return cls(graph, pop.age_band(), pop.sex.astype(np.int64),
                   pop.ethnicity.astype(np.int64), pop.region.astype(np.int64),
                   pop.vaccinated.astype(np.float64))

    @property
    def n_agents(self) -> int:
        return self.graph.n_agents


# --- building blocks ----------------------------------------------------------

def seed_initial_infections(beta: Any, n_agents: int, restriction: np.ndarray | None = None,
                            temperature: float = 0.5, rng: np.random.Generator | None = None,
                            hard: bool = True, noise: np.ndarray | None = None) -> Tensor:
    """Day-0 infections: each agent in ``restriction`` (default all) is seeded w.p. beta."""
    beta = ad.constant(beta)
    if beta.size != 1 or not (0.0 <= float(beta.data) < 1.0):
        raise DomainError("beta must lie in (0, 1)")
    mask = np.ones(n_agents) if restriction is None else restriction_mask(restriction, n_agents)
    if noise is None:
        noise = draw_uniform(rng, n_agents)
    return gumbel_softmax_bernoulli(beta * mask, temperature, None, hard=hard, noise=noise)


def restriction_mask(restriction: Any, n_agents: int) -> np.ndarray:
    r = np.asarray(restriction)
    if r.dtype == bool:
        if r.shape != (n_agents,):
            raise InvalidSpec("boolean restriction must have one entry per agent")
        return r.astype(np.float64)
    idx = r.astype(np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n_agents):
        raise InvalidSpec("restriction contains unknown agent indices")
    mask = np.zeros(n_agents)
    mask[idx] = 1.0
    return mask


def edge_transmission_rate(profile_value: Any, h_attr: Any, kind_ratio: Any, R: Any,
                           R_t: Any = 1.0, vacc_susceptible: Any = 0.0,
                           vacc_infector: Any = 0.0, psi1: Any = 0.0, psi2: Any = 0.0,
                           active: Any = 1.0) -> Tensor:
    """Per-pair transmission rate, elementwise over edges.

    ``R * R_t * h_attr * kind_ratio * profile * (1 - psi1 v_s) * (1 - psi2 v_i)``,
    times ``active`` (0 when either side is isolated or the venue is closed).
    The engine evaluates the same quantity through a fused venue reduction.
    """
    vs, vi = ad.constant(vacc_susceptible), ad.constant(vacc_infector)
    rate = ad.constant(R) * R_t * h_attr * kind_ratio * profile_value
    return rate * (1.0 - ad.constant(psi1) * vs) * (1.0 - ad.constant(psi2) * vi) * active


def aggregate_exposure(rates: Any, susceptible_ids: np.ndarray, n_agents: int) -> Tensor:
    """``1 - exp(-sum of rates)`` per susceptible agent."""
    rates = ad.constant(rates)
    if np.any(rates.data < 0):
        raise DomainError("rates must be non-negative")
    return hazard_to_probability(ad.segment_sum(rates, susceptible_ids, n_agents))


def hazard_to_probability(hazard: Tensor) -> Tensor:
    return -ad.expm1(-hazard)


def random_infections(phi_t: Any, susceptible: Any, temperature: float = 0.5,
                      rng: np.random.Generator | None = None, hard: bool = True,
                      noise: np.ndarray | None = None) -> Tensor:
    """Background infections at per-agent probability ``phi_t``, masked to S."""
    phi_t = ad.constant(phi_t)
    s = ad.constant(susceptible)
    if not (0.0 <= float(phi_t.data) < 1.0):
        raise DomainError("phi_t must lie in [0, 1)")
    n = s.shape[0]
    if noise is None:
        noise = draw_uniform(rng, n)
    draws = gumbel_softmax_bernoulli(ad.broadcast(phi_t, (n,)), temperature, None, hard=hard,
                                     noise=noise)
    return s * draws


def attribute_susceptibility(params: ParamTensors, ctx: RunContext,
                             vaccinated: np.ndarray) -> Tensor:
    """Product of attribute factors; the vaccination factor is mixed by status."""
    a = params.attr
    h = ad.take(a["age"], ctx.age_band) * ad.take(a["sex"], ctx.sex)
    h = h * ad.take(a["ethnicity"], ctx.ethnicity)
    vf = a["vaccinated"]
    if np.any(vaccinated):
        v = ad.constant(vaccinated)
        h = h * (ad.take(vf, np.zeros(ctx.n_agents, dtype=np.int64)) * (1.0 - v)
                 + ad.take(vf, np.ones(ctx.n_agents, dtype=np.int64)) * v)
    else:
        h = h * ad.take(vf, np.zeros(ctx.n_agents, dtype=np.int64))
    return h


# --- stepping -------------------------------------------------------------------

def _infector_profile(state: EpidemicState, weights: Tensor, control: ControlModifier,
                      settings: SimSettings) -> Tensor:
    """Per-agent profile value today from each agent's infection history."""
    t = state.day
    n = state.n_agents
    if t == 0:
        return ad.constant(np.zeros(n))
    w = weights if control.infector_lag is None else weights * control.infector_lag
    if settings.mode == HARD:
        itime = state.infection_time
        w_ext = ad.concat([w, ad.constant(np.zeros(1))])
        idx = np.where(itime >= 0, t - itime, w_ext.shape[0] - 1)
        return ad.take(w_ext, idx)
    return ad.history_mix(state.history[:t], w, [t - d for d in range(t)])


def step(state: EpidemicState, graph: ContactGraph, params: ParamTensors,
         control: ControlModifier, modulator_out: dict[str, Tensor],
         rng: np.random.Generator, settings: SimSettings, *, ctx: RunContext,
         weights: Tensor) -> tuple[EpidemicState, Tensor]:
    """Advance ``state`` from day ``t - 1`` to day ``t = state.day + 1``.

    ``weights`` are the profile values at lags ``0 .. horizon``. Returns the
    new state and the day's per-agent infection mass.
    """
    n = state.n_agents
    u_exposure = draw_uniform(rng, n)
    u_random = draw_uniform(rng, n)
    state.day += 1
    t = state.day
    ctl = control.resolved(n, graph.n_venues)
    vacc = state.vaccinated

    infl = _infector_profile(state, weights, ctl, settings)
    infl = infl * (1.0 - params.psi2 * vacc) * ctl.infector
    exposure = ad.venue_exposure(infl, params.kind_ratio(), graph.e_agent, graph.e_venue,
                                 graph.e_kind, ctl.venue, graph.n_venues)
    susceptibility = attribute_susceptibility(params, ctx, vacc) * (1.0 - params.psi1 * vacc)
    hazard = params.R * modulator_out["R_t"] * susceptibility * exposure
    p = hazard_to_probability(hazard) * ctl.susceptibility

    hard = settings.hard_samples
    e = gumbel_softmax_bernoulli(p, settings.temperature, None, hard=hard, noise=u_exposure)
    phi = modulator_out["phi_t"]
    if not (0.0 <= float(phi.data) < 1.0):
        raise DomainError("phi_t must lie in [0, 1)")
    r = gumbel_softmax_bernoulli(ad.broadcast(phi, (n,)), settings.temperature, None,
                                 hard=hard, noise=u_random)
    new = state.susceptible * (e + r - e * r)
    _record(state, new, t)
    return state, new


def _record(state: EpidemicState, new: Tensor, t: int) -> None:
    s_next = state.susceptible - new
    if np.any(s_next.data < -1e-9) or np.any(new.data < -1e-9):
        raise InconsistentState(f"day {t}: susceptible occupancy left [0, 1]")
    state.susceptible = s_next
    state.history.append(new)
    flips = (new.data > 0.5) & (state.infection_time == NEVER)
    state.infection_time[flips] = t
    if state.vaccinated_at_infection is not None:
        state.vaccinated_at_infection[flips] = state.vaccinated[flips]


# --- full runs ----------------------------------------------------------------------

def _streams(rng: Any) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent infection and policy generators.

    Keeping policy draws on their own stream means two runs from the same
    seed see identical infection noise whatever the policy settings.
    """
    root = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    infection, policy = root.spawn(2)
    return infection, policy


def _as_param_tensors(params: DiseaseParams | ParamTensors) -> ParamTensors:
    if isinstance(params, ParamTensors):
        return params
    if isinstance(params, DiseaseParams):
        return params.to_tensors(False)
    raise InvalidSpec("params must be DiseaseParams or ParamTensors")


def _modulator_tensors(modulator: Any) -> tuple[dict[str, Tensor] | None, float, float]:
    if modulator is None:
        return None, 0.0, 0.0
    if isinstance(modulator, ModulatorWeights):
        return modulator.to_tensors(False), modulator.phi_max, modulator.input_scale
    weights, phi_max, scale = modulator
    return weights, phi_max, scale


class Simulator:
    """Binds a population, its graph and settings; each ``run`` is independent."""

    def __init__(self, pop: Population, graph: ContactGraph, settings: SimSettings | None = None,
                 policies: PolicySet | None = None):
        self.pop = pop
        self.graph = graph
        self.settings = settings or SimSettings()
        self.settings.validate()
        self.policies = policies or PolicySet()
        self.ctx = RunContext.build(pop, graph)

    def initial_state(self, params: ParamTensors, rng: np.random.Generator,
                      restriction: Any = None, initial_infected: Any = None) -> EpidemicState:
        n = self.ctx.n_agents
        noise = draw_uniform(rng, n)
        if initial_infected is not None:
            # Fixed seed agents; the day-0 uniforms are still consumed.
            seeds = ad.constant(restriction_mask(initial_infected, n))
        else:
            seeds = seed_initial_infections(params.beta, n, restriction,
                                            self.settings.temperature, None,
                                            hard=self.settings.hard_samples, noise=noise)
        state = EpidemicState(
            day=0,
            susceptible=ad.constant(np.ones(n)),
            history=[],
            infection_time=np.full(n, NEVER, dtype=np.int64),
            vaccinated=self.ctx.vaccinated.copy(),
            policy=PolicyState.empty(n, self.graph.n_venues),
            theta_ei=float(params.theta_ei.data),
            theta_ir=float(params.theta_ir.data),
            vaccinated_at_infection=np.zeros(n),
        )
        _record(state, state.susceptible * seeds, 0)
        return state

    def run(self, params: DiseaseParams | ParamTensors, rng: Any = 0, *,
            modulator: Any = None, restriction: Any = None,
            initial_infected: Any = None) -> EpidemicTrace:
        """Seed on day 0, then step through ``horizon_days - 1`` further days.

        ``modulator`` is ``None`` (constant R multiplier 1 and phi from params),
        a ``ModulatorWeights`` or a ``(weights, phi_max, input_scale)`` tuple
        of tensors for gradient work. ``initial_infected`` fixes the day-0
        infections instead of drawing them with probability beta.
        """
        cfg = self.settings
        P = _as_param_tensors(params)
        inf_rng, pol_rng = _streams(rng)
        horizon = cfg.horizon_days
        n = self.ctx.n_agents
        if isinstance(restriction, str):
            restriction = self.pop.region_mask(restriction)

        mod_w, phi_max, scale = _modulator_tensors(modulator)
        hidden = None
        if mod_w is not None:
            size = mod_w["U_i"].shape[0]
            hidden = (ad.constant(np.zeros(size)), ad.constant(np.zeros(size)))

        state = self.initial_state(P, inf_rng, restriction, initial_infected)
        weights = lag_weights(horizon, P, cfg.gate_sharpness)
        daily = [ad.sum(state.history[0])]
        r_mult = np.ones(horizon)
        phi_hist = np.zeros(horizon)
        mod_out: dict[str, Tensor] = {"R_t": ad.constant(1.0), "phi_t": P.phi}
        policies = self.policies
        use_policies = policies.any_enabled

        for t in range(horizon):
            if mod_w is not None and t % cfg.week_length == 0:
                last = state.history[max(0, t - cfg.week_length):t]
                inc = ad.sum(ad.stack([ad.sum(h) for h in last])) if last else ad.constant(0.0)
                x = modulator_input(inc, n, scale)
                h, c, mod_out = lstm_step(mod_w, hidden[0], hidden[1], x, phi_max)
                hidden = (h, c)
            r_mult[t] = float(mod_out["R_t"].data)
            phi_hist[t] = float(mod_out["phi_t"].data)
            if t == 0:
                continue
            streams = daily_streams(pol_rng) if use_policies else [None] * 4
            if use_policies:
                state.day = t
                control = policy_day(state, self.graph, policies, streams, cfg.mode, horizon)
                state.day = t - 1
            else:
                control = ControlModifier()
            state, new = step(state, self.graph, P, control, mod_out, inf_rng, cfg,
                              ctx=self.ctx, weights=weights)
            daily.append(ad.sum(new))
            if use_policies and policies.vc.enabled:
                state.vaccinated = apply_vaccination_campaign(
                    state, state.policy, policies, streams[3], cfg.mode, self.ctx.region)
        state.hidden = hidden
        return self._trace(state, daily, r_mult, phi_hist)

    def _trace(self, state: EpidemicState, daily: list[Tensor], r_mult: np.ndarray,
               phi_hist: np.ndarray) -> EpidemicTrace:
        n = self.ctx.n_agents
        incidence = ad.stack(daily)
        new = incidence.data.copy()
        comps = np.zeros((new.shape[0], 4))
        hard = self.settings.hard_samples
        for t in range(new.shape[0]):
            comps[t] = stage_totals(t, new, state.theta_ei, state.theta_ir, n)
        mass = None if hard else np.stack([h.data for h in state.history])
        return EpidemicTrace(
            new_infections=new,
            compartments=comps,
            infection_time=state.infection_time.copy(),
            R_t_multiplier=r_mult,
            phi_t=phi_hist,
            incidence=incidence,
            vaccinated_at_infection=state.vaccinated_at_infection,
            infection_mass=mass,
            policy_log=state.policy.log(),
        )


def run(pop: Population, graph: ContactGraph, params: DiseaseParams | ParamTensors,
        policies: PolicySet | None = None, horizon_days: int = 70, rng: Any = 0,
        mode: str = HARD, *, modulator: Any = None, restriction: Any = None,
        initial_infected: Any = None, settings: SimSettings | None = None) -> EpidemicTrace:
    """Convenience wrapper around ``Simulator(...).run``."""
    if settings is None:
        settings = SimSettings(horizon_days=horizon_days, mode=mode)
    return Simulator(pop, graph, settings, policies).run(
        params, rng, modulator=modulator, restriction=restriction,
        initial_infected=initial_infected)
