from __future__ import annotations

import math

import numpy as np
import pytest

from gradepi import autodiff as ad
from gradepi.epi import DiseaseParams, EpidemicState, SimSettings, Simulator, lag_weights, step
from gradepi.epi.engine import RunContext
from gradepi.epi.state import NEVER
from gradepi.errors import InvalidSpec
from gradepi.interventions import (ControlModifier, ICCPolicy, PolicySet, PolicyState, QECPolicy,
                                   SCPolicy, VCPolicy, apply_icc, apply_qec, apply_school_closure,
                                   apply_vaccination_campaign, compose_control_modifier,
                                   detect_cases)
from gradepi.population import VENUE_KINDS, build_contact_graph

from conftest import make_population


def _state(n, n_venues=1, infected_on=None, day=0, theta_ei=2.0, vaccinated=None):
    itime = np.full(n, NEVER, dtype=np.int64)
    for a, d in (infected_on or {}).items():
        itime[a] = d
    return EpidemicState(
        day=day, susceptible=ad.constant((itime < 0).astype(float)), history=[],
        infection_time=itime,
        vaccinated=np.zeros(n) if vaccinated is None else np.asarray(vaccinated, float),
        policy=PolicyState.empty(n, n_venues), theta_ei=theta_ei, theta_ir=9.0)


def _policies(**kw):
    return PolicySet(icc=ICCPolicy(**kw.get("icc", {})), qec=QECPolicy(**kw.get("qec", {})),
                     sc=SCPolicy(**kw.get("sc", {})), vc=VCPolicy(**kw.get("vc", {})))


# --- detection ---------------------------------------------------------------------------

def test_detection_never_with_zero_probability():
    pol = _policies(icc={"detection_probability": 0.0})
    state = _state(50, infected_on={a: 0 for a in range(50)})
    rng = np.random.default_rng(0)
    for t in range(30):
        state.day = t
        detect_cases(state, pol, rng)
    assert not state.policy.detected.any()


def test_detection_on_infectious_day():
    pol = _policies(icc={"detection_probability": 1.0, "detection_delay_days": 0})
    onsets = {a: a % 5 for a in range(20)}
    state = _state(20, infected_on=onsets, theta_ei=2.0)
    rng = np.random.default_rng(1)
    for t in range(12):
        state.day = t
        detect_cases(state, pol, rng)
    expected = np.array([onsets[a] + 2 for a in range(20)])
    assert state.policy.detected.all()
    assert np.array_equal(state.policy.detection_day, expected)


def test_detection_fraction_band():
    pol = _policies(icc={"detection_probability": 0.7, "detection_delay_days": 1})
    rng = np.random.default_rng(2)
    fractions = []
    for _ in range(200):
        state = _state(1000, infected_on={a: 0 for a in range(1000)}, day=3, theta_ei=2.0)
        detect_cases(state, pol, rng)
        fractions.append(state.policy.detected.mean())
    fractions = np.array(fractions)
    assert 0.66 <= fractions.mean() <= 0.74
    # nearly every single trial also lands inside the 3-sigma band
    assert np.mean((fractions >= 0.66) & (fractions <= 0.74)) >= 0.98


def test_detection_is_permanent_and_single_draw():
    pol = _policies(icc={"detection_probability": 0.5, "detection_delay_days": 0})
    state = _state(400, infected_on={a: 0 for a in range(400)}, theta_ei=2.0)
    rng = np.random.default_rng(3)
    state.day = 2
    detect_cases(state, pol, rng)
    first = state.policy.detected.copy()
    for t in range(3, 15):
        state.day = t
        detect_cases(state, pol, rng)
    # agents missed at their detection lag are never picked up later
    assert np.array_equal(state.policy.detected, first)


# --- isolation -------------------------------------------------------------------------------

def test_icc_zero_compliance_identity():
    pol = _policies(icc={"enabled": True, "compliance_rate": 0.0})
    ps = PolicyState.empty(10, 1)
    ps.new_detected = np.ones(10)
    ps.detected[:] = True
    mod = apply_icc(ps, pol, np.random.default_rng(0), day=3)
    assert np.all(mod.infector == 1.0)
    assert ps.isolation_spans == []


def test_icc_full_compliance_isolates_for_duration():
    pol = _policies(icc={"enabled": True, "compliance_rate": 1.0, "isolation_days": 5})
    ps = PolicyState.empty(6, 1)
    ps.new_detected = np.array([1.0, 0, 1.0, 0, 0, 0])
    rng = np.random.default_rng(0)
    for day in range(3, 12):
        mod = apply_icc(ps, pol, rng, day=day)
        ps.new_detected = np.zeros(6)
        expected = 0.0 if day < 8 else 1.0
        assert mod.infector[0] == expected and mod.infector[2] == expected
        assert np.all(mod.infector[[1, 3, 4, 5]] == 1.0)
    assert ps.isolation_spans == [(0, 3, 8), (2, 3, 8)]


def test_isolated_infector_transmits_nothing():
    pop = make_population([[0, 1]])
    graph = build_contact_graph(pop)
    P = DiseaseParams(beta=0.1, R=50.0, theta_ei=0.5, theta_ir=9.0).to_tensors()
    settings = SimSettings(horizon_days=10)
    ctx = RunContext.build(pop, graph)
    weights = lag_weights(10, P)
    for seed in range(30):
        state = _state(2, infected_on={0: 0}, day=2, theta_ei=0.5)
        state.susceptible = ad.constant(np.array([0.0, 1.0]))
        state.history = [ad.constant(np.array([1.0, 0.0]))] + [ad.constant(np.zeros(2))] * 2
        ctl = ControlModifier(infector=np.array([0.0, 1.0]))
        mod = {"R_t": ad.constant(1.0), "phi_t": ad.constant(0.0)}
        _, new = step(state, graph, P, ctl, mod, np.random.default_rng(seed), settings,
                      ctx=ctx, weights=weights)
        assert float(ad.sum(new).data) == 0.0


def test_icc_relaxed_expected_factor():
    pol = _policies(icc={"enabled": True, "compliance_rate": 0.5, "detection_probability": 0.8,
                         "detection_delay_days": 2, "isolation_days": 4})
    mod = apply_icc(PolicyState.empty(3, 1), pol, None, mode="relaxed", day=1, horizon=20,
                    theta_ei=3.2)
    lag0 = math.ceil(3.2 + 2)
    assert lag0 == 6
    expected = np.ones(21)
    expected[6:10] = 0.6
    np.testing.assert_allclose(mod.infector_lag, expected)


# --- quarantine ------------------------------------------------------------------------------

def _household_graph(vaccinated=None):
    pop = make_population([[0, 1, 2, 3]], vaccinated=vaccinated)
    return build_contact_graph(pop)


def test_qec_zero_tracing_identity():
    graph = _household_graph()
    pol = _policies(qec={"enabled": True, "tracing_rate": 0.0})
    ps = PolicyState.empty(4, 1)
    ps.new_detected = np.array([1.0, 0, 0, 0])
    mod = apply_qec(ps, graph, pol, np.random.default_rng(0), day=4)
    assert np.all(mod.susceptibility == 1.0) and np.all(mod.infector == 1.0)


def test_qec_exempts_vaccinated():
    vacc = [False, True, False, True]
    graph = _household_graph(vacc)
    pol = _policies(qec={"enabled": True, "tracing_rate": 1.0, "quarantine_days": 10})
    ps = PolicyState.empty(4, 1)
    ps.new_detected = np.array([1.0, 0, 0, 0])
    mod = apply_qec(ps, graph, pol, np.random.default_rng(0), day=4,
                    vaccinated=np.array(vacc, float))
    assert [s[0] for s in ps.quarantine_spans] == [2]
    assert ps.quarantine_spans == [(2, 4, 14)]
    assert mod.susceptibility.tolist() == [1.0, 1.0, 0.0, 1.0]
    assert mod.infector.tolist() == [1.0, 1.0, 0.0, 1.0]


@pytest.mark.parametrize("days", [7, 10, 14])
def test_qec_duration(days):
    graph = _household_graph()
    pol = _policies(qec={"enabled": True, "tracing_rate": 1.0, "quarantine_days": days})
    ps = PolicyState.empty(4, 1)
    ps.new_detected = np.array([0.0, 1.0, 0, 0])
    rng = np.random.default_rng(0)
    active = []
    for day in range(2, 2 + days + 3):
        mod = apply_qec(ps, graph, pol, rng, day=day)
        ps.new_detected = np.zeros(4)
        active.append(mod.susceptibility[0] == 0.0)
    assert sum(active) == days and all(active[:days])
    for _, start, end in ps.quarantine_spans:
        assert end - start == days


# --- school closure --------------------------------------------------------------------------

def test_no_detections_no_closures():
    pop = make_population([[0], [1]], schools=[[0, 1]], ages=[8, 9])
    graph = build_contact_graph(pop)
    pol = _policies(sc={"enabled": True})
    ps = PolicyState.empty(2, graph.n_venues)
    for day in range(10):
        mod = apply_school_closure(ps, graph, pol, day=day)
        assert np.all(mod.venue == 1.0)
    assert ps.closure_spans == []


def test_school_closes_exactly_seven_days():
    pop = make_population([[0, 2], [1]], schools=[[0, 1]], ages=[8, 9, 40])
    graph = build_contact_graph(pop)
    school = int(np.flatnonzero(pop.venue_kind == VENUE_KINDS.index("school"))[0])
    pol = _policies(sc={"enabled": True, "closure_days": 7})
    ps = PolicyState.empty(3, graph.n_venues)
    ps.new_detected = np.array([1.0, 0, 0])
    closed = []
    for day in range(5, 20):
        mod = apply_school_closure(ps, graph, pol, day=day)
        ps.new_detected = np.zeros(3)
        closed.append(mod.venue[school] == 0.0)
        households = [v for v in range(graph.n_venues) if v != school]
        assert np.all(mod.venue[households] == 1.0)
    assert closed == [True] * 7 + [False] * 8
    assert ps.closure_spans == [(school, 5, 12)]


def test_closed_school_blocks_only_school_edges():
    # agent 0 infectious; 1 shares only the school, 2 shares only the household
    pop = make_population([[0, 2], [1]], schools=[[0, 1]], ages=[8, 9, 40])
    graph = build_contact_graph(pop)
    school = int(np.flatnonzero(pop.venue_kind == VENUE_KINDS.index("school"))[0])
    venue = np.ones(graph.n_venues)
    venue[school] = 0.0
    P = DiseaseParams(beta=0.1, R=50.0, theta_ei=0.5, theta_ir=9.0).to_tensors()
    settings = SimSettings(horizon_days=10)
    ctx = RunContext.build(pop, graph)
    weights = lag_weights(10, P)
    hits = np.zeros(3)
    for seed in range(30):
        state = _state(3, graph.n_venues, infected_on={0: 0}, day=2, theta_ei=0.5)
        state.history = [ad.constant(np.array([1.0, 0, 0]))] + [ad.constant(np.zeros(3))] * 2
        mod = {"R_t": ad.constant(1.0), "phi_t": ad.constant(0.0)}
        _, new = step(state, graph, P, ControlModifier(venue=venue), mod,
                      np.random.default_rng(seed), settings, ctx=ctx, weights=weights)
        hits += new.data
    assert hits[1] == 0.0
    assert hits[2] == 30.0


# --- vaccination campaign ----------------------------------------------------------------------

def _vc_state(n_per_region=100, detected_region=0):
    n = 2 * n_per_region
    state = _state(n)
    region = np.repeat([0, 1], n_per_region)
    a = 0 if detected_region == 0 else n_per_region
    state.policy.detected[a] = True
    state.policy.detection_day[a] = 0
    return state, region


def test_vc_zero_rate_unchanged():
    state, region = _vc_state()
    pol = _policies(vc={"enabled": True, "daily_vaccination_rate": 0.0})
    out = apply_vaccination_campaign(state, state.policy, pol, np.random.default_rng(0),
                                     region=region)
    assert np.array_equal(out, state.vaccinated)


def test_vc_saturation_only_in_triggered_region():
    state, region = _vc_state()
    pol = _policies(vc={"enabled": True, "daily_vaccination_rate": 1.0})
    out = apply_vaccination_campaign(state, state.policy, pol, np.random.default_rng(0),
                                     region=region)
    assert np.all(out[region == 0] == 1.0)
    assert np.all(out[region == 1] == 0.0)


def test_vc_geometric_decay():
    pol = _policies(vc={"enabled": True, "daily_vaccination_rate": 0.05, "active_days": 14})
    rng = np.random.default_rng(4)
    remaining = []
    for _ in range(500):
        state, region = _vc_state()
        for t in range(14):
            state.day = t
            state.vaccinated = apply_vaccination_campaign(state, state.policy, pol, rng,
                                                          region=region)
        remaining.append(1.0 - state.vaccinated[region == 0].mean())
        # the campaign expired after active_days
        state.day = 14
        after = apply_vaccination_campaign(state, state.policy, pol, rng, region=region)
        assert np.array_equal(after, state.vaccinated)
    expected = 0.95 ** 14
    assert expected == pytest.approx(0.488, abs=1e-3)
    se = math.sqrt(expected * (1 - expected) / 100 / 500)
    assert abs(np.mean(remaining) - expected) < 3 * se


def test_vc_relaxed_matches_hard_expectation():
    pol = _policies(vc={"enabled": True, "daily_vaccination_rate": 0.05, "active_days": 14})
    state, region = _vc_state(10)
    state.policy.det_mass = [np.eye(20)[0]]
    vacc = state.vaccinated
    for t in range(14):
        state.day = t
        state.vaccinated = vacc
        vacc = apply_vaccination_campaign(state, state.policy, pol, None, mode="relaxed",
                                          region=region)
        state.policy.det_mass.append(np.zeros(20))
    np.testing.assert_allclose(1 - vacc[region == 0], 0.95 ** 14, rtol=1e-12)
    assert np.all(vacc[region == 1] == 0)


# --- composition and validation --------------------------------------------------------------

def test_compose_identity():
    mod = compose_control_modifier([]).resolved(3, 2)
    assert np.all(mod.susceptibility == 1) and np.all(mod.infector == 1)
    assert np.all(mod.venue == 1)


def test_compose_multiplies_and_absorbs():
    a = ControlModifier(susceptibility=np.array([0.8, 0.3, 1.0]))
    b = ControlModifier(susceptibility=np.array([0.5, 0.0, 1.0]), venue=np.array([0.0, 1.0]))
    out = compose_control_modifier([a, b])
    np.testing.assert_allclose(out.susceptibility, [0.4, 0.0, 1.0])
    assert out.venue.tolist() == [0.0, 1.0]
    assert out.infector is None


def test_compose_bounds_property():
    rng = np.random.default_rng(5)
    for _ in range(200):
        parts = [ControlModifier(susceptibility=rng.random(7), infector=rng.random(7))
                 for _ in range(rng.integers(1, 5))]
        out = compose_control_modifier(parts)
        for x in (out.susceptibility, out.infector):
            assert np.all((x >= 0) & (x <= 1))


def test_compose_rejects_out_of_range():
    with pytest.raises(InvalidSpec):
        compose_control_modifier([ControlModifier(venue=np.array([1.5]))])


@pytest.mark.parametrize("bad", [
    {"icc": {"isolation_days": 3}},
    {"icc": {"compliance_rate": 1.2}},
    {"icc": {"detection_delay_days": -1}},
    {"qec": {"quarantine_days": 6}},
    {"qec": {"quarantine_days": 15}},
    {"qec": {"tracing_rate": -0.1}},
    {"sc": {"closure_days": 15}},
    {"vc": {"daily_vaccination_rate": 2.0}},
    {"icc": {"radius": 3}},
    {"lockdown": {}},
])
def test_policy_validation(bad):
    with pytest.raises(InvalidSpec):
        PolicySet.from_dict(bad)


def test_policy_round_trip():
    pol = _policies(icc={"enabled": True, "compliance_rate": 0.65}, sc={"closure_days": 9})
    assert PolicySet.from_dict(pol.to_dict()) == pol


# --- in full runs ---------------------------------------------------------------------------

def test_run_invariants_with_all_policies(pop1000):
    pop, graph = pop1000
    pol = _policies(icc={"enabled": True, "isolation_days": 6},
                    qec={"enabled": True, "tracing_rate": 0.9, "quarantine_days": 12},
                    sc={"enabled": True, "closure_days": 10})
    params = DiseaseParams(beta=0.01, phi=0.0005, R=0.25, theta_ei=3.0, theta_ir=9.0)
    sim = Simulator(pop, graph, SimSettings(horizon_days=50), pol)
    school = VENUE_KINDS.index("school")
    seen = {"isolation": 0, "quarantine": 0, "closure": 0}
    for seed in range(10):
        log = sim.run(params, seed).policy_log
        for kind, spans in log.items():
            seen[kind] += len(spans)
        assert all(e - s == 6 for _, s, e in log["isolation"])
        assert all(e - s == 12 for _, s, e in log["quarantine"])
        assert all(e - s == 10 for _, s, e in log["closure"])
        assert not any(pop.vaccinated[a] for a, _, _ in log["quarantine"])
        assert all(pop.venue_kind[v] == school for v, _, _ in log["closure"])
    assert all(v > 0 for v in seen.values())


def test_relaxed_run_with_policies_conserves(pop200):
    pop, graph = pop200
    pol = _policies(icc={"enabled": True}, qec={"enabled": True}, sc={"enabled": True},
                    vc={"enabled": True})
    params = DiseaseParams(beta=0.02, phi=0.001, R=0.3, theta_ei=3.0, theta_ir=9.0)
    trace = Simulator(pop, graph, SimSettings(horizon_days=40, mode="relaxed"), pol).run(params, 1)
    np.testing.assert_allclose(trace.compartments.sum(axis=1), pop.n_agents, atol=1e-9)
    assert np.all(trace.new_infections >= 0)
