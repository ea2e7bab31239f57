from __future__ import annotations

import numpy as np
import pytest

from gradepi.errors import IntegrityError, InvalidSpec, ParseError
from gradepi.population import (AGE_BANDS, VENUE_KINDS, PopulationSpec, VenueKindParams,
                                build_contact_graph, generate_synthetic, load_population)

from conftest import make_population


def test_single_agent():
    spec = PopulationSpec(n_agents=1, school_count=0, workplace_count=0,
                          age_marginals={"25-44": 1.0}, sex_marginals={"female": 1.0},
                          ethnicity_marginals={"European": 1.0})
    pop = generate_synthetic(spec, 0)
    assert pop.n_agents == 1
    assert pop.n_venues == 1
    assert VENUE_KINDS[pop.venue_kind[0]] == "household"
    assert pop.household[0] == 0


def test_vaccination_coverage_band():
    pop = generate_synthetic(PopulationSpec(n_agents=10_000, vaccination_coverage_by_age=0.9), 1)
    assert 0.888 <= pop.vaccinated.mean() <= 0.912


def test_deterministic_files(tmp_path):
    spec = PopulationSpec(n_agents=300, pub_count=2)
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        generate_synthetic(spec, 5).write(tmp_path / d / "agents.csv", tmp_path / d / "venues.csv")
    for name in ("agents.csv", "venues.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_assignment_rules():
    pop = generate_synthetic(PopulationSpec(n_agents=2000, employment_fraction=0.7), 2)
    assert np.all(pop.household >= 0)
    assert np.all((pop.age >= 0) & (pop.age <= 100))
    school_age = (pop.age >= 5) & (pop.age <= 18)
    assert np.all(pop.school[school_age] >= 0)
    assert np.all(pop.school[~school_age] < 0)
    working = (pop.age >= 19) & (pop.age <= 64)
    assert np.all(pop.work[~working] < 0)
    frac = (pop.work[working] >= 0).mean()
    assert abs(frac - 0.7) < 0.05
    # household membership partitions the agents
    members = pop.venue_members()
    households = [m for v, m in enumerate(members) if VENUE_KINDS[pop.venue_kind[v]] == "household"]
    assert sorted(a for h in households for a in h) == list(range(pop.n_agents))


def test_invalid_specs():
    with pytest.raises(InvalidSpec):
        PopulationSpec(age_marginals={"0-4": 0.5}).validate()
    with pytest.raises(InvalidSpec):
        PopulationSpec(vaccination_coverage_by_age=1.5).validate()
    with pytest.raises(InvalidSpec):
        PopulationSpec(n_agents=0).validate()
    with pytest.raises(InvalidSpec):
        generate_synthetic(PopulationSpec(household_mean_size=0.5), 0)


def test_round_trip(tmp_path):
    pop = generate_synthetic(PopulationSpec(n_agents=500, pub_count=2, cinema_count=1,
                                            other_count=2, region_weights={"A": 0.6, "B": 0.4}), 7)
    pop.write(tmp_path / "agents.csv", tmp_path / "venues.csv", comment="provenance")
    assert load_population(tmp_path / "agents.csv", tmp_path / "venues.csv") == pop


def test_dangling_household(tmp_path):
    (tmp_path / "venues.csv").write_text("venue_id,kind,region\n1,household,A\n")
    (tmp_path / "agents.csv").write_text(
        "agent_id,age,sex,ethnicity,vaccinated,household_id,school_id,work_id,region\n"
        "0,30,female,Maori,1,1,,,A\n"
        "1,31,male,Maori,0,99,,,A\n")
    with pytest.raises(IntegrityError):
        load_population(tmp_path / "agents.csv", tmp_path / "venues.csv")


def test_duplicate_agent(tmp_path):
    (tmp_path / "venues.csv").write_text("venue_id,kind,region\n1,household,A\n")
    (tmp_path / "agents.csv").write_text(
        "agent_id,age,sex,ethnicity,vaccinated,household_id,school_id,work_id,region\n"
        "0,30,female,Maori,1,1,,,A\n"
        "0,31,male,Maori,0,1,,,A\n")
    with pytest.raises(IntegrityError):
        load_population(tmp_path / "agents.csv", tmp_path / "venues.csv")


def test_empty_agents_file(tmp_path):
    (tmp_path / "venues.csv").write_text("venue_id,kind,region\n1,household,A\n")
    (tmp_path / "agents.csv").write_text("")
    with pytest.raises(ParseError):
        load_population(tmp_path / "agents.csv", tmp_path / "venues.csv")


def test_bad_row_reports_line(tmp_path):
    (tmp_path / "venues.csv").write_text("venue_id,kind,region\n1,household,A\n")
    (tmp_path / "agents.csv").write_text(
        "agent_id,age,sex,ethnicity,vaccinated,household_id,school_id,work_id,region\n"
        "0,30,female,Maori,1,1,,,A\n"
        "1,old,male,Maori,0,1,,,A\n")
    with pytest.raises(ParseError) as err:
        load_population(tmp_path / "agents.csv", tmp_path / "venues.csv")
    assert err.value.line == 3


def test_graph_small_cases():
    pair = make_population([[0, 1]])
    g = build_contact_graph(pair)
    assert g.n_edges == 2
    assert g.venue_degree().tolist() == [2]

    pupil = make_population([[0]], schools=[[0]], ages=[8])
    g = build_contact_graph(pupil)
    assert g.agent_degree().tolist() == [2]


def test_graph_counts_match_brute_force():
    pop = generate_synthetic(PopulationSpec(n_agents=1000, pub_count=3, cinema_count=1,
                                            other_count=3), 4)
    g = build_contact_graph(pop, VenueKindParams())
    members = pop.venue_members()
    assert g.n_edges == sum(len(m) for m in members)
    assert g.venue_degree().tolist() == [len(m) for m in members]
    # bipartite and consistent adjacency
    for a in range(pop.n_agents):
        mine = sorted(int(v) for v in g.venues_of(a))
        expected = sorted(v for v in pop.memberships()[a] if v >= 0)
        assert mine == expected
    assert np.all(g.agent_degree() >= 1)


def test_venue_kind_params_validation():
    with pytest.raises(InvalidSpec):
        VenueKindParams(rho={"school": -1.0})
    with pytest.raises(InvalidSpec):
        VenueKindParams(q={"spaceport": 1.0})


def test_age_bands_cover_range():
    pop = make_population([[0, 1, 2, 3, 4, 5, 6, 7]], ages=[0, 4, 5, 17, 18, 44, 65, 100])
    assert [AGE_BANDS[b] for b in pop.age_band()] == [
        "0-4", "0-4", "5-11", "12-17", "18-24", "25-44", "65+", "65+"]
