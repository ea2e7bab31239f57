from __future__ import annotations

import numpy as np
import pytest

from gradepi.population import (LEISURE_KINDS, VENUE_KINDS, Population, PopulationSpec,
                                build_contact_graph, generate_synthetic)


def make_population(households, schools=(), vaccinated=None, ages=None, ethnicity=None,
                    regions=None, region_labels=("A",)):
    """Hand-built population: ``households`` and ``schools`` are lists of agent-index lists."""
    n = sum(len(h) for h in households)
    household = np.full(n, -1, dtype=np.int64)
    school = np.full(n, -1, dtype=np.int64)
    kinds = []
    for members in households:
        for a in members:
            household[a] = len(kinds)
        kinds.append(VENUE_KINDS.index("household"))
    for members in schools:
        for a in members:
            school[a] = len(kinds)
        kinds.append(VENUE_KINDS.index("school"))
    nv = len(kinds)
    region = np.zeros(n, dtype=np.int64) if regions is None else np.asarray(regions, np.int64)
    return Population(
        agent_ids=np.arange(n, dtype=np.int64),
        age=np.full(n, 30, dtype=np.int64) if ages is None else np.asarray(ages, np.int64),
        sex=np.zeros(n, dtype=np.int64),
        ethnicity=(np.full(n, 3, dtype=np.int64) if ethnicity is None
                   else np.asarray(ethnicity, np.int64)),
        vaccinated=(np.zeros(n, dtype=bool) if vaccinated is None
                    else np.asarray(vaccinated, dtype=bool)),
        household=household,
        school=school,
        work=np.full(n, -1, dtype=np.int64),
        leisure=np.full((n, len(LEISURE_KINDS)), -1, dtype=np.int64),
        region=region,
        venue_ids=np.arange(nv, dtype=np.int64),
        venue_kind=np.asarray(kinds, dtype=np.int64),
        venue_region=np.zeros(nv, dtype=np.int64),
        region_labels=tuple(region_labels),
    )


@pytest.fixture(scope="session")
def pop100():
    spec = PopulationSpec(n_agents=100, school_count=1, workplace_count=5, pub_count=1,
                          other_count=1, vaccination_coverage_by_age=0.5)
    pop = generate_synthetic(spec, 3)
    return pop, build_contact_graph(pop)


@pytest.fixture(scope="session")
def pop200():
    spec = PopulationSpec(n_agents=200, school_count=2, workplace_count=8, pub_count=2,
                          cinema_count=1, other_count=1)
    pop = generate_synthetic(spec, 7)
    return pop, build_contact_graph(pop)


@pytest.fixture(scope="session")
def pop1000():
    spec = PopulationSpec(n_agents=1000, school_count=3, workplace_count=30, pub_count=3,
                          cinema_count=1, other_count=3, vaccination_coverage_by_age=0.5)
    pop = generate_synthetic(spec, 11)
    return pop, build_contact_graph(pop)


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, ok: bool, detail: str) -> None:
    """Print one PASS/FAIL line and keep it for the end-of-run summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
