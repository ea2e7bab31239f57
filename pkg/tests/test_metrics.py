from __future__ import annotations

import json

import numpy as np
import pytest

from gradepi.calibration import ObservationSeries
from gradepi.ensemble import summarize
from gradepi.epi import DiseaseParams, EpidemicTrace, SimSettings, Simulator
from gradepi.errors import EmptySeries, ParseError, UnknownAttribute, WeekRangeMismatch
from gradepi.metrics import (ComparisonReport, breakdown_by, comparison_report, mean_breakdown,
                             peak_week, read_breakdown_csv, write_breakdown_csv)
from gradepi.population import AGE_BANDS, ETHNICITIES, build_contact_graph

from conftest import make_population


def _trace(infection_time, vaccinated=None):
    itime = np.asarray(infection_time, dtype=np.int64)
    n = itime.shape[0]
    return EpidemicTrace(new_infections=np.zeros(1), compartments=np.zeros((1, 4)),
                         infection_time=itime, R_t_multiplier=np.ones(1), phi_t=np.zeros(1),
                         vaccinated_at_infection=None if vaccinated is None
                         else np.asarray(vaccinated, float))


def test_peak_week_examples():
    assert peak_week([0, 5, 3], [26, 27, 28]) == (27, 5.0)
    assert peak_week([4, 4], [10, 11]) == (10, 4.0)
    assert peak_week([1, 9, 9, 2]) == (1, 9.0)
    with pytest.raises(EmptySeries):
        peak_week([])


def test_report_format_fixture():
    sim = np.full(26, 10.0)
    sim[36 - 26] = 119
    obs = np.full(26, 5.0)
    obs[36 - 26] = 91
    weeks = np.arange(26, 52)
    assert peak_week(sim, weeks) == (36, 119.0)
    assert peak_week(obs, weeks) == (36, 91.0)


def test_breakdown_all_maori():
    maori = ETHNICITIES.index("Maori")
    pop = make_population([[0, 1, 2, 3]], ethnicity=[maori, maori, 2, 3])
    b = breakdown_by(_trace([0, 3, -1, -1]), pop, "ethnicity")
    assert b["Maori"] == 100.0
    assert all(v == 0.0 for k, v in b.items() if k != "Maori")
    assert set(b) == set(ETHNICITIES)


def test_breakdown_sums_to_100():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = 40
        pop = make_population([list(range(n))], ethnicity=rng.integers(0, 6, n),
                              ages=rng.integers(0, 101, n))
        itime = np.where(rng.random(n) < 0.4, 1, -1)
        if not np.any(itime >= 0):
            continue
        for attr in ("ethnicity", "age_band"):
            b = breakdown_by(_trace(itime), pop, attr)
            assert sum(b.values()) == pytest.approx(100.0, abs=0.01)
    assert set(breakdown_by(_trace(itime), pop, "age_band")) == set(AGE_BANDS)


def test_breakdown_reporting_flag():
    pop = make_population([[0, 1]], ethnicity=[0, 1])
    b = breakdown_by(_trace([1, 1], vaccinated=[1.0, 0.0]), pop, "ethnicity", reporting=True,
                     psi2=0.5)
    # the vaccinated case counts half
    assert b["Maori"] == pytest.approx(100 / 3)
    assert b["Pacific"] == pytest.approx(200 / 3)


def test_breakdown_unknown_attribute():
    pop = make_population([[0]])
    with pytest.raises(UnknownAttribute):
        breakdown_by(_trace([0]), pop, "shoe_size")


def test_breakdown_uniform_mixing_symmetry():
    """One shared household, three equal groups, identity factors: equal shares."""
    n = 90
    groups = np.repeat([0, 1, 2], n // 3)
    pop = make_population([list(range(n))], ethnicity=groups)
    graph = build_contact_graph(pop)
    p = DiseaseParams(beta=0.02, phi=0.0, R=0.02, theta_ei=2.0, theta_ir=8.0)
    sim = Simulator(pop, graph, SimSettings(horizon_days=30))
    shares = []
    for seed in range(300):
        trace = sim.run(p, seed)
        if np.any(trace.infection_time >= 0):
            b = breakdown_by(trace, pop, "ethnicity")
            shares.append([b[ETHNICITIES[g]] for g in range(3)])
    shares = np.array(shares)
    se = shares.std(axis=0, ddof=1) / np.sqrt(shares.shape[0])
    assert np.all(np.abs(shares.mean(axis=0) - 100 / 3) < 3 * se)


def test_mean_breakdown_renormalises():
    out = mean_breakdown([{"a": 100.0, "b": 0.0}, {"a": 0.0, "b": 0.0}])
    assert out == {"a": 100.0, "b": 0.0}


def _ensemble_for(weeks, mean):
    return summarize([np.asarray(mean, float)], week_start=weeks[0])


def test_cumulative_difference_fixture():
    weeks = np.arange(26, 52)
    sim = np.full(26, 1167 / 26)
    obs = np.zeros(26)
    obs[:24] = 40
    obs[24:] = [32, 32]
    assert obs.sum() == 1024
    report = comparison_report(_ensemble_for(weeks, sim), ObservationSeries(weeks, obs))
    assert report.cumulative_sim == pytest.approx(1167)
    assert report.cumulative_difference == pytest.approx(143)


def test_identical_series_zero_difference():
    weeks = np.arange(5)
    obs = np.array([1.0, 4, 9, 3, 0])
    report = comparison_report(_ensemble_for(weeks, obs), ObservationSeries(weeks, obs))
    assert report.cumulative_difference == 0.0
    assert report.peak_week_sim == report.peak_week_obs == 2


def test_week_range_mismatch():
    with pytest.raises(WeekRangeMismatch):
        comparison_report(_ensemble_for(np.arange(3), [1, 2, 3]),
                          ObservationSeries(np.arange(1, 4), [1, 2, 3]))


def test_report_round_trip(tmp_path):
    weeks = np.arange(26, 30)
    report = comparison_report(
        _ensemble_for(weeks, [1.5, 2.25, 3.0, 0.1]), ObservationSeries(weeks, [1, 2, 3, 0]),
        breakdowns={"ethnicity": {"Maori": 60.0, "Pacific": 40.0}})
    report.config_hash = "0123456789abcdef"
    report.write_json(tmp_path / "report.json")
    back = ComparisonReport.read_json(tmp_path / "report.json")
    assert back == report
    assert json.loads((tmp_path / "report.json").read_text())["cumulative_difference"] == \
        report.cumulative_difference
    report.write_curves_csv(tmp_path / "curves.csv")
    lines = (tmp_path / "curves.csv").read_text().splitlines()
    assert lines[1] == "week_index,observed,sim_mean,sim_q05,sim_q95"
    assert len(lines) == 6


def test_breakdown_csv(tmp_path):
    data = {"ethnicity": {"Maori": 55.5, "Asian": 44.5}, "age_band": {"0-4": 100.0}}
    write_breakdown_csv(tmp_path / "b.csv", data, "abc")
    assert read_breakdown_csv(tmp_path / "b.csv") == data
    (tmp_path / "bad.csv").write_text("attribute,category,percent\nshoe,9,1.0\n")
    with pytest.raises(UnknownAttribute):
        read_breakdown_csv(tmp_path / "bad.csv")
    (tmp_path / "bad2.csv").write_text("a,b\n")
    with pytest.raises(ParseError):
        read_breakdown_csv(tmp_path / "bad2.csv")
