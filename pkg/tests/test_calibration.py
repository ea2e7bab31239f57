from __future__ import annotations

import math

import numpy as np
import pytest

from gradepi import autodiff as ad
from gradepi.calibration import (SCALAR_TRANSFORMS, CalibrationConfig, FitResult,
                                 LearnableParamSet, ObservationSeries, calibrate, evaluate,
                                 init_xavier, iteration_seed, loss, transform_for,
                                 weekly_aggregate)
from gradepi.epi import DiseaseParams, ModulatorWeights, SimSettings, Simulator
from gradepi.errors import (ConfigError, DivergenceError, EmptySeries, LengthMismatch,
                            ParseError, WeekRangeMismatch)
from gradepi.population import PopulationSpec, build_contact_graph, generate_synthetic


@pytest.fixture(scope="module")
def pop50():
    pop = generate_synthetic(PopulationSpec(n_agents=50, school_count=1, workplace_count=3,
                                            vaccination_coverage_by_age=0.5), 2)
    return pop, build_contact_graph(pop)


# --- transforms ------------------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(SCALAR_TRANSFORMS))
def test_transform_round_trip(name):
    t = transform_for(name)
    rng = np.random.default_rng(len(name))
    if t is SCALAR_TRANSFORMS["beta"]:
        x = rng.uniform(1e-6, 1 - 1e-6, 200)
    elif name == "gamma_shape":
        x = 1.0 + rng.uniform(1e-3, 20, 200)
    else:
        x = rng.uniform(1e-4, 50, 200)
    back = t.forward(ad.constant(t.inverse(x))).data
    np.testing.assert_allclose(back, x, rtol=1e-9, atol=1e-12)


def test_param_set_round_trip():
    p = DiseaseParams(beta=2e-4, phi=3e-4, R=0.07, theta_ei=5.5, theta_ir=13.0,
                      gamma_shape=2.41, gamma_scale=0.5, psi1=0.95, psi2=0.7)
    back = LearnableParamSet.from_params(p).to_params()
    for k in ("beta", "phi", "R", "theta_ei", "theta_ir", "gamma_shape", "gamma_scale",
              "psi1", "psi2"):
        assert getattr(back, k) == pytest.approx(getattr(p, k), rel=1e-9)


def test_constrained_values_always_valid():
    rng = np.random.default_rng(0)
    lp = LearnableParamSet.from_params(DiseaseParams())
    for _ in range(200):
        raw = {k: v + rng.normal(scale=5.0, size=v.shape) for k, v in lp.raw.items()}
        # DiseaseParams validates its invariants on construction
        LearnableParamSet(raw, lp.learn).to_params().validate()


def test_unknown_learnable():
    with pytest.raises(ConfigError):
        LearnableParamSet.from_params(DiseaseParams(), learn=("gravity",))


# --- weekly aggregation and loss ------------------------------------------------------------

def test_weekly_aggregate_examples():
    assert weekly_aggregate(np.zeros(14)).data.tolist() == [0, 0]
    assert weekly_aggregate(np.ones(14)).data.tolist() == [7, 7]
    ten = np.arange(1, 11, dtype=float)
    assert weekly_aggregate(ten).data.tolist() == [28, 8 + 9 + 10]


def test_weekly_aggregate_gradient_passes_through():
    with ad.Tape():
        x = ad.leaf(np.arange(10.0), True)
        g = ad.backward(ad.sum(weekly_aggregate(x) * np.array([1.0, 2.0])))
        assert g[x].tolist() == [1.0] * 7 + [2.0] * 3


def test_weekly_aggregate_empty():
    with pytest.raises(EmptySeries):
        weekly_aggregate(np.zeros(0))


def test_loss_examples():
    assert float(loss([1.0, 2.0], [1.0, 2.0]).data) == 0.0
    assert float(loss([1.0, 2.0], [1.0, 4.0]).data) == 2.0
    with pytest.raises(LengthMismatch):
        loss([1.0, 2.0, 3.0], [1.0, 2.0])


def test_loss_permutation_invariance_and_sign():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, b = rng.random(9) * 10, rng.random(9) * 10
        perm = rng.permutation(9)
        assert float(loss(a, b).data) == pytest.approx(float(loss(a[perm], b[perm]).data))
        assert float(loss(a, b).data) > 0
        assert float(loss(a, b, normalize=True).data) >= 0


# --- xavier ------------------------------------------------------------------------------

def test_xavier_unit_shape_bound():
    lp = init_xavier({"w": (1, 1)}, 0)
    draws = np.array([init_xavier({"w": (1, 1)}, s).raw["mod.w"][0, 0] for s in range(2000)])
    assert np.all(np.abs(draws) <= math.sqrt(3))
    assert draws.max() > 1.6 and draws.min() < -1.6
    assert lp.raw["mod.w"].shape == (1, 1)


def test_xavier_bounds_by_fan():
    lp = init_xavier(16, 3)
    mw = lp.modulator()
    for name, arr in mw.arrays.items():
        if name.startswith("b_"):
            assert np.all(arr == 0)
        else:
            fan_out, fan_in = arr.shape
            assert np.all(np.abs(arr) <= math.sqrt(6 / (fan_in + fan_out)))


def test_xavier_mean_and_determinism():
    big = init_xavier({"w": (100, 100)}, 7).raw["mod.w"]
    bound = math.sqrt(6 / 200)
    sd = bound / math.sqrt(3) / math.sqrt(big.size)
    assert abs(big.mean()) < 3 * sd
    assert np.array_equal(big, init_xavier({"w": (100, 100)}, 7).raw["mod.w"])


# --- observation series ---------------------------------------------------------------------

def test_observation_validation(tmp_path):
    with pytest.raises(WeekRangeMismatch):
        ObservationSeries([1, 3], [0, 1])
    with pytest.raises(ParseError):
        ObservationSeries([1, 2], [0, 1.5])
    with pytest.raises(EmptySeries):
        ObservationSeries([], [])
    path = tmp_path / "obs.csv"
    path.write_text("week_index,cases\n26,3\n27,x\n")
    with pytest.raises(ParseError) as err:
        ObservationSeries.from_csv(path)
    assert err.value.line == 3


def test_observation_csv_round_trip(tmp_path):
    obs = ObservationSeries(np.arange(26, 52), np.arange(26) * 3)
    obs.write_csv(tmp_path / "o.csv")
    back = ObservationSeries.from_csv(tmp_path / "o.csv")
    assert np.array_equal(back.week_index, obs.week_index)
    assert np.array_equal(back.cases, obs.cases)
    assert back.n_days == 26 * 7


# --- optimisation ---------------------------------------------------------------------------

def _obs(weeks=3, cases=(2, 5, 4)):
    return ObservationSeries(np.arange(weeks), np.array(cases[:weeks], dtype=float))


def _start():
    return DiseaseParams(beta=0.05, phi=0.002, R=0.4, theta_ei=2.5, theta_ir=8.0)


def test_zero_learning_rate_is_null_update(pop50):
    pop, graph = pop50
    init = LearnableParamSet.from_params(_start())
    cfg = CalibrationConfig(iterations=100, learning_rate=0.0, seed=1)
    fit = calibrate(pop, graph, _obs(2), config=cfg, init=init)
    assert len(fit.loss_history) == 100
    for name, value in fit.snapshots[-1].items():
        assert value == fit.snapshots[0][name]
    assert fit.params.beta == pytest.approx(_start().beta, rel=1e-12)


def test_one_step_matches_finite_differences(pop50):
    pop, graph = pop50
    learn = ("beta", "R", "theta_ei", "theta_gap", "gamma_shape", "gamma_scale", "rho")
    init = LearnableParamSet.from_params(_start(), learn=learn)
    lr = 0.01
    cfg = CalibrationConfig(iterations=2, learning_rate=lr, seed=5, straight_through=False,
                            clip_norm=None)
    after = {}

    def grab(it, _, lp):
        if it == 1:
            after.update({k: v.copy() for k, v in lp.raw.items()})

    obs = _obs(2)
    calibrate(pop, graph, obs, config=cfg, init=init, callback=grab)

    sim = Simulator(pop, graph, SimSettings(horizon_days=obs.n_days, mode="relaxed"))

    def f(raw):
        lp = LearnableParamSet(raw, learn)
        with ad.Tape():
            value, _, _ = evaluate(sim, lp, obs, iteration_seed(5, 0), True)
        return float(value.data)

    eps = 1e-5
    worst = 0.0
    for name in learn:
        for i in range(init.raw[name].size):
            xp = {k: v.copy() for k, v in init.raw.items()}
            xm = {k: v.copy() for k, v in init.raw.items()}
            xp[name].flat[i] += eps
            xm[name].flat[i] -= eps
            fd = (f(xp) - f(xm)) / (2 * eps)
            delta = after[name].flat[i] - init.raw[name].flat[i]
            want = -lr * fd
            worst = max(worst, abs(delta - want) / max(abs(delta), abs(want), 1e-12))
    assert worst < 1e-3


def test_reproducible_and_records(pop50):
    pop, graph = pop50
    init = LearnableParamSet.from_params(_start(), learn=("beta", "R"))
    cfg = CalibrationConfig(iterations=8, seed=3)
    a = calibrate(pop, graph, _obs(), config=cfg, init=init)
    b = calibrate(pop, graph, _obs(), config=cfg, init=init)
    assert a.loss_history == b.loss_history
    assert a.beta_trajectory == b.beta_trajectory
    assert a.to_json() == b.to_json()
    assert len(a.loss_history) == len(a.beta_trajectory) == 8
    assert a.loss_history[a.best_iteration] == min(a.loss_history)
    assert a.simulated_weekly.shape == (3,)


def test_learning_reduces_loss(pop50):
    pop, graph = pop50
    init = LearnableParamSet.from_params(_start(), learn=("beta", "R"))
    cfg = CalibrationConfig(iterations=30, learning_rate=0.03, seed=4)
    fit = calibrate(pop, graph, _obs(3, (0, 0, 0)), config=cfg, init=init)
    assert min(fit.loss_history) < fit.loss_history[0]
    assert fit.params.R < _start().R


def test_fit_json_round_trip(pop50, tmp_path):
    pop, graph = pop50
    mw = ModulatorWeights.xavier(np.random.default_rng(0), 3)
    init = LearnableParamSet.from_params(_start(), mw)
    fit = calibrate(pop, graph, _obs(), config=CalibrationConfig(iterations=3, seed=2),
                    init=init)
    fit.write_json(tmp_path / "fit.json", config_hash="abc")
    back = FitResult.read_json(tmp_path / "fit.json")
    assert back.to_json() == fit.to_json()
    assert back.modulator.hidden_size == 3


def test_bad_fit_file(tmp_path):
    (tmp_path / "fit.json").write_text("{not json")
    with pytest.raises(ParseError):
        FitResult.read_json(tmp_path / "fit.json")


def test_divergence_reported(pop50, monkeypatch):
    import gradepi.calibration as cal

    real = cal.loss
    calls = []

    def poisoned(sim_weekly, observed, normalize=False):
        calls.append(1)
        value = real(sim_weekly, observed, normalize)
        return value * np.nan if len(calls) == 3 else value

    monkeypatch.setattr(cal, "loss", poisoned)
    pop, graph = pop50
    init = LearnableParamSet.from_params(_start(), learn=("beta",))
    with pytest.raises(DivergenceError) as err:
        calibrate(pop, graph, _obs(), config=CalibrationConfig(iterations=5), init=init)
    assert err.value.iteration == 2


def test_config_validation():
    for bad in ({"iterations": 0}, {"learning_rate": -1.0}, {"momentum": 1.0},
                {"clip_norm": 0.0}):
        with pytest.raises(ConfigError):
            CalibrationConfig(**bad).validate()
