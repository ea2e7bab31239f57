from __future__ import annotations

import numpy as np
import pytest

from gradepi import _core
from gradepi.epi import DiseaseParams, SimSettings, Simulator

pytestmark = pytest.mark.skipif("compiled" not in _core.available_backends(),
                                reason="compiled extension not built")


@pytest.fixture
def both():
    previous = _core.backend_name()

    def call(fn, *args):
        out = {}
        for name in ("compiled", "python"):
            _core.use_backend(name)
            out[name] = fn(*args)
        return out["compiled"], out["python"]

    yield call
    _core.use_backend(previous)


def test_default_backend_is_compiled():
    assert _core.backend_name() == "compiled"
    with pytest.raises(ValueError):
        _core.use_backend("fortran")


def test_segment_sum(both):
    rng = np.random.default_rng(0)
    v, ids = rng.normal(size=5000), rng.integers(0, 300, 5000)
    a, b = both(_core.segment_sum, v, ids, 300)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_venue_exposure(both):
    rng = np.random.default_rng(1)
    n_agents, n_venues, n_edges, n_kinds = 400, 60, 1500, 6
    args = (rng.random(n_agents), rng.random(n_kinds), rng.integers(0, n_agents, n_edges),
            rng.integers(0, n_venues, n_edges), rng.integers(0, n_kinds, n_edges),
            (rng.random(n_venues) > 0.2).astype(float))
    (ea, pa), (eb, pb) = both(_core.venue_exposure_forward, *args, n_agents, n_venues)
    np.testing.assert_allclose(ea, eb, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(pa, pb, rtol=1e-12, atol=1e-12)
    grad = rng.normal(size=n_agents)
    infl, kind_w, e_agent, e_venue, e_kind, venue_open = args
    ga, gb = both(_core.venue_exposure_backward, grad, infl, kind_w, pa, e_agent, e_venue,
                  e_kind, venue_open, n_venues, n_kinds)
    for x, y in zip(ga, gb):
        np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12)


def test_special_functions(both):
    x = np.concatenate([np.linspace(0.05, 30, 2000), [1.0, 2.0, 0.5, 150.0]])
    a, b = both(_core.lgamma, x)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)
    a, b = both(_core.digamma, x)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_relaxed_bernoulli(both):
    rng = np.random.default_rng(2)
    p = rng.uniform(1e-6, 1 - 1e-6, 10_000)
    u = rng.uniform(1e-9, 1 - 1e-9, 10_000)
    for temp in (0.5, 0.25, 1.0):
        (ya, da), (yb, db) = both(_core.relaxed_bernoulli, p, u, temp)
        np.testing.assert_allclose(ya, yb, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(da, db, rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("mode", ["hard", "relaxed"])
def test_whole_simulation_matches(both, pop200, mode):
    pop, graph = pop200
    p = DiseaseParams(beta=0.03, phi=0.002, R=0.3, theta_ei=3.0, theta_ir=9.0)
    sim = Simulator(pop, graph, SimSettings(horizon_days=30, mode=mode))
    a, b = both(lambda: sim.run(p, 7).new_infections)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)
