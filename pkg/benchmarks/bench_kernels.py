"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--agents N] [--repeat R]

Reports per-kernel timings for both backends plus one end-to-end hard-mode
simulation, and checks that the two backends agree numerically.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from gradepi import _core
from gradepi.epi.engine import SimSettings, Simulator
from gradepi.epi.params import DiseaseParams
from gradepi.population import PopulationSpec, build_contact_graph, generate_synthetic


def kernel_cases(n_agents: int, rng: np.random.Generator):
    pop = generate_synthetic(PopulationSpec(n_agents=n_agents, school_count=max(1, n_agents // 500),
                                            workplace_count=max(1, n_agents // 40)), 0)
    g = build_contact_graph(pop)
    n_kinds = int(g.e_kind.max()) + 1
    infl = rng.random(pop.n_agents)
    kind_w = rng.random(n_kinds)
    open_ = np.ones(g.n_venues)
    exposure, pressure = _core.venue_exposure_forward(
        infl, kind_w, g.e_agent, g.e_venue, g.e_kind, open_, pop.n_agents, g.n_venues)
    grad = rng.random(pop.n_agents)
    p = rng.random(pop.n_agents)
    u = rng.random(pop.n_agents)
    x = rng.uniform(0.5, 20.0, pop.n_agents)
    return pop, g, {
        "segment_sum": lambda: _core.segment_sum(infl[g.e_agent], g.e_venue, g.n_venues),
        "venue_exposure_forward": lambda: _core.venue_exposure_forward(
            infl, kind_w, g.e_agent, g.e_venue, g.e_kind, open_, pop.n_agents, g.n_venues),
        "venue_exposure_backward": lambda: _core.venue_exposure_backward(
            grad, infl, kind_w, pressure, g.e_agent, g.e_venue, g.e_kind, open_, g.n_venues,
            n_kinds),
        "lgamma": lambda: _core.lgamma(x),
        "digamma": lambda: _core.digamma(x),
        "relaxed_bernoulli": lambda: _core.relaxed_bernoulli(p, u, 0.5),
    }


def _flat(result) -> np.ndarray:
    if isinstance(result, tuple):
        return np.concatenate([np.ravel(np.asarray(r, dtype=float)) for r in result])
    return np.ravel(np.asarray(result, dtype=float))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--agents", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--days", type=int, default=56)
    args = ap.parse_args(argv)

    backends = _core.available_backends()
    if "compiled" not in backends:
        print("compiled backend not built; timing the python fallback only")
    rng = np.random.default_rng(0)
    pop, graph, cases = kernel_cases(args.agents, rng)
    print(f"{pop.n_agents} agents, {graph.n_edges} memberships, {graph.n_venues} venues")
    print(f"{'kernel':26s}" + "".join(f"{b:>12s}" for b in backends) + "   speedup  max|diff|")
    previous = _core.backend_name()
    try:
        for name, fn in cases.items():
            times, outputs = {}, {}
            for b in backends:
                _core.use_backend(b)
                outputs[b] = _flat(fn())
                times[b] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            diff = (float(np.max(np.abs(outputs["compiled"] - outputs["python"])))
                    if len(backends) == 2 else 0.0)
            speed = times["python"] / times["compiled"] if len(backends) == 2 else 1.0
            print(f"{name:26s}" + "".join(f"{times[b] * 1e3:10.3f}ms" for b in backends)
                  + f"   {speed:6.1f}x  {diff:.2e}")

        params = DiseaseParams(beta=2e-3, R=0.05, theta_ei=4.0, theta_ir=10.0, gamma_shape=3.0)
        sim = Simulator(pop, graph, SimSettings(horizon_days=args.days, mode="hard"))
        totals = {}
        for b in backends:
            _core.use_backend(b)
            t = min(timeit.repeat(lambda: sim.run(params, 1), number=1, repeat=3))
            totals[b] = t
        line = "".join(f"{totals[b]:11.3f}s" for b in backends)
        speed = totals["python"] / totals["compiled"] if len(backends) == 2 else 1.0
        print(f"{f'simulate {args.days} days':26s}{line}   {speed:6.1f}x")
    finally:
        _core.use_backend(previous)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
