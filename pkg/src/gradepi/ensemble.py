"""Hard-mode ensembles with perturbed members and weekly quantile bands."""

from __future__ import annotations

import copy
import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .epi.engine import SimSettings, Simulator
from .epi.modulator import ModulatorWeights
from .epi.params import DiseaseParams
from .epi.state import EpidemicTrace
from .errors import EmptySeries, InvalidSpec, LengthMismatch, ParseError
from .interventions import PolicySet
from .metrics import BREAKDOWN_ATTRIBUTES, breakdown_by, mean_breakdown
from .population import ContactGraph, Population, VenueKindParams

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
ENSEMBLE_HEADER = ("week_index", "mean", "q05", "q25", "median", "q75", "q95")
MEMBERS_HEADER = ("member", "week_index", "new_cases")


@dataclass
class EnsembleConfig:
    n_members: int = 100
    master_seed: int = 0
    jitter: float = 0.1
    compliance_range: tuple[float, float] = (0.6, 0.8)
    resample_seeds: bool = True
    seed_count: int | None = None
    horizon_days: int = 70
    week_start: int = 0
    threads: int | None = None

    def validate(self) -> None:
        if self.n_members < 1:
            raise InvalidSpec("n_members must be >= 1")
        if not (0.0 <= self.jitter < 1.0):
            raise InvalidSpec("jitter must lie in [0, 1)")
        lo, hi = self.compliance_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise InvalidSpec("compliance_range needs 0 <= lo <= hi <= 1")
        if self.horizon_days < 1:
            raise InvalidSpec("horizon_days must be >= 1")
        if self.seed_count is not None and self.seed_count < 0:
            raise InvalidSpec("seed_count must be >= 0")
        if self.threads is not None and self.threads < 1:
            raise InvalidSpec("threads must be >= 1")


@dataclass
class EnsembleSummary:
    week_index: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    quantiles: dict[float, np.ndarray]
    member_weekly: np.ndarray
    member_totals: np.ndarray
    member_breakdowns: list[dict[str, dict[str, float]]] = field(default_factory=list)

    @property
    def n_members(self) -> int:
        return int(self.member_weekly.shape[0])

    @property
    def breakdowns(self) -> dict[str, dict[str, float]]:
        if not self.member_breakdowns:
            return {}
        return {
            attr: mean_breakdown([m[attr] for m in self.member_breakdowns])
            for attr in self.member_breakdowns[0]
        }

    def rows(self) -> list[tuple]:
        q = self.quantiles
        return [
            (int(w), float(self.mean[i]), float(q[0.05][i]), float(q[0.25][i]),
             float(self.median[i]), float(q[0.75][i]), float(q[0.95][i]))
            for i, w in enumerate(self.week_index)
        ]

    def write_csv(self, path: str | Path, config_hash: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if config_hash:
                fh.write(f"# config_hash: {config_hash}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ENSEMBLE_HEADER)
            for row in self.rows():
                w.writerow([row[0], *(repr(x) for x in row[1:])])

    def write_members_csv(self, path: str | Path, config_hash: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if config_hash:
                fh.write(f"# config_hash: {config_hash}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(MEMBERS_HEADER)
            for m in range(self.n_members):
                for i, week in enumerate(self.week_index):
                    w.writerow([m, int(week), _count(self.member_weekly[m, i])])

    @classmethod
    def read_csv(cls, path: str | Path) -> "EnsembleSummary":
        """Reload the band from ``ensemble.csv`` (member data is not stored there)."""
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            header = next(reader, None)
            if header is None or tuple(header) != ENSEMBLE_HEADER:
                raise ParseError(f"expected header {','.join(ENSEMBLE_HEADER)}", line=1,
                                 path=str(path))
            for row in reader:
                if not row:
                    continue
                try:
                    rows.append([float(x) for x in row])
                except ValueError:
                    raise ParseError("non-numeric field", line=reader.line_num,
                                     path=str(path)) from None
        if not rows:
            raise EmptySeries(f"{path}: no weeks")
        arr = np.array(rows)
        quantiles = {0.05: arr[:, 2], 0.25: arr[:, 3], 0.5: arr[:, 4], 0.75: arr[:, 5],
                     0.95: arr[:, 6]}
        return cls(
            week_index=arr[:, 0].astype(np.int64), mean=arr[:, 1], median=arr[:, 4],
            quantiles=quantiles, member_weekly=np.zeros((0, arr.shape[0])),
            member_totals=np.zeros(0),
        )

    def equals(self, other: "EnsembleSummary") -> bool:
        """Bit-level equality of every summary array."""
        same = (
            np.array_equal(self.week_index, other.week_index)
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.median, other.median)
            and np.array_equal(self.member_weekly, other.member_weekly)
            and np.array_equal(self.member_totals, other.member_totals)
            and set(self.quantiles) == set(other.quantiles)
        )
        return same and all(np.array_equal(self.quantiles[q], other.quantiles[q])
                            for q in self.quantiles)


def _count(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def weekly_counts(daily: np.ndarray, week_length: int = 7) -> np.ndarray:
    daily = np.asarray(daily, dtype=np.float64)
    weeks = np.arange(daily.shape[0]) // week_length
    return np.bincount(weeks, weights=daily)


def summarize(member_traces: Sequence[EpidemicTrace | np.ndarray], week_start: int = 0,
              breakdowns: list[dict[str, dict[str, float]]] | None = None) -> EnsembleSummary:
    """Per-week mean and linear-interpolated quantiles across members.

    Members may be traces (aggregated to weeks here) or weekly arrays.
    """
    if len(member_traces) == 0:
        raise EmptySeries("an ensemble needs at least one member")
    weekly = []
    for m in member_traces:
        weekly.append(weekly_counts(m.new_infections) if isinstance(m, EpidemicTrace)
                      else np.asarray(m, dtype=np.float64))
    lengths = {w.shape for w in weekly}
    if len(lengths) != 1:
        raise LengthMismatch("ensemble members have different lengths")
    mat = np.stack(weekly)
    qs = np.quantile(mat, QUANTILES, axis=0)
    quantiles = {q: qs[i] for i, q in enumerate(QUANTILES)}
    return EnsembleSummary(
        week_index=np.arange(mat.shape[1], dtype=np.int64) + week_start,
        mean=mat.mean(axis=0),
        median=quantiles[0.5],
        quantiles=quantiles,
        member_weekly=mat,
        member_totals=mat.sum(axis=1),
        member_breakdowns=list(breakdowns or []),
    )


def member_inputs(params: DiseaseParams, policies: PolicySet, config: EnsembleConfig,
                  member: int) -> tuple[DiseaseParams, PolicySet, np.random.Generator]:
    """Perturbed parameters, policies and run generator for one member.

    The member stream depends only on ``(master_seed, member)``, so changing
    ``n_members`` never reshuffles earlier members.
    """
    rng = np.random.default_rng([config.master_seed, member])
    j = config.jitter
    kinds = params.venue_params
    rho = {k: v * (1.0 + rng.uniform(-j, j)) for k, v in kinds.rho.items()}
    q = {k: v * (1.0 + rng.uniform(-j, j)) for k, v in kinds.q.items()}
    lo, hi = config.compliance_range
    compliance = float(rng.uniform(lo, hi))
    p = copy.deepcopy(params)
    p.venue_params = VenueKindParams(rho=rho, q=q)
    pol = copy.deepcopy(policies)
    pol.icc.compliance_rate = compliance
    return p, pol, rng


def _pick_seeds(rng: np.random.Generator, eligible: np.ndarray, beta: float,
                count: int | None) -> np.ndarray:
    """Exactly ``count`` distinct seed agents, or a Bernoulli(beta) draw if count is None."""
    if count is not None:
        return np.sort(rng.choice(eligible, size=count, replace=False))
    return eligible[rng.random(eligible.size) < beta]


def run_ensemble(pop: Population, graph: ContactGraph, params: DiseaseParams,
                 policies: PolicySet | None = None, config: EnsembleConfig | None = None,
                 modulator: ModulatorWeights | None = None, restriction: Any = None,
                 ) -> EnsembleSummary:
    """Run every member in hard mode and summarise by week."""
    cfg = config or EnsembleConfig()
    cfg.validate()
    policies = policies or PolicySet()
    eligible = np.arange(pop.n_agents)
    if restriction is not None:
        mask = pop.region_mask(restriction) if isinstance(restriction, str) else restriction
        eligible = np.flatnonzero(np.asarray(mask, dtype=bool))
    if cfg.seed_count is not None and cfg.seed_count > eligible.size:
        raise InvalidSpec(f"seed_count {cfg.seed_count} exceeds {eligible.size} eligible agents")
    fixed_seeds = None
    if not cfg.resample_seeds:
        common = np.random.default_rng([cfg.master_seed, 2**31 - 1])
        fixed_seeds = _pick_seeds(common, eligible, params.beta, cfg.seed_count)

    def one(member: int) -> tuple[np.ndarray, dict[str, dict[str, float]]]:
        p, pol, rng = member_inputs(params, policies, cfg, member)
        seeds = fixed_seeds
        if seeds is None and cfg.seed_count is not None:
            seeds = _pick_seeds(rng, eligible, params.beta, cfg.seed_count)
        sim = Simulator(pop, graph, SimSettings(horizon_days=cfg.horizon_days, mode="hard"), pol)
        trace = sim.run(p, rng, modulator=modulator, restriction=restriction,
                        initial_infected=seeds)
        parts = {a: breakdown_by(trace, pop, a) for a in BREAKDOWN_ATTRIBUTES}
        return weekly_counts(trace.new_infections), parts

    members = range(cfg.n_members)
    if cfg.threads is not None and cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(one, members))
    else:
        results = [one(m) for m in members]
    return summarize([r[0] for r in results], cfg.week_start, [r[1] for r in results])
