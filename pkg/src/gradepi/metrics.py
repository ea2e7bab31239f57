"""Validation summaries: peaks, cumulative totals, demographic breakdowns."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import EmptySeries, ParseError, UnknownAttribute, WeekRangeMismatch
from .population import AGE_BANDS, ETHNICITIES, Population

if TYPE_CHECKING:
    from .calibration import ObservationSeries
    from .ensemble import EnsembleSummary
    from .epi.state import EpidemicTrace

BREAKDOWN_ATTRIBUTES: dict[str, tuple[str, ...]] = {
    "ethnicity": ETHNICITIES,
    "age_band": AGE_BANDS,
}
CURVES_HEADER = ("week_index", "observed", "sim_mean", "sim_q05", "sim_q95")
BREAKDOWN_HEADER = ("attribute", "category", "percent")


def peak_week(series: Sequence[float], weeks: Sequence[int] | None = None) -> tuple[int, float]:
    """``(week, value)`` of the maximum; ties go to the earliest week."""
    values = np.asarray(series, dtype=np.float64)
    if values.size == 0:
        raise EmptySeries("cannot take the peak of an empty series")
    i = int(np.argmax(values))  # argmax returns the first maximum
    week = i if weeks is None else int(np.asarray(weeks)[i])
    return week, float(values[i])


def _categories(attribute: str, pop: Population) -> tuple[tuple[str, ...], np.ndarray]:
    if attribute == "ethnicity":
        return ETHNICITIES, pop.ethnicity.astype(np.int64)
    if attribute == "age_band":
        return AGE_BANDS, pop.age_band()
    raise UnknownAttribute(f"cannot break down by {attribute!r}; "
                           f"choose from {sorted(BREAKDOWN_ATTRIBUTES)}")


def breakdown_by(trace: "EpidemicTrace", pop: Population, attribute: str,
                 reporting: bool = False, psi2: float = 0.9) -> dict[str, float]:
    """Percent of infections per category.

    With ``reporting``, infections in vaccinated agents count ``1 - psi2``
    each, modelling symptom-suppressed under-reporting. Returns all zeros
    when nobody was infected.
    """
    cats, index = _categories(attribute, pop)
    infected = np.asarray(trace.infection_time) >= 0
    if infected.shape[0] != pop.n_agents:
        raise UnknownAttribute("trace carries no per-agent infection data for this population")
    weight = infected.astype(np.float64)
    if reporting:
        vacc = trace.vaccinated_at_infection
        vacc = pop.vaccinated.astype(np.float64) if vacc is None else np.asarray(vacc, float)
        weight = weight * (1.0 - psi2 * vacc)
    counts = np.bincount(index, weights=weight, minlength=len(cats))
    total = counts.sum()
    pct = counts / total * 100.0 if total > 0 else np.zeros(len(cats))
    return {c: float(p) for c, p in zip(cats, pct)}


def mean_breakdown(parts: Sequence[dict[str, float]]) -> dict[str, float]:
    """Average of per-member percentage maps, renormalised to 100."""
    if not parts:
        return {}
    keys = list(parts[0])
    arr = np.array([[p[k] for k in keys] for p in parts])
    mean = arr.mean(axis=0)
    total = mean.sum()
    if total > 0:
        mean = mean / total * 100.0
    return {k: float(v) for k, v in zip(keys, mean)}


@dataclass
class ComparisonReport:
    week_index: list[int]
    observed: list[float]
    sim_mean: list[float]
    sim_median: list[float]
    sim_q05: list[float]
    sim_q25: list[float]
    sim_q75: list[float]
    sim_q95: list[float]
    cumulative_sim: float
    cumulative_obs: float
    peak_week_sim: int
    peak_week_obs: int
    peak_value_sim: float
    peak_value_obs: float
    breakdowns: dict[str, dict[str, float]] = field(default_factory=dict)
    config_hash: str | None = None

    @property
    def cumulative_difference(self) -> float:
        return self.cumulative_sim - self.cumulative_obs

    def to_dict(self) -> dict:
        out = asdict(self)
        out["cumulative_difference"] = self.cumulative_difference
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ComparisonReport":
        data = dict(data)
        data.pop("cumulative_difference", None)
        return cls(**data)

    def write_json(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def read_json(cls, path: str | Path) -> "ComparisonReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def write_curves_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            if self.config_hash:
                fh.write(f"# config_hash: {self.config_hash}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVES_HEADER)
            for row in zip(self.week_index, self.observed, self.sim_mean, self.sim_q05,
                           self.sim_q95):
                w.writerow([row[0], *(repr(float(x)) for x in row[1:])])

    def write_breakdown_csv(self, path: str | Path) -> None:
        write_breakdown_csv(path, self.breakdowns, self.config_hash)


def write_breakdown_csv(path: str | Path, breakdowns: dict[str, dict[str, float]],
                        config_hash: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if config_hash:
            fh.write(f"# config_hash: {config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BREAKDOWN_HEADER)
        for attribute, table in breakdowns.items():
            for category, pct in table.items():
                w.writerow([attribute, category, repr(float(pct))])


def read_breakdown_csv(path: str | Path) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None or tuple(header) != BREAKDOWN_HEADER:
            raise ParseError(f"expected header {','.join(BREAKDOWN_HEADER)}", path=str(path))
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise ParseError("expected 3 fields", path=str(path))
            attribute, category, pct = row
            if attribute not in BREAKDOWN_ATTRIBUTES:
                raise UnknownAttribute(f"{path}: unknown attribute {attribute!r}")
            try:
                out.setdefault(attribute, {})[category] = float(pct)
            except ValueError:
                raise ParseError(f"non-numeric percent {pct!r}", path=str(path)) from None
    return out


def comparison_report(ensemble: "EnsembleSummary", observed: "ObservationSeries",
                      pop: Population | None = None,
                      breakdowns: dict[str, dict[str, float]] | None = None) -> ComparisonReport:
    """Side-by-side simulated band versus observed weekly cases.

    Breakdowns come from ``breakdowns`` when given, else from the ensemble's
    per-member records; ``pop`` is accepted for callers that hold only traces.
    """
    weeks = np.asarray(ensemble.week_index)
    if weeks.shape != observed.week_index.shape or np.any(weeks != observed.week_index):
        raise WeekRangeMismatch(
            f"simulated weeks {_span(weeks)} do not match observed weeks "
            f"{_span(observed.week_index)}")
    obs = observed.cases
    peak_sim = peak_week(ensemble.mean, weeks)
    peak_obs = peak_week(obs, weeks)
    return ComparisonReport(
        week_index=[int(w) for w in weeks],
        observed=[float(x) for x in obs],
        sim_mean=_floats(ensemble.mean), sim_median=_floats(ensemble.median),
        sim_q05=_floats(ensemble.quantiles[0.05]), sim_q25=_floats(ensemble.quantiles[0.25]),
        sim_q75=_floats(ensemble.quantiles[0.75]), sim_q95=_floats(ensemble.quantiles[0.95]),
        cumulative_sim=float(np.sum(ensemble.mean)), cumulative_obs=float(np.sum(obs)),
        peak_week_sim=peak_sim[0], peak_week_obs=peak_obs[0],
        peak_value_sim=peak_sim[1], peak_value_obs=peak_obs[1],
        breakdowns={k: dict(v) for k, v in (breakdowns or ensemble.breakdowns).items()},
    )


def _floats(x) -> list[float]:
    return [float(v) for v in np.asarray(x)]


def _span(weeks: np.ndarray) -> str:
    return f"[{int(weeks[0])}..{int(weeks[-1])}]" if len(weeks) else "[]"
