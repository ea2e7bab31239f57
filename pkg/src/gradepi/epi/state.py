"""Epidemic state and trace containers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from ..autodiff import Tensor
from ..errors import ParseError

if TYPE_CHECKING:
    from ..interventions import PolicyState

NEVER = -1
TRACE_HEADER = ("day", "new_infections", "S", "E", "I", "R", "R_t_multiplier", "phi_t")
STAGES = ("S", "E", "I", "R")


def stage_totals(day: int, daily_new: np.ndarray, theta_ei: float, theta_ir: float,
                 n_agents: float, susceptible_total: float | None = None) -> np.ndarray:
    """(S, E, I, R) at ``day`` from per-day infection totals ``daily_new[0..day]``."""
    lags = day - np.arange(day + 1)
    n = daily_new[: day + 1]
    exposed = float(n[lags < theta_ei].sum())
    infectious = float(n[(lags >= theta_ei) & (lags < theta_ir)].sum())
    recovered = float(n[lags >= theta_ir].sum())
    s = n_agents - float(n.sum()) if susceptible_total is None else susceptible_total
    return np.array([s, exposed, infectious, recovered])


@dataclass
class EpidemicState:
    """Per-agent occupancy at ``day``.

    ``history[d]`` is the infection mass each agent acquired on day ``d``
    (0/1 in hard mode). ``susceptible`` is the remaining S occupancy.
    """

    day: int
    susceptible: Tensor
    history: list[Tensor]
    infection_time: np.ndarray
    vaccinated: np.ndarray
    policy: "PolicyState"
    theta_ei: float
    theta_ir: float
    hidden: tuple[Tensor, Tensor] | None = None
    modulator_out: dict[str, Tensor] = field(default_factory=dict)
    vaccinated_at_infection: np.ndarray | None = None

    @property
    def n_agents(self) -> int:
        return self.susceptible.shape[0]

    def occupancy(self) -> np.ndarray:
        """(n_agents, 4) stage occupancy; rows sum to 1."""
        out = np.zeros((self.n_agents, 4))
        out[:, 0] = self.susceptible.data
        for d, mass in enumerate(self.history):
            lag = self.day - d
            if lag < self.theta_ei:
                out[:, 1] += mass.data
            elif lag < self.theta_ir:
                out[:, 2] += mass.data
            else:
                out[:, 3] += mass.data
        return out


@dataclass
class EpidemicTrace:
    new_infections: np.ndarray
    compartments: np.ndarray
    infection_time: np.ndarray
    R_t_multiplier: np.ndarray
    phi_t: np.ndarray
    incidence: Tensor | None = None
    vaccinated_at_infection: np.ndarray | None = None
    infection_mass: np.ndarray | None = None
    policy_log: dict[str, list[tuple[int, int, int]]] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return int(self.new_infections.shape[0])

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.new_infections)

    def write_csv(self, path: str | Path, comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for t in range(self.horizon):
                s, e, i, r = self.compartments[t]
                w.writerow([t, _num(self.new_infections[t]), _num(s), _num(e), _num(i), _num(r),
                            repr(float(self.R_t_multiplier[t])), repr(float(self.phi_t[t]))])

    @classmethod
    def read_csv(cls, path: str | Path) -> "EpidemicTrace":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            header = next(reader, None)
            if header is None or tuple(header) != TRACE_HEADER:
                raise ParseError("unexpected trace header", line=1, path=str(path))
            for row in reader:
                try:
                    rows.append([float(x) for x in row])
                except ValueError:
                    raise ParseError("non-numeric trace field", line=reader.line_num,
                                     path=str(path)) from None
        arr = np.array(rows).reshape(-1, len(TRACE_HEADER))
        return cls(
            new_infections=arr[:, 1], compartments=arr[:, 2:6],
            infection_time=np.array([], dtype=np.int64),
            R_t_multiplier=arr[:, 6], phi_t=arr[:, 7],
        )


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x == int(x) else repr(x)
