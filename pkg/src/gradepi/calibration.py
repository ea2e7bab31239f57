"""Gradient-based fitting to a weekly case series.

Every learnable quantity lives in unconstrained space and is mapped through a
bijection (sigmoid, softplus, or offset softplus) before each simulation, so
any SGD step yields valid disease parameters.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .epi.engine import SimSettings, Simulator
from .epi.modulator import ModulatorWeights, weight_shapes, xavier_uniform
from .epi.params import ATTRIBUTES, DiseaseParams, ParamTensors
from .epi.state import EpidemicTrace
from .errors import (
    ConfigError,
    DivergenceError,
    EmptySeries,
    LengthMismatch,
    ParseError,
    WeekRangeMismatch,
)
from .interventions import PolicySet
from .population import ContactGraph, Population

OBSERVED_HEADER = ("week_index", "cases")
_LOGIT_EPS = 1e-13


# --- observations ---------------------------------------------------------------

@dataclass
class ObservationSeries:
    week_index: np.ndarray
    cases: np.ndarray
    region: str | None = None

    def __post_init__(self) -> None:
        self.week_index = np.asarray(self.week_index, dtype=np.int64)
        self.cases = np.asarray(self.cases, dtype=np.float64)
        if self.cases.size == 0:
            raise EmptySeries("observation series is empty")
        if self.week_index.shape != self.cases.shape:
            raise LengthMismatch("week_index and cases differ in length")
        if np.any(np.diff(self.week_index) != 1):
            raise WeekRangeMismatch("week indices must be consecutive and increasing")
        if np.any(self.cases < 0) or np.any(self.cases != np.round(self.cases)):
            raise ParseError("cases must be non-negative integers")

    def __len__(self) -> int:
        return int(self.cases.shape[0])

    @property
    def n_days(self) -> int:
        return 7 * len(self)

    @classmethod
    def from_csv(cls, path: str | Path, region: str | None = None) -> "ObservationSeries":
        weeks, cases = [], []
        with open(path, newline="") as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != OBSERVED_HEADER:
                raise ParseError(f"expected header {','.join(OBSERVED_HEADER)}", line=1,
                                 path=str(path))
            for row in reader:
                if not row:
                    continue
                line = reader.line_num
                if len(row) != 2:
                    raise ParseError("expected 2 fields", line=line, path=str(path))
                try:
                    w, c = int(row[0]), float(row[1])
                except ValueError:
                    raise ParseError("non-numeric field", line=line, path=str(path)) from None
                if not math.isfinite(c) or c < 0 or c != int(c):
                    raise ParseError("cases must be a non-negative integer", line=line,
                                     path=str(path))
                weeks.append(w)
                cases.append(c)
        return cls(np.array(weeks, dtype=np.int64), np.array(cases), region)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(OBSERVED_HEADER)
            for week, c in zip(self.week_index, self.cases):
                w.writerow([int(week), int(c)])


def weekly_aggregate(trace: EpidemicTrace | Tensor | np.ndarray, week_length: int = 7) -> Tensor:
    """Consecutive ``week_length``-day sums; a trailing partial week is kept."""
    daily = trace.incidence if isinstance(trace, EpidemicTrace) else trace
    if daily is None:
        daily = trace.new_infections
    daily = ad.constant(daily)
    n = daily.shape[0]
    if n < 1:
        raise EmptySeries("trace is empty")
    weeks = np.arange(n) // week_length
    return ad.segment_sum(daily, weeks, int(weeks[-1]) + 1)


def loss(sim_weekly: Any, observed: ObservationSeries | Any, normalize: bool = False) -> Tensor:
    """Mean squared error over weeks, optionally after dividing both by max observed."""
    sim = ad.constant(sim_weekly)
    obs = observed.cases if isinstance(observed, ObservationSeries) else np.asarray(observed, float)
    if sim.shape != obs.shape:
        raise LengthMismatch(f"simulated {sim.shape[0]} weeks vs observed {obs.shape[0]}")
    if normalize:
        scale = max(float(np.max(obs)), 1.0)
        sim, obs = sim * (1.0 / scale), obs / scale
    diff = sim - obs
    return ad.sum(diff * diff) * (1.0 / obs.shape[0])


# --- transforms -----------------------------------------------------------------

def _logit(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, _LOGIT_EPS, 1.0 - _LOGIT_EPS)
    return np.log(x) - np.log1p(-x)


def _softplus_inv(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x + np.log(-np.expm1(-x))


@dataclass(frozen=True)
class Transform:
    forward: Callable[[Tensor], Tensor]
    inverse: Callable[[np.ndarray], np.ndarray]


SIGMOID = Transform(ad.sigmoid, _logit)
SOFTPLUS = Transform(ad.softplus, _softplus_inv)
SHIFTED_SOFTPLUS = Transform(lambda u: 1.0 + ad.softplus(u), lambda x: _softplus_inv(x - 1.0))
IDENTITY = Transform(lambda u: u, lambda x: np.asarray(x, dtype=np.float64))

SCALAR_TRANSFORMS: dict[str, Transform] = {
    "beta": SIGMOID,
    "phi": SIGMOID,
    "theta_ei": SOFTPLUS,
    "theta_gap": SOFTPLUS,
    "gamma_shape": SHIFTED_SOFTPLUS,
    "gamma_scale": SOFTPLUS,
    "R": SOFTPLUS,
    "psi1": SIGMOID,
    "psi2": SIGMOID,
}
DEFAULT_LEARN = ("beta", "R", "theta_ei", "theta_gap", "gamma_shape", "gamma_scale", "rho", "q")


def transform_for(name: str) -> Transform:
    if name in SCALAR_TRANSFORMS:
        return SCALAR_TRANSFORMS[name]
    if name in ("rho", "q") or name.startswith("attr."):
        return SOFTPLUS
    if name.startswith("mod."):
        return IDENTITY
    raise ConfigError(f"unknown learnable quantity {name!r}")


@dataclass
class LearnableParamSet:
    """Unconstrained mirror of the disease parameters and modulator weights.

    ``raw`` maps names to unconstrained arrays; ``learn`` lists which ones
    SGD updates (the rest stay at their initial values).
    """

    raw: dict[str, np.ndarray]
    learn: tuple[str, ...] = DEFAULT_LEARN
    phi_max: float = 1e-3
    input_scale: float = 1000.0

    def __post_init__(self) -> None:
        for name in self.learn:
            if name not in self.raw:
                raise ConfigError(f"cannot learn {name!r}: not part of the parameter set")
            transform_for(name)

    @property
    def has_modulator(self) -> bool:
        return any(k.startswith("mod.") for k in self.raw)

    @classmethod
    def from_params(cls, params: DiseaseParams, modulator: ModulatorWeights | None = None,
                    learn: tuple[str, ...] | None = None) -> "LearnableParamSet":
        raw: dict[str, np.ndarray] = {}
        values = {
            "beta": params.beta, "phi": params.phi, "theta_ei": params.theta_ei,
            "theta_gap": params.theta_ir - params.theta_ei, "gamma_shape": params.gamma_shape,
            "gamma_scale": params.gamma_scale, "R": params.R, "psi1": params.psi1,
            "psi2": params.psi2,
        }
        for name, value in values.items():
            x = np.asarray(value, dtype=np.float64)
            raw[name] = np.array(SCALAR_TRANSFORMS[name].inverse(x))
        raw["rho"] = _softplus_inv(params.venue_params.rho_array())
        raw["q"] = _softplus_inv(params.venue_params.q_array())
        factors = params.attr_susceptibility
        for attr in ATTRIBUTES:
            free = [factors.factors[attr][c] for c in factors.free_categories(attr)]
            raw[f"attr.{attr}"] = _softplus_inv(np.array(free))
        phi_max, scale = 1e-3, 1000.0
        if modulator is not None:
            for k, v in modulator.arrays.items():
                raw[f"mod.{k}"] = v.copy()
            phi_max, scale = modulator.phi_max, modulator.input_scale
        if learn is None:
            learn = DEFAULT_LEARN + (tuple(f"mod.{k}" for k in modulator.arrays)
                                     if modulator is not None else ())
        return cls(raw, tuple(learn), phi_max, scale)

    def copy(self) -> "LearnableParamSet":
        return LearnableParamSet({k: v.copy() for k, v in self.raw.items()}, self.learn,
                                 self.phi_max, self.input_scale)

    def leaves(self) -> dict[str, Tensor]:
        """Fresh leaf tensors on the active tape; learnable ones require grad."""
        return {k: ad.leaf(v, k in self.learn) for k, v in self.raw.items()}

    def constrained(self, leaves: dict[str, Tensor]) -> tuple[ParamTensors, dict[str, Tensor] | None]:
        def f(name: str) -> Tensor:
            return transform_for(name).forward(leaves[name])

        theta_ei = f("theta_ei")
        params = ParamTensors(
            beta=f("beta"), phi=f("phi"), theta_ei=theta_ei,
            theta_ir=theta_ei + f("theta_gap"), gamma_shape=f("gamma_shape"),
            gamma_scale=f("gamma_scale"), R=f("R"), rho=f("rho"), q=f("q"),
            psi1=f("psi1"), psi2=f("psi2"),
            attr_free={a: f(f"attr.{a}") for a in ATTRIBUTES},
        )
        mod = None
        if self.has_modulator:
            mod = {k[4:]: leaves[k] for k in leaves if k.startswith("mod.")}
        return params, mod

    def to_params(self) -> DiseaseParams:
        with ad.Tape():
            params, _ = self.constrained({k: ad.constant(v) for k, v in self.raw.items()})
        return params.to_params()

    def modulator(self) -> ModulatorWeights | None:
        if not self.has_modulator:
            return None
        arrays = {k[4:]: v.copy() for k, v in self.raw.items() if k.startswith("mod.")}
        hidden = arrays["U_i"].shape[0]
        return ModulatorWeights(hidden, self.phi_max, self.input_scale, arrays)


def init_xavier(shapes: dict[str, tuple[int, ...]] | int, rng: np.random.Generator | int,
                scalars: DiseaseParams | None = None, phi_max: float = 1e-3,
                learn: tuple[str, ...] | None = None) -> LearnableParamSet:
    """Xavier-uniform weights plus scalar parameters at their midpoints.

    ``shapes`` is a name-to-shape dict or a hidden size for the standard
    modulator layout. Biases (1-D shapes named ``b_*``) start at zero.
    """
    rng = np.random.default_rng(rng)
    if isinstance(shapes, int):
        shapes = weight_shapes(shapes)
    arrays = {}
    for name, shape in shapes.items():
        if name.startswith("b_"):
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = xavier_uniform(tuple(shape), rng)
    modulator = None
    if "U_i" in arrays:
        modulator = ModulatorWeights(arrays["U_i"].shape[0], phi_max, arrays=arrays)
    params = scalars or DiseaseParams()
    lp = LearnableParamSet.from_params(params, modulator, learn)
    if modulator is None:
        for name, arr in arrays.items():
            lp.raw[f"mod.{name}"] = arr
    return lp


# --- optimisation -----------------------------------------------------------------

@dataclass
class CalibrationConfig:
    iterations: int = 100
    learning_rate: float = 0.03
    momentum: float = 0.9
    seed: int = 0
    normalize: bool = True
    straight_through: bool = True
    temperature: float = 0.5
    gate_sharpness: float = 4.0
    clip_norm: float | None = 5.0
    learn: tuple[str, ...] | None = None
    restriction: str | None = None

    def validate(self) -> None:
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.learning_rate < 0 or not math.isfinite(self.learning_rate):
            raise ConfigError("learning_rate must be finite and >= 0")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError("momentum must lie in [0, 1)")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")


@dataclass
class FitResult:
    params: DiseaseParams
    modulator: ModulatorWeights | None
    loss_history: list[float]
    beta_trajectory: list[float]
    simulated_weekly: np.ndarray
    best_iteration: int
    snapshots: list[dict[str, float]] = field(default_factory=list)
    week_index: list[int] | None = None

    def to_json(self, config_hash: str | None = None) -> dict:
        out = {
            "params": self.params.to_dict(),
            "loss_history": self.loss_history,
            "beta_trajectory": self.beta_trajectory,
            "simulated_weekly": self.simulated_weekly.tolist(),
            "best_iteration": self.best_iteration,
        }
        if self.week_index is not None:
            out["week_index"] = [int(w) for w in self.week_index]
        if self.modulator is not None:
            out["modulator"] = self.modulator.to_dict()
        if config_hash is not None:
            out["config_hash"] = config_hash
        return out

    def write_json(self, path: str | Path, config_hash: str | None = None) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(config_hash), fh, indent=2)

    @classmethod
    def from_json(cls, data: dict) -> "FitResult":
        mod = data.get("modulator")
        history = [float(x) for x in data.get("loss_history", [])]
        return cls(
            params=DiseaseParams.from_dict(data["params"]),
            modulator=ModulatorWeights.from_dict(mod) if mod else None,
            loss_history=history,
            beta_trajectory=[float(x) for x in data.get("beta_trajectory", [])],
            simulated_weekly=np.asarray(data.get("simulated_weekly", []), dtype=np.float64),
            best_iteration=int(data.get("best_iteration", 0)),
            week_index=data.get("week_index"),
        )

    @classmethod
    def read_json(cls, path: str | Path) -> "FitResult":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno, path=str(path)) from None
        if not isinstance(data, dict) or "params" not in data:
            raise ParseError("fit file has no 'params' table", path=str(path))
        return cls.from_json(data)


def iteration_seed(seed: int, iteration: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, iteration])


def evaluate(sim: Simulator, lp: LearnableParamSet, observed: ObservationSeries,
             noise_seed: Any, normalize: bool, restriction: Any = None
             ) -> tuple[Tensor, Tensor, dict[str, Tensor]]:
    """Simulate once with ``noise_seed``; returns (loss, weekly, leaves) on the active tape."""
    leaves = lp.leaves()
    params, mod = lp.constrained(leaves)
    modulator = None if mod is None else (mod, lp.phi_max, lp.input_scale)
    trace = sim.run(params, np.random.default_rng(noise_seed), modulator=modulator,
                    restriction=restriction)
    weekly = weekly_aggregate(trace)
    return loss(weekly, observed, normalize), weekly, leaves


def calibrate(pop: Population, graph: ContactGraph, observed: ObservationSeries,
              policies: PolicySet | None = None, config: CalibrationConfig | None = None,
              init: LearnableParamSet | None = None,
              callback: Callable[[int, float, LearnableParamSet], None] | None = None
              ) -> FitResult:
    """SGD with momentum in unconstrained space; returns the best-loss snapshot."""
    cfg = config or CalibrationConfig()
    cfg.validate()
    lp = (init or LearnableParamSet.from_params(DiseaseParams(), learn=cfg.learn)).copy()
    if cfg.learn is not None:
        lp = LearnableParamSet(lp.raw, tuple(cfg.learn), lp.phi_max, lp.input_scale)
    settings = SimSettings(horizon_days=observed.n_days, mode="relaxed",
                           straight_through=cfg.straight_through, temperature=cfg.temperature,
                           gate_sharpness=cfg.gate_sharpness)
    sim = Simulator(pop, graph, settings, policies)
    velocity = {k: np.zeros_like(lp.raw[k]) for k in lp.learn}
    history: list[float] = []
    betas: list[float] = []
    snapshots: list[dict[str, float]] = []
    best = (math.inf, -1, lp.copy(), np.zeros(len(observed)))

    for it in range(cfg.iterations):
        with ad.Tape():
            value, weekly, leaves = evaluate(sim, lp, observed, iteration_seed(cfg.seed, it),
                                             cfg.normalize, cfg.restriction)
            current = float(value.data)
            if not math.isfinite(current):
                raise DivergenceError(it, current)
            grads = ad.backward(value)
            g = {k: np.asarray(grads[leaves[k]], dtype=np.float64) for k in lp.learn}
        if not all(np.all(np.isfinite(v)) for v in g.values()):
            raise DivergenceError(it, current)
        history.append(current)
        beta = float(SIGMOID.forward(ad.constant(lp.raw["beta"])).data)
        betas.append(beta)
        snapshots.append(_snapshot(lp))
        if current < best[0]:
            best = (current, it, lp.copy(), weekly.data.copy())
        if callback is not None:
            callback(it, current, lp)
        if cfg.clip_norm is not None:
            norm = math.sqrt(sum(float(np.sum(v * v)) for v in g.values()))
            if norm > cfg.clip_norm:
                g = {k: v * (cfg.clip_norm / norm) for k, v in g.items()}
        for k in lp.learn:
            velocity[k] = cfg.momentum * velocity[k] + g[k]
            lp.raw[k] = lp.raw[k] - cfg.learning_rate * velocity[k]

    _, best_it, best_lp, best_weekly = best
    return FitResult(
        params=best_lp.to_params(), modulator=best_lp.modulator(), loss_history=history,
        beta_trajectory=betas, simulated_weekly=best_weekly, best_iteration=best_it,
        snapshots=snapshots, week_index=[int(w) for w in observed.week_index],
    )


def _snapshot(lp: LearnableParamSet) -> dict[str, float]:
    out = {}
    for name in SCALAR_TRANSFORMS:
        out[name] = float(SCALAR_TRANSFORMS[name].forward(ad.constant(lp.raw[name])).data)
    return out


__all__ = [
    "OBSERVED_HEADER", "CalibrationConfig", "FitResult", "LearnableParamSet",
    "ObservationSeries", "SCALAR_TRANSFORMS", "Transform", "calibrate", "evaluate",
    "init_xavier", "iteration_seed", "loss", "transform_for", "weekly_aggregate",
]
