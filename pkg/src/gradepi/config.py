"""Run configuration: one TOML file, strict keys, and a provenance hash."""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .calibration import CalibrationConfig
from .ensemble import EnsembleConfig
from .epi.params import DiseaseParams
from .errors import ConfigError, DataError
from .interventions import PolicySet
from .population import PopulationSpec

TABLES = ("seed", "population", "disease", "simulation", "policies", "calibration", "ensemble",
          "io")
SIMULATION_KEYS = {
    "horizon_days": 70, "mode": "hard", "temperature": 0.5, "gate_sharpness": 4.0,
    "restriction": "", "modulator": False, "hidden_size": 16, "phi_max": 1e-3,
}
IO_KEYS = {"agents": "", "venues": "", "observed": "", "fit": "", "output_dir": "."}
CALIBRATION_EXTRA = {"week_range": None}
ENSEMBLE_KEYS = ("n_members", "master_seed", "jitter", "compliance_range", "resample_seeds",
                 "seed_count")


def _check_keys(table: str, data: dict, allowed) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"[{table}]: unknown keys {sorted(unknown)}")


@dataclass
class RunConfig:
    seed: int = 0
    population: PopulationSpec = field(default_factory=PopulationSpec)
    disease: DiseaseParams = field(default_factory=DiseaseParams)
    simulation: dict[str, Any] = field(default_factory=lambda: dict(SIMULATION_KEYS))
    policies: PolicySet = field(default_factory=PolicySet)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    week_range: tuple[int, int] | None = None
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    io: dict[str, str] = field(default_factory=lambda: dict(IO_KEYS))
    base_dir: Path = field(default_factory=Path.cwd)

    def resolved(self) -> dict:
        """Plain-data view of every setting; the basis of the config hash.

        The output directory is left out so that identical runs written to
        different places carry the same hash.
        """
        pop = {f.name: getattr(self.population, f.name) for f in fields(PopulationSpec)}
        cal = {f.name: getattr(self.calibration, f.name) for f in fields(CalibrationConfig)}
        ens = {k: getattr(self.ensemble, k) for k in ENSEMBLE_KEYS}
        return _plain({
            "seed": self.seed, "population": pop, "disease": self.disease.to_dict(),
            "simulation": self.simulation, "policies": self.policies.to_dict(),
            "calibration": {**cal, "week_range": self.week_range}, "ensemble": ens,
            "io": {k: v for k, v in self.io.items() if k != "output_dir"},
        })

    def hash(self) -> str:
        text = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def path(self, key: str) -> Path | None:
        value = self.io.get(key, "")
        if not value:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p


def _plain(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, Path):
        return str(x)
    return x


def default_config_text() -> str:
    return resources.files("gradepi").joinpath("data/defaults.toml").read_text()


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (flags win)."""
    data: dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        base = path.resolve().parent
    for table, values in (overrides or {}).items():
        if isinstance(values, dict):
            data.setdefault(table, {}).update(values)
        else:
            data[table] = values
    return build_config(data, base)


def build_config(data: dict, base_dir: Path | None = None) -> RunConfig:
    data = copy.deepcopy(data)
    _check_keys("top level", data, TABLES)
    cfg = RunConfig(base_dir=base_dir or Path.cwd())
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    cfg.seed = seed
    try:
        pop = data.get("population", {})
        _check_keys("population", pop, [f.name for f in fields(PopulationSpec)])
        cfg.population = PopulationSpec(**pop)
        cfg.population.validate()

        cfg.disease = DiseaseParams.from_dict(data.get("disease", {}))

        sim = data.get("simulation", {})
        _check_keys("simulation", sim, SIMULATION_KEYS)
        cfg.simulation = {**SIMULATION_KEYS, **sim}
        if cfg.simulation["mode"] not in ("hard", "relaxed"):
            raise ConfigError("[simulation] mode must be 'hard' or 'relaxed'")

        cfg.policies = PolicySet.from_dict(data.get("policies", {}))
        cfg.policies.validate()

        cal = dict(data.get("calibration", {}))
        _check_keys("calibration", cal,
                    [f.name for f in fields(CalibrationConfig)] + list(CALIBRATION_EXTRA))
        week_range = cal.pop("week_range", None)
        if week_range is not None:
            if len(week_range) != 2 or week_range[0] > week_range[1]:
                raise ConfigError("[calibration] week_range must be [first, last]")
            cfg.week_range = (int(week_range[0]), int(week_range[1]))
        cal.setdefault("seed", cfg.seed)
        if "learn" in cal:
            cal["learn"] = tuple(cal["learn"])
        cfg.calibration = CalibrationConfig(**cal)
        cfg.calibration.validate()

        ens = dict(data.get("ensemble", {}))
        _check_keys("ensemble", ens, ENSEMBLE_KEYS)
        ens.setdefault("master_seed", cfg.seed)
        if "compliance_range" in ens:
            ens["compliance_range"] = tuple(ens["compliance_range"])
        cfg.ensemble = EnsembleConfig(**ens)
        cfg.ensemble.validate()

        io = data.get("io", {})
        _check_keys("io", io, IO_KEYS)
        cfg.io = {**IO_KEYS, **{k: str(v) for k, v in io.items()}}
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    except DataError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return cfg
