"""Disease parameters in constrained space and their tensor mirrors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import DomainError, InvalidSpec, ShapeMismatch
from ..population import AGE_BANDS, ETHNICITIES, SEXES, VENUE_KINDS, VenueKindParams

ATTRIBUTES: dict[str, tuple[str, ...]] = {
    "age": AGE_BANDS,
    "sex": SEXES,
    "ethnicity": ETHNICITIES,
    "vaccinated": ("no", "yes"),
}
REFERENCE: dict[str, str] = {
    "age": "25-44",
    "sex": "female",
    "ethnicity": "European",
    "vaccinated": "no",
}


@dataclass
class AttributeFactors:
    """Multiplicative susceptibility per attribute category.

    One reference category per attribute is pinned to exactly 1.
    """

    factors: dict[str, dict[str, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        unknown = set(self.factors) - set(ATTRIBUTES)
        if unknown:
            raise InvalidSpec(f"unknown attributes {sorted(unknown)}")
        for attr, cats in ATTRIBUTES.items():
            table = dict(self.factors.get(attr, {}))
            bad = set(table) - set(cats)
            if bad:
                raise InvalidSpec(f"{attr}: unknown categories {sorted(bad)}")
            ref = REFERENCE[attr]
            if ref in table and table[ref] != 1.0:
                raise InvalidSpec(f"{attr}: reference category {ref!r} is pinned to 1")
            for c in cats:
                value = float(table.get(c, 1.0))
                if not (value > 0 and math.isfinite(value)):
                    raise InvalidSpec(f"{attr}[{c}] must be finite and positive")
                table[c] = value
            self.factors[attr] = table

    def array(self, attr: str) -> np.ndarray:
        return np.array([self.factors[attr][c] for c in ATTRIBUTES[attr]])

    def free_categories(self, attr: str) -> list[str]:
        return [c for c in ATTRIBUTES[attr] if c != REFERENCE[attr]]


@dataclass
class DiseaseParams:
    beta: float = 1e-5
    phi: float = 0.0
    theta_ei: float = 10.0
    theta_ir: float = 18.0
    gamma_shape: float = 2.0
    gamma_scale: float = 1.0
    R: float = 0.05
    venue_params: VenueKindParams = field(default_factory=VenueKindParams)
    psi1: float = 0.9
    psi2: float = 0.9
    attr_susceptibility: AttributeFactors = field(default_factory=AttributeFactors)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        checks = [
            (0.0 < self.beta < 1.0, "beta must lie in (0, 1)"),
            (0.0 <= self.phi < 1.0, "phi must lie in [0, 1)"),
            (self.theta_ei > 0.0, "theta_ei must be positive"),
            (self.theta_ir > self.theta_ei, "theta_ir must exceed theta_ei"),
            (self.gamma_shape > 1.0, "gamma_shape must exceed 1 (the profile is mode-normalized)"),
            (self.gamma_scale > 0.0, "gamma_scale must be positive"),
            (self.R > 0.0, "R must be positive"),
            (0.0 <= self.psi1 <= 1.0, "psi1 must lie in [0, 1]"),
            (0.0 <= self.psi2 <= 1.0, "psi2 must lie in [0, 1]"),
        ]
        for ok, message in checks:
            if not ok:
                raise DomainError(message)

    def to_tensors(self, requires_grad: bool = False) -> "ParamTensors":
        def t(x):
            return ad.leaf(np.asarray(x, dtype=float), requires_grad)

        attr = self.attr_susceptibility
        return ParamTensors(
            beta=t(self.beta), phi=t(self.phi), theta_ei=t(self.theta_ei),
            theta_ir=t(self.theta_ir), gamma_shape=t(self.gamma_shape),
            gamma_scale=t(self.gamma_scale), R=t(self.R),
            rho=t(self.venue_params.rho_array()), q=t(self.venue_params.q_array()),
            psi1=t(self.psi1), psi2=t(self.psi2),
            attr_free={
                a: t([attr.factors[a][c] for c in attr.free_categories(a)]) for a in ATTRIBUTES
            },
        )

    def to_dict(self) -> dict:
        return {
            "beta": self.beta, "phi": self.phi, "theta_ei": self.theta_ei,
            "theta_ir": self.theta_ir, "gamma_shape": self.gamma_shape,
            "gamma_scale": self.gamma_scale, "R": self.R, "psi1": self.psi1, "psi2": self.psi2,
            "rho": dict(self.venue_params.rho), "q": dict(self.venue_params.q),
            "attr_susceptibility": {a: dict(v) for a, v in self.attr_susceptibility.factors.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiseaseParams":
        data = dict(data)
        rho = data.pop("rho", None)
        q = data.pop("q", None)
        attrs = data.pop("attr_susceptibility", None)
        known = {"beta", "phi", "theta_ei", "theta_ir", "gamma_shape", "gamma_scale", "R",
                 "psi1", "psi2"}
        unknown = set(data) - known
        if unknown:
            raise InvalidSpec(f"unknown disease parameters {sorted(unknown)}")
        return cls(
            **{k: float(v) for k, v in data.items()},
            venue_params=VenueKindParams(rho=dict(rho or {}), q=dict(q or {})),
            attr_susceptibility=AttributeFactors({a: dict(v) for a, v in (attrs or {}).items()}),
        )


@dataclass
class ParamTensors:
    """Constrained parameters as tensors; the simulator's working form."""

    beta: Tensor
    phi: Tensor
    theta_ei: Tensor
    theta_ir: Tensor
    gamma_shape: Tensor
    gamma_scale: Tensor
    R: Tensor
    rho: Tensor
    q: Tensor
    psi1: Tensor
    psi2: Tensor
    attr_free: dict[str, Tensor]
    attr: dict[str, Tensor] = field(init=False)

    def __post_init__(self) -> None:
        self.attr = {}
        for name, cats in ATTRIBUTES.items():
            free = self.attr_free[name]
            if free.shape != (len(cats) - 1,):
                raise ShapeMismatch(f"{name}: expected {len(cats) - 1} free factors")
            pos = cats.index(REFERENCE[name])
            parts = []
            if pos > 0:
                parts.append(ad.take(free, np.arange(pos)))
            parts.append(ad.constant(np.ones(1)))
            if pos < len(cats) - 1:
                parts.append(ad.take(free, np.arange(pos, len(cats) - 1)))
            self.attr[name] = ad.concat(parts)

    def kind_ratio(self) -> Tensor:
        return self.rho / self.q

    def scalar_items(self) -> dict[str, Tensor]:
        return {
            "beta": self.beta, "phi": self.phi, "theta_ei": self.theta_ei,
            "theta_ir": self.theta_ir, "gamma_shape": self.gamma_shape,
            "gamma_scale": self.gamma_scale, "R": self.R, "psi1": self.psi1, "psi2": self.psi2,
        }

    def leaves(self) -> dict[str, Tensor]:
        out = dict(self.scalar_items())
        out["rho"] = self.rho
        out["q"] = self.q
        for name, t in self.attr_free.items():
            out[f"attr.{name}"] = t
        return out

    def to_params(self) -> DiseaseParams:
        def f(t: Tensor) -> float:
            return float(t.data)

        rho = dict(zip(VENUE_KINDS, self.rho.data.tolist()))
        q = dict(zip(VENUE_KINDS, self.q.data.tolist()))
        factors = {a: dict(zip(ATTRIBUTES[a], self.attr[a].data.tolist())) for a in ATTRIBUTES}
        return DiseaseParams(
            beta=f(self.beta), phi=f(self.phi), theta_ei=f(self.theta_ei),
            theta_ir=f(self.theta_ir), gamma_shape=f(self.gamma_shape),
            gamma_scale=f(self.gamma_scale), R=f(self.R),
            venue_params=VenueKindParams(rho=rho, q=q), psi1=f(self.psi1), psi2=f(self.psi2),
            attr_susceptibility=AttributeFactors(factors),
        )
