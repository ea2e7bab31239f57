"""Recurrent modulator: an LSTM cell emitting weekly R and phi adjustments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import ShapeMismatch

GATES = ("i", "f", "o", "g")
DEFAULT_HIDDEN = 16
DEFAULT_PHI_MAX = 1e-3


def weight_shapes(hidden: int, inputs: int = 1) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for gate in GATES:
        shapes[f"W_{gate}"] = (hidden, inputs)
        shapes[f"U_{gate}"] = (hidden, hidden)
        shapes[f"b_{gate}"] = (hidden,)
    shapes["W_R"] = (1, hidden)
    shapes["b_R"] = (1,)
    shapes["W_phi"] = (1, hidden)
    shapes["b_phi"] = (1,)
    return shapes


def fans(shape: tuple[int, ...]) -> tuple[int, int]:
    """(fan_in, fan_out) of a weight matrix; vectors count as a single row."""
    if len(shape) == 1:
        return 1, shape[0]
    return shape[1], shape[0]


@dataclass
class ModulatorWeights:
    hidden_size: int = DEFAULT_HIDDEN
    phi_max: float = DEFAULT_PHI_MAX
    input_scale: float = 1000.0
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        shapes = weight_shapes(self.hidden_size)
        for name, shape in shapes.items():
            arr = np.asarray(self.arrays.get(name, np.zeros(shape)), dtype=np.float64)
            if arr.shape != shape:
                raise ShapeMismatch(f"{name}: expected shape {shape}, got {arr.shape}")
            self.arrays[name] = arr
        extra = set(self.arrays) - set(shapes)
        if extra:
            raise ShapeMismatch(f"unknown modulator weights {sorted(extra)}")

    @classmethod
    def xavier(cls, rng: np.random.Generator, hidden_size: int = DEFAULT_HIDDEN,
               phi_max: float = DEFAULT_PHI_MAX, phi_bias: float = 0.0,
               input_scale: float = 1000.0) -> "ModulatorWeights":
        arrays = {}
        for name, shape in weight_shapes(hidden_size).items():
            if name.startswith("b_"):
                arrays[name] = np.zeros(shape)
            else:
                arrays[name] = xavier_uniform(shape, rng)
        arrays["b_phi"] = np.full(1, phi_bias)
        return cls(hidden_size, phi_max, input_scale, arrays)

    def to_tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: ad.leaf(v, requires_grad) for k, v in self.arrays.items()}

    def to_dict(self) -> dict:
        return {
            "hidden_size": self.hidden_size,
            "phi_max": self.phi_max,
            "input_scale": self.input_scale,
            "arrays": {k: v.tolist() for k, v in self.arrays.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModulatorWeights":
        return cls(
            hidden_size=int(data["hidden_size"]),
            phi_max=float(data["phi_max"]),
            input_scale=float(data.get("input_scale", 1000.0)),
            arrays={k: np.asarray(v, dtype=np.float64) for k, v in data["arrays"].items()},
        )


def xavier_uniform(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    fan_in, fan_out = fans(shape)
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def modulator_input(weekly_incidence, n_agents: int, input_scale: float = 1000.0) -> Tensor:
    """``log1p(input_scale * incidence / n_agents)`` as a length-1 input vector.

    The log keeps the input O(1) from tiny to large populations so the gates
    do not saturate.
    """
    z = ad.constant(weekly_incidence) * (input_scale / n_agents)
    return ad.reshape(ad.log(1.0 + z), (1,))


def lstm_step(weights: dict[str, Tensor], h: Tensor, c: Tensor, x: Tensor,
              phi_max: float = DEFAULT_PHI_MAX) -> tuple[Tensor, Tensor, dict[str, Tensor]]:
    """One LSTM cell update followed by the bounded output head.

    Returns ``(h', c', {"R_t": 2 sigmoid(.), "phi_t": phi_max sigmoid(.)})``.
    """
    h, c, x = ad.constant(h), ad.constant(c), ad.constant(x)
    hidden = weights["U_i"].shape[0]
    if h.shape != (hidden,) or c.shape != (hidden,):
        raise ShapeMismatch(f"hidden/cell state must have shape ({hidden},)")
    if x.shape != (weights["W_i"].shape[1],):
        raise ShapeMismatch(f"input must have shape ({weights['W_i'].shape[1]},)")

    def gate(name: str) -> Tensor:
        return weights[f"W_{name}"] @ x + weights[f"U_{name}"] @ h + weights[f"b_{name}"]

    i = ad.sigmoid(gate("i"))
    f = ad.sigmoid(gate("f"))
    o = ad.sigmoid(gate("o"))
    g = ad.tanh(gate("g"))
    c_next = f * c + i * g
    h_next = o * ad.tanh(c_next)
    r_logit = ad.reshape(weights["W_R"] @ h_next + weights["b_R"], ())
    phi_logit = ad.reshape(weights["W_phi"] @ h_next + weights["b_phi"], ())
    outputs = {"R_t": 2.0 * ad.sigmoid(r_logit), "phi_t": phi_max * ad.sigmoid(phi_logit)}
    return h_next, c_next, outputs
