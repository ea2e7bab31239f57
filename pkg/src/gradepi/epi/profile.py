"""Time-evolving infectiousness: a mode-normalized Gamma shape inside a smooth window."""

from __future__ import annotations

from typing import Any

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import DomainError

DEFAULT_GATE_SHARPNESS = 4.0


def _log_gamma_density(s: Tensor, v: Tensor, lam: Tensor) -> Tensor:
    return (v - 1.0) * ad.log(s) - s / lam - ad.lgamma(v) - v * ad.log(lam)


def normalized_gamma(s: Any, v: Any, lam: Any) -> Tensor:
    """Gamma(shape v, scale lam) density at ``s`` divided by its value at the mode.

    Zero for ``s <= 0``. Requires ``v > 1`` so the mode ``(v - 1) * lam`` is interior.
    """
    s, v, lam = ad.constant(s), ad.constant(v), ad.constant(lam)
    if np.any(v.data <= 1.0) or np.any(lam.data <= 0.0):
        raise DomainError("normalized Gamma needs shape > 1 and scale > 0")
    positive = (s.data > 0).astype(np.float64)
    s_safe = s * positive + (1.0 - positive)
    mode = (v - 1.0) * lam
    log_ratio = _log_gamma_density(s_safe, v, lam) - _log_gamma_density(mode, v, lam)
    return ad.exp(log_ratio) * positive


def infectiousness_profile(
    t_since_infection: Any,
    v: Any,
    lam: Any,
    theta_ei: Any,
    theta_ir: Any,
    gate_sharpness: float = DEFAULT_GATE_SHARPNESS,
) -> Tensor:
    """Infectiousness in [0, 1] as a function of days since infection.

    The Gamma clock starts at infectiousness onset ``theta_ei``; the window
    ``sigmoid(k (t - theta_ei)) * sigmoid(k (theta_ir - t))`` keeps both
    timing parameters differentiable.
    """
    t = ad.constant(t_since_infection)
    theta_ei, theta_ir = ad.constant(theta_ei), ad.constant(theta_ir)
    if gate_sharpness <= 0:
        raise DomainError("gate_sharpness must be positive")
    if np.any(theta_ir.data <= theta_ei.data):
        raise DomainError("theta_ir must exceed theta_ei")
    shape = normalized_gamma(t - theta_ei, v, lam)
    k = gate_sharpness
    window = ad.sigmoid(k * (t - theta_ei)) * ad.sigmoid(k * (theta_ir - t))
    return shape * window


def lag_weights(horizon: int, params, gate_sharpness: float = DEFAULT_GATE_SHARPNESS) -> Tensor:
    """Profile at integer lags ``0 .. horizon``."""
    lags = np.arange(horizon + 1, dtype=np.float64)
    return infectiousness_profile(
        lags, params.gamma_shape, params.gamma_scale, params.theta_ei, params.theta_ir,
        gate_sharpness,
    )
