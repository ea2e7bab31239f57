"""Relaxed Bernoulli sampling with an optional straight-through hard forward."""

from __future__ import annotations

from typing import Any

import numpy as np

from .. import _core
from ..errors import DomainError
from .tensor import Tensor, _as_tensor, _make

# Keeps logit(u) finite; a draw of exactly 0 from ``Generator.random`` is possible.
_U_EPS = 1e-12
_P_SLACK = 1e-12


def draw_uniform(rng: np.random.Generator, shape: tuple[int, ...] | int) -> np.ndarray:
    return np.clip(rng.random(shape), _U_EPS, 1.0 - _U_EPS)


def gumbel_softmax_bernoulli(
    p: Any,
    temperature: float,
    rng: np.random.Generator | None,
    hard: bool = False,
    noise: np.ndarray | None = None,
) -> Tensor:
    """Sample per-entry relaxed Bernoulli indicators with success probability ``p``.

    The two-class Gumbel-softmax reduces to logistic noise on the logit:
    ``y = sigmoid((logit p + logit u) / temperature)``. With ``hard=True`` the
    forward value is ``1[y > 0.5]``, which is an exact Bernoulli(p) draw,
    while gradients use ``dy/dp`` (straight-through).

    ``noise`` supplies the uniforms directly; otherwise they are drawn from
    ``rng`` with the same shape as ``p``.
    """
    p = _as_tensor(p)
    if temperature <= 0:
        raise DomainError(f"temperature must be positive, got {temperature}")
    pd = p.data
    if np.any(pd < -_P_SLACK) or np.any(pd > 1.0 + _P_SLACK) or not np.all(np.isfinite(pd)):
        raise DomainError("probabilities must lie in [0, 1]")
    # Rounding in upstream differences can leave p a hair outside [0, 1].
    pd = np.clip(pd, 0.0, 1.0)
    if noise is None:
        if rng is None:
            raise ValueError("either rng or noise is required")
        noise = draw_uniform(rng, pd.shape)
    u = np.asarray(noise, dtype=np.float64).reshape(pd.shape)
    y, dy = _core.relaxed_bernoulli(pd, u, temperature)
    out = (y > 0.5).astype(np.float64) if hard else y
    return _make("gumbel_bernoulli", out, (p,), lambda g: (g * dy,))
