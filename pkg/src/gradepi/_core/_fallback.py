"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature and
the same accumulation order, so the two backends agree to rounding.
"""

from __future__ import annotations

import math

import numpy as np

# Lanczos approximation, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array(
    [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ]
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Asymptotic digamma tail: sum_k B_2k / (2k x^2k) for k = 1..7.
_DIGAMMA_TAIL = np.array(
    [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32760.0,
        1.0 / 12.0,
    ]
)
_DIGAMMA_SHIFT = 10.0


def segment_sum(values: np.ndarray, segment_ids: np.ndarray, n_segments: int) -> np.ndarray:
    """Sum ``values`` into ``n_segments`` bins in input order."""
    return np.bincount(segment_ids, weights=values, minlength=n_segments).astype(np.float64)


def venue_exposure_forward(
    infl: np.ndarray,
    kind_w: np.ndarray,
    e_agent: np.ndarray,
    e_venue: np.ndarray,
    e_kind: np.ndarray,
    venue_open: np.ndarray,
    n_agents: int,
    n_venues: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-agent exposure through shared venues, excluding the agent itself.

    Returns ``(exposure, pressure)`` where ``pressure[v]`` is the summed
    infectiousness of the members of venue ``v``.
    """
    pressure = np.bincount(e_venue, weights=infl[e_agent], minlength=n_venues)
    coef = kind_w[e_kind] * venue_open[e_venue]
    edge_val = coef * (pressure[e_venue] - infl[e_agent])
    exposure = np.bincount(e_agent, weights=edge_val, minlength=n_agents)
    return exposure.astype(np.float64), pressure.astype(np.float64)


def venue_exposure_backward(
    grad: np.ndarray,
    infl: np.ndarray,
    kind_w: np.ndarray,
    pressure: np.ndarray,
    e_agent: np.ndarray,
    e_venue: np.ndarray,
    e_kind: np.ndarray,
    venue_open: np.ndarray,
    n_venues: int,
    n_kinds: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``venue_exposure_forward`` w.r.t. ``infl`` and ``kind_w``."""
    n_agents = infl.shape[0]
    g_edge = grad[e_agent]
    opened = venue_open[e_venue]
    coef = kind_w[e_kind] * opened
    g_kind = np.bincount(
        e_kind, weights=g_edge * opened * (pressure[e_venue] - infl[e_agent]), minlength=n_kinds
    )
    g_pressure = np.bincount(e_venue, weights=g_edge * coef, minlength=n_venues)
    g_infl = np.bincount(
        e_agent, weights=g_pressure[e_venue] - g_edge * coef, minlength=n_agents
    )
    return g_infl.astype(np.float64), g_kind.astype(np.float64)


def lgamma(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = x < 0.5
    if np.any(small):
        xs = x[small]
        out[small] = np.log(math.pi / np.abs(np.sin(math.pi * xs))) - _lanczos(1.0 - xs)
    big = ~small
    if np.any(big):
        out[big] = _lanczos(x[big])
    return out


def _lanczos(x: np.ndarray) -> np.ndarray:
    z = x - 1.0
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for i in range(1, 9):
        acc = acc + _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(acc)


def digamma(x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=np.float64, copy=True)
    shift = np.zeros_like(x)
    # Recurrence psi(x) = psi(x + 1) - 1/x until x >= _DIGAMMA_SHIFT.
    while True:
        low = x < _DIGAMMA_SHIFT
        if not np.any(low):
            break
        shift[low] += 1.0 / x[low]
        x[low] += 1.0
    inv2 = 1.0 / (x * x)
    tail = np.zeros_like(x)
    for c in _DIGAMMA_TAIL[::-1]:
        tail = (tail + c) * inv2
    return np.log(x) - 0.5 / x - tail - shift


def relaxed_bernoulli(
    p: np.ndarray, u: np.ndarray, temperature: float
) -> tuple[np.ndarray, np.ndarray]:
    """Logistic-noise relaxed Bernoulli sample and its derivative in ``p``.

    ``y = sigmoid((logit p + logit u) / temperature)``. At ``p`` in {0, 1} the
    sample is exactly 0 or 1 and the derivative is reported as 0.
    """
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        z = (np.log(p) - np.log1p(-p) + np.log(u) - np.log1p(-u)) / temperature
        y = 0.5 * (1.0 + np.tanh(0.5 * z))
        interior = (p > 0.0) & (p < 1.0)
        dy = np.where(interior, y * (1.0 - y) / (temperature * p * (1.0 - p)), 0.0)
    y = np.where(p <= 0.0, 0.0, np.where(p >= 1.0, 1.0, y))
    return y, dy
