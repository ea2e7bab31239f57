"""Hot-kernel backend.

The compiled Cython extension is used when it has been built; otherwise the
numpy fallback is selected at import. ``use_backend`` switches explicitly,
which the tests and the benchmark use to compare the two.
"""

from __future__ import annotations

from types import ModuleType

import numpy as np

from . import _fallback

try:
    from . import _kernels as _compiled  # type: ignore[attr-defined]
except ImportError:  # extension not built
    _compiled = None

_BACKENDS: dict[str, ModuleType | None] = {"compiled": _compiled, "python": _fallback}
_active: ModuleType = _compiled if _compiled is not None else _fallback


def available_backends() -> list[str]:
    return [name for name, mod in _BACKENDS.items() if mod is not None]


def backend_name() -> str:
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def use_backend(name: str) -> str:
    """Select the kernel backend by name and return the previous one."""
    global _active
    mod = _BACKENDS.get(name)
    if mod is None:
        raise ValueError(f"kernel backend {name!r} is not available")
    previous = backend_name()
    _active = mod
    return previous


def _f64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64).reshape(-1)


def _i64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.int64).reshape(-1)


def segment_sum(values, segment_ids, n_segments: int) -> np.ndarray:
    return _active.segment_sum(_f64(values), _i64(segment_ids), int(n_segments))


def venue_exposure_forward(infl, kind_w, e_agent, e_venue, e_kind, venue_open, n_agents, n_venues):
    return _active.venue_exposure_forward(
        _f64(infl), _f64(kind_w), _i64(e_agent), _i64(e_venue), _i64(e_kind),
        _f64(venue_open), int(n_agents), int(n_venues),
    )


def venue_exposure_backward(grad, infl, kind_w, pressure, e_agent, e_venue, e_kind, venue_open,
                            n_venues, n_kinds):
    return _active.venue_exposure_backward(
        _f64(grad), _f64(infl), _f64(kind_w), _f64(pressure), _i64(e_agent), _i64(e_venue),
        _i64(e_kind), _f64(venue_open), int(n_venues), int(n_kinds),
    )


def lgamma(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    return _active.lgamma(_f64(arr)).reshape(arr.shape)


def digamma(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    return _active.digamma(_f64(arr)).reshape(arr.shape)


def relaxed_bernoulli(p, u, temperature: float) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(p, dtype=np.float64)
    y, dy = _active.relaxed_bernoulli(_f64(arr), _f64(u), float(temperature))
    return y.reshape(arr.shape), dy.reshape(arr.shape)
