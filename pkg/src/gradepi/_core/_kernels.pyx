# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Mirrors ``_fallback`` function for function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, log1p, sin, tanh, fabs, pow, M_PI

cnp.import_array()

ctypedef cnp.float64_t f64
ctypedef cnp.int64_t i64

cdef double[9] LANCZOS = [
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
cdef double[7] DIGAMMA_TAIL = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
]
cdef double HALF_LOG_2PI = 0.91893853320467274178


def segment_sum(const f64[:] values, const i64[:] segment_ids, Py_ssize_t n_segments):
    cdef cnp.ndarray[f64, ndim=1] out = np.zeros(n_segments, dtype=np.float64)
    cdef f64[:] o = out
    cdef Py_ssize_t i, n = values.shape[0]
    for i in range(n):
        o[segment_ids[i]] += values[i]
    return out


def venue_exposure_forward(
    const f64[:] infl,
    const f64[:] kind_w,
    const i64[:] e_agent,
    const i64[:] e_venue,
    const i64[:] e_kind,
    const f64[:] venue_open,
    Py_ssize_t n_agents,
    Py_ssize_t n_venues,
):
    cdef cnp.ndarray[f64, ndim=1] exposure = np.zeros(n_agents, dtype=np.float64)
    cdef cnp.ndarray[f64, ndim=1] pressure = np.zeros(n_venues, dtype=np.float64)
    cdef f64[:] ex = exposure
    cdef f64[:] pr = pressure
    cdef Py_ssize_t e, a, v, n_edges = e_agent.shape[0]
    for e in range(n_edges):
        pr[e_venue[e]] += infl[e_agent[e]]
    for e in range(n_edges):
        a = e_agent[e]
        v = e_venue[e]
        ex[a] += (kind_w[e_kind[e]] * venue_open[v]) * (pr[v] - infl[a])
    return exposure, pressure


def venue_exposure_backward(
    const f64[:] grad,
    const f64[:] infl,
    const f64[:] kind_w,
    const f64[:] pressure,
    const i64[:] e_agent,
    const i64[:] e_venue,
    const i64[:] e_kind,
    const f64[:] venue_open,
    Py_ssize_t n_venues,
    Py_ssize_t n_kinds,
):
    cdef Py_ssize_t n_agents = infl.shape[0]
    cdef cnp.ndarray[f64, ndim=1] g_infl = np.zeros(n_agents, dtype=np.float64)
    cdef cnp.ndarray[f64, ndim=1] g_kind = np.zeros(n_kinds, dtype=np.float64)
    cdef cnp.ndarray[f64, ndim=1] g_pressure = np.zeros(n_venues, dtype=np.float64)
    cdef f64[:] gi = g_infl
    cdef f64[:] gk = g_kind
    cdef f64[:] gp = g_pressure
    cdef Py_ssize_t e, a, v, n_edges = e_agent.shape[0]
    cdef double ge, op
    for e in range(n_edges):
        a = e_agent[e]
        v = e_venue[e]
        ge = grad[a]
        op = venue_open[v]
        gk[e_kind[e]] += ge * op * (pressure[v] - infl[a])
    for e in range(n_edges):
        a = e_agent[e]
        v = e_venue[e]
        gp[v] += grad[a] * (kind_w[e_kind[e]] * venue_open[v])
    for e in range(n_edges):
        a = e_agent[e]
        v = e_venue[e]
        gi[a] += gp[v] - grad[a] * (kind_w[e_kind[e]] * venue_open[v])
    return g_infl, g_kind


cdef inline double _lanczos(double x) nogil:
    cdef double z = x - 1.0
    cdef double acc = LANCZOS[0]
    cdef int i
    for i in range(1, 9):
        acc += LANCZOS[i] / (z + i)
    cdef double t = z + 7.5
    return HALF_LOG_2PI + (z + 0.5) * log(t) - t + log(acc)


def lgamma(const f64[:] x):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef cnp.ndarray[f64, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef f64[:] o = out
    cdef double xi
    for i in range(n):
        xi = x[i]
        if xi < 0.5:
            o[i] = log(M_PI / fabs(sin(M_PI * xi))) - _lanczos(1.0 - xi)
        else:
            o[i] = _lanczos(xi)
    return out


def digamma(const f64[:] x):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef cnp.ndarray[f64, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef f64[:] o = out
    cdef double xi, shift, inv2, tail
    cdef int k
    for i in range(n):
        xi = x[i]
        shift = 0.0
        while xi < 10.0:
            shift += 1.0 / xi
            xi += 1.0
        inv2 = 1.0 / (xi * xi)
        tail = 0.0
        for k in range(6, -1, -1):
            tail = (tail + DIGAMMA_TAIL[k]) * inv2
        o[i] = log(xi) - 0.5 / xi - tail - shift
    return out


def relaxed_bernoulli(const f64[:] p, const f64[:] u, double temperature):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef cnp.ndarray[f64, ndim=1] y = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[f64, ndim=1] dy = np.empty(n, dtype=np.float64)
    cdef f64[:] yv = y
    cdef f64[:] dv = dy
    cdef double pi, ui, r, q, s
    cdef double inv_t = 1.0 / temperature
    for i in range(n):
        pi = p[i]
        ui = u[i]
        if pi <= 0.0:
            yv[i] = 0.0
            dv[i] = 0.0
        elif pi >= 1.0:
            yv[i] = 1.0
            dv[i] = 0.0
        else:
            # sigmoid(log(r) / t) == 1 / (1 + r**(-1/t)); libm log/tanh per element
            # would be slower than numpy's vectorized versions
            r = ((1.0 - pi) * (1.0 - ui)) / (pi * ui)
            q = r * r if inv_t == 2.0 else pow(r, inv_t)
            s = 1.0 / (1.0 + q)
            yv[i] = s
            dv[i] = s * (1.0 - s) * inv_t / (pi * (1.0 - pi))
    return y, dy
