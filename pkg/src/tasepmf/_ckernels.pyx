# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_pykernels`` for the reference semantics."""
from libc.math cimport log

import numpy as np


def ssa_advance(unsigned char[::1] config, double t, double t_stop, double alpha,
                double beta, const double[::1] h, const double[::1] uniforms,
                double[::1] occ_time, double[::1] pair_time):
    cdef Py_ssize_t n = config.shape[0]
    cdef Py_ssize_t limit = uniforms.shape[0]
    cdef Py_ssize_t used = 0, i, j, d
    cdef long exits = 0
    cdef double total, tau, dt, target, acc
    cdef bint stop, chosen
    with nogil:
        while used + 2 <= limit:
            total = 0.0
            if config[n - 1] == 0:
                total += alpha
            for i in range(n - 1, 0, -1):
                if config[i] == 1 and config[i - 1] == 0:
                    total += h[i - 1]
            if config[0] == 1:
                total += beta
            tau = -log(1.0 - uniforms[used]) / total
            used += 1
            stop = t + tau >= t_stop
            dt = t_stop - t if stop else tau
            for j in range(n):
                if config[j]:
                    occ_time[j] += dt
            for d in range(n - 1):
                pair_time[4 * d + 2 * config[d + 1] + config[d]] += dt
            if stop:
                t = t_stop
                break
            t += tau
            target = uniforms[used] * total
            used += 1
            acc = 0.0
            if config[n - 1] == 0:
                acc += alpha
                if target < acc:
                    config[n - 1] = 1
                    continue
            chosen = False
            for i in range(n - 1, 0, -1):
                if config[i] == 1 and config[i - 1] == 0:
                    acc += h[i - 1]
                    if target < acc:
                        config[i] = 0
                        config[i - 1] = 1
                        chosen = True
                        break
            if not chosen and config[0] == 1:
                config[0] = 0
                exits += 1
    return t, used, exits


def cluster_closure(const double[::1] x, const long[::1] num_a, const long[::1] num_b,
                    const long[::1] den, double[::1] out, double threshold):
    cdef Py_ssize_t k, size = out.shape[0]
    cdef double dv, q
    for k in range(size):
        if den[k] < 0:
            out[k] = x[num_a[k]] * x[num_b[k]]
            continue
        dv = x[den[k]]
        if dv > threshold:
            q = x[num_b[k]] / dv
            if q < 0.0:
                q = 0.0
            elif q > 1.0:
                q = 1.0
            out[k] = x[num_a[k]] * q
        else:
            out[k] = 0.0
    return np.asarray(out)
