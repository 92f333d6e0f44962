"""Pure-Python reference kernels.

Semantics match ``_ckernels.pyx`` operation for operation, so both backends
produce identical results from identical random streams.
"""
import math

import numpy as np


def ssa_advance(config, t, t_stop, alpha, beta, h, uniforms, occ_time, pair_time):
    """Run direct-method Gillespie events until ``t_stop`` or the uniforms run out.

    ``config`` (uint8, one entry per site) is updated in place.  ``occ_time``
    (length n) and ``pair_time`` (length 4*(n-1), pattern ``2*c[d+1] + c[d]``
    at ``4*d``) accumulate residence times.  Each event consumes two uniforms;
    the final, overshooting waiting time consumes one.  Stops early when
    fewer than two uniforms remain.  Returns
    ``(t, used, exits)``.
    """
    n = len(config)
    c = [int(v) for v in config]
    hops = [float(v) for v in h]
    occ = [0.0] * n
    pair = [0.0] * (4 * (n - 1))
    used = 0
    exits = 0
    u = uniforms.tolist() if hasattr(uniforms, "tolist") else list(uniforms)
    limit = len(u)
    while used + 2 <= limit:
        total = 0.0
        if c[n - 1] == 0:
            total += alpha
        for i in range(n - 1, 0, -1):
            if c[i] == 1 and c[i - 1] == 0:
                total += hops[i - 1]
        if c[0] == 1:
            total += beta
        tau = -math.log(1.0 - u[used]) / total
        used += 1
        stop = t + tau >= t_stop
        dt = t_stop - t if stop else tau
        for j in range(n):
            if c[j]:
                occ[j] += dt
        for d in range(n - 1):
            pair[4 * d + 2 * c[d + 1] + c[d]] += dt
        if stop:
            t = t_stop
            break
        t += tau
        target = u[used] * total
        used += 1
        acc = 0.0
        if c[n - 1] == 0:
            acc += alpha
            if target < acc:
                c[n - 1] = 1
                continue
        for i in range(n - 1, 0, -1):
            if c[i] == 1 and c[i - 1] == 0:
                acc += hops[i - 1]
                if target < acc:
                    c[i] = 0
                    c[i - 1] = 1
                    break
        else:
            # exit is the only event left; also absorbs round-off in target
            if c[0] == 1:
                c[0] = 0
                exits += 1
            continue
    for j in range(n):
        config[j] = c[j]
        occ_time[j] += occ[j]
    for k in range(4 * (n - 1)):
        pair_time[k] += pair[k]
    return t, used, exits


def cluster_closure(x, num_a, num_b, den, out, threshold):
    """Boundary-safe ``x[num_a] * x[num_b] / x[den]``.

    ``den < 0`` means a unit denominator.  Otherwise the quotient
    ``x[num_b] / x[den]`` is clamped to ``[0, 1]`` and the result is 0 when
    the denominator is at most ``threshold``.
    """
    fa = x[num_a]
    fb = x[num_b]
    unit = den < 0
    dv = np.where(unit, 1.0, x[np.where(unit, 0, den)])
    safe = dv > threshold
    q = np.where(safe, fb / np.where(safe, dv, 1.0), 0.0)
    q = np.where(unit, fb, np.clip(q, 0.0, 1.0))
    out[:] = np.where(unit | safe, fa * q, 0.0)
    return out
