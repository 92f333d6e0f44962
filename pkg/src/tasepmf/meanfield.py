"""Order-m mean-field (cluster approximation) models.

The reduced state keeps all l-point functions with ``l <= m``.  The missing
``(m+1)``-point functions are replaced by

    x[m, d+1, b >> 1] * x[m, d, b without its top digit] / x[m-1, d+1, middle of b]

and the exact field ``f`` is evaluated on the result.  ``m = 1`` gives the
ribosome flow model, where the denominator is the constant 1.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from ._backend import kernels
from .correlations import (
    CorrelationVector,
    _first_violation,
    consistency_residual,
    f_operator,
)
from .errors import ConsistencyError, InvalidInputError
from .lattice import IndexLayout, LatticeParams

DENOMINATOR_THRESHOLD = 1e-14
ZERO_THRESHOLD = 1e-12
RANGE_TOLERANCE = 1e-12
G_CONSISTENCY_TOLERANCE = 1e-6


def project(y: CorrelationVector, m: int) -> CorrelationVector:
    """Keep only the components of order ``<= m``."""
    if not 1 <= m <= y.max_order:
        raise InvalidInputError(f"cannot project order {y.max_order} onto order {m}")
    return y.truncated(m)


@lru_cache(maxsize=64)
def closure_indices(n: int, m: int):
    """Flat indices ``(num_a, num_b, den)`` of every closed ``(m+1)``-point function.

    Entries follow the order-``(m+1)`` block layout (``d`` major, pattern
    minor).  ``den`` is ``-1`` for ``m = 1``.
    """
    layout = IndexLayout(n, m)
    count = (n - m) << (m + 1)
    num_a = np.empty(count, dtype=np.int64)
    num_b = np.empty(count, dtype=np.int64)
    den = np.full(count, -1, dtype=np.int64)
    low_mask = (1 << m) - 1
    mid_mask = (1 << (m - 1)) - 1
    k = 0
    for d in range(n - m):
        for b in range(1 << (m + 1)):
            num_a[k] = layout.flat(m, d + 1, b >> 1)
            num_b[k] = layout.flat(m, d, b & low_mask)
            if m > 1:
                den[k] = layout.flat(m - 1, d + 1, (b >> 1) & mid_mask)
            k += 1
    for arr in (num_a, num_b, den):
        arr.setflags(write=False)
    return num_a, num_b, den


def _check_range(values):
    lo, hi = values.min(), values.max()
    if lo < -RANGE_TOLERANCE or hi > 1 + RANGE_TOLERANCE:
        raise InvalidInputError(
            f"state leaves [0, 1] (min {lo:.3e}, max {hi:.3e}); closure undefined")


def cluster_extend(x: CorrelationVector) -> np.ndarray:
    """Closed ``(m+1)``-point functions as an array of shape ``(n-m, 2**(m+1))``.

    A vanishing denominator gives 0, the continuous extension from the
    interior.
    """
    m, n = x.max_order, x.n
    if m >= n:
        raise InvalidInputError("closure needs m < n")
    _check_range(x.values)
    out = np.empty((n - m) << (m + 1))
    kernels.cluster_closure(x.values, *closure_indices(n, m), out, DENOMINATOR_THRESHOLD)
    return out.reshape(n - m, 1 << (m + 1))


def closed_state(x: CorrelationVector) -> CorrelationVector:
    """``x`` extended by its closed ``(m+1)``-point functions."""
    extra = cluster_extend(x).ravel()
    return CorrelationVector(IndexLayout(x.n, x.max_order + 1),
                             np.concatenate([x.values, extra]))


class MeanFieldModel:
    """Vector field of the order-``m`` model for fixed rates.

    Works on raw value arrays for use inside integrators and Newton
    iterations; range and consistency checks are left to the callers.
    """

    def __init__(self, params: LatticeParams, m: int):
        if not 1 <= m < params.n:
            raise InvalidInputError(f"closure order must satisfy 1 <= m < n, got m={m}, n={params.n}")
        self.params = params
        self.m = m
        self.layout = IndexLayout(params.n, m)
        F = f_operator(params, m)
        size = self.layout.size
        self.F_low = sp.csr_matrix(F[:, :size])
        self.F_high = sp.csr_matrix(F[:, size:])
        self.num_a, self.num_b, self.den = closure_indices(params.n, m)

    @property
    def n(self) -> int:
        return self.params.n

    def closure(self, values) -> np.ndarray:
        out = np.empty(self.num_a.size)
        kernels.cluster_closure(np.ascontiguousarray(values, dtype=float),
                                self.num_a, self.num_b, self.den, out,
                                DENOMINATOR_THRESHOLD)
        return out

    def rhs(self, values) -> np.ndarray:
        return self.F_low @ values + self.F_high @ self.closure(values)

    def closure_jacobian(self, values) -> sp.csr_matrix:
        x = np.asarray(values, dtype=float)
        a, b, den = self.num_a, self.num_b, self.den
        xa, xb = x[a], x[b]
        rows = np.arange(a.size)
        unit = den < 0
        dv = np.where(unit, 1.0, x[np.where(unit, 0, den)])
        safe = unit | (dv > DENOMINATOR_THRESHOLD)
        ratio = np.where(safe, xb / np.where(safe, dv, 1.0), 0.0)
        free = unit | (safe & (ratio > 0) & (ratio < 1))
        q = np.where(unit, xb, np.clip(ratio, 0.0, 1.0))
        d_a = np.where(safe, q, 0.0)
        d_b = np.where(free, xa / np.where(safe, dv, 1.0), 0.0)
        d_den = np.where(free & ~unit, -xa * ratio / np.where(safe, dv, 1.0), 0.0)
        keep = ~unit
        J = sp.csr_matrix(
            (np.concatenate([d_a, d_b, d_den[keep]]),
             (np.concatenate([rows, rows, rows[keep]]),
              np.concatenate([a, b, den[keep]]))),
            shape=(a.size, self.layout.size))
        J.sum_duplicates()
        return J

    def jacobian(self, values) -> sp.csr_matrix:
        return sp.csr_matrix(self.F_low + self.F_high @ self.closure_jacobian(values))


@lru_cache(maxsize=64)
def model(params: LatticeParams, m: int) -> MeanFieldModel:
    return MeanFieldModel(params, m)


def vector_field_g(params: LatticeParams, x: CorrelationVector) -> CorrelationVector:
    """Mean-field vector field at a consistent state of order ``m = x.max_order``."""
    if x.n != params.n:
        raise InvalidInputError("lattice size of x and params differ")
    _check_range(x.values)
    residual = consistency_residual(x)
    if residual > G_CONSISTENCY_TOLERANCE:
        raise ConsistencyError(f"g is only defined on consistent states (residual {residual:.3e})")
    mf = model(params, x.max_order)
    return CorrelationVector(mf.layout, mf.rhs(x.values))


def lower_bound_check_g(params: LatticeParams, x: CorrelationVector, tol: float = 1e-12):
    """Check ``g[l,d,b](x) >= -c x[l,d,b]``; returns ``(ok, witness)``."""
    gx = vector_field_g(params, x)
    return _first_violation(gx, x.values, params.c, tol)


def zero_index_set(x: CorrelationVector, threshold: float = ZERO_THRESHOLD) -> set:
    """Indices ``(l, d, bits)`` of the vanishing components of ``x``."""
    out = set()
    for idx in np.flatnonzero(x.values <= threshold):
        order, d, b = x.layout.unflatten(int(idx))
        out.add((order, d, b.bits))
    return out


def rfm_rhs(params: LatticeParams, density) -> np.ndarray:
    """Ribosome flow model written out site by site (independent of the closure code)."""
    x = np.asarray(density, dtype=float)
    n = params.n
    dx = np.empty(n)
    for j in range(n):
        inflow = params.alpha * (1 - x[j]) if j == n - 1 else params.hop(j + 1) * x[j + 1] * (1 - x[j])
        outflow = params.beta * x[j] if j == 0 else params.hop(j) * x[j] * (1 - x[j - 1])
        dx[j] = inflow - outflow
    return dx
