"""Algebra of l-point functions.

A :class:`CorrelationVector` stores the marginals ``<_d^l b>`` for all orders
``l <= max_order``.  This module provides the embedding of master-equation
states, the linear consistency equations, lifting to higher order, and the
exact (unclosed) vector field ``f`` whose defining property is
``f(E z) = E(A z)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp

from .errors import ConsistencyError, InvalidInputError
from .lattice import (
    BitPattern,
    IndexLayout,
    LatticeParams,
    concat,
    left_truncate,
    right_crop,
    right_truncate,
)

CONSISTENCY_MATRIX = np.array([
    [1, 0, 1, 0],
    [0, 1, 0, 1],
    [1, 1, 0, 0],
    [0, 0, 1, 1],
], dtype=float)
CONSISTENCY_KERNEL = np.array([1.0, -1.0, -1.0, 1.0])

LIFT_MARGIN = 1e-15

_ZERO = BitPattern(1, 0)
_ONE = BitPattern(1, 1)
_ONE_ZERO = BitPattern(2, 0b10)


@dataclass(frozen=True, eq=False)
class CorrelationVector:
    layout: IndexLayout
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.layout.size,):
            raise InvalidInputError(
                f"expected {self.layout.size} values for {self.layout}, got {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def max_order(self) -> int:
        return self.layout.max_order

    def __getitem__(self, key):
        order, d, b = key
        return self.values[self.layout.flat(order, d, b)]

    def block(self, order: int) -> np.ndarray:
        """View of order ``l`` reshaped to ``(n-l+1, 2**l)``."""
        return self.values[self.layout.block(order)].reshape(self.layout.block_shape(order))

    def truncated(self, order: int) -> "CorrelationVector":
        layout = IndexLayout(self.n, order)
        return CorrelationVector(layout, self.values[: layout.size].copy())


# --------------------------------------------------------------------------
# embedding

def embed(z, max_order: int | None = None) -> CorrelationVector:
    """All l-point functions (``l <= max_order``) of the distribution ``z``."""
    z = np.asarray(z, dtype=float)
    n = z.size.bit_length() - 1
    if z.ndim != 1 or z.size != 1 << n:
        raise InvalidInputError("z must have length 2**n")
    layout = IndexLayout(n, n if max_order is None else max_order)
    c = np.arange(z.size)
    out = np.empty(layout.size)
    for order in range(1, layout.max_order + 1):
        mask = (1 << order) - 1
        block = out[layout.block(order)].reshape(layout.block_shape(order))
        for d in range(n - order + 1):
            block[d] = np.bincount((c >> d) & mask, weights=z, minlength=1 << order)
    return CorrelationVector(layout, out)


def embed_product(densities, max_order: int) -> CorrelationVector:
    """``embed`` of the product measure with site occupation ``densities[j]``.

    Works without forming the ``2**n`` distribution, so it serves as the
    start for reduced models on long lattices.
    """
    p = np.asarray(densities, dtype=float)
    n = p.size
    if p.ndim != 1 or n < 1 or p.min() < 0 or p.max() > 1:
        raise InvalidInputError("densities must be a vector of probabilities")
    layout = IndexLayout(n, max_order)
    out = np.empty(layout.size)
    for order in range(1, max_order + 1):
        bits = (np.arange(1 << order)[None, :] >> np.arange(order)[:, None]) & 1
        block = out[layout.block(order)].reshape(layout.block_shape(order))
        for d in range(n - order + 1):
            q = p[d:d + order, None]
            block[d] = np.prod(np.where(bits == 1, q, 1 - q), axis=0)
    return CorrelationVector(layout, out)


@lru_cache(maxsize=32)
def embedding_matrix(n: int, max_order: int) -> sp.csr_matrix:
    """Sparse matrix of the linear map ``z -> embed(z, max_order)``."""
    layout = IndexLayout(n, max_order)
    c = np.arange(1 << n)
    rows, cols = [], []
    for order in range(1, max_order + 1):
        mask = (1 << order) - 1
        for d in range(n - order + 1):
            rows.append(layout.offset(order) + (d << order) + ((c >> d) & mask))
            cols.append(c)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(layout.size, 1 << n))


def simplex_preimage(x: CorrelationVector):
    """Closest probability vector ``z`` with ``embed(z) ~ x``.

    Solved as a nonnegative least-squares problem with a heavily weighted
    normalisation row.  Returns ``(z, residual)`` where the residual is the
    max-norm of ``embed(z) - x``.
    """
    E = embedding_matrix(x.n, x.max_order).toarray()
    weight = 1e3
    M = np.vstack([E, weight * np.ones((1, E.shape[1]))])
    rhs = np.concatenate([x.values, [weight]])
    z, _ = scipy.optimize.nnls(M, rhs, maxiter=50 * M.shape[1])
    return z, float(np.abs(E @ z - x.values).max())


# --------------------------------------------------------------------------
# consistency

@lru_cache(maxsize=64)
def consistency_system(n: int, max_order: int):
    """Sparse ``(C, r)`` with ``C x = r`` exactly the consistency equations.

    The first ``n`` rows are the normalisations of the 1-point functions,
    followed by four rows per consistency block in order ``(l, d, b)``.
    """
    layout = IndexLayout(n, max_order)
    rows, cols, vals = [], [], []
    rhs = []
    r = 0
    for d in range(n):
        for bits in (0, 1):
            rows.append(r)
            cols.append(layout.flat(1, d, bits))
            vals.append(1.0)
        rhs.append(1.0)
        r += 1
    for order in range(2, max_order + 1):
        hi = order - 1
        for d in range(n - order + 1):
            for b in range(1 << (order - 2)):
                block = [layout.flat(order, d, (t << hi) | (b << 1) | s)
                         for t in (0, 1) for s in (0, 1)]
                targets = (
                    layout.flat(order - 1, d, b << 1),
                    layout.flat(order - 1, d, (b << 1) | 1),
                    layout.flat(order - 1, d + 1, b),
                    layout.flat(order - 1, d + 1, (1 << (order - 2)) | b),
                )
                for i in range(4):
                    for j in range(4):
                        if CONSISTENCY_MATRIX[i, j]:
                            rows.append(r)
                            cols.append(block[j])
                            vals.append(1.0)
                    rows.append(r)
                    cols.append(targets[i])
                    vals.append(-1.0)
                    rhs.append(0.0)
                    r += 1
    C = sp.csr_matrix((vals, (rows, cols)), shape=(r, layout.size))
    return C, np.asarray(rhs)


def consistency_residual(x: CorrelationVector) -> float:
    """Max-norm violation of the consistency equations."""
    C, rhs = consistency_system(x.n, x.max_order)
    return float(np.abs(C @ x.values - rhs).max())


def homogeneous_residual(layout: IndexLayout, v) -> float:
    """Max-norm violation of the homogeneous consistency equations by a direction ``v``."""
    C, _ = consistency_system(layout.n, layout.max_order)
    return float(np.abs(C @ np.asarray(v, dtype=float)).max())


def consistent_dimension(n: int, max_order: int) -> int:
    """Closed-form dimension of the consistent affine space."""
    return (n - max_order + 2) * (1 << (max_order - 1)) - 1


@lru_cache(maxsize=64)
def consistency_basis(n: int, max_order: int) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of the consistency equations."""
    C, _ = consistency_system(n, max_order)
    basis = scipy.linalg.null_space(C.toarray())
    expected = consistent_dimension(n, max_order)
    if basis.shape[1] != expected:
        raise ConsistencyError(
            f"consistency null space has dimension {basis.shape[1]}, expected {expected}")
    basis.setflags(write=False)
    return basis


def solve_consistency_block(a, tol: float = 1e-10) -> np.ndarray:
    """Solve ``A_C x = a``, keeping the solution nonnegative or positive.

    Solvable iff ``a1 + a2 == a3 + a4``.  A special solution is shifted along
    the kernel ``(1, -1, -1, 1)``; for strictly positive ``a`` the shift sits
    at the midpoint of the range that keeps every entry positive.
    """
    a1, a2, a3, a4 = (float(v) for v in a)
    if abs(a1 + a2 - a3 - a4) > tol:
        raise ConsistencyError(f"block right-hand side {tuple(a)} violates a1+a2 = a3+a4")
    if a4 >= a1:
        x0 = np.array([0.0, a3, a1, a4 - a1])
        s_max = min(a1, a3)
    else:
        x0 = np.array([a1 - a4, a2, a4, 0.0])
        s_max = min(a2, a4)
    s = 0.5 * s_max if min(a1, a2, a3, a4) > 0 and s_max > 2 * LIFT_MARGIN else 0.0
    return x0 + s * CONSISTENCY_KERNEL


def lift(x: CorrelationVector) -> CorrelationVector:
    """Extend a consistent vector of order ``m`` by one order.

    The result is consistent, projects back onto ``x``, and stays
    nonnegative (strictly positive) whenever ``x`` is.
    """
    m, n = x.max_order, x.n
    if m >= n:
        raise InvalidInputError("cannot lift beyond order n")
    residual = consistency_residual(x)
    if residual > 1e-8:
        raise ConsistencyError(f"cannot lift an inconsistent vector (residual {residual:.3e})")
    layout = IndexLayout(n, m + 1)
    out = np.empty(layout.size)
    out[: x.values.size] = x.values
    for d in range(n - m):
        for b in range(1 << (m - 1)):
            a = (x[m, d, b << 1], x[m, d, (b << 1) | 1],
                 x[m, d + 1, b], x[m, d + 1, (1 << (m - 1)) | b])
            sol = solve_consistency_block(a, tol=1e-7)
            for k, (t, s) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
                out[layout.flat(m + 1, d, (t << m) | (b << 1) | s)] = sol[k]
    return CorrelationVector(layout, out)


# --------------------------------------------------------------------------
# the exact vector field

def f_terms(params: LatticeParams, order: int, d: int, bits: int):
    """Guarded terms of the rate of change of ``<_d^l b>``.

    Returns a list of ``(label, coefficient, (l', d', b'))``; the derivative
    is the sum of ``coefficient * y[l', d', b']``.  Labels ``a, c, e, f`` are
    inflow terms (positive), ``b, d, g, h`` outflow terms.  Guards are tested
    before any pattern is formed.
    """
    n = params.n
    b = BitPattern(order, bits)
    top, low = b.bit(order - 1), b.bit(0)
    at_entry = order + d == n
    room_left = order + d < n
    terms = []
    # (a) entry into site n-1, exit from site 0
    if at_entry and top == 1:
        terms.append(("a", params.alpha, (order, d, concat(_ZERO, left_truncate(b, 1)))))
    if d == 0 and low == 0:
        terms.append(("a", params.beta, (order, d, concat(right_truncate(b, 1), _ONE))))
    # (c) hops inside the window that produce the pattern
    for j in range(1, order):
        if b.bit(j) == 0 and b.bit(j - 1) == 1:
            src = concat(concat(right_truncate(b, j + 1), _ONE_ZERO), right_crop(b, j - 1))
            terms.append(("c", params.hop(j + d), (order, d, src)))
    # (e) hop into the window across its left edge
    if room_left and top == 1:
        terms.append(("e", params.hop(order + d),
                      (order + 1, d, concat(_ONE_ZERO, left_truncate(b, 1)))))
    # (f) hop out of the window across its right edge
    if d > 0 and low == 0:
        terms.append(("f", params.hop(d),
                      (order + 1, d - 1, concat(right_truncate(b, 1), _ONE_ZERO))))
    # (b) entry / exit destroying the pattern
    if at_entry and top == 0:
        terms.append(("b", -params.alpha, (order, d, b)))
    if d == 0 and low == 1:
        terms.append(("b", -params.beta, (order, d, b)))
    # (d) hops inside the window that destroy the pattern
    for j in range(1, order):
        if b.bit(j) == 1 and b.bit(j - 1) == 0:
            terms.append(("d", -params.hop(j + d), (order, d, b)))
    # (g) a particle left of the window jumps in
    if room_left and top == 0:
        terms.append(("g", -params.hop(order + d), (order + 1, d, concat(_ONE, b))))
    # (h) the rightmost particle of the window jumps out
    if d > 0 and low == 1:
        terms.append(("h", -params.hop(d), (order + 1, d - 1, concat(b, _ZERO))))
    return terms


def f_output_order(n: int, max_order: int) -> int:
    """Highest order whose derivative is determined by a vector of ``max_order``."""
    return n if max_order == n else max_order - 1


@lru_cache(maxsize=64)
def f_operator(params: LatticeParams, out_order: int) -> sp.csr_matrix:
    """Sparse matrix of ``f`` from order ``min(out_order+1, n)`` to order ``out_order``."""
    n = params.n
    out_layout = IndexLayout(n, out_order)
    in_layout = IndexLayout(n, min(out_order + 1, n))
    rows, cols, vals = [], [], []
    for row, (order, d, bits) in enumerate(out_layout.triples()):
        for _, coef, (o2, d2, b2) in f_terms(params, order, d, bits):
            rows.append(row)
            cols.append(in_layout.flat(o2, d2, b2))
            vals.append(coef)
    F = sp.csr_matrix((vals, (rows, cols)), shape=(out_layout.size, in_layout.size))
    F.sum_duplicates()
    return F


def vector_field_f(params: LatticeParams, y: CorrelationVector) -> CorrelationVector:
    """Exact derivative of every l-point function that ``y`` determines.

    For ``y`` of full order ``n`` all components are returned; otherwise the
    derivative covers orders ``1 .. max_order - 1``.
    """
    if y.n != params.n:
        raise InvalidInputError("lattice size of y and params differ")
    out_order = f_output_order(y.n, y.max_order)
    if out_order < 1:
        raise InvalidInputError("need max_order >= 2 to evaluate f below full order")
    F = f_operator(params, out_order)
    return CorrelationVector(IndexLayout(y.n, out_order), F @ y.values[: F.shape[1]])


def lower_bound_check(params: LatticeParams, y: CorrelationVector, tol: float = 1e-12):
    """Check ``f[l,d,b](y) >= -c y[l,d,b]`` for every component.

    Returns ``(ok, witness)`` with ``witness`` the first violating
    ``(l, d, bits)`` or ``None``.
    """
    fy = vector_field_f(params, y)
    return _first_violation(fy, y.values[: fy.layout.size], params.c, tol)


def _first_violation(derivative: CorrelationVector, state, c, tol):
    slack = derivative.values + c * np.asarray(state) + tol
    bad = np.flatnonzero(slack < 0)
    if bad.size == 0:
        return True, None
    order, d, b = derivative.layout.unflatten(int(bad[0]))
    return False, (order, d, b.bits)
