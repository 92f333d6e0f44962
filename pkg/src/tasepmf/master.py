"""Master equation of the TASEP on all ``2**n`` occupation configurations."""
from __future__ import annotations

import logging
import warnings

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidInputError, SingularSystemError
from .lattice import MAX_MASTER_SITES, LatticeParams
from .rk import integrate_rk

log = logging.getLogger(__name__)

DENSE_STATIONARY_MAX_N = 12


def build_generator(params: LatticeParams) -> sp.csc_matrix:
    """Transition-rate matrix ``A`` with ``A[target, source]`` the jump rate.

    Columns sum to zero.  Three kinds of transitions exist: entry at site
    ``n-1`` (rate alpha), hop from site ``i`` to ``i-1`` when the pair reads
    ``10`` (rate ``h_i``) and exit from site 0 (rate beta).
    """
    n = params.n
    if n > MAX_MASTER_SITES:
        raise InvalidInputError(f"master equation supports n <= {MAX_MASTER_SITES}, got {n}")
    size = 1 << n
    c = np.arange(size, dtype=np.int64)
    rows, cols, vals = [], [], []

    top = 1 << (n - 1)
    src = c[(c & top) == 0]
    rows.append(src | top)
    cols.append(src)
    vals.append(np.full(src.size, params.alpha))

    for i in range(1, n):
        src = c[((c >> i) & 1 == 1) & ((c >> (i - 1)) & 1 == 0)]
        rows.append(src ^ (3 << (i - 1)))
        cols.append(src)
        vals.append(np.full(src.size, params.hop(i)))

    src = c[(c & 1) == 1]
    rows.append(src ^ 1)
    cols.append(src)
    vals.append(np.full(src.size, params.beta))

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    outflow = np.bincount(cols, weights=vals, minlength=size)
    rows = np.concatenate([rows, c])
    cols = np.concatenate([cols, c])
    vals = np.concatenate([vals, -outflow])
    return sp.csc_matrix((vals, (rows, cols)), shape=(size, size))


def check_simplex(z, tol=1e-12):
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size & (z.size - 1):
        raise InvalidInputError("master state must be a vector of length 2**n")
    if abs(z.sum() - 1.0) > tol or z.min() < -tol:
        raise InvalidInputError("master state is not on the probability simplex")
    return z


def evolve_master(A, z0, t: float, rtol: float = 1e-8, atol: float = 1e-10) -> np.ndarray:
    """Integrate ``dz/dt = A z`` from ``z0`` over ``[0, t]``.

    No projection back onto the simplex is done, so the probability sum is
    a genuine accuracy check of the integrator.
    """
    z0 = check_simplex(z0, tol=1e-10)
    if t < 0:
        raise InvalidInputError("t must be nonnegative")
    if t == 0:
        return z0.copy()
    A = sp.csr_matrix(A)
    _, z = integrate_rk(lambda _t, z: A @ z, z0, t, rtol=rtol, atol=atol)
    return z


def stationary_master(A) -> np.ndarray:
    """Stationary distribution of the generator ``A``.

    One row of ``A`` is replaced by the all-ones row (normalisation) and the
    bordered system is solved: dense LU for ``n <= 12``, preconditioned GMRES
    beyond that.
    """
    A = sp.csc_matrix(A)
    size = A.shape[0]
    k = size - 1
    rhs = np.zeros(size)
    rhs[k] = 1.0
    if size <= 1 << DENSE_STATIONARY_MAX_N:
        M = A.toarray()
        M[k, :] = 1.0
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
        pivots = np.abs(np.diag(lu))
        if pivots.min() <= 1e-13 * max(pivots.max(), 1.0):
            raise SingularSystemError(
                "bordered generator is singular: the chain is not irreducible")
        z = scipy.linalg.lu_solve((lu, piv), rhs)
    else:
        warnings.warn(f"stationary_master: iterative solve for {size} states", RuntimeWarning)
        M = sp.lil_matrix(A)
        M[k, :] = np.ones(size)
        M = sp.csc_matrix(M)
        ilu = spla.spilu(M, drop_tol=1e-6, fill_factor=20)
        pre = spla.LinearOperator(M.shape, ilu.solve)
        z, info = spla.gmres(M, rhs, M=pre, rtol=1e-14, atol=0.0, restart=100, maxiter=2000)
        if info != 0:
            raise SingularSystemError(f"GMRES did not converge (info={info})")
    residual = np.abs(A @ z).max()
    log.debug("stationary_master: residual %.3e", residual)
    if z.min() <= 0:
        raise SingularSystemError("stationary vector has non-positive entries")
    return z


def production_rate(params: LatticeParams, z) -> float:
    """Expected exit flux ``beta * P(site 0 occupied)``."""
    z = np.asarray(z, dtype=float)
    return params.beta * float(z[1::2].sum())


def point_mass(n: int, configuration: int) -> np.ndarray:
    z = np.zeros(1 << n)
    z[configuration] = 1.0
    return z


def uniform_state(n: int) -> np.ndarray:
    return np.full(1 << n, 2.0 ** -n)


def site_densities(z) -> np.ndarray:
    """Occupation probability of every site, indexed by site number."""
    z = np.asarray(z, dtype=float)
    n = z.size.bit_length() - 1
    c = np.arange(z.size)
    return np.array([z[(c >> j) & 1 == 1].sum() for j in range(n)])
