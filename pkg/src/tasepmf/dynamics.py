"""Time integration and steady states of the master, full and mean-field systems."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .correlations import (
    CorrelationVector,
    consistency_basis,
    consistency_system,
    embed,
    embed_product,
    f_operator,
)
from .errors import IntegrationError, InvalidInputError
from .lattice import IndexLayout, LatticeParams
from .master import build_generator, production_rate, site_densities, stationary_master, uniform_state
from .meanfield import model, project
from .rk import integrate_rk

log = logging.getLogger(__name__)

MAX_FULL_SITES = 12
MAX_FULL_NEWTON_SITES = 8
MIDSTEP_CONSISTENCY_LIMIT = 1e-6
START_CONSISTENCY_LIMIT = 1e-8
ESCAPE_THRESHOLD = 1e-13


# --------------------------------------------------------------------------
# systems

class System:
    """Common interface of the three dynamical systems on raw value arrays."""

    kind = ""
    m = None

    def __init__(self, params: LatticeParams):
        self.params = params

    @property
    def n(self):
        return self.params.n

    def rhs(self, values):
        raise NotImplementedError

    def jacobian(self, values):
        raise NotImplementedError

    def residual(self, values) -> float:
        raise NotImplementedError

    def sum_error(self, values) -> float:
        raise NotImplementedError

    def wrap(self, values):
        return values

    def default_start(self):
        raise NotImplementedError

    def density(self, values):
        raise NotImplementedError


class MasterSystem(System):
    kind = "master"

    def __init__(self, params):
        super().__init__(params)
        self.A = sp.csr_matrix(build_generator(params))

    def rhs(self, values):
        return self.A @ values

    def jacobian(self, values):
        return self.A

    def residual(self, values):
        return abs(float(np.sum(values)) - 1.0)

    sum_error = residual

    def default_start(self):
        return uniform_state(self.n)

    def density(self, values):
        return site_densities(values)


class _CorrelationSystem(System):
    layout: IndexLayout

    @cached_property
    def _constraints(self):
        return consistency_system(self.n, self.layout.max_order)

    def residual(self, values):
        C, r = self._constraints
        return float(np.abs(C @ values - r).max())

    def sum_error(self, values):
        worst = 0.0
        for order in range(1, self.layout.max_order + 1):
            sums = values[self.layout.block(order)].reshape(self.layout.block_shape(order)).sum(axis=1)
            worst = max(worst, float(np.abs(sums - 1.0).max()))
        return worst

    def wrap(self, values):
        return CorrelationVector(self.layout, values)

    def default_start(self):
        # embedding of the uniform distribution
        return embed_product(np.full(self.n, 0.5), self.layout.max_order).values

    def density(self, values):
        return values[self.layout.block(1)].reshape(self.n, 2)[:, 1].copy()


class FullSystem(_CorrelationSystem):
    kind = "full"

    def __init__(self, params):
        super().__init__(params)
        if params.n > MAX_FULL_SITES:
            raise InvalidInputError(f"full system supports n <= {MAX_FULL_SITES}")
        self.layout = IndexLayout(params.n, params.n)
        self.F = f_operator(params, params.n)

    def rhs(self, values):
        return self.F @ values

    def jacobian(self, values):
        return self.F


class MeanFieldSystem(_CorrelationSystem):
    kind = "meanfield"

    def __init__(self, params, m):
        super().__init__(params)
        self.m = m
        self.model = model(params, m)
        self.layout = self.model.layout

    def rhs(self, values):
        return self.model.rhs(values)

    def jacobian(self, values):
        return self.model.jacobian(values)


def parse_system(spec):
    """``"master"``, ``"full"``, ``"mf:<m>"`` / ``"meanfield:<m>"`` or a ``(kind, m)`` tuple."""
    if isinstance(spec, tuple):
        kind, m = spec
    else:
        text = str(spec).strip().lower()
        kind, _, rest = text.partition(":")
        m = int(rest) if rest else None
    if kind in ("mf", "meanfield"):
        if m is None:
            raise InvalidInputError("mean-field system needs an order, e.g. mf:2")
        return "meanfield", int(m)
    if kind in ("master", "full"):
        return kind, None
    raise InvalidInputError(f"unknown system {spec!r}")


def make_system(spec, params: LatticeParams) -> System:
    if isinstance(spec, System):
        return spec
    kind, m = parse_system(spec)
    if kind == "master":
        return MasterSystem(params)
    if kind == "full":
        return FullSystem(params)
    return MeanFieldSystem(params, m)


def _values(x):
    if isinstance(x, CorrelationVector):
        return x.values.copy()
    return np.array(x, dtype=float)


# --------------------------------------------------------------------------
# integration

@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    consistency_residual: np.ndarray
    min_component: np.ndarray
    sum_error: np.ndarray
    # min over components of x(t) - x0 exp(-c t); only for correlation systems
    lower_bound_slack: np.ndarray = field(default=None)
    system: str = ""

    @property
    def final(self):
        return self.states[-1]


def integrate(system, params: LatticeParams, x0, t_final: float,
              rtol: float = 1e-8, atol: float = 1e-10) -> Trajectory:
    """Integrate one of the systems from ``x0`` with diagnostics at every accepted step.

    Raises :class:`IntegrationError` when a step fails or the consistency
    residual exceeds 1e-6 mid-trajectory.
    """
    sysm = make_system(system, params)
    x0 = _values(x0)
    if x0.size != (1 << params.n if sysm.kind == "master" else sysm.layout.size):
        raise InvalidInputError("initial state has the wrong dimension for this system")
    start_residual = sysm.residual(x0)
    if start_residual > START_CONSISTENCY_LIMIT:
        raise InvalidInputError(f"initial state is not consistent (residual {start_residual:.3e})")
    if t_final < 0:
        raise InvalidInputError("t_final must be nonnegative")
    c = params.c
    track_bound = sysm.kind != "master"
    times, states, res, mins, sums, slack = [], [], [], [], [], []

    def record(t, x):
        r = sysm.residual(x)
        if r > MIDSTEP_CONSISTENCY_LIMIT:
            raise IntegrationError(f"consistency residual {r:.3e} at t={t:.6g}", t=t, state=x)
        times.append(t)
        states.append(x)
        res.append(r)
        mins.append(float(x.min()))
        sums.append(sysm.sum_error(x))
        if track_bound:
            slack.append(float((x - x0 * np.exp(-c * t)).min()))

    record(0.0, x0.copy())
    integrate_rk(lambda _t, x: sysm.rhs(x), x0, t_final, rtol=rtol, atol=atol, on_step=record)
    return Trajectory(
        times=np.asarray(times), states=np.asarray(states),
        consistency_residual=np.asarray(res), min_component=np.asarray(mins),
        sum_error=np.asarray(sums),
        lower_bound_slack=np.asarray(slack) if track_bound else None,
        system=sysm.kind if sysm.m is None else f"mf:{sysm.m}",
    )


def flow(system, params, x0, t, rtol=1e-8, atol=1e-10):
    """State at time ``t`` without keeping the trajectory."""
    sysm = make_system(system, params)
    _, x = integrate_rk(lambda _t, x: sysm.rhs(x), _values(x0), t, rtol=rtol, atol=atol)
    return x


# --------------------------------------------------------------------------
# steady states

@dataclass
class SolverReport:
    converged: bool
    residual_norm: float
    iterations: int
    equilibrium: object
    interior_margin: float
    method: str = ""
    system: str = ""

    @property
    def values(self):
        return _values(self.equilibrium)


def _newton(sysm: System, x, basis, tol, max_iter):
    """Damped Newton on ``g`` in affine coordinates ``x + basis @ u``."""
    gx = sysm.rhs(x)
    res = float(np.abs(gx).max())
    it = 0
    while res >= tol and it < max_iter:
        it += 1
        J = basis.T @ (sysm.jacobian(x) @ basis)
        G = basis.T @ gx
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                du = scipy.linalg.solve(J, -G)
        except (scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
            # singular at boundary points; take the minimum-norm step
            du = scipy.linalg.lstsq(J, -G)[0]
        step = basis @ du
        lam = 1.0
        accepted = False
        while lam >= 2.0 ** -30:
            trial = x + lam * step
            if trial.min() >= 0.0 and trial.max() <= 1.0:
                g_trial = sysm.rhs(trial)
                r_trial = float(np.abs(g_trial).max())
                if r_trial < res:
                    x, gx, res = trial, g_trial, r_trial
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            break
    return x, res, it


def steady_state(system, params: LatticeParams, x0=None, tol: float = 1e-11,
                 max_newton: int = 60) -> SolverReport:
    """Stationary point of the chosen system with a residual certificate.

    Mean-field and full systems use damped Newton in coordinates of the
    consistent affine space, falling back to integration over
    ``2**k / c`` (k = 0..12) whenever Newton stalls.  The master system is
    solved directly.
    """
    sysm = make_system(system, params)
    name = sysm.kind if sysm.m is None else f"mf:{sysm.m}"
    if sysm.kind == "master":
        z = stationary_master(sysm.A)
        res = float(np.abs(sysm.A @ z).max())
        return SolverReport(res < tol, res, 1, z, float(z.min()), "bordered-lu", name)
    if sysm.kind == "full" and params.n > MAX_FULL_NEWTON_SITES:
        A = build_generator(params)
        y = embed(stationary_master(A)).values
        res = float(np.abs(sysm.rhs(y)).max())
        return SolverReport(res < tol, res, 1, sysm.wrap(y), float(y.min()), "embedded-master", name)

    x = sysm.default_start() if x0 is None else _values(x0)
    if sysm.residual(x) > START_CONSISTENCY_LIMIT:
        raise InvalidInputError("steady_state needs a consistent start")
    basis = consistency_basis(params.n, sysm.layout.max_order)
    x, res, iterations = _newton(sysm, x, basis, tol, max_newton)
    method = "newton"
    k = 0
    while res >= tol and k <= 12:
        t = 2.0 ** k / params.c
        x = flow(sysm, params, x, t)
        x_new, res_new, it = _newton(sysm, x, basis, tol, max_newton)
        iterations += it
        x, res = x_new, res_new
        method = "newton+integration"
        k += 1
    converged = res < tol
    if not converged:
        log.warning("steady_state(%s) stopped at residual %.3e", name, res)
    return SolverReport(converged, res, iterations, sysm.wrap(x), float(x.min()), method, name)


# --------------------------------------------------------------------------
# boundary behaviour and observables

def boundary_escape_test(params: LatticeParams, m: int, x0, t_probe: float | None = None,
                         threshold: float = ESCAPE_THRESHOLD):
    """Does the order-``m`` flow move ``x0`` strictly into the interior by ``t_probe``?

    Returns ``(escaped, state)``.  Tight absolute tolerances are used so that
    tiny but positive components are resolved by the integrator.
    """
    t = 1.0 / params.c if t_probe is None else t_probe
    x = flow(("meanfield", m), params, x0, t, rtol=1e-10, atol=1e-24)
    return bool(x.min() > threshold), x


def density_profile(state) -> np.ndarray:
    """Occupation probability per site (index ``j`` is site ``j``)."""
    if isinstance(state, CorrelationVector):
        return state.block(1)[:, 1].copy()
    z = np.asarray(state, dtype=float)
    if z.size and not z.size & (z.size - 1):
        return site_densities(z)
    raise InvalidInputError("state must be a CorrelationVector or a master-equation vector")


@dataclass
class ComparisonTable:
    params: LatticeParams
    profiles: dict
    errors: dict
    reports: dict

    @property
    def sites(self):
        return np.arange(self.params.n)


def model_profile(spec, params: LatticeParams, mode="steady", x0=None):
    """Density profile of one model at steady state or at time ``mode``."""
    sysm = make_system(spec, params)
    if mode == "steady":
        report = steady_state(sysm, params)
        values = report.values
    else:
        start = sysm.default_start() if x0 is None else _values(x0)
        values = flow(sysm, params, start, float(mode))
        report = None
    return sysm.density(values), values, report


def order_m_comparison(params: LatticeParams, orders, mode="steady") -> ComparisonTable:
    """Per-site densities of the mean-field models and, when feasible, the master equation."""
    profiles, errors, reports = {}, {}, {}
    exact = None
    if params.n <= MAX_FULL_SITES:
        exact, _, reports["master"] = model_profile("master", params, mode)
        profiles["master"] = exact
    for m in orders:
        key = f"mf:{m}"
        profiles[key], _, reports[key] = model_profile(key, params, mode)
        errors[key] = None if exact is None else float(np.abs(profiles[key] - exact).max())
    return ComparisonTable(params, profiles, errors, reports)


def steady_production_rate(spec, params: LatticeParams) -> tuple:
    """``(production rate, report)`` at the steady state of a model."""
    sysm = make_system(spec, params)
    report = steady_state(sysm, params)
    if sysm.kind == "master":
        return production_rate(params, report.values), report
    return params.beta * float(sysm.density(report.values)[0]), report
