"""Thin stepping loop around scipy's Dormand-Prince 5(4) integrator."""
from __future__ import annotations

import numpy as np
from scipy.integrate import RK45

from .errors import IntegrationError


def integrate_rk(fun, y0, t_final, rtol=1e-8, atol=1e-10, on_step=None, max_step=np.inf):
    """Advance ``y' = fun(t, y)`` from ``t = 0`` to ``t_final``.

    ``on_step(t, y)`` is called after every accepted step and may raise to
    abort.  Returns ``(t_final, y(t_final))``.
    """
    y0 = np.asarray(y0, dtype=float)
    if t_final == 0:
        return 0.0, y0.copy()
    solver = RK45(fun, 0.0, y0, t_final, rtol=rtol, atol=atol, max_step=max_step)
    t_last, y_last = 0.0, y0.copy()
    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise IntegrationError(f"integration failed at t={t_last:.6g}: {message}",
                                   t=t_last, state=y_last)
        t_last, y_last = solver.t, solver.y.copy()
        if on_step is not None:
            on_step(t_last, y_last)
    return t_last, y_last
