"""Command-line front end: ``tasepmf {density,sweep,validate,ssa,steady}``.

Exit codes: 0 success, 1 validation failure, 2 solver non-convergence,
3 invalid input.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .correlations import (
    CorrelationVector,
    consistency_residual,
    embed,
    embed_product,
    homogeneous_residual,
    lower_bound_check,
    vector_field_f,
)
from .dynamics import (
    MAX_FULL_SITES,
    boundary_escape_test,
    integrate,
    make_system,
    parse_system,
    steady_state,
)
from .errors import IntegrationError, InvalidInputError, TasepError
from .lattice import MAX_MASTER_SITES, IndexLayout, LatticeParams, parse_hops
from .master import build_generator, point_mass, stationary_master
from .meanfield import lower_bound_check_g, model, project, zero_index_set
from .ssa import SsaConfig, simulate

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_NONCONVERGED, EXIT_INVALID = 0, 1, 2, 3
DEFAULT_PHASE_STEP = 0.05

DEFAULTS = {
    "n": 8,
    "alpha": 1.0,
    "beta": 1.0,
    "h": "uniform:1",
    "models": "master",
    "init": "uniform",
    "mode": "steady",
    "tol": 1e-11,
    "seed": 0,
    "output": None,
    # sweep
    "alpha_range": "0.05:1.0:20",
    "beta_range": "0.05:1.0:20",
    "model": "mf:2",
    "workers": None,
    "step": None,
    # validate
    "m_max": 3,
    "input": None,
    "samples": 20,
    # ssa
    "replicas": 16,
    "t_burn": 100.0,
    "t_measure": 1000.0,
}


class UsageError(InvalidInputError):
    """Invalid configuration, tagged with the offending field."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    params: LatticeParams
    models: list
    init: str
    mode: object  # "steady" or a float t_final
    tol: float
    seed: int
    output: str | None
    extra: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# configuration

def _load_config_file(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError("config", f"cannot read {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config", "top level must be a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _merge(args) -> dict:
    merged = dict(DEFAULTS)
    file_values = _load_config_file(getattr(args, "config", None))
    if "h" in file_values and isinstance(file_values["h"], list):
        file_values["h"] = ",".join(str(v) for v in file_values["h"])
    if "models" in file_values and isinstance(file_values["models"], list):
        file_values["models"] = ",".join(file_values["models"])
    if "evolve" in file_values:
        file_values["mode"] = float(file_values.pop("evolve"))
    if file_values.pop("steady", False):
        file_values["mode"] = "steady"
    merged.update(file_values)
    for key, value in vars(args).items():
        if key in ("command", "config", "func") or value is None:
            continue
        merged[key] = value
    if getattr(args, "evolve", None) is not None:
        merged["mode"] = args.evolve
    elif getattr(args, "steady", False):
        merged["mode"] = "steady"
    merged.pop("evolve", None)
    merged.pop("steady", None)
    return merged


def _number(values, key, kind=float):
    try:
        return kind(values[key])
    except (TypeError, ValueError) as exc:
        raise UsageError(key, f"expected a number, got {values[key]!r}") from exc


def _params(values) -> LatticeParams:
    n = _number(values, "n", int)
    alpha = _number(values, "alpha")
    beta = _number(values, "beta")
    try:
        hops = parse_hops(str(values["h"]), n)
    except InvalidInputError as exc:
        raise UsageError("h", str(exc)) from exc
    try:
        return LatticeParams(n, alpha, beta, hops)
    except InvalidInputError as exc:
        raise UsageError("n/alpha/beta", str(exc)) from exc


def _models(text, n):
    names = [s.strip() for s in str(text).split(",") if s.strip()]
    if not names:
        raise UsageError("models", "no model given")
    for name in names:
        if name == "ssa":
            continue
        try:
            kind, m = parse_system(name)
        except InvalidInputError as exc:
            raise UsageError("models", str(exc)) from exc
        if kind == "meanfield" and not 1 <= m < n:
            raise UsageError("models", f"{name}: order must satisfy 1 <= m < n={n}")
        if kind == "master" and n > MAX_MASTER_SITES:
            raise UsageError("models", f"master needs n <= {MAX_MASTER_SITES}")
        if kind == "full" and n > MAX_FULL_SITES:
            raise UsageError("models", f"full needs n <= {MAX_FULL_SITES}")
    return names


def build_config(args) -> ExperimentConfig:
    values = _merge(args)
    params = _params(values)
    mode = values["mode"]
    if mode != "steady":
        mode = _number(values, "mode")
        if mode < 0:
            raise UsageError("evolve", "t_final must be nonnegative")
    tol = _number(values, "tol")
    if not tol > 0:
        raise UsageError("tol", "must be positive")
    seed = _number(values, "seed", int)
    if seed < 0:
        raise UsageError("seed", "must be nonnegative")
    models = _models(values["models"], params.n)
    _check_init(str(values["init"]), params.n)
    return ExperimentConfig(params, models, str(values["init"]), mode, tol, seed,
                            values["output"], values)


def _check_init(init, n):
    kind, _, arg = init.partition(":")
    if kind in ("uniform", "empty", "full"):
        return
    if kind == "point":
        if len(arg) != n or set(arg) - {"0", "1"}:
            raise UsageError("init", f"point:<bits> needs {n} binary digits (site n-1 first)")
        return
    if kind == "file":
        if not os.path.isfile(arg):
            raise UsageError("init", f"no such file {arg!r}")
        return
    raise UsageError("init", f"unknown initial condition {init!r}")


def initial_densities(init, n):
    """Site densities of the product measures ``uniform|empty|full|point:<bits>``."""
    kind, _, arg = init.partition(":")
    if kind == "uniform":
        return np.full(n, 0.5)
    if kind == "empty":
        return np.zeros(n)
    if kind == "full":
        return np.ones(n)
    if kind == "point":
        return np.array([float(ch) for ch in reversed(arg)])  # arg lists site n-1 first
    return None


def _load_state_file(path, n):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "z" in data:
        z = np.asarray(data["z"], dtype=float)
        if z.size != 1 << n:
            raise UsageError("init", f"z must have 2**n = {1 << n} entries")
        return z
    try:
        order = int(data["order"])
        values = np.asarray(data["values"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError("init", "state file needs 'z' or 'order' and 'values'") from exc
    layout = IndexLayout(n, order)
    if values.size != layout.size:
        raise UsageError("init", f"order-{order} vector needs {layout.size} values")
    return CorrelationVector(layout, values)


def initial_state(init, spec, params):
    """Initial value array for a model selector."""
    n = params.n
    kind, m = parse_system(spec)
    order = n if kind == "full" else m
    dens = initial_densities(init, n)
    if dens is not None:
        if kind == "master":
            z = np.ones(1)
            for p in dens[::-1]:
                z = np.kron(z, [1 - p, p])
            return z
        return embed_product(dens, order).values
    loaded = _load_state_file(init.partition(":")[2], n)
    if isinstance(loaded, CorrelationVector):
        if kind == "master":
            raise UsageError("init", "master model needs a 'z' state file")
        if loaded.max_order < order:
            raise UsageError("init", f"state file order {loaded.max_order} < {order}")
        return loaded.truncated(order).values
    if kind == "master":
        return loaded
    return embed(loaded, order).values


# --------------------------------------------------------------------------
# output

def _emit(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


# --------------------------------------------------------------------------
# commands

def _ssa_profile(params, values, seed):
    cfg = SsaConfig(params, int(values["replicas"]), float(values["t_burn"]),
                    float(values["t_measure"]), seed)
    return simulate(cfg)


def model_density(spec, cfg: ExperimentConfig):
    """``(density, converged)`` of one model under the configured mode."""
    params = cfg.params
    if spec == "ssa":
        if cfg.mode != "steady":
            raise UsageError("models", "ssa is only available with --steady")
        return _ssa_profile(params, cfg.extra, cfg.seed).density, True
    sysm = make_system(spec, params)
    x0 = initial_state(cfg.init, spec, params)
    if cfg.mode == "steady":
        if sysm.kind == "master":
            report = steady_state(sysm, params, tol=cfg.tol)
        else:
            report = steady_state(sysm, params, x0=x0, tol=cfg.tol)
        return sysm.density(report.values), report.converged
    traj = integrate(sysm, params, x0, cfg.mode)
    return sysm.density(traj.final), True


def cmd_density(cfg: ExperimentConfig) -> int:
    n = cfg.params.n
    columns, ok = [], True
    for spec in cfg.models:
        dens, converged = model_density(spec, cfg)
        columns.append(dens)
        ok &= converged
    rows = [[site] + [col[site] for col in columns] for site in range(n - 1, -1, -1)]
    _emit(to_csv(["site"] + cfg.models, rows), cfg.output)
    return EXIT_OK if ok else EXIT_NONCONVERGED


def cmd_steady(cfg: ExperimentConfig) -> int:
    rows, ok = [], True
    for spec in cfg.models:
        if spec == "ssa":
            est = _ssa_profile(cfg.params, cfg.extra, cfg.seed)
            rows.append([spec, True, "", "", float(est.density.min()), est.flux, "ssa"])
            continue
        sysm = make_system(spec, cfg.params)
        x0 = None if sysm.kind == "master" else initial_state(cfg.init, spec, cfg.params)
        report = steady_state(sysm, cfg.params, x0=x0, tol=cfg.tol)
        rate = cfg.params.beta * float(sysm.density(report.values)[0])
        rows.append([spec, report.converged, report.residual_norm, report.iterations,
                     report.interior_margin, rate, report.method])
        ok &= report.converged
    header = ["model", "converged", "residual", "iterations", "interior_margin",
              "production_rate", "method"]
    _emit(to_csv(header, rows), cfg.output)
    return EXIT_OK if ok else EXIT_NONCONVERGED


def classify_phase(alpha, beta, step=DEFAULT_PHASE_STEP, homogeneous=True):
    """Standard TASEP phase label for homogeneous unit interior rates, else ``"n/a"``."""
    if not homogeneous:
        return "n/a"
    if (abs(alpha - beta) < step or alpha == beta) and alpha < 0.5:
        return "critical"
    if min(alpha, beta) >= 0.5:
        return "MC"
    if alpha < min(beta, 0.5):
        return "LD"
    if beta < min(alpha, 0.5):
        return "HD"
    return "critical"


def _grid(text, name):
    try:
        lo, hi, num = str(text).split(":")
        lo, hi, num = float(lo), float(hi), int(num)
    except ValueError as exc:
        raise UsageError(name, "expected lo:hi:num") from exc
    if not (0 < lo <= hi) or num < 1 or (num == 1 and lo != hi):
        raise UsageError(name, "need 0 < lo <= hi and num >= 1 (lo == hi when num == 1)")
    return np.linspace(lo, hi, num)


def _sweep_point(task):
    n, alpha, beta, hops, spec, tol = task
    params = LatticeParams(n, alpha, beta, hops)
    sysm = make_system(spec, params)
    report = steady_state(sysm, params, tol=tol)
    dens = sysm.density(report.values)
    return params.beta * float(dens[0]), float(dens[n // 2]), report.converged


def cmd_sweep(cfg: ExperimentConfig) -> int:
    values = cfg.extra
    alphas = _grid(values["alpha_range"], "alpha_range")
    betas = _grid(values["beta_range"], "beta_range")
    spec = str(values["model"])
    _models(spec, cfg.params.n)
    if spec == "ssa":
        raise UsageError("model", "sweep supports master, full and mf:<m>")
    step = values["step"]
    if step is None:
        spacings = [np.diff(g).min() for g in (alphas, betas) if g.size > 1]
        step = min(spacings) if spacings else DEFAULT_PHASE_STEP
    p = cfg.params
    tasks = [(p.n, float(a), float(b), p.h, spec, cfg.tol) for a in alphas for b in betas]
    workers = values["workers"]
    if workers == 1 or len(tasks) == 1:
        results = [_sweep_point(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers or os.cpu_count()) as pool:
            results = list(pool.map(_sweep_point, tasks, chunksize=4))
    rows, ok = [], True
    for (n, a, b, *_), (rate, mid, converged) in zip(tasks, results):
        rows.append([a, b, rate, mid, classify_phase(a, b, step, p.homogeneous), converged])
        ok &= converged
    header = ["alpha", "beta", "production_rate", "mid_density", "phase", "converged"]
    _emit(to_csv(header, rows), cfg.output)
    return EXIT_OK if ok else EXIT_NONCONVERGED


def cmd_ssa(cfg: ExperimentConfig) -> int:
    est = _ssa_profile(cfg.params, cfg.extra, cfg.seed)
    rows = [[s, est.density[s], est.density_stderr[s]] for s in range(cfg.params.n - 1, -1, -1)]
    _emit(to_csv(["site", "density", "stderr"], rows), cfg.output)
    log.info("flux %.6g +- %.2g over %d events", est.flux, est.flux_stderr, est.events)
    return EXIT_OK


# --------------------------------------------------------------------------
# validation suites

def _suite(passed, measured, threshold, **info):
    return {"passed": bool(passed), "measured": float(measured), "threshold": float(threshold), **info}


def _random_simplex(rng, n, count):
    return rng.dirichlet(np.full(1 << n, 0.5), size=count)


def run_validation(params: LatticeParams, m_max: int, samples: int = 20, seed: int = 0,
                   input_state: CorrelationVector | None = None) -> dict:
    """Run the property suites; returns a JSON-ready report."""
    n = params.n
    rng = np.random.default_rng(seed)
    orders = [m for m in range(1, m_max + 1) if m < n]
    A = build_generator(params)
    zs = _random_simplex(rng, n, samples)
    suites = {}

    if input_state is not None:
        r = consistency_residual(input_state)
        suites["input_consistency"] = _suite(r < 1e-8, r, 1e-8)

    worst = max(consistency_residual(embed(z)) for z in zs)
    suites["consistency"] = _suite(worst < 1e-12, worst, 1e-12)

    worst = max(float(np.abs(vector_field_f(params, embed(z)).values - embed(A @ z).values).max())
                for z in zs)
    suites["f_embedding"] = _suite(worst < 1e-12, worst, 1e-12)

    worst_tan, lb_fail = 0.0, 0
    for m in orders:
        mf = model(params, m)
        for z in zs:
            x = embed(z, m)
            worst_tan = max(worst_tan, homogeneous_residual(mf.layout, mf.rhs(x.values)))
            lb_fail += not lower_bound_check_g(params, x)[0]
    for z in zs[:5]:
        lb_fail += not lower_bound_check(params, embed(z))[0]
    suites["tangency"] = _suite(worst_tan < 1e-10, worst_tan, 1e-10)
    suites["lower_bounds"] = _suite(lb_fail == 0, lb_fail, 0)

    lo, hi, res = 1.0, 0.0, 0.0
    for m in orders:
        for z in zs[:5]:
            traj = integrate(("meanfield", m), params, embed(z, m), 10.0 / params.c)
            lo = min(lo, float(traj.states.min()))
            hi = max(hi, float(traj.states.max()))
            res = max(res, float(traj.consistency_residual.max()))
    suites["invariance"] = _suite(lo >= -1e-9 and hi <= 1 + 1e-9 and res < 1e-7, res, 1e-7,
                                  min_component=lo, max_component=hi)

    # strict positivity after 1/c from the vertices; the minimum is reported
    escaped, minimum, shrinking = True, 1.0, True
    for m in orders:
        for cfg in (0, (1 << n) - 1):
            x0 = embed(point_mass(n, cfg), m).values
            ok, x = boundary_escape_test(params, m, x0, threshold=0.0)
            escaped &= ok
            minimum = min(minimum, float(x.min()))
            traj = integrate(("meanfield", m), params, x0, 1.0 / params.c)
            layout = IndexLayout(n, m)
            prev = None
            for state in traj.states:
                zs_now = zero_index_set(CorrelationVector(layout, state))
                if prev is not None and not zs_now <= prev:
                    shrinking = False
                prev = zs_now
    suites["boundary_escape"] = _suite(escaped, minimum, 0.0)
    suites["zero_set_monotone"] = _suite(shrinking, float(shrinking), 1.0)

    exact = stationary_master(A)
    dens_exact = embed(exact, 1).block(1)[:, 1]
    errors = {}
    for m in orders:
        report = steady_state(("meanfield", m), params)
        dens = report.values[IndexLayout(n, m).block(1)].reshape(n, 2)[:, 1]
        errors[m] = float(np.abs(dens - dens_exact).max())
    series = [errors[m] for m in orders]
    monotone = all(a > b for a, b in zip(series, series[1:]))
    suites["order_m_trend"] = _suite(monotone, series[-1] if series else 0.0, 0.0,
                                     errors={f"mf:{m}": e for m, e in errors.items()})

    failed = [name for name, s in suites.items() if not s["passed"]]
    return {
        "n": n, "m_max": m_max, "alpha": params.alpha, "beta": params.beta,
        "h": list(params.h), "seed": seed,
        "suites": suites, "passed": not failed, "failed": failed,
    }


def cmd_validate(cfg: ExperimentConfig) -> int:
    values = cfg.extra
    n = cfg.params.n
    if n > 10:
        raise UsageError("n", "validate needs n <= 10")
    m_max = _number(values, "m_max", int)
    if not 1 <= m_max < n:
        raise UsageError("m_max", f"must satisfy 1 <= m_max < n={n}")
    input_state = None
    if values["input"] is not None:
        if not os.path.isfile(values["input"]):
            raise UsageError("input", f"no such file {values['input']!r}")
        loaded = _load_state_file(values["input"], n)
        input_state = loaded if isinstance(loaded, CorrelationVector) else embed(loaded)
    report = run_validation(cfg.params, m_max, _number(values, "samples", int), cfg.seed, input_state)
    _emit(json.dumps(report, indent=2) + "\n", cfg.output)
    for name in report["failed"]:
        print(f"validation failed: {name}", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_VALIDATION


# --------------------------------------------------------------------------
# parser

def _common(parser):
    parser.add_argument("--config", help="JSON file with any of the options below")
    parser.add_argument("--n", type=int)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--h", help="uniform:<v> or a comma list of n-1 hop rates")
    parser.add_argument("--models", help="comma list of master, full, mf:<m>, ssa")
    parser.add_argument("--init", help="uniform | empty | full | point:<bits> | file:<path>")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--evolve", type=float, metavar="T", help="integrate to time T")
    mode.add_argument("--steady", action="store_true", default=None, help="stationary state")
    parser.add_argument("--tol", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--output", help="output file (default stdout)")
    parser.add_argument("-v", "--verbose", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tasepmf", description="TASEP master equation and mean-field models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("density", help="density profiles per model (CSV)")
    _common(p)
    p.add_argument("--replicas", type=int)
    p.add_argument("--t-burn", type=float)
    p.add_argument("--t-measure", type=float)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("steady", help="steady-state solver reports (CSV)")
    _common(p)
    p.add_argument("--replicas", type=int)
    p.add_argument("--t-burn", type=float)
    p.add_argument("--t-measure", type=float)
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("sweep", help="production rate and phase over an (alpha, beta) grid (CSV)")
    _common(p)
    p.add_argument("--alpha-range", help="lo:hi:num")
    p.add_argument("--beta-range", help="lo:hi:num")
    p.add_argument("--model")
    p.add_argument("--workers", type=int)
    p.add_argument("--step", type=float, help="critical-line width (default: grid spacing)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="run the property suites (JSON)")
    _common(p)
    p.add_argument("--m-max", type=int)
    p.add_argument("--input", help="state file whose consistency is checked")
    p.add_argument("--samples", type=int)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("ssa", help="Gillespie estimates of the densities (CSV)")
    _common(p)
    p.add_argument("--replicas", type=int)
    p.add_argument("--t-burn", type=float)
    p.add_argument("--t-measure", type=float)
    p.set_defaults(func=cmd_ssa)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return args.func(cfg)
    except UsageError as exc:
        print(f"error: invalid {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InvalidInputError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except IntegrationError as exc:
        print(f"error: integration failed: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except TasepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
