"""Command-line front end.

Subcommands: ``certify``, ``sweep``, ``simulate``, ``flocking``, ``oracle``
and ``validate-iqc``.  Reports are JSON, tables are CSV with 17 significant
digits.  ``certify`` exits 0 when a rate is certified, 2 when not even
stability is certifiable and 1 on errors.  Set ``ZFRATE_SOLVER_VERBOSE=1``
to see solver output.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .certifier import GRID_TOL, CertificationError, certify_rate, witness_vars
from .multiplier import MultiplierClass, MultiplierConfig
from .plants import (
    BUILTINS,
    DEFAULT_QUAD_GAINS,
    PlantModel,
    builtin,
    load_plant,
    quadrotor_surrogate,
    two_mode_quadrotor,
)
from .psi import SectorBounds
from .sim import (
    FlockSpec,
    com_reduce,
    equilibrium_state,
    fit_decay_rate,
    flocking_simulate,
    quadratic_field,
    ring_laplacian,
    scaled_smooth_field,
    simulate_closed_loop,
    worst_case_quadratic_rate,
)
from .ss import ReferenceGains

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
SWEEP_CLASSES = ("cc", "causal", "anticausal", "zf")
INFEASIBLE = -1.0

logger = logging.getLogger("zfrate")


def fmt(x: float) -> str:
    return f"{x:.17g}"


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return v


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class RunConfig:
    """Plant selection, sector and multiplier shared by the subcommands."""

    builtin: str | None
    plant_path: str | None
    m: float
    l: float
    cls: str
    order: int
    lam: float
    positivity: str
    alpha_max: float | None
    grid_tol: float

    @property
    def sector(self) -> SectorBounds:
        return SectorBounds(self.m, self.l)

    @property
    def multiplier(self) -> MultiplierConfig:
        return MultiplierConfig(self.cls, self.order, self.lam, self.positivity)

    def plant(self) -> PlantModel:
        if self.plant_path:
            return load_plant(self.plant_path)
        return builtin(self.builtin)


def _add_plant_args(p: argparse.ArgumentParser, default: str | None = "nonmin-phase") -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--builtin", choices=sorted(BUILTINS), default=default)
    g.add_argument("--plant", dest="plant_path", help="plant JSON file")


def _add_sector_args(p: argparse.ArgumentParser, l_default: float = 1.0) -> None:
    p.add_argument("--m", type=_positive, default=1.0, help="strong convexity m")
    p.add_argument("--L", dest="l", type=_positive, default=l_default, help="gradient Lipschitz L")


def _add_multiplier_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--class", dest="cls", default="zf",
                   choices=[c.value for c in MultiplierClass])
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--lambda", dest="lam", type=float, default=-1.0)
    p.add_argument("--positivity", choices=("sos", "literal"), default="sos",
                   help="kernel nonnegativity certificate")
    p.add_argument("--alpha-max", type=_positive, default=None)
    p.add_argument("--grid-tol", type=_positive, default=GRID_TOL)


def _run_config(args) -> RunConfig:
    if args.m > args.l:
        raise ValueError(f"need m <= L, got m={args.m}, L={args.l}")
    cfg = RunConfig(
        getattr(args, "builtin", None), getattr(args, "plant_path", None), args.m, args.l,
        getattr(args, "cls", "zf"), getattr(args, "order", 1), getattr(args, "lam", -1.0),
        getattr(args, "positivity", "sos"), getattr(args, "alpha_max", None),
        getattr(args, "grid_tol", GRID_TOL),
    )
    cfg.multiplier  # validates class, order and lambda
    return cfg


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------- certify

def cmd_certify(args) -> int:
    cfg = _run_config(args)
    plant = cfg.plant()
    try:
        est = certify_rate(plant, cfg.sector, cfg.multiplier, cfg.alpha_max, cfg.grid_tol)
    except CertificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    report = {
        "plant": plant.label,
        "alpha_star": est.value_or(INFEASIBLE),
        "grid_tol": cfg.grid_tol,
        "multiplier": {
            "class": cfg.multiplier.cls.value,
            "order": cfg.order,
            "lambda": cfg.lam,
            "positivity": cfg.positivity,
        },
        "sector": {"m": cfg.m, "L": cfg.l},
        "bisection_log": [{"alpha": a, "status": s} for a, s in est.log],
        "witness_summary": _witness_summary(est),
    }
    _emit(_json(report), args.output)
    return EXIT_OK if est.alpha_star is not None else EXIT_INFEASIBLE


def _witness_summary(est) -> dict | None:
    if est.witness_at_alpha_star is None:
        return None
    res = est.witness_at_alpha_star
    w = witness_vars(est.problem, res)
    ev = np.linalg.eigvalsh(res.witness["X"])
    return {
        "H": w.h_cap,
        "P1": w.p1.ravel().tolist(),
        "P3": w.p3.ravel().tolist(),
        "X_min_eig": float(ev[0]),
        "X_cond": float(ev[-1] / ev[0]),
        "margin": res.margin,
        "residuals": res.residuals,
    }


# ---------------------------------------------------------------- sweep

@dataclass(frozen=True)
class _SweepPoint:
    value: float
    cfg: RunConfig
    var: str
    classes: tuple[str, ...]
    kp: float
    oracle_grid: int


def _sweep_plant(pt: _SweepPoint) -> tuple[PlantModel, SectorBounds]:
    if pt.var == "L":
        return pt.cfg.plant(), SectorBounds(pt.cfg.m, pt.value)
    gains = ReferenceGains(pt.kp, pt.kp * pt.value)
    if pt.cfg.builtin == "quadrotor":
        return quadrotor_surrogate(gains), pt.cfg.sector
    if pt.cfg.builtin == "two-mode-quadrotor":
        return two_mode_quadrotor(gains=gains), pt.cfg.sector
    raise ValueError("gain-ratio sweeps need --builtin quadrotor or two-mode-quadrotor")


def _sweep_one(pt: _SweepPoint) -> dict[str, float]:
    plant, sector = _sweep_plant(pt)
    row = {}
    for cls in SWEEP_CLASSES:
        if cls not in pt.classes:
            row[cls] = math.nan
            continue
        config = MultiplierConfig(cls, pt.cfg.order, pt.cfg.lam, pt.cfg.positivity)
        try:
            est = certify_rate(plant, sector, config, pt.cfg.alpha_max, pt.cfg.grid_tol)
            row[cls] = est.value_or(INFEASIBLE)
        except CertificationError as exc:
            logger.warning("sweep point %s class %s failed: %s", pt.value, cls, exc)
            row[cls] = math.nan
    row["oracle"] = worst_case_quadratic_rate(plant, sector, pt.oracle_grid)
    return row


def _sweep_values(args) -> list[float]:
    if args.values:
        return _float_list(args.values)
    if args.start is None or args.stop is None or args.step is None:
        raise ValueError("give --values or all of --start, --stop, --step")
    if args.step <= 0 or args.stop < args.start:
        raise ValueError("need step > 0 and stop >= start")
    n = int(math.floor((args.stop - args.start) / args.step + 1e-9))
    return [round(args.start + k * args.step, 12) for k in range(n + 1)]


def sweep_rows(points: list[_SweepPoint], workers: int) -> list[dict[str, float]]:
    """Rows in the order of ``points`` regardless of completion order."""
    if workers == 1 or len(points) == 1:
        return [_sweep_one(p) for p in points]
    with ProcessPoolExecutor(max_workers=workers or None) as pool:
        return list(pool.map(_sweep_one, points))


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    values = _sweep_values(args)
    classes = tuple(MultiplierClass.parse(c).value for c in args.classes.split(","))
    points = [_SweepPoint(v, cfg, args.var, classes, args.kp, args.oracle_grid) for v in values]
    rows = sweep_rows(points, args.workers)
    header = "sweep_value,alpha_cc,alpha_causal,alpha_anticausal,alpha_zf,alpha_oracle"
    lines = [header]
    for v, row in zip(values, rows):
        cells = [v] + [row[c] for c in SWEEP_CLASSES] + [row["oracle"]]
        lines.append(",".join(fmt(x) for x in cells))
    _emit("\n".join(lines) + "\n", args.output)
    failed = all(all(math.isnan(row[c]) for c in classes) for row in rows)
    return EXIT_ERROR if failed else EXIT_OK


# ---------------------------------------------------------------- simulate / oracle

def cmd_simulate(args) -> int:
    cfg = _run_config(args)
    plant = cfg.plant()
    d = plant.d
    y_star = np.full(d, args.y_star)
    if args.field == "quadratic":
        k = args.curvature if args.curvature is not None else cfg.l
        if not cfg.m <= k <= cfg.l:
            raise ValueError(f"curvature {k} outside [{cfg.m}, {cfg.l}]")
        fld = quadratic_field(np.eye(d) * k / 2, c=-k * y_star, sector=cfg.sector)
    else:
        fld = scaled_smooth_field(cfg.sector, y_star)
    rng = np.random.default_rng(args.seed)
    eta_star = equilibrium_state(plant, y_star)
    x0 = eta_star + rng.standard_normal(plant.nx)
    traj = simulate_closed_loop(plant, fld, x0, args.dt, args.t_final, vertex=args.vertex)
    _emit(traj.to_csv(include_states=args.states), args.output)
    if args.fit:
        try:
            rate = fit_decay_rate(traj, y_star)
        except ValueError as exc:
            print(f"fit: {exc}", file=sys.stderr)
            return EXIT_ERROR
        print(_json({"fitted_rate": rate}), file=sys.stderr, end="")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _run_config(args)
    rate = worst_case_quadratic_rate(cfg.plant(), cfg.sector, args.grid)
    _emit(_json({"plant": cfg.plant().label, "m": cfg.m, "L": cfg.l, "grid": args.grid,
                 "rate": rate}), args.output)
    return EXIT_OK


# ---------------------------------------------------------------- flocking

def _graph(name: str, n: int) -> np.ndarray:
    if name == "ring":
        return ring_laplacian(n)
    if name == "complete":
        return n * np.eye(n) - np.ones((n, n))
    if name == "path":
        lap = np.zeros((n, n))
        for i in range(n - 1):
            lap[i, i + 1] = lap[i + 1, i] = -1.0
        np.fill_diagonal(lap, -lap.sum(axis=1))
        return lap
    raise ValueError(f"unknown graph {name!r}")


def cmd_flocking(args) -> int:
    cfg = _run_config(args)
    plant = cfg.plant() if args.plant_path or args.builtin else quadrotor_surrogate(DEFAULT_QUAD_GAINS, d=args.dim)
    spec = FlockSpec(_graph(args.graph, args.agents), args.spring_rest, args.spring_k)
    rng = np.random.default_rng(args.seed)
    d = plant.d
    evals = np.linspace(cfg.m, cfg.l, d)
    rot, _ = np.linalg.qr(rng.standard_normal((d, d)))
    hess = rot @ np.diag(evals) @ rot.T
    y_star = rng.standard_normal(d)
    fld = quadratic_field(hess / 2, c=-hess @ y_star, sector=cfg.sector)
    x0s = rng.standard_normal((args.agents, plant.nx))
    agents = flocking_simulate(spec, plant.lti, fld, x0s, args.dt, args.t_final)
    com = com_reduce(agents)
    single = simulate_closed_loop(plant, fld, x0s.mean(axis=0), args.dt, args.t_final)
    dev = float(np.max(np.linalg.norm(com.outputs - single.outputs, axis=-1)))
    report = {
        "agents": args.agents,
        "graph": args.graph,
        "dt": args.dt,
        "t_final": args.t_final,
        "max_com_deviation": dev,
        "final_com_error": float(np.linalg.norm(com.outputs[-1] - y_star)),
    }
    if args.csv:
        com.to_csv(args.csv)
    _emit(_json(report), args.output)
    return EXIT_OK


# ---------------------------------------------------------------- validate-iqc

def cmd_validate_iqc(args) -> int:
    from .validation import validate_suite

    summary = validate_suite(args.samples, args.seed, args.dt, args.T)
    report, ok = {}, True
    for fam, s in summary.items():
        passed = s.min_relative >= -args.rtol and (s.negatives == 0 or s.worst_refinement >= 4)
        ok &= passed
        report[fam] = {
            "checks": s.checks,
            "min_relative_residual": s.min_relative,
            "negatives": s.negatives,
            "worst_refinement_ratio": None if math.isinf(s.worst_refinement) else s.worst_refinement,
            "pass": bool(passed),
        }
    _emit(_json({"samples": args.samples, "seed": args.seed, "rtol": args.rtol,
                 "families": report}), args.output)
    return EXIT_OK if ok else EXIT_ERROR


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zfrate", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="certify a convergence rate")
    _add_plant_args(p)
    _add_sector_args(p)
    _add_multiplier_args(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="certified rates over a parameter grid (CSV)")
    _add_plant_args(p)
    _add_sector_args(p)
    _add_multiplier_args(p)
    p.add_argument("--var", choices=("L", "gain-ratio"), default="L")
    p.add_argument("--values", help="comma separated sweep values")
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--classes", default=",".join(SWEEP_CLASSES))
    p.add_argument("--kp", type=_positive, default=DEFAULT_QUAD_GAINS.k_p,
                   help="k_p held fixed in gain-ratio sweeps")
    p.add_argument("--oracle-grid", type=int, default=201)
    p.add_argument("--workers", type=_nonneg_int, default=1, help="0 picks the CPU count")
    p.add_argument("--output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="closed-loop trajectory (CSV)")
    _add_plant_args(p)
    _add_sector_args(p)
    p.add_argument("--field", choices=("quadratic", "smooth"), default="quadratic")
    p.add_argument("--curvature", type=_positive, help="quadratic Hessian k I (default L)")
    p.add_argument("--y-star", type=float, default=0.0)
    p.add_argument("--vertex", type=int, default=0)
    p.add_argument("--dt", type=_positive, default=1e-3)
    p.add_argument("--t-final", type=_positive, default=60.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--states", action="store_true", help="append state columns")
    p.add_argument("--fit", action="store_true", help="print fitted decay rate on stderr")
    p.add_argument("--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("flocking", help="flock vs centre-of-mass check (JSON)")
    _add_plant_args(p, default=None)
    _add_sector_args(p, l_default=3.0)
    p.add_argument("--agents", type=int, default=5)
    p.add_argument("--graph", choices=("ring", "complete", "path"), default="ring")
    p.add_argument("--dim", type=int, default=2, help="space dimension for the default vehicle")
    p.add_argument("--spring-k", type=float, default=0.5)
    p.add_argument("--spring-rest", type=float, default=1.0)
    p.add_argument("--dt", type=_positive, default=1e-3)
    p.add_argument("--t-final", type=_positive, default=60.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="write the centre-of-mass trajectory here")
    p.add_argument("--output")
    p.set_defaults(func=cmd_flocking)

    p = sub.add_parser("oracle", help="worst-case quadratic-field rate (JSON)")
    _add_plant_args(p)
    _add_sector_args(p)
    p.add_argument("--grid", type=int, default=201)
    p.add_argument("--output")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("validate-iqc", help="randomised IQC inequality checks (JSON)")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--dt", type=_positive, default=1e-2)
    p.add_argument("--T", type=_positive, default=20.0)
    p.add_argument("--rtol", type=_positive, default=1e-5)
    p.add_argument("--output")
    p.set_defaults(func=cmd_validate_iqc, m=1.0, l=1.0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
