"""Small semidefinite feasibility layer.

A problem is a set of named decision variables and affine matrix-valued
constraints written as plain functions of the variables.  The same function
is evaluated symbolically (cvxpy expressions, for the solver) and
numerically (numpy arrays, for verifying the returned witness), so the
feasibility verdict never rests on the solver's word alone.

Feasibility is decided by a phase-I program: the margin ``t`` of the
"negative" constraints is maximised, and the problem is declared feasible
when the optimal margin clears that constraint's threshold.
"""

from __future__ import annotations

import enum
import logging
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable

import cvxpy as cp
import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "VarKind",
    "Constraint",
    "SdpProblem",
    "Status",
    "FeasibilityResult",
    "check_feasible",
]

VERIFY_RTOL = 1e-7
# phase-I margins below this are treated as the feasibility boundary
MARGIN_TOL = 1e-7


class VarKind(enum.Enum):
    SYMMETRIC = "symmetric"
    SCALAR = "scalar"
    ROW = "row"


@dataclass
class Constraint:
    """``expr(vars, params)`` compared against ``eps``.

    ``sense`` is ``">>"`` (expr ⪰ eps I), ``"<<"`` (expr ⪯ -eps I) or
    ``">="`` (scalar expr ≥ eps).  Constraints flagged ``margin`` take part
    in the phase-I objective.
    """

    name: str
    sense: str
    expr: Callable
    eps: float = 0.0
    margin: bool = False

    def __post_init__(self):
        if self.sense not in (">>", "<<", ">="):
            raise ValueError(f"unknown constraint sense {self.sense!r}")


@dataclass
class SdpProblem:
    variables: dict[str, tuple[VarKind, int]]
    constraints: list[Constraint]
    params: dict[str, float] = field(default_factory=dict)
    fixed: dict[str, np.ndarray] = field(default_factory=dict)
    margin_cap: float = 1.0
    # name -> f(vars): affine quantities computed from the decision variables
    derived: dict[str, Callable] = field(default_factory=dict)
    _compiled: object = field(default=None, repr=False, compare=False)

    def set_param(self, name: str, value: float) -> None:
        if name not in self.params:
            raise KeyError(name)
        self.params[name] = float(value)

    def add_constraint(self, c: Constraint) -> None:
        self.constraints.append(c)
        self._compiled = None

    def env(self, values: dict) -> dict:
        """Fixed values, ``values`` and the derived quantities computed from them."""
        out = {**self.fixed, **values}
        for name, f in self.derived.items():
            out[name] = f(out)
        return out

    def evaluate(self, name: str, witness: dict) -> np.ndarray:
        """Numerical value of one constraint expression at ``witness``."""
        c = next(c for c in self.constraints if c.name == name)
        return _as2d(c.expr(self.env(witness), dict(self.params)))


class Status(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass
class FeasibilityResult:
    status: Status
    witness: dict | None
    residuals: dict[str, float]
    margin: float = float("nan")
    solver_status: str = ""

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE


def _as2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(1, 1) if x.ndim < 2 else x


def _sym(expr):
    return (expr + expr.T) / 2


def _make_var(kind: VarKind, size: int, name: str):
    if kind is VarKind.SYMMETRIC:
        return cp.Variable((size, size), symmetric=True, name=name)
    if kind is VarKind.SCALAR:
        return cp.Variable((1, 1), name=name)
    return cp.Variable((1, size), name=name)


def _compile(problem: SdpProblem):
    cvars = {
        name: _make_var(kind, size, name)
        for name, (kind, size) in problem.variables.items()
    }
    cparams = {name: cp.Parameter(name=name, value=v) for name, v in problem.params.items()}
    env = {**{k: np.asarray(v, dtype=float) for k, v in problem.fixed.items()}, **cvars}
    for name, f in problem.derived.items():
        env[name] = f(env)
    t = cp.Variable(name="margin")
    cons = [t <= problem.margin_cap]
    for c in problem.constraints:
        e = c.expr(env, cparams)
        if c.sense == ">=":
            cons.append(e - (t if c.margin else 0) >= c.eps)
            continue
        n = e.shape[0]
        eye = np.eye(n)
        shift = t * eye if c.margin else 0
        if c.sense == ">>":
            cons.append(_sym(e) - shift >> c.eps * eye)
        else:
            cons.append(_sym(e) + shift << -c.eps * eye)
    prob = cp.Problem(cp.Maximize(t), cons)
    return prob, cvars, cparams, t


def _residual(c: Constraint, value: np.ndarray) -> tuple[float, float]:
    """Signed slack of a constraint and the magnitude used to judge it."""
    value = _as2d(value)
    scale = max(1.0, float(np.max(np.abs(value))))
    if c.sense == ">=":
        return float(value[0, 0] - c.eps), scale
    sym = (value + value.T) / 2
    ev = np.linalg.eigvalsh(sym)
    if c.sense == ">>":
        return float(ev[0] - c.eps), scale
    return float(-ev[-1] - c.eps), scale


def verify_witness(problem: SdpProblem, witness: dict) -> tuple[dict[str, float], bool]:
    """Per-constraint slack at ``witness`` and whether all pass at ``VERIFY_RTOL``."""
    residuals, ok = {}, True
    env = problem.env(witness)
    for c in problem.constraints:
        r, scale = _residual(c, c.expr(env, dict(problem.params)))
        residuals[c.name] = r
        if r < -VERIFY_RTOL * scale:
            ok = False
    return residuals, ok


def check_feasible(problem: SdpProblem, solver: str | None = None) -> FeasibilityResult:
    """Decide feasibility of ``problem`` and return a verified witness."""
    if problem._compiled is None:
        problem._compiled = _compile(problem)
    prob, cvars, cparams, t = problem._compiled
    for name, p in cparams.items():
        p.value = problem.params[name]
    solver = solver or os.environ.get("ZFRATE_SOLVER", "CLARABEL")
    verbose = os.environ.get("ZFRATE_SOLVER_VERBOSE", "") not in ("", "0")
    attempts = [{}]
    if solver == "CLARABEL":
        # Clarabel occasionally aborts on near-degenerate KKT systems; a second
        # pass with more static regularisation almost always recovers
        attempts.append({"static_regularization_constant": 1e-7, "max_iter": 500})
    for i, settings in enumerate(attempts):
        try:
            with warnings.catch_warnings():
                # accuracy is judged by the independent re-check below
                warnings.simplefilter("ignore", UserWarning)
                prob.solve(solver=solver, verbose=verbose, **settings)
            break
        except cp.error.SolverError as exc:
            logger.warning("solver error (attempt %d): %s", i + 1, exc)
            if i == len(attempts) - 1:
                return FeasibilityResult(Status.NUMERICAL_FAILURE, None, {}, solver_status=str(exc))
    status = prob.status
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or t.value is None:
        return FeasibilityResult(Status.NUMERICAL_FAILURE, None, {}, solver_status=status)
    margin = float(t.value)
    margin_eps = max((c.eps for c in problem.constraints if c.margin), default=0.0)
    if margin < max(margin_eps, MARGIN_TOL):
        # an inaccurate solve that stalls at the boundary is still a "no"
        return FeasibilityResult(Status.INFEASIBLE, None, {}, margin, status)
    witness = {name: np.array(v.value, dtype=float) for name, v in cvars.items()}
    for name, (kind, _) in problem.variables.items():
        if kind is VarKind.SYMMETRIC:
            w = witness[name]
            witness[name] = (w + w.T) / 2
    residuals, ok = verify_witness(problem, witness)
    if not ok:
        return FeasibilityResult(Status.NUMERICAL_FAILURE, None, residuals, margin, status)
    full = problem.env(witness)
    for name in problem.derived:
        witness[name] = np.asarray(full[name], dtype=float)
    return FeasibilityResult(Status.FEASIBLE, witness, residuals, margin, status)
