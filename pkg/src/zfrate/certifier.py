"""Rate certification: LMI assembly and bisection over the decay rate."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import cvxpy as cp
import numpy as np

from .multiplier import (
    MultiplierClass,
    MultiplierConfig,
    MultiplierVars,
    ZfBasis,
    build_basis,
    l1_value,
    positivity_blocks,
    sos_coefficients,
    sos_sizes,
)
from .psi import SectorBounds, build_interconnection, build_psi, p_matrix, psi_state_mask
from .sdp import (
    Constraint,
    FeasibilityResult,
    SdpProblem,
    Status,
    VarKind,
    check_feasible,
    verify_witness,
)
from .ss import StateSpace, spectral_abscissa

logger = logging.getLogger(__name__)

__all__ = [
    "GRID_TOL",
    "EPS_POS",
    "EPS_LMI",
    "RateEstimate",
    "CertificationError",
    "assemble_lmi",
    "assemble_lmi_lpv",
    "certify_rate",
    "default_alpha_max",
    "witness_vars",
    "build_rate_problem",
    "scaled_witness_check",
]

GRID_TOL = 2.0**-13
EPS_POS = 1e-7
EPS_LMI = 1e-9


class CertificationError(RuntimeError):
    def __init__(self, alpha: float, result: FeasibilityResult):
        super().__init__(
            f"solver breakdown at alpha={alpha!r} (status {result.solver_status!r})"
        )
        self.alpha = alpha
        self.result = result


@dataclass
class RateEstimate:
    alpha_star: float | None
    grid_tol: float
    log: list[tuple[float, str]] = field(default_factory=list)
    witness_at_alpha_star: FeasibilityResult | None = None
    problem: SdpProblem | None = field(default=None, repr=False)

    @property
    def infeasible_at_zero(self) -> bool:
        return self.alpha_star is None

    def value_or(self, marker: float = -1.0) -> float:
        """Certified rate, or ``marker`` when even stability is not certified."""
        return marker if self.alpha_star is None else self.alpha_star


def _stacker(*blocks):
    if any(isinstance(b, cp.Expression) for b in blocks):
        return cp.bmat
    return np.block


def _kron_eye(p, d: int):
    if d == 1:
        return p
    if isinstance(p, cp.Expression):
        return cp.kron(p, np.eye(d))
    return np.kron(p, np.eye(d))


def _lmi_expr(a0, b, c, dmat, mask, nu: int, d: int):
    n, nu_in = b.shape
    cd = np.hstack([c, dmat])
    zero = np.zeros((nu_in, nu_in))

    def expr(v, prm):
        x, alpha = v["X"], prm["alpha"]
        ax = a0.T @ x + x @ a0 + alpha * (2 * x - 2 * (mask @ x) - 2 * (x @ mask))
        xb = x @ b
        stack = _stacker(x, v["H"], v["P1"], v["P3"])
        top = stack([[ax, xb], [xb.T, zero]])
        pm = p_matrix(v["H"], v["P1"], v["P3"], nu, stacker=stack)
        return top + cd.T @ _kron_eye(pm, d) @ cd

    return expr


def _base_problem(config: MultiplierConfig, basis: ZfBasis, n: int) -> SdpProblem:
    nu = basis.order
    cls = config.cls
    variables = {"X": (VarKind.SYMMETRIC, n)}
    derived = {}
    # H is normalised to one; every constraint is positively homogeneous
    fixed = {"H": np.ones((1, 1))}
    constraints = [Constraint("X", ">>", lambda v, p: v["X"], eps=EPS_POS)]
    for tag, used in (("1", cls.uses_p1), ("3", cls.uses_p3)):
        if not used:
            fixed["P" + tag] = np.zeros((1, nu))
        elif config.positivity == "sos":
            sizes = [k for k in sos_sizes(nu) if k]
            names = [f"G{tag}{j}" for j in range(len(sizes))]
            for name, k in zip(names, sizes):
                variables[name] = (VarKind.SYMMETRIC, k)
                constraints.append(Constraint(
                    name, ">>", lambda v, p, name=name: v[name], eps=0.0,
                ))
            derived["P" + tag] = lambda v, names=names: sos_coefficients(
                nu, *(v[name] for name in names)
            )
        else:
            variables["P" + tag] = (VarKind.ROW, nu)
            if nu > 1:
                variables["X" + tag] = (VarKind.SYMMETRIC, nu - 1)
            constraints.append(Constraint(
                "positivity" + tag, ">>",
                lambda v, p, tag=tag: positivity_blocks(basis, v["P" + tag], v.get("X" + tag)),
                eps=EPS_POS,
            ))
    if cls is not MultiplierClass.CIRCLE:
        constraints.append(Constraint(
            "l1", ">=", lambda v, p: l1_value(basis, v["H"], v["P1"], v["P3"]), eps=0.0,
        ))
    return SdpProblem(
        variables, constraints, params={"alpha": 0.0}, fixed=fixed, derived=derived,
    )


def _add_vertex(problem: SdpProblem, a0, sys: StateSpace, mask, nu: int, d: int, name: str):
    problem.add_constraint(Constraint(
        name, "<<", _lmi_expr(a0, sys.b, sys.c, sys.d, mask, nu, d), eps=EPS_LMI, margin=True,
    ))


def assemble_lmi_lpv(
    vertex_interconnections: Sequence[StateSpace],
    config: MultiplierConfig,
    basis: ZfBasis,
    d: int,
    alpha: float,
) -> SdpProblem:
    """Shared storage and multiplier variables, one dissipation LMI per vertex.

    Each interconnection must have been built with the filter at ``alpha``.
    """
    if not vertex_interconnections:
        raise ValueError("need at least one vertex")
    nu = basis.order
    n = vertex_interconnections[0].nx
    for k, sys in enumerate(vertex_interconnections):
        if sys.nx != n or sys.nu != d or sys.ny != 2 * (1 + nu) * d:
            raise ValueError(
                f"vertex {k} has dimensions (nx={sys.nx}, nu={sys.nu}, ny={sys.ny}); "
                f"expected nx={n}, nu={d}, ny={2 * (1 + nu) * d}"
            )
    mask = psi_state_mask(nu, d, n - 2 * nu * d)
    problem = _base_problem(config, basis, n)
    problem.set_param("alpha", alpha)
    for k, sys in enumerate(vertex_interconnections):
        # recover the alpha-free state matrix; the filter block shifts by -2 alpha
        a0 = sys.a + 2.0 * alpha * mask
        _add_vertex(problem, a0, sys, mask, nu, d, f"lmi{k}")
    return problem


def assemble_lmi(
    interconnection: StateSpace,
    config: MultiplierConfig,
    basis: ZfBasis,
    d: int,
    alpha: float,
) -> SdpProblem:
    return assemble_lmi_lpv([interconnection], config, basis, d, alpha)


def witness_vars(problem: SdpProblem, result: FeasibilityResult) -> MultiplierVars:
    """Multiplier coefficients of a feasible witness."""
    w = {**problem.fixed, **result.witness}
    return MultiplierVars(
        float(np.asarray(w["H"]).ravel()[0]), w["P1"], w["P3"], w.get("X1"), w.get("X3"),
    )


def scaled_witness_check(
    problem: SdpProblem, result: FeasibilityResult, k: float
) -> tuple[dict[str, float], bool]:
    """Re-verify ``k`` times a feasible witness.

    The fixed entries (the normalised ``H`` and any zeroed rows) are scaled
    too, since they are part of the point being scaled.
    """
    if not result.feasible:
        raise ValueError("need a feasible result")
    fixed = {n: k * np.asarray(v) for n, v in problem.fixed.items()}
    scaled = replace(problem, fixed=fixed, _compiled=None)
    witness = {n: k * result.witness[n] for n in problem.variables}
    return verify_witness(scaled, witness)


def _vertices(plant) -> tuple[list[StateSpace], int]:
    from .plants import PlantModel

    if isinstance(plant, PlantModel):
        return list(plant.vertices), plant.d
    if isinstance(plant, StateSpace):
        return [plant], plant.nu
    vertices = list(plant)
    return vertices, vertices[0].nu


def default_alpha_max(vertices: Sequence[StateSpace], cap: float = 10.0) -> float:
    """1.1 times the slowest stable open-loop decay over all vertices, capped."""
    best = cap
    for sys in vertices:
        ev = np.linalg.eigvals(sys.a) if sys.nx else np.zeros(0)
        stable = ev.real[ev.real < -1e-9]
        if stable.size:
            best = min(best, 1.1 * float(-np.max(stable)))
    return best


def build_rate_problem(plant, sector: SectorBounds, config: MultiplierConfig) -> SdpProblem:
    """LMI problem with the decay rate as a re-settable parameter ``alpha``."""
    vertices, d = _vertices(plant)
    basis = build_basis(config)
    psi = build_psi(basis, sector, 0.0, d)
    systems = [build_interconnection(psi, g) for g in vertices]
    return assemble_lmi_lpv(systems, config, basis, d, 0.0)


def certify_rate(
    plant,
    sector: SectorBounds,
    config: MultiplierConfig | None = None,
    alpha_max: float | None = None,
    grid_tol: float = GRID_TOL,
) -> RateEstimate:
    """Largest multiple of ``grid_tol`` in ``[0, alpha_max]`` at which the LMI is feasible.

    ``plant`` is a :class:`StateSpace`, a list of vertex systems or a
    :class:`~zfrate.plants.PlantModel`.
    """
    config = config or MultiplierConfig()
    if grid_tol <= 0:
        raise ValueError("grid_tol must be positive")
    vertices, _ = _vertices(plant)
    if alpha_max is None:
        alpha_max = default_alpha_max(vertices)
    if alpha_max <= 0:
        raise ValueError("alpha_max must be positive")
    problem = build_rate_problem(plant, sector, config)
    est = RateEstimate(None, grid_tol, problem=problem)

    def solve(k: int) -> FeasibilityResult:
        alpha = k * grid_tol
        problem.set_param("alpha", alpha)
        res = check_feasible(problem)
        est.log.append((alpha, res.status.value))
        logger.debug("alpha=%.10g %s margin=%.3g", alpha, res.status.value, res.margin)
        if res.status is Status.NUMERICAL_FAILURE:
            raise CertificationError(alpha, res)
        return res

    res0 = solve(0)
    if not res0.feasible:
        return est
    lo, best = 0, res0
    hi = int(math.floor(alpha_max / grid_tol + 1e-9))
    res_hi = solve(hi)
    if res_hi.feasible:
        lo, best = hi, res_hi
    else:
        # invariant: lo feasible, hi infeasible
        while hi - lo > 1:
            mid = (lo + hi) // 2
            res = solve(mid)
            if res.feasible:
                lo, best = mid, res
            else:
                hi = mid
    est.alpha_star = lo * grid_tol
    est.witness_at_alpha_star = best
    problem.set_param("alpha", est.alpha_star)
    return est
