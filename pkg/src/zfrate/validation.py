"""Randomised sweep of the IQC inequality checks over the shipped plants."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .certifier import certify_rate, witness_vars
from .iqc import (
    SignalPair,
    dissipation_residual,
    lemma1_residual,
    make_signals,
    theorem2_residual,
    theorem3_residual,
)
from .multiplier import MultiplierConfig, MultiplierVars, build_basis
from .plants import PlantModel, builtin
from .psi import PsiRealization, SectorBounds, build_P, build_psi
from .sim import (
    FieldSpec,
    equilibrium_state,
    field_minimizer,
    random_quadratic_field,
    scaled_smooth_field,
    simulate_closed_loop,
)

logger = logging.getLogger(__name__)

__all__ = ["ValidationCase", "FamilySummary", "prepare_case", "default_cases", "validate_suite",
           "FAMILIES", "TAU_GRID"]

FAMILIES = ("lemma1", "theorem2", "theorem3", "dissipation")
TAU_GRID = np.round(np.linspace(-2.0, 2.0, 41), 12)

# plant name -> sector upper bound used for its certificate
DEFAULT_SECTORS = {
    "nonmin-phase": 1.5,
    "lpv-vehicle": 3.0,
    "quadrotor": 4.0,
    "two-mode-quadrotor": 4.0,
}


@dataclass
class ValidationCase:
    name: str
    plant: PlantModel
    sector: SectorBounds
    alpha: float
    vars: MultiplierVars
    psi: PsiRealization
    P: np.ndarray
    X: np.ndarray


@dataclass
class FamilySummary:
    family: str
    checks: int = 0
    min_relative: float = np.inf
    negatives: int = 0
    # smallest shrink factor of a negative residual when dt is halved
    worst_refinement: float = np.inf

    def record(self, rel: float) -> None:
        self.checks += 1
        self.min_relative = min(self.min_relative, rel)


def prepare_case(
    name: str, l_upper: float | None = None, order: int = 1, cls: str = "zf",
) -> ValidationCase:
    """Certify ``name`` (full ZF unless ``cls`` says otherwise) and keep the witness."""
    plant = builtin(name)
    sector = SectorBounds(1.0, l_upper if l_upper is not None else DEFAULT_SECTORS[name])
    config = MultiplierConfig(cls, order)
    est = certify_rate(plant, sector, config)
    if est.alpha_star is None:
        raise ValueError(f"{name} is not certifiable on {sector}")
    vars_ = witness_vars(est.problem, est.witness_at_alpha_star)
    basis = build_basis(config)
    psi = build_psi(basis, sector, est.alpha_star, plant.d)
    return ValidationCase(
        name, plant, sector, est.alpha_star, vars_, psi, build_P(vars_, order),
        est.witness_at_alpha_star.witness["X"],
    )


def default_cases() -> list[ValidationCase]:
    return [prepare_case(name) for name in DEFAULT_SECTORS]


@dataclass
class _Sample:
    case: ValidationCase
    fld: FieldSpec
    offset: np.ndarray
    thetas: np.ndarray | None


def _draw(case: ValidationCase, rng: np.random.Generator, T: float) -> _Sample:
    d = case.plant.d
    if rng.random() < 0.7:
        fld = random_quadratic_field(rng, case.sector, d, spread=2.0)
    else:
        fld = scaled_smooth_field(case.sector, 2.0 * rng.standard_normal(d))
    offset = rng.standard_normal(case.plant.nx)
    thetas = rng.random(int(np.ceil(T)) + 1) if case.plant.is_lpv else None
    return _Sample(case, fld, offset, thetas)


def _evaluate(sample: _Sample, dt: float, T: float, taus) -> dict[str, tuple[float, float]]:
    case = sample.case
    y_star = field_minimizer(sample.fld)
    eta_star = equilibrium_state(case.plant, y_star)
    schedule = None
    if sample.thetas is not None:
        th = sample.thetas
        nv = len(case.plant.vertices)

        def schedule(t):
            theta = th[min(int(t), th.size - 1)]
            w = np.zeros(nv)
            w[0], w[-1] = 1.0 - theta, theta
            return w

    traj = simulate_closed_loop(
        case.plant, sample.fld, eta_star + sample.offset, dt=dt, t_final=T, schedule=schedule,
    )
    sig: SignalPair = make_signals(traj, sample.fld, case.sector, y_star)
    basis = build_basis(case.vars.order)
    lem = min((lemma1_residual(sig, case.alpha, tau, T) for tau in taus),
              key=lambda r: r.relative)
    out = {
        "lemma1": lem,
        "theorem2": theorem2_residual(sig, basis, case.vars.p1, case.vars.p3, case.alpha, T),
        "theorem3": theorem3_residual(sig, case.psi, case.P, case.alpha, T),
        "dissipation": dissipation_residual(
            case.psi, case.X, case.P, traj, sig, eta_star, case.alpha, T,
        ),
    }
    return {k: (r.value, r.relative) for k, r in out.items()}


def validate_suite(
    samples: int = 100,
    seed: int = 42,
    dt: float = 1e-2,
    T: float = 20.0,
    taus=TAU_GRID,
    cases: list[ValidationCase] | None = None,
) -> dict[str, FamilySummary]:
    """Run every inequality family on ``samples`` random closed-loop runs.

    Any negative residual is recomputed with half the step; the shrink
    factor of its magnitude is recorded in ``worst_refinement``.
    """
    cases = cases or default_cases()
    rng = np.random.default_rng(seed)
    summary = {f: FamilySummary(f) for f in FAMILIES}
    for i in range(samples):
        sample = _draw(cases[i % len(cases)], rng, T)
        res = _evaluate(sample, dt, T, taus)
        fine = None
        for fam, (value, rel) in res.items():
            s = summary[fam]
            s.record(rel)
            if value < 0:
                s.negatives += 1
                if fine is None:
                    fine = _evaluate(sample, dt / 2, T, taus)
                fine_value = fine[fam][0]
                ratio = np.inf if fine_value >= 0 else value / fine_value
                s.worst_refinement = min(s.worst_refinement, ratio)
                logger.info("sample %d %s negative %.3g, refined %.3g", i, fam, value, fine_value)
    return summary
