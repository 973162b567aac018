"""Closed-loop simulation under gradient feedback, rate fitting and flocking.

The vehicle model is ``eta' = A eta + B u``, ``y = C eta`` with the gradient
feedback ``u = grad f(y)``.  Everything here is deterministic fixed-step RK4
on uniform grids; leading batch dimensions on initial states are integrated
together.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .plants import PlantModel
from .psi import SectorBounds
from .ss import StateSpace, spectral_abscissa

__all__ = [
    "FieldSpec",
    "quadratic_field",
    "scaled_smooth_field",
    "random_quadratic_field",
    "grad_field",
    "field_value",
    "field_minimizer",
    "secant_check",
    "SimulationBlowUp",
    "NonConvergentTrajectory",
    "Trajectory",
    "rk4",
    "equilibrium_state",
    "interval_schedule",
    "simulate_closed_loop",
    "fit_decay_rate",
    "worst_case_quadratic_rate",
    "FlockSpec",
    "ring_laplacian",
    "spring_forces",
    "flocking_simulate",
    "com_reduce",
    "DEFAULT_DT",
    "DEFAULT_HORIZON",
]

DEFAULT_DT = 1e-3
DEFAULT_HORIZON = 60.0
SPRING_EPS = 1e-9


# ---------------------------------------------------------------- fields

@dataclass(frozen=True)
class FieldSpec:
    """A field ``f`` in S(m, L).

    ``kind == "quadratic"``: ``f(y) = y' Q y + c' y + offset``.
    ``kind == "scaled_smooth"``: per coordinate with ``z = y - center``,
    ``f = m z^2/2 + (L - m)(z^2/2 - log cosh z)`` so that
    ``f' = m z + (L - m)(z - tanh z)`` has slopes ``m + (L - m) tanh(z)^2``.
    """

    kind: str
    sector: SectorBounds
    q: np.ndarray | None = None
    c: np.ndarray | None = None
    offset: float = 0.0
    center: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "quadratic":
            q = np.atleast_2d(np.asarray(self.q, dtype=float))
            if q.shape[0] != q.shape[1] or not np.allclose(q, q.T, atol=1e-12):
                raise ValueError("Q must be square and symmetric")
            c = np.zeros(q.shape[0]) if self.c is None else np.asarray(self.c, float).ravel()
            if c.size != q.shape[0]:
                raise ValueError("c must have one entry per coordinate")
            ev = np.linalg.eigvalsh(2.0 * q)
            tol = 1e-9 * max(1.0, self.sector.l)
            if ev[0] < self.sector.m - tol or ev[-1] > self.sector.l + tol:
                raise ValueError(
                    f"Hessian eigenvalues {ev} outside [{self.sector.m}, {self.sector.l}]"
                )
            object.__setattr__(self, "q", (q + q.T) / 2)
            object.__setattr__(self, "c", c)
        elif self.kind == "scaled_smooth":
            center = np.asarray(self.center, dtype=float).ravel()
            if center.size == 0:
                raise ValueError("scaled_smooth field needs a center")
            object.__setattr__(self, "center", center)
        else:
            raise ValueError(f"unknown field kind {self.kind!r}")

    @property
    def d(self) -> int:
        return self.q.shape[0] if self.kind == "quadratic" else self.center.size

    @property
    def hessian(self) -> np.ndarray:
        if self.kind != "quadratic":
            raise ValueError("only quadratic fields have a constant Hessian")
        return 2.0 * self.q


def quadratic_field(q, c=None, offset: float = 0.0, sector: SectorBounds | None = None) -> FieldSpec:
    """Quadratic field; the sector defaults to the Hessian's eigenvalue range."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if sector is None:
        ev = np.linalg.eigvalsh(q + q.T)
        sector = SectorBounds(float(ev[0]), float(ev[-1]))
    return FieldSpec("quadratic", sector, q=q, c=c, offset=offset)


def scaled_smooth_field(sector: SectorBounds, center) -> FieldSpec:
    return FieldSpec("scaled_smooth", sector, center=np.atleast_1d(center))


def random_quadratic_field(
    rng: np.random.Generator, sector: SectorBounds, d: int, spread: float = 1.0
) -> FieldSpec:
    """Random rotation, Hessian eigenvalues uniform in ``[m, L]`` (edges included for d>1)."""
    evals = rng.uniform(sector.m, sector.l, size=d)
    if d > 1:
        evals[0], evals[-1] = sector.m, sector.l
    basis, _ = np.linalg.qr(rng.standard_normal((d, d)))
    hess = basis @ np.diag(evals) @ basis.T
    y_star = spread * rng.standard_normal(d)
    return FieldSpec("quadratic", sector, q=hess / 2, c=-hess @ y_star)


def grad_field(fld: FieldSpec, y) -> np.ndarray:
    """Analytic gradient; ``y`` may carry leading batch dimensions."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != fld.d:
        raise ValueError(f"point has dimension {y.shape[-1]}, field has {fld.d}")
    if fld.kind == "quadratic":
        return y @ (2.0 * fld.q).T + fld.c
    m, L = fld.sector.m, fld.sector.l
    z = y - fld.center
    return m * z + (L - m) * (z - np.tanh(z))


def field_value(fld: FieldSpec, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if fld.kind == "quadratic":
        return np.einsum("...i,ij,...j->...", y, fld.q, y) + y @ fld.c + fld.offset
    m, L = fld.sector.m, fld.sector.l
    z = y - fld.center
    # log cosh without overflow
    lc = np.abs(z) + np.log1p(np.exp(-2.0 * np.abs(z))) - np.log(2.0)
    return np.sum(m * z**2 / 2 + (L - m) * (z**2 / 2 - lc), axis=-1)


def field_minimizer(fld: FieldSpec, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Closed form for quadratic fields, damped gradient descent otherwise."""
    if fld.kind == "quadratic":
        return np.linalg.solve(2.0 * fld.q, -fld.c)
    y = np.zeros(fld.d)
    step = 1.0 / fld.sector.l
    for _ in range(max_iter):
        g = grad_field(fld, y)
        if np.linalg.norm(g) <= tol:
            return y
        y = y - step * g
    raise RuntimeError(f"minimizer search did not reach |grad f| <= {tol}")


def secant_check(
    fld: FieldSpec, rng: np.random.Generator, n_pairs: int = 1000, scale: float = 5.0,
    tol: float = 1e-9,
) -> bool:
    """``m|dy|^2 <= (grad f(y1) - grad f(y2))' dy <= L|dy|^2`` on random pairs."""
    y1 = scale * rng.standard_normal((n_pairs, fld.d))
    y2 = scale * rng.standard_normal((n_pairs, fld.d))
    dy = y1 - y2
    inner = np.sum((grad_field(fld, y1) - grad_field(fld, y2)) * dy, axis=1)
    sq = np.sum(dy * dy, axis=1)
    lo = inner - fld.sector.m * sq
    hi = fld.sector.l * sq - inner
    bound = tol * np.maximum(1.0, sq * fld.sector.l)
    return bool(np.all(lo >= -bound) and np.all(hi >= -bound))


# ---------------------------------------------------------------- integration

class SimulationBlowUp(RuntimeError):
    def __init__(self, time: float):
        super().__init__(f"state became non-finite at t={time:g}")
        self.time = time


class NonConvergentTrajectory(ValueError):
    pass


@dataclass
class Trajectory:
    """Uniformly sampled states, outputs and inputs.

    ``states`` has shape ``(n, *batch, nx)``, ``outputs`` and ``inputs`` have
    ``(n, *batch, d)``.
    """

    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.times.size
        if self.states.shape[0] != n or self.outputs.shape[0] != n:
            raise ValueError("sample counts disagree")
        if n > 1:
            steps = np.diff(self.times)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                raise ValueError("time grid must be uniform")
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.outputs))):
            raise ValueError("trajectory contains non-finite values")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.states.shape[1:-1]

    def select(self, index) -> "Trajectory":
        """One member of a batched trajectory."""
        pick = (slice(None),) + np.index_exp[index]
        return Trajectory(
            self.times, self.states[pick], self.outputs[pick],
            None if self.inputs is None else self.inputs[pick], dict(self.meta),
        )

    def to_csv(self, path=None, include_states: bool = False) -> str:
        """``t,y1..yd[,x1..xn]`` with 17 significant digits."""
        if self.batch_shape:
            raise ValueError("select a single trajectory before exporting")
        d, nx = self.outputs.shape[1], self.states.shape[1]
        cols = ["t"] + [f"y{i + 1}" for i in range(d)]
        blocks = [self.times[:, None], self.outputs]
        if include_states:
            cols += [f"x{i + 1}" for i in range(nx)]
            blocks.append(self.states)
        data = np.hstack(blocks)
        lines = [",".join(cols)]
        lines += [",".join(f"{v:.17g}" for v in row) for row in data]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def rk4(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    x0: np.ndarray,
    dt: float,
    n_steps: int,
    t0: float = 0.0,
) -> np.ndarray:
    """Classical RK4; returns all ``n_steps + 1`` samples stacked on axis 0."""
    out = np.empty((n_steps + 1,) + x0.shape)
    out[0] = x = np.array(x0, dtype=float)
    for k in range(n_steps):
        t = t0 + k * dt
        k1 = rhs(t, x)
        k2 = rhs(t + dt / 2, x + dt / 2 * k1)
        k3 = rhs(t + dt / 2, x + dt / 2 * k2)
        k4 = rhs(t + dt, x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise SimulationBlowUp(t + dt)
        out[k + 1] = x
    return out


def _n_steps(dt: float, t_final: float) -> int:
    if dt <= 0 or t_final <= 0:
        raise ValueError("dt and t_final must be positive")
    n = int(round(t_final / dt))
    if n < 1:
        raise ValueError("t_final shorter than one step")
    return n


def _vertices(plant) -> list[StateSpace]:
    if isinstance(plant, PlantModel):
        return list(plant.vertices)
    if isinstance(plant, StateSpace):
        return [plant]
    return list(plant)


def _check_no_feedthrough(vertices: Sequence[StateSpace]) -> None:
    if any(np.any(v.d) for v in vertices):
        raise ValueError("plants with direct feedthrough (D != 0) are not supported")


def equilibrium_state(plant, y_star) -> np.ndarray:
    """``eta_*`` with ``A eta_* = 0`` for every vertex and ``C eta_* = y_*``."""
    verts = _vertices(plant)
    y_star = np.atleast_1d(np.asarray(y_star, dtype=float))
    lhs = np.vstack([v.a for v in verts] + [verts[0].c])
    rhs = np.concatenate([np.zeros(sum(v.nx for v in verts)), y_star])
    sol, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    if np.linalg.norm(lhs @ sol - rhs) > 1e-9 * max(1.0, np.linalg.norm(rhs)):
        raise ValueError("no equilibrium reaches this output (missing integral action?)")
    return sol


def interval_schedule(rho: Callable[[float], float], rho_range: tuple[float, float]):
    """Convert a scalar schedule on ``[rho_lo, rho_hi]`` into two-vertex weights."""
    lo, hi = rho_range

    def weights(t: float) -> np.ndarray:
        theta = (rho(t) - lo) / (hi - lo)
        return np.array([1.0 - theta, theta])

    return weights


def _interp_mats(verts: Sequence[StateSpace], weights: np.ndarray):
    if weights.shape != (len(verts),):
        raise ValueError(f"schedule must return {len(verts)} weights")
    if np.any(weights < -1e-12) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError(f"schedule weights {weights} leave the parameter polytope")
    a = sum(w * v.a for w, v in zip(weights, verts))
    b = sum(w * v.b for w, v in zip(weights, verts))
    c = sum(w * v.c for w, v in zip(weights, verts))
    return a, b, c


def simulate_closed_loop(
    plant,
    fld: FieldSpec,
    x0,
    dt: float = DEFAULT_DT,
    t_final: float = DEFAULT_HORIZON,
    schedule: Callable[[float], np.ndarray] | None = None,
    vertex: int = 0,
) -> Trajectory:
    """RK4 on ``eta' = A(rho) eta + B(rho) grad f(C(rho) eta)``.

    Without ``schedule`` the plant is frozen at ``vertex``; with it, the
    matrices are the convex combination of vertices given by ``schedule(t)``.
    """
    verts = _vertices(plant)
    _check_no_feedthrough(verts)
    n = _n_steps(dt, t_final)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[-1] != verts[0].nx:
        raise ValueError(f"initial state has size {x0.shape[-1]}, plant has {verts[0].nx}")
    if schedule is None:
        v = verts[vertex]
        mats = lambda t: (v.a, v.b, v.c)  # noqa: E731
    else:
        mats = lambda t: _interp_mats(verts, np.asarray(schedule(t), dtype=float))  # noqa: E731

    def rhs(t, x):
        a, b, c = mats(t)
        return x @ a.T + grad_field(fld, x @ c.T) @ b.T

    states = rk4(rhs, x0, dt, n)
    times = np.arange(n + 1) * dt
    if schedule is None:
        c = verts[vertex].c
        outputs = states @ c.T
    else:
        outputs = np.stack([s @ _interp_mats(verts, np.asarray(schedule(t)))[2].T
                            for t, s in zip(times, states)])
    inputs = grad_field(fld, outputs)
    return Trajectory(times, states, outputs, inputs)


# ---------------------------------------------------------------- rates

def _envelope_peaks(e: np.ndarray) -> np.ndarray:
    """Indices of local maxima of ``e`` whose values strictly decrease."""
    interior = np.flatnonzero((e[1:-1] >= e[:-2]) & (e[1:-1] >= e[2:])) + 1
    # end samples sit at arbitrary phase; use them only for monotone decay
    cand = interior if interior.size >= 2 else np.r_[0, interior, e.size - 1]
    keep, last = [], np.inf
    for k in cand:
        if e[k] < last:
            keep.append(k)
            last = e[k]
    return np.asarray(keep)


def fit_decay_rate(traj: Trajectory, y_star, skip: float = 0.2, floor: float = 1e-12) -> float:
    """Least-squares slope of ``log |y - y_*|`` over its decreasing envelope peaks.

    The first ``skip`` fraction of the horizon is discarded, and so are
    samples below ``floor`` times the initial error (round-off).
    """
    if not 0 <= skip < 1:
        raise ValueError("skip must be in [0, 1)")
    if traj.batch_shape:
        raise ValueError("select a single trajectory first")
    e = np.linalg.norm(traj.outputs - np.asarray(y_star, dtype=float), axis=1)
    if e[0] == 0:
        raise NonConvergentTrajectory("trajectory starts at the minimizer")
    if e[-1] > 1e-8 * e[0]:
        raise NonConvergentTrajectory(
            f"terminal error {e[-1]:.3g} exceeds 1e-8 of the initial {e[0]:.3g}"
        )
    t0 = traj.times[0] + skip * (traj.times[-1] - traj.times[0])
    mask = (traj.times >= t0) & (e > floor * e[0])
    idx = np.flatnonzero(mask)
    if idx.size < 3:
        raise NonConvergentTrajectory("too few usable samples after skip")
    peaks = idx[_envelope_peaks(e[idx])]
    if peaks.size < 2:
        raise NonConvergentTrajectory("envelope has fewer than two peaks")
    slope = np.polyfit(traj.times[peaks], np.log(e[peaks]), 1)[0]
    return max(0.0, float(-slope))


def worst_case_quadratic_rate(plant, sector: SectorBounds, grid: int = 201) -> float:
    """Slowest linear closed-loop decay over curvatures in ``[m, L]`` and vertices.

    Curvatures are a uniform grid including both ends; for ``d > 1`` the
    Hessian ranges over diagonal matrices with entries on that grid.  An
    unstable closed loop yields a nonpositive value.
    """
    if grid < 2:
        raise ValueError("grid must be at least 2")
    verts = _vertices(plant)
    _check_no_feedthrough(verts)
    ks = np.linspace(sector.m, sector.l, grid)
    d = verts[0].nu
    worst = np.inf
    for v in verts:
        if d == 1:
            combos = ((k,) for k in ks)
        else:
            combos = itertools.product(ks, repeat=d)
        for diag in combos:
            a_cl = v.a + v.b @ np.diag(diag) @ v.c
            worst = min(worst, -spectral_abscissa(a_cl))
    return float(worst)


# ---------------------------------------------------------------- flocking

@dataclass(frozen=True)
class FlockSpec:
    """``N`` agents coupled by Laplacian damping and pairwise springs on its edges."""

    laplacian: np.ndarray
    spring_rest: float = 1.0
    spring_k: float = 0.0

    def __post_init__(self):
        lap = np.atleast_2d(np.asarray(self.laplacian, dtype=float))
        if lap.shape[0] != lap.shape[1]:
            raise ValueError("Laplacian must be square")
        if not np.allclose(lap, lap.T, atol=1e-12):
            raise ValueError("Laplacian must be symmetric")
        if np.any(np.abs(lap.sum(axis=1)) > 1e-12):
            raise ValueError("Laplacian rows must sum to zero")
        if self.spring_k < 0 or self.spring_rest < 0:
            raise ValueError("spring constants must be nonnegative")
        object.__setattr__(self, "laplacian", lap)

    @property
    def n_agents(self) -> int:
        return self.laplacian.shape[0]

    @cached_property
    def edges(self) -> list[tuple[int, int]]:
        n = self.n_agents
        return [(i, j) for i in range(n) for j in range(i + 1, n) if self.laplacian[i, j] != 0]

    @cached_property
    def incidence(self) -> np.ndarray:
        """Edge-by-agent matrix with +1 at the first and -1 at the second endpoint."""
        inc = np.zeros((len(self.edges), self.n_agents))
        for e, (i, j) in enumerate(self.edges):
            inc[e, i], inc[e, j] = 1.0, -1.0
        return inc


def ring_laplacian(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("need at least one agent")
    lap = np.zeros((n, n))
    if n == 1:
        return lap
    for i in range(n):
        j = (i + 1) % n
        if i == j or lap[i, j] != 0:
            continue
        lap[i, j] = lap[j, i] = -1.0
    np.fill_diagonal(lap, -lap.sum(axis=1))
    return lap


def spring_forces(spec: FlockSpec, y: np.ndarray) -> np.ndarray:
    """Gradient of ``sum_edges k/2 (|y_i - y_j| - r0)^2`` with respect to each ``y_i``.

    ``y`` has shape ``(..., N, d)``; the result has the same shape and sums
    to zero over agents.
    """
    if spec.spring_k == 0 or not spec.edges:
        return np.zeros_like(y)
    inc = spec.incidence
    diff = np.einsum("en,...nd->...ed", inc, y)
    dist = np.sqrt(np.sum(diff * diff, axis=-1, keepdims=True) + SPRING_EPS**2)
    f = spec.spring_k * (dist - spec.spring_rest) * diff / dist
    # each edge pushes +f on its tail and -f on its head
    return np.einsum("en,...ed->...nd", inc, f)


def flocking_simulate(
    spec: FlockSpec,
    plant,
    fld: FieldSpec,
    x0s,
    dt: float = DEFAULT_DT,
    t_final: float = DEFAULT_HORIZON,
) -> list[Trajectory]:
    """Each agent runs the single-vehicle model with input
    ``u_i = grad f(y_i) + grad_i V(y) + sum_j L_ij y_j'``.

    The output derivative is exact: ``y' = C A eta + C B u``, with the
    algebraic loop solved when ``C B != 0``.
    """
    verts = _vertices(plant)
    if len(verts) != 1:
        raise ValueError("flocking needs an LTI agent model")
    g = verts[0]
    _check_no_feedthrough([g])
    if fld.kind != "quadratic":
        raise ValueError("flocking requires a quadratic field")
    n_ag, d = spec.n_agents, g.nu
    x0s = np.asarray(x0s, dtype=float)
    if x0s.shape[-2:] != (n_ag, g.nx):
        raise ValueError(f"initial states must have shape (..., {n_ag}, {g.nx})")
    lap = spec.laplacian
    ca, cb = g.c @ g.a, g.c @ g.b
    coupled = np.any(lap)
    solve_loop = coupled and np.any(cb)
    if solve_loop:
        loop = np.eye(n_ag * d) - np.kron(lap, cb)

    def inputs(x):
        y = x @ g.c.T
        u = grad_field(fld, y) + spring_forces(spec, y)
        if coupled:
            ydot0 = x @ ca.T
            u = u + np.einsum("ij,...jd->...id", lap, ydot0)
            if solve_loop:
                flat = u.reshape(u.shape[:-2] + (n_ag * d,))
                u = np.linalg.solve(loop, flat[..., None])[..., 0].reshape(u.shape)
        return u

    def rhs(t, x):
        return x @ g.a.T + inputs(x) @ g.b.T

    n = _n_steps(dt, t_final)
    states = rk4(rhs, x0s, dt, n)
    times = np.arange(n + 1) * dt
    outputs = states @ g.c.T
    u = inputs(states)
    return [
        Trajectory(times, states[..., i, :], outputs[..., i, :], u[..., i, :], {"agent": i})
        for i in range(n_ag)
    ]


def com_reduce(trajectories: Sequence[Trajectory]) -> Trajectory:
    """Arithmetic mean over agents at every sample."""
    if not trajectories:
        raise ValueError("no trajectories")
    n = trajectories[0].times.size
    if any(t.times.size != n for t in trajectories):
        raise ValueError("trajectories have different lengths")
    mean = lambda xs: np.mean(np.stack(xs), axis=0)  # noqa: E731
    inputs = None
    if all(t.inputs is not None for t in trajectories):
        inputs = mean([t.inputs for t in trajectories])
    return Trajectory(
        trajectories[0].times,
        mean([t.states for t in trajectories]),
        mean([t.outputs for t in trajectories]),
        inputs,
        {"com_of": len(trajectories)},
    )
