"""Numerical checks of the alpha-IQC inequalities on sampled trajectories.

Every check returns a :class:`WeightedResidual`: the value of an integral
that theory says is nonnegative, together with a magnitude ``scale`` built
from the absolute values of its terms, so that ``value >= -tol * scale`` is
a meaningful test for any signal size.  Quadrature is the trapezoid rule on
the simulation grid.  Filter states are propagated exactly for the
piecewise-linear interpolant of the samples (first-order hold), which keeps
the overall discretisation error second order in the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .multiplier import ZfBasis
from .psi import PsiRealization, SectorBounds
from .sim import FieldSpec, Trajectory, field_minimizer, grad_field
from .ss import kron_lift

__all__ = [
    "SignalPair",
    "WeightedResidual",
    "make_signals",
    "filter_foh",
    "foh_matrices",
    "lemma1_residual",
    "lemma1_direct_sum",
    "theorem2_residual",
    "theorem3_residual",
    "dissipation_residual",
    "beta",
]

_GRID_RTOL = 1e-9


@dataclass
class SignalPair:
    """``p = u~ - m y~`` and ``q = L y~ - u~`` on a uniform grid (time on axis 0)."""

    times: np.ndarray
    y_tilde: np.ndarray
    u_tilde: np.ndarray
    sector: SectorBounds
    p: np.ndarray = field(init=False)
    q: np.ndarray = field(init=False)

    def __post_init__(self):
        self.y_tilde = np.asarray(self.y_tilde, dtype=float)
        self.u_tilde = np.asarray(self.u_tilde, dtype=float)
        if self.y_tilde.shape != self.u_tilde.shape or self.y_tilde.shape[0] != self.times.size:
            raise ValueError("y~, u~ and times must agree in shape")
        m, L = self.sector.m, self.sector.l
        self.p = self.u_tilde - m * self.y_tilde
        self.q = L * self.y_tilde - self.u_tilde

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True)
class WeightedResidual:
    value: float
    scale: float
    T: float

    @property
    def relative(self) -> float:
        return self.value / self.scale if self.scale > 0 else 0.0

    def ok(self, rtol: float) -> bool:
        return self.value >= -rtol * self.scale


def make_signals(
    traj: Trajectory, fld: FieldSpec, sector: SectorBounds | None = None, y_star=None
) -> SignalPair:
    """Deviation signals of a closed-loop run; the minimizer is found if not given."""
    if y_star is None:
        y_star = field_minimizer(fld)
    y_star = np.asarray(y_star, dtype=float)
    u = grad_field(fld, traj.outputs)
    return SignalPair(traj.times, traj.outputs - y_star, u, sector or fld.sector)


def _n_horizon(times: np.ndarray, T: float) -> int:
    dt = times[1] - times[0]
    n = int(round(T / dt))
    if n < 1 or n > times.size - 1 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a grid point inside the horizon")
    return n


def _trapz(values: np.ndarray, dt: float) -> float:
    return float(np.sum(np.trapezoid(values, dx=dt, axis=0)))


def _inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


def _bcast(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    return w.reshape((-1,) + (1,) * (x.ndim - 1))


def beta(alpha: float, tau: float) -> float:
    return min(1.0, math.exp(-2.0 * alpha * tau))


def _shifted_truncation(q: np.ndarray, n: int, k: int) -> np.ndarray:
    """Samples of ``q_T(t - k dt)`` on ``t = 0..n dt`` with ``q_T`` zero outside ``[0, T]``.

    A jump of the truncated signal falling on an interior node gets the
    average of both one-sided limits; a jump on an end node gets the limit
    from inside the interval, which is what the trapezoid rule needs.
    """
    out = np.zeros((n + 1,) + q.shape[1:])
    lo, hi = max(0, k), min(n, n + k)
    if lo <= hi:
        out[lo : hi + 1] = q[lo - k : hi - k + 1]
    if k > 0 and k <= n:
        # jump at t = tau, where the shifted argument crosses 0
        out[k] = 0.5 * q[0] if k < n else 0.0
    if k < 0 and n + k >= 0:
        # jump at t = T + tau, where the shifted argument crosses T
        out[n + k] = 0.5 * q[n] if n + k > 0 else 0.0
    return out


def lemma1_residual(signals: SignalPair, alpha: float, tau: float, T: float) -> WeightedResidual:
    """``int_0^T e^{2 alpha t} p' (q - beta(tau) q_T(t - tau)) dt`` (nonnegative in theory)."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    dt = signals.dt
    n = _n_horizon(signals.times, T)
    k = int(round(tau / dt))
    if abs(k * dt - tau) > _GRID_RTOL * max(1.0, abs(tau)):
        raise ValueError(f"tau={tau} is not a multiple of the step {dt}")
    p, q = signals.p[: n + 1], signals.q[: n + 1]
    b = beta(alpha, tau)
    qs = _shifted_truncation(q, n, k)
    w = _bcast(np.exp(2.0 * alpha * signals.times[: n + 1]), _inner(p, q))
    pq, pqs = _inner(p, q), _inner(p, qs)
    value = _trapz(w * (pq - b * pqs), dt)
    scale = _trapz(w * (np.abs(pq) + b * np.abs(pqs)), dt)
    return WeightedResidual(value, scale, T)


def lemma1_direct_sum(signals: SignalPair, tau: float, T: float) -> float:
    """Unweighted shift inequality evaluated by explicit per-node loops.

    Independent of :func:`lemma1_residual`'s vectorised path; used to
    cross-check it at ``alpha = 0``.
    """
    dt = signals.dt
    n = _n_horizon(signals.times, T)
    k = int(round(tau / dt))
    p = signals.p.reshape(signals.p.shape[0], -1)
    q = signals.q.reshape(signals.q.shape[0], -1)
    total = 0.0
    for i in range(n + 1):
        j = i - k
        if 0 <= j <= n:
            shifted = q[j]
            at_jump = (k > 0 and j == 0) or (k < 0 and j == n)
            if at_jump:
                shifted = 0.5 * q[j] if 0 < i < n else 0.0 * q[j]
        else:
            shifted = 0.0 * q[0]
        weight = 0.5 if i in (0, n) else 1.0
        total += weight * float(np.dot(p[i], q[i] - shifted))
    return total * dt


def foh_matrices(a, b, dt: float):
    """``(phi, g0, g1)`` with ``x_{k+1} = phi x_k + g0 u_k + g1 u_{k+1}``.

    Exact for inputs that are linear between samples.
    """
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    n, m = b.shape
    big = np.zeros((n + 2 * m, n + 2 * m))
    big[:n, :n] = a * dt
    big[:n, n : n + m] = b * dt
    big[n : n + m, n + m :] = np.eye(m)
    e = expm(big)
    phi, zoh, ramp = e[:n, :n], e[:n, n : n + m], e[:n, n + m :]
    return phi, zoh - ramp, ramp


def filter_foh(a, b, c, d, u: np.ndarray, dt: float) -> np.ndarray:
    """Outputs of ``x' = a x + b u``, ``y = c x + d u`` from ``x(0) = 0``.

    ``u`` has time on axis 0 and the input channel last; extra batch axes
    in between are carried along.
    """
    phi, g0, g1 = foh_matrices(a, b, dt)
    c, d = np.atleast_2d(c), np.atleast_2d(d)
    x = np.zeros(u.shape[1:-1] + (phi.shape[0],))
    y = np.empty(u.shape[:-1] + (c.shape[0],))
    y[0] = u[0] @ d.T
    for k in range(u.shape[0] - 1):
        x = x @ phi.T + u[k] @ g0.T + u[k + 1] @ g1.T
        y[k + 1] = x @ c.T + u[k + 1] @ d.T
    return y


def _filter_bank(basis: ZfBasis, alpha: float, d: int, signal: np.ndarray, dt: float):
    nu = basis.order
    a = kron_lift(basis.a_nu - 2.0 * alpha * np.eye(nu), d)
    b = kron_lift(basis.b_nu, d)
    return filter_foh(a, b, np.eye(nu * d), np.zeros((nu * d, d)), signal, dt)


def theorem2_residual(
    signals: SignalPair, basis: ZfBasis, p1, p3, alpha: float, T: float, h_cap: float = 1.0
) -> WeightedResidual:
    """``int_0^T e^{2 alpha t} (H p'q - p'w1 - q'w2) dt`` with the kernel's filtered signals."""
    dt = signals.dt
    n = _n_horizon(signals.times, T)
    d = signals.p.shape[-1]
    p, q = signals.p[: n + 1], signals.q[: n + 1]
    p1 = np.asarray(p1, dtype=float).reshape(1, -1)
    p3 = np.asarray(p3, dtype=float).reshape(1, -1)
    x_q = _filter_bank(basis, alpha, d, q, dt)
    x_p = _filter_bank(basis, alpha, d, p, dt)
    w1 = x_q @ kron_lift(p3, d).T
    w2 = x_p @ kron_lift(p1, d).T
    hpq, pw1, qw2 = h_cap * _inner(p, q), _inner(p, w1), _inner(q, w2)
    w = _bcast(np.exp(2.0 * alpha * signals.times[: n + 1]), hpq)
    value = _trapz(w * (hpq - pw1 - qw2), dt)
    scale = _trapz(w * (np.abs(hpq) + np.abs(pw1) + np.abs(qw2)), dt)
    return WeightedResidual(value, scale, T)


def _psi_outputs(psi: PsiRealization, signals: SignalPair, n: int) -> np.ndarray:
    yu = np.concatenate([signals.y_tilde[: n + 1], signals.u_tilde[: n + 1]], axis=-1)
    s = psi.ss
    return filter_foh(s.a, s.b, s.c, s.d, yu, signals.dt)


def _psi_states(psi: PsiRealization, signals: SignalPair, n: int) -> np.ndarray:
    yu = np.concatenate([signals.y_tilde[: n + 1], signals.u_tilde[: n + 1]], axis=-1)
    s = psi.ss
    return filter_foh(s.a, s.b, np.eye(s.nx), np.zeros((s.nx, s.nu)), yu, signals.dt)


def _quad_form(z: np.ndarray, pm: np.ndarray):
    return np.einsum("...i,ij,...j->...", z, pm, z), np.einsum(
        "...i,ij,...j->...", np.abs(z), np.abs(pm), np.abs(z)
    )


def theorem3_residual(
    signals: SignalPair, psi: PsiRealization, P: np.ndarray, alpha: float, T: float
) -> WeightedResidual:
    """``int_0^T e^{2 alpha t} z' (P kron I) z dt`` with ``z = Psi [y~; u~]``."""
    n = _n_horizon(signals.times, T)
    z = _psi_outputs(psi, signals, n)
    pm = np.kron(np.asarray(P, dtype=float), np.eye(psi.d))
    form, mag = _quad_form(z, pm)
    w = _bcast(np.exp(2.0 * alpha * signals.times[: n + 1]), form)
    return WeightedResidual(_trapz(w * form, signals.dt), _trapz(w * mag, signals.dt), T)


def dissipation_residual(
    psi: PsiRealization,
    x_mat: np.ndarray,
    P: np.ndarray,
    traj: Trajectory,
    signals: SignalPair,
    eta_star,
    alpha: float,
    T: float,
) -> WeightedResidual:
    """``V(xi(0)) - e^{2 alpha T} V(xi(T)) - int_0^T e^{2 alpha t} z'(P kron I)z dt``.

    ``xi = [x_psi; eta - eta_*]`` with the filter started at rest and
    ``V(xi) = xi' X xi``.
    """
    n = _n_horizon(signals.times, T)
    x_psi = _psi_states(psi, signals, n)
    eta = traj.states[: n + 1] - np.asarray(eta_star, dtype=float)
    xi = np.concatenate([x_psi, eta], axis=-1)
    if xi.shape[-1] != x_mat.shape[0]:
        raise ValueError(f"storage matrix is {x_mat.shape[0]}, state has {xi.shape[-1]}")
    v0 = np.einsum("...i,ij,...j->...", xi[0], x_mat, xi[0])
    vt = np.einsum("...i,ij,...j->...", xi[n], x_mat, xi[n])
    z = _psi_outputs(psi, signals, n)
    pm = np.kron(np.asarray(P, dtype=float), np.eye(psi.d))
    form, mag = _quad_form(z, pm)
    w = _bcast(np.exp(2.0 * alpha * signals.times[: n + 1]), form)
    grow = math.exp(2.0 * alpha * T)
    value = float(np.sum(v0 - grow * vt)) - _trapz(w * form, signals.dt)
    scale = float(np.sum(v0 + grow * vt)) + _trapz(w * mag, signals.dt)
    return WeightedResidual(value, scale, T)
