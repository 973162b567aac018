"""Zames-Falb multiplier basis and the convex constraints on its coefficients.

The multiplier kernel is

    h(t) = P1 Q(-t)   for t < 0
    h(t) = P3 Q(t)    for t >= 0

with ``Q(t) = exp(A_nu t) B_nu = exp(lam t) R_nu [1, t, ..., t^(nu-1)]^T``.
Admissible coefficients satisfy an L1 bound (``int h <= H``) and
nonnegativity of ``h``.

Nonnegativity on each half line reduces to ``p(t) = sum_k P_k t^k / k! >= 0``
for ``t >= 0``.  Two certificates are provided:

* ``"sos"`` (default): ``p(t) = s0(t) + t s1(t)`` with ``s0, s1`` sums of
  squares, i.e. ``P`` is a linear image of two PSD Gram matrices.  This is
  exact for univariate polynomials.
* ``"literal"``: the KYP-type block :func:`positivity_blocks` in auxiliary
  matrices ``X1, X3``.  It coincides with ``P > 0`` for order one, but for
  higher orders it admits kernels that dip below zero, so it is kept for
  comparison only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from math import comb, factorial

import cvxpy as cp
import numpy as np

from .ss import StateSpace, as_matrix

__all__ = [
    "MultiplierClass",
    "MultiplierConfig",
    "ZfBasis",
    "MultiplierVars",
    "build_basis",
    "l1_row",
    "l1_value",
    "positivity_blocks",
    "q_nu",
    "h_eval",
    "POSITIVITY_MODES",
    "sos_sizes",
    "sos_coefficients",
]

POSITIVITY_MODES = ("sos", "literal")


class MultiplierClass(enum.Enum):
    CIRCLE = "cc"
    CAUSAL = "causal"
    ANTICAUSAL = "anticausal"
    FULL = "zf"

    @property
    def uses_p1(self) -> bool:
        return self in (MultiplierClass.ANTICAUSAL, MultiplierClass.FULL)

    @property
    def uses_p3(self) -> bool:
        return self in (MultiplierClass.CAUSAL, MultiplierClass.FULL)

    @classmethod
    def parse(cls, value) -> "MultiplierClass":
        if isinstance(value, cls):
            return value
        aliases = {
            "cc": cls.CIRCLE, "circle": cls.CIRCLE,
            "causal": cls.CAUSAL,
            "anticausal": cls.ANTICAUSAL, "anti-causal": cls.ANTICAUSAL,
            "zf": cls.FULL, "full": cls.FULL, "noncausal": cls.FULL,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown multiplier class {value!r}") from None


@dataclass(frozen=True)
class MultiplierConfig:
    cls: MultiplierClass = MultiplierClass.FULL
    order: int = 1
    lam: float = -1.0
    positivity: str = "sos"

    def __post_init__(self):
        object.__setattr__(self, "cls", MultiplierClass.parse(self.cls))
        if self.positivity not in POSITIVITY_MODES:
            raise ValueError(f"positivity must be one of {POSITIVITY_MODES}, got {self.positivity!r}")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"multiplier order must be a positive integer, got {self.order}")
        if not self.lam < 0:
            raise ValueError(f"basis pole lam must be negative, got {self.lam}")


@dataclass(frozen=True)
class ZfBasis:
    lam: float
    a_nu: np.ndarray
    b_nu: np.ndarray
    r_nu: np.ndarray
    psi_tilde: StateSpace

    @property
    def order(self) -> int:
        return self.a_nu.shape[0]


@dataclass
class MultiplierVars:
    """Numerical values of the multiplier coefficients."""

    h_cap: float
    p1: np.ndarray
    p3: np.ndarray
    x1: np.ndarray | None = None
    x3: np.ndarray | None = None

    def __post_init__(self):
        self.p1 = np.asarray(self.p1, dtype=float).reshape(1, -1)
        self.p3 = np.asarray(self.p3, dtype=float).reshape(1, -1)
        if self.p1.shape != self.p3.shape:
            raise ValueError("p1 and p3 must have the same length")

    @property
    def order(self) -> int:
        return self.p1.shape[1]

    def scaled(self, k: float) -> "MultiplierVars":
        return MultiplierVars(
            k * self.h_cap, k * self.p1, k * self.p3,
            None if self.x1 is None else k * self.x1,
            None if self.x3 is None else k * self.x3,
        )


def _psi_tilde(order: int, lam: float) -> StateSpace:
    # [1, s/den, ..., s^(nu-1)/den] with den = (s - lam)^(nu-1), controllable form
    n = order - 1
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[1.0]])
    # den = s^n + a[n-1] s^(n-1) + ... + a[0]
    a = np.array([comb(n, k) * (-lam) ** (n - k) for k in range(n)])
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -a
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = np.zeros((order, n))
    D = np.zeros((order, 1))
    D[0, 0] = 1.0
    for k in range(1, n):
        C[k, k] = 1.0
    C[n, :] = -a
    D[n, 0] = 1.0
    return StateSpace(A, B, C, D)


def build_basis(config: MultiplierConfig | int, lam: float | None = None) -> ZfBasis:
    """Basis matrices of order ``nu`` with pole ``lam``.

    Accepts either a :class:`MultiplierConfig` or ``(order, lam)``.
    """
    if isinstance(config, MultiplierConfig):
        order, lam = config.order, config.lam
    else:
        order, lam = int(config), (-1.0 if lam is None else float(lam))
        MultiplierConfig(MultiplierClass.FULL, order, lam)  # validates
    a_nu = lam * np.eye(order) + np.eye(order, k=-1)
    b_nu = np.zeros((order, 1))
    b_nu[0, 0] = 1.0
    r_nu = np.diag([1.0 / factorial(k) for k in range(order)])
    return ZfBasis(lam, a_nu, b_nu, r_nu, _psi_tilde(order, lam))


def _inv_a_b(basis: ZfBasis) -> np.ndarray:
    # forward substitution on the lower-bidiagonal A_nu
    v = np.empty(basis.order)
    v[0] = 1.0 / basis.lam
    for k in range(1, basis.order):
        v[k] = -v[k - 1] / basis.lam
    return v.reshape(-1, 1)


def l1_row(basis: ZfBasis) -> tuple[float, np.ndarray]:
    """Coefficients ``(c_H, c_P)`` of the L1 constraint ``c_H H + (P1 + P3) c_P >= 0``."""
    return 1.0, _inv_a_b(basis)


def l1_value(basis: ZfBasis, h_cap, p1, p3):
    """``H + (P1 + P3) A_nu^{-1} B_nu``; works on arrays and cvxpy expressions."""
    c_h, c_p = l1_row(basis)
    return c_h * h_cap + (p1 + p3) @ c_p


def positivity_blocks(basis: ZfBasis, p, x=None):
    """Symmetric matrix whose positive definiteness certifies ``P Q(t) >= 0``.

    ``p`` is the ``1 x nu`` coefficient row and ``x`` the ``(nu-1)`` square
    auxiliary matrix.  Both may be numpy arrays or cvxpy expressions.
    """
    psi = basis.psi_tilde
    n = psi.nx
    t1 = np.hstack([np.eye(n), np.zeros((n, 1))])
    t2 = np.hstack([psi.a, psi.b])
    t3 = basis.r_nu @ np.hstack([psi.c, psi.d])
    terms = [p[0, k] * np.outer(t3[k], t3[k]) for k in range(basis.order)]
    out = terms[0]
    for term in terms[1:]:
        out = out + term
    if n:
        out = out + t1.T @ x @ t2 + t2.T @ x @ t1
    return out


def sos_sizes(order: int) -> tuple[int, int]:
    """Gram matrix sizes of ``s0`` and ``s1`` for a degree ``order - 1`` polynomial."""
    n = order - 1
    return n // 2 + 1, ((n - 1) // 2 + 1 if n >= 1 else 0)


def _coeff_masks(order: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    k0, k1 = sos_sizes(order)
    i0, j0 = np.indices((k0, k0))
    i1, j1 = np.indices((k1, k1))
    m0 = [(i0 + j0 == k).astype(float) for k in range(order)]
    m1 = [(i1 + j1 + 1 == k).astype(float) for k in range(order)]
    return m0, m1


def sos_coefficients(order: int, g0, g1=None):
    """Row ``P`` (``1 x order``) with ``P Q(t) = exp(lam t) (z0' g0 z0 + t z1' g1 z1)``.

    ``g0``, ``g1`` are the Gram matrices of sizes :func:`sos_sizes`; numpy
    arrays or cvxpy expressions.
    """
    m0, m1 = _coeff_masks(order)
    symbolic = isinstance(g0, cp.Expression)
    entries = []
    for k in range(order):
        if symbolic:
            c = cp.sum(cp.multiply(m0[k], g0))
            if g1 is not None and m1[k].any():
                c = c + cp.sum(cp.multiply(m1[k], g1))
        else:
            c = float(np.sum(m0[k] * g0))
            if g1 is not None and m1[k].any():
                c += float(np.sum(m1[k] * g1))
        entries.append(factorial(k) * c)
    if symbolic:
        return cp.reshape(cp.hstack(entries), (1, order), order="C")
    return np.array(entries, dtype=float).reshape(1, order)


def q_nu(basis: ZfBasis, t) -> np.ndarray:
    """``Q_nu(t)`` as an array of shape ``(nu, len(t))``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    powers = np.vstack([t**k for k in range(basis.order)])
    return np.exp(basis.lam * t) * (basis.r_nu @ powers)


def h_eval(basis: ZfBasis, p1, p3, t):
    """Multiplier kernel at time(s) ``t``."""
    p1 = as_matrix(p1).reshape(1, -1)
    p3 = as_matrix(p3).reshape(1, -1)
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    q = q_nu(basis, np.abs(t))
    out = np.where(t < 0, (p1 @ q)[0], (p3 @ q)[0])
    return float(out[0]) if scalar else out
