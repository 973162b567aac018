"""IQC filter, analysis interconnection and multiplier middle matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .multiplier import MultiplierVars, ZfBasis
from .ss import StateSpace, kron_lift, series, stack_outputs

__all__ = [
    "SectorBounds",
    "PsiRealization",
    "build_psi",
    "build_interconnection",
    "build_P",
    "p_matrix",
    "psi_state_mask",
]


@dataclass(frozen=True)
class SectorBounds:
    """Curvature bounds ``0 < m <= L`` of the field class S(m, L)."""

    m: float
    l: float

    def __post_init__(self):
        if not (0 < self.m <= self.l):
            raise ValueError(f"need 0 < m <= L, got m={self.m}, L={self.l}")


@dataclass(frozen=True)
class PsiRealization:
    ss: StateSpace
    alpha: float
    nu: int
    d: int
    sector: SectorBounds

    @property
    def nz(self) -> int:
        return 2 * (1 + self.nu) * self.d


def build_psi(basis: ZfBasis, sector: SectorBounds, alpha: float, d: int = 1) -> PsiRealization:
    """Filter ``[y; u] -> z = [p; x_p; q; x_q]`` with ``p = u - m y``, ``q = L y - u``.

    Both filter banks have state matrix ``A_nu - 2 alpha I`` and are driven
    by ``p`` and ``q`` respectively.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    nu = basis.order
    m, L = sector.m, sector.l
    a_al = kron_lift(basis.a_nu - 2.0 * alpha * np.eye(nu), d)
    b_nu = basis.b_nu
    eye = np.eye(d)
    zs = np.zeros((nu * d, nu * d))
    a = np.block([[a_al, zs], [zs, a_al]])
    b = np.block([
        [np.kron(b_nu, -m * eye), np.kron(b_nu, eye)],
        [np.kron(b_nu, L * eye), np.kron(b_nu, -eye)],
    ])
    zx = np.zeros((d, nu * d))
    c = np.block([
        [zx, zx],
        [np.eye(nu * d), zs],
        [zx, zx],
        [zs, np.eye(nu * d)],
    ])
    zu = np.zeros((nu * d, d))
    dmat = np.block([
        [-m * eye, eye],
        [zu, zu],
        [L * eye, -eye],
        [zu, zu],
    ])
    return PsiRealization(StateSpace(a, b, c, dmat), float(alpha), nu, d, sector)


def build_interconnection(psi: PsiRealization, plant: StateSpace) -> StateSpace:
    """``Psi [G; I]`` with state ordered ``[x_psi; eta]``."""
    if plant.ny != psi.d or plant.nu != psi.d:
        raise ValueError(
            f"plant must be {psi.d}x{psi.d} to match the filter, got {plant.ny}x{plant.nu}"
        )
    return series(psi.ss, stack_outputs(plant))


def psi_state_mask(nu: int, d: int, plant_nx: int) -> np.ndarray:
    """Diagonal selector of the filter states inside the interconnection state."""
    return np.diag(np.r_[np.ones(2 * nu * d), np.zeros(plant_nx)])


def p_matrix(h_cap, p1, p3, nu: int, stacker=np.block):
    """Middle matrix for ``z = [p; x_p; q; x_q]`` (scalar channel).

    Works with numpy values (default) or cvxpy expressions (pass
    ``stacker=cvxpy.bmat`` and 2-D expressions).
    """
    zero11 = np.zeros((1, 1))
    zero1n = np.zeros((1, nu))
    zeron1 = np.zeros((nu, 1))
    zeronn = np.zeros((nu, nu))
    h = np.array([[h_cap]], dtype=float) if np.isscalar(h_cap) else h_cap
    return stacker([
        [zero11, zero1n, h, -p3],
        [zeron1, zeronn, -p1.T, zeronn],
        [h, -p1, zero11, zero1n],
        [-p3.T, zeronn, zeron1, zeronn],
    ])


def build_P(vars: MultiplierVars, nu: int | None = None) -> np.ndarray:
    nu = vars.order if nu is None else nu
    if vars.order != nu:
        raise ValueError(f"coefficient rows have length {vars.order}, expected {nu}")
    return p_matrix(np.array([[float(vars.h_cap)]]), vars.p1, vars.p3, nu)
