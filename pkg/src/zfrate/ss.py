"""Dense state-space algebra.

Systems are continuous-time, ``dx/dt = A x + B u``, ``y = C x + D u``.
Static gains are systems with zero states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StateSpace",
    "ReferenceGains",
    "as_matrix",
    "is_symmetric",
    "static_gain",
    "series",
    "stack_outputs",
    "kron_lift",
    "build_vehicle_G",
    "eigenvalues",
    "spectral_abscissa",
    "null_direction",
]


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce scalars, vectors and nested lists to a 2-D float array."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ValueError(f"{name} must be at most 2-D, got shape {arr.shape}")
    return arr


def is_symmetric(m: np.ndarray, rtol: float = 1e-12) -> bool:
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        return False
    scale = np.max(np.abs(m)) if m.size else 0.0
    return bool(np.max(np.abs(m - m.T), initial=0.0) <= rtol * scale)


@dataclass(frozen=True)
class StateSpace:
    """Real state-space realization ``(A, B, C, D)``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.a, "A")
        b = as_matrix(self.b, "B")
        c = as_matrix(self.c, "C")
        d = as_matrix(self.d, "D")
        nx = a.shape[0]
        if a.shape != (nx, nx):
            raise ValueError(f"A must be square, got {a.shape}")
        # zero-state systems: allow B of shape (0, nu) and C of shape (ny, 0)
        if nx == 0:
            b = b.reshape(0, d.shape[1]) if b.size == 0 else b
            c = c.reshape(d.shape[0], 0) if c.size == 0 else c
        if b.shape[0] != nx:
            raise ValueError(f"B has {b.shape[0]} rows, expected {nx}")
        if c.shape[1] != nx:
            raise ValueError(f"C has {c.shape[1]} columns, expected {nx}")
        if d.shape != (c.shape[0], b.shape[1]):
            raise ValueError(
                f"D has shape {d.shape}, expected {(c.shape[0], b.shape[1])}"
            )
        for name, arr in zip("abcd", (a, b, c, d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def nx(self) -> int:
        return self.a.shape[0]

    @property
    def nu(self) -> int:
        return self.b.shape[1]

    @property
    def ny(self) -> int:
        return self.c.shape[0]

    def transfer(self, s: complex) -> np.ndarray:
        """Evaluate ``C (sI - A)^{-1} B + D`` at a complex frequency."""
        if self.nx == 0:
            return self.d.astype(complex)
        lhs = s * np.eye(self.nx) - self.a
        return self.c @ np.linalg.solve(lhs, self.b.astype(complex)) + self.d

    def impulse_samples(self, times) -> np.ndarray:
        """Strictly proper part of the impulse response, ``C e^{At} B``."""
        from scipy.linalg import expm

        times = np.asarray(times, dtype=float)
        out = np.empty((times.size, self.ny, self.nu))
        for i, t in enumerate(times):
            out[i] = self.c @ expm(self.a * t) @ self.b if self.nx else 0.0
        return out

    def __repr__(self) -> str:
        return f"StateSpace(nx={self.nx}, nu={self.nu}, ny={self.ny})"


@dataclass(frozen=True)
class ReferenceGains:
    """Gains of the second-order reference dynamics driven by the gradient."""

    k_p: float
    k_d: float

    def __post_init__(self):
        if not (self.k_p > 0 and self.k_d > 0):
            raise ValueError(f"gains must be positive, got k_p={self.k_p}, k_d={self.k_d}")


def static_gain(d) -> StateSpace:
    d = as_matrix(d, "D")
    return StateSpace(np.zeros((0, 0)), np.zeros((0, d.shape[1])), np.zeros((d.shape[0], 0)), d)


def series(front: StateSpace, back: StateSpace) -> StateSpace:
    """Cascade in which ``back`` drives ``front``: ``u -> back -> front -> y``.

    The state is ordered ``[x_front; x_back]``.
    """
    if front.nu != back.ny:
        raise ValueError(
            f"series: front expects {front.nu} inputs but back produces {back.ny} outputs"
        )
    n1, n2 = front.nx, back.nx
    a = np.block([
        [front.a, front.b @ back.c],
        [np.zeros((n2, n1)), back.a],
    ])
    b = np.vstack([front.b @ back.d, back.b])
    c = np.hstack([front.c, front.d @ back.c])
    d = front.d @ back.d
    return StateSpace(a, b, c, d)


def stack_outputs(sys: StateSpace) -> StateSpace:
    """The map ``u -> [y; u]`` (the column ``[G; I]``)."""
    return StateSpace(
        sys.a,
        sys.b,
        np.vstack([sys.c, np.zeros((sys.nu, sys.nx))]),
        np.vstack([sys.d, np.eye(sys.nu)]),
    )


def kron_lift(m, d: int) -> np.ndarray:
    """``M ⊗ I_d``."""
    if d < 1:
        raise ValueError(f"lift dimension must be >= 1, got {d}")
    return np.kron(as_matrix(m), np.eye(d))


def kron_lift_system(sys: StateSpace, d: int) -> StateSpace:
    """``d`` decoupled copies of ``sys`` with axis-interleaved signals."""
    return StateSpace(*(kron_lift(x, d) for x in (sys.a, sys.b, sys.c, sys.d)))


def build_vehicle_G(closed_loop: StateSpace, gains: ReferenceGains, d: int) -> StateSpace:
    """Compose a tracking closed loop with the gradient-driven reference block.

    ``closed_loop`` takes ``r = [r_pos; r_vel]`` (width ``2d``) and returns the
    position ``y`` (width ``d``).  The reference block integrates
    ``r_pos' = r_vel`` and ``r_vel' = -k_d r_vel - k_p u``.
    """
    if closed_loop.nu != 2 * d or closed_loop.ny != d:
        raise ValueError(
            f"closed loop must map 2d={2 * d} inputs to d={d} outputs, "
            f"got {closed_loop.nu} -> {closed_loop.ny}"
        )
    eye, zero = np.eye(d), np.zeros((d, d))
    ref = StateSpace(
        np.block([[zero, eye], [zero, -gains.k_d * eye]]),
        np.vstack([zero, -gains.k_p * eye]),
        np.eye(2 * d),
        np.zeros((2 * d, d)),
    )
    return series(closed_loop, ref)


def eigenvalues(m) -> np.ndarray:
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"eigenvalues need a square matrix, got {m.shape}")
    if m.size == 0:
        return np.zeros(0, dtype=complex)
    try:
        return np.linalg.eigvals(m).astype(complex)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigenvalue iteration did not converge: {exc}") from exc


def spectral_abscissa(m) -> float:
    ev = eigenvalues(m)
    if ev.size == 0:
        return -np.inf
    return float(np.max(ev.real))


def null_direction(m, rtol: float = 1e-10) -> np.ndarray | None:
    """Unit vector spanning (part of) the numerical kernel, or ``None``."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"null_direction needs a square matrix, got {m.shape}")
    n = m.shape[0]
    if n == 0:
        return None
    _, s, vt = np.linalg.svd(m)
    smax = s[0]
    if smax == 0.0:
        v = np.zeros((n, 1))
        v[0, 0] = 1.0
        return v
    if s[-1] > rtol * smax:
        return None
    v = vt[-1].reshape(-1, 1)
    # deterministic sign: largest-magnitude entry positive
    k = int(np.argmax(np.abs(v)))
    return v if v[k, 0] > 0 else -v
