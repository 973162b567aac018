"""Example vehicle models and plant files.

Plant file format (JSON text)::

    {
      "kind": "lti" | "lpv",
      "d": 1,
      "label": "free text",
      "vertices": [{"A": [[...]], "B": [[...]], "C": [[...]]}, ...]
    }

Matrices are row-major nested arrays.  Numbers are written with 17
significant digits so a save/load round trip is bit-exact.  ``D`` may be
given per vertex and defaults to zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ss import ReferenceGains, StateSpace, build_vehicle_G, kron_lift_system

__all__ = [
    "PlantModel",
    "PlantFileError",
    "PlantValidationError",
    "common_kernel",
    "nonmin_phase_example",
    "lpv_vehicle_example",
    "quadrotor_surrogate",
    "two_mode_quadrotor",
    "load_plant",
    "save_plant",
    "builtin",
    "BUILTINS",
    "DEFAULT_QUAD_GAINS",
]


class PlantFileError(ValueError):
    """Malformed plant file."""


class PlantValidationError(ValueError):
    """Plant violates a structural requirement (dimensions, integral action)."""


def common_kernel(mats: Sequence[np.ndarray], rtol: float = 1e-10) -> np.ndarray | None:
    """Unit vector ``v`` with ``M v = 0`` for every ``M`` in ``mats``, if one exists."""
    stacked = np.vstack(mats)
    n = stacked.shape[1]
    if n == 0:
        return None
    _, s, vt = np.linalg.svd(stacked)
    smax = s[0] if s.size else 0.0
    if s.size == n and s[-1] > rtol * max(smax, 1e-300):
        return None
    v = vt[-1].reshape(-1, 1)
    k = int(np.argmax(np.abs(v)))
    return v if v[k, 0] > 0 else -v


@dataclass(frozen=True)
class PlantModel:
    vertices: tuple[StateSpace, ...]
    d: int
    label: str = ""
    kind: str = field(default="")

    def __post_init__(self):
        verts = tuple(self.vertices)
        if not verts:
            raise PlantValidationError("plant needs at least one vertex")
        object.__setattr__(self, "vertices", verts)
        kind = self.kind or ("lti" if len(verts) == 1 else "lpv")
        if kind not in ("lti", "lpv"):
            raise PlantValidationError(f"unknown plant kind {kind!r}")
        if kind == "lti" and len(verts) != 1:
            raise PlantValidationError("an lti plant has exactly one vertex")
        object.__setattr__(self, "kind", kind)
        shape = (verts[0].nx, verts[0].nu, verts[0].ny)
        for k, v in enumerate(verts):
            if (v.nx, v.nu, v.ny) != shape:
                raise PlantValidationError(
                    f"vertex {k} has (nx, nu, ny)={(v.nx, v.nu, v.ny)}, vertex 0 has {shape}"
                )
            if v.nu != self.d or v.ny != self.d:
                raise PlantValidationError(
                    f"vertex {k} is {v.ny}x{v.nu}, expected {self.d}x{self.d}"
                )
        if common_kernel([v.a for v in verts]) is None:
            raise PlantValidationError(
                "no common equilibrium direction: A must share a kernel vector across vertices"
            )

    @property
    def is_lpv(self) -> bool:
        return self.kind == "lpv"

    @property
    def nx(self) -> int:
        return self.vertices[0].nx

    @property
    def lti(self) -> StateSpace:
        if len(self.vertices) != 1:
            raise ValueError(f"{self.label or 'plant'} has {len(self.vertices)} vertices")
        return self.vertices[0]

    def kernel(self) -> np.ndarray:
        return common_kernel([v.a for v in self.vertices])


def nonmin_phase_example() -> PlantModel:
    """``G(s) = 5 (s - 1) / (s (s^2 + s + 25))`` in controllable canonical form."""
    a = [[0, 1, 0], [0, 0, 1], [0, -25, -1]]
    b = [[0], [0], [1]]
    c = [[-5, 5, 0]]
    return PlantModel((StateSpace(a, b, c, [[0]]),), 1, "non-minimum-phase")


def lpv_vehicle_example(rho_range: tuple[float, float] = (0.8, 1.2)) -> PlantModel:
    """``x' = v``, ``v' = -rho v - u`` at the two ends of the damping range."""
    verts = tuple(
        StateSpace([[0, 1], [0, -rho]], [[0], [-1]], [[1, 0]], [[0]]) for rho in rho_range
    )
    return PlantModel(verts, 1, f"lpv-vehicle rho in [{rho_range[0]}, {rho_range[1]}]", "lpv")


def _tracker(mass: float, bandwidth: float, design_mass: float) -> StateSpace:
    # PD position loop with velocity feed-forward, tuned for design_mass to a
    # double pole at -bandwidth; a different actual mass detunes it.
    c = design_mass / mass
    kp, kd = bandwidth**2, 2.0 * bandwidth
    a = [[0.0, 1.0], [-c * kp, -c * kd]]
    b = [[0.0, 0.0], [c * kp, c * kd]]
    return StateSpace(a, b, [[1.0, 0.0]], [[0.0, 0.0]])


# reference gains at the rate-optimal ratio k_d / k_p = 9 for S(1, 4)
DEFAULT_QUAD_GAINS = ReferenceGains(0.05, 0.45)


def quadrotor_surrogate(
    gains: ReferenceGains = DEFAULT_QUAD_GAINS,
    mass: float = 1.0,
    tracker_bandwidth: float = 5.0,
    d: int = 1,
    design_mass: float = 1.0,
) -> PlantModel:
    """Stand-in for a position-controlled quadrotor, one decoupled copy per axis.

    Each axis is a point mass ``x'' = F / mass`` under a PD tracker designed
    for ``design_mass``; at ``mass == design_mass`` the tracking poles sit at
    ``-tracker_bandwidth`` (double).  The tracker is cascaded with the
    gradient-driven reference dynamics.
    """
    if min(mass, tracker_bandwidth, design_mass) <= 0:
        raise ValueError("mass, bandwidth and design mass must be positive")
    g = build_vehicle_G(_tracker(mass, tracker_bandwidth, design_mass), gains, 1)
    if d > 1:
        g = kron_lift_system(g, d)
    return PlantModel((g,), d, f"quadrotor-surrogate mass={mass:g}")


def two_mode_quadrotor(
    masses: Sequence[float] = (0.2, 2.0),
    gains: ReferenceGains | Sequence[ReferenceGains] = DEFAULT_QUAD_GAINS,
    tracker_bandwidth: float = 5.0,
    d: int = 1,
    design_mass: float = 1.0,
) -> PlantModel:
    """Arbitrarily switching operating modes (one vertex per mass)."""
    masses = list(masses)
    if len(masses) != 2:
        raise ValueError("expected two masses")
    if isinstance(gains, ReferenceGains):
        gains = [gains] * len(masses)
    verts = tuple(
        quadrotor_surrogate(g, mass, tracker_bandwidth, d, design_mass).lti
        for mass, g in zip(masses, gains)
    )
    return PlantModel(verts, d, f"two-mode quadrotor masses={masses}", "lpv")


BUILTINS = {
    "nonmin-phase": nonmin_phase_example,
    "lpv-vehicle": lpv_vehicle_example,
    "quadrotor": quadrotor_surrogate,
    "two-mode-quadrotor": two_mode_quadrotor,
}


def builtin(name: str) -> PlantModel:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown builtin plant {name!r}; choose from {sorted(BUILTINS)}") from None


def _fmt_matrix(m: np.ndarray) -> str:
    rows = ("[" + ", ".join(f"{x:.16e}" for x in row) + "]" for row in np.asarray(m))
    return "[" + ", ".join(rows) + "]"


def save_plant(model: PlantModel, path) -> None:
    verts = []
    for v in model.vertices:
        parts = [f'"A": {_fmt_matrix(v.a)}', f'"B": {_fmt_matrix(v.b)}', f'"C": {_fmt_matrix(v.c)}']
        if np.any(v.d):
            parts.append(f'"D": {_fmt_matrix(v.d)}')
        verts.append("    {" + ", ".join(parts) + "}")
    text = (
        "{\n"
        f'  "kind": {json.dumps(model.kind)},\n'
        f'  "d": {model.d},\n'
        f'  "label": {json.dumps(model.label)},\n'
        '  "vertices": [\n' + ",\n".join(verts) + "\n  ]\n}\n"
    )
    Path(path).write_text(text)


def _read_matrix(vertex: dict, key: str, k: int, required: bool = True):
    if key not in vertex:
        if required:
            raise PlantFileError(f"vertices[{k}] is missing field {key!r}")
        return None
    raw = vertex[key]
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise PlantFileError(f"vertices[{k}].{key} is not a numeric matrix: {exc}") from None
    if arr.ndim != 2 and not (arr.ndim == 1 and arr.size == 0):
        raise PlantFileError(f"vertices[{k}].{key} must be a nested 2-D array")
    return arr


def load_plant(path) -> PlantModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise PlantFileError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise PlantFileError(f"{path}: top level must be an object")
    for key in ("kind", "d", "vertices"):
        if key not in doc:
            raise PlantFileError(f"{path}: missing field {key!r}")
    if not isinstance(doc["vertices"], list) or not doc["vertices"]:
        raise PlantFileError(f"{path}: 'vertices' must be a non-empty list")
    d = doc["d"]
    if not isinstance(d, int) or d < 1:
        raise PlantFileError(f"{path}: 'd' must be a positive integer")
    verts = []
    for k, v in enumerate(doc["vertices"]):
        if not isinstance(v, dict):
            raise PlantFileError(f"vertices[{k}] must be an object")
        a, b, c = (_read_matrix(v, key, k) for key in "ABC")
        dm = _read_matrix(v, "D", k, required=False)
        if dm is None:
            dm = np.zeros((c.shape[0], b.shape[1]))
        try:
            verts.append(StateSpace(a, b, c, dm))
        except ValueError as exc:
            raise PlantValidationError(f"vertices[{k}]: {exc}") from None
    return PlantModel(tuple(verts), d, str(doc.get("label", "")), str(doc["kind"]))
