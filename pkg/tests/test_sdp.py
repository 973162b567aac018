import numpy as np
import pytest

from zfrate.sdp import (
    Constraint,
    SdpProblem,
    Status,
    VarKind,
    check_feasible,
    verify_witness,
)


def test_contradictory_scalar_bounds_infeasible():
    prob = SdpProblem(
        {"x": (VarKind.SCALAR, 1)},
        [
            Constraint("lo", ">=", lambda v, p: v["x"], margin=True),
            Constraint("hi", ">=", lambda v, p: -v["x"] - 1, margin=True),
        ],
    )
    res = check_feasible(prob)
    assert res.status is Status.INFEASIBLE
    assert res.witness is None
    assert res.margin == pytest.approx(-0.5, abs=1e-6)


def test_free_symmetric_matrix_feasible():
    prob = SdpProblem(
        {"X": (VarKind.SYMMETRIC, 3)},
        [Constraint("X", ">>", lambda v, p: v["X"], eps=1e-7, margin=True)],
    )
    res = check_feasible(prob)
    assert res.feasible
    x = res.witness["X"]
    assert np.array_equal(x, x.T)
    assert np.linalg.eigvalsh(x).min() >= 1.0


def test_parameter_update_recompiles_nothing():
    prob = SdpProblem(
        {"x": (VarKind.SCALAR, 1)},
        [
            Constraint("lo", ">=", lambda v, p: v["x"] - p["a"], margin=True),
            Constraint("hi", ">=", lambda v, p: 1 - v["x"], margin=True),
        ],
        params={"a": 0.0},
    )
    assert check_feasible(prob).feasible
    compiled = prob._compiled
    prob.set_param("a", 2.0)
    assert check_feasible(prob).status is Status.INFEASIBLE
    assert prob._compiled is compiled
    with pytest.raises(KeyError):
        prob.set_param("b", 1.0)


def test_verify_witness_flags_violations():
    prob = SdpProblem(
        {"X": (VarKind.SYMMETRIC, 2)},
        [Constraint("X", "<<", lambda v, p: v["X"], eps=0.0)],
    )
    residuals, ok = verify_witness(prob, {"X": -np.eye(2)})
    assert ok and residuals["X"] == pytest.approx(1.0)
    residuals, ok = verify_witness(prob, {"X": np.diag([-1.0, 0.5])})
    assert not ok and residuals["X"] == pytest.approx(-0.5)


def test_derived_quantities_reach_witness():
    prob = SdpProblem(
        {"x": (VarKind.SCALAR, 1)},
        [
            Constraint("y", ">=", lambda v, p: v["y"], margin=True),
            Constraint("cap", ">=", lambda v, p: 3 - v["x"]),
        ],
        derived={"y": lambda v: 2 * v["x"]},
    )
    res = check_feasible(prob)
    assert res.feasible
    assert res.witness["y"] == pytest.approx(2 * res.witness["x"])


def test_unknown_sense_rejected():
    with pytest.raises(ValueError):
        Constraint("bad", "==", lambda v, p: 0)


def test_solver_error_is_retried_then_reported(monkeypatch):
    import cvxpy as cp

    prob = SdpProblem(
        {"X": (VarKind.SYMMETRIC, 2)},
        [Constraint("X", ">>", lambda v, p: v["X"], eps=1e-7, margin=True)],
    )
    check_feasible(prob)
    compiled = prob._compiled[0]
    real_solve, calls = compiled.solve, []

    def flaky(*args, **kwargs):
        calls.append(kwargs)
        if len(calls) == 1:
            raise cp.error.SolverError("boom")
        return real_solve(*args, **kwargs)

    monkeypatch.setattr(compiled, "solve", flaky)
    assert check_feasible(prob).feasible
    assert "static_regularization_constant" in calls[1]

    def broken(*args, **kwargs):
        raise cp.error.SolverError("boom")

    monkeypatch.setattr(compiled, "solve", broken)
    assert check_feasible(prob).status is Status.NUMERICAL_FAILURE
