import json

import numpy as np
import pytest

from zfrate.plants import (
    BUILTINS,
    PlantFileError,
    PlantModel,
    PlantValidationError,
    builtin,
    load_plant,
    lpv_vehicle_example,
    nonmin_phase_example,
    quadrotor_surrogate,
    save_plant,
    two_mode_quadrotor,
)
from zfrate.psi import SectorBounds
from zfrate.sim import worst_case_quadratic_rate
from zfrate.ss import ReferenceGains, StateSpace, eigenvalues, spectral_abscissa


def _g(s):
    return 5 * (s - 1) / (s * (s**2 + s + 25))


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtins_satisfy_invariants(name):
    plant = builtin(name)
    assert isinstance(plant, PlantModel)
    k = plant.kernel()
    assert k is not None
    for v in plant.vertices:
        assert np.linalg.norm(v.a @ k) <= 1e-9 * max(1.0, np.abs(v.a).max())
        assert v.nu == v.ny == plant.d


def test_unknown_builtin():
    with pytest.raises(KeyError, match="unknown builtin"):
        builtin("nope")


def test_nonmin_phase_realization():
    g = nonmin_phase_example().lti
    assert np.array_equal(g.a, [[0, 1, 0], [0, 0, 1], [0, -25, -1]])
    assert np.array_equal(g.b, [[0], [0], [1]])
    assert np.array_equal(g.c, [[-5, 5, 0]])
    assert abs(g.transfer(1.0)[0, 0]) < 1e-15
    assert g.transfer(2.0)[0, 0] == pytest.approx(5 / 62)
    assert np.min(np.abs(eigenvalues(g.a))) < 1e-12


def test_nonmin_phase_frequency_response():
    g = nonmin_phase_example().lti
    for w in np.logspace(-2, 2, 100):
        s = 1j * w
        assert g.transfer(s)[0, 0] == pytest.approx(_g(s), rel=1e-9)


def test_lpv_vehicle():
    plant = lpv_vehicle_example()
    assert plant.is_lpv and len(plant.vertices) == 2
    assert np.array_equal(plant.vertices[1].a, [[0, 1], [0, -1.2]])
    assert np.allclose(np.abs(plant.kernel().ravel()), [1, 0])
    v = plant.vertices[0]
    assert spectral_abscissa(v.a + v.b @ v.c) == pytest.approx(-0.4)


def test_quadrotor_tracker_and_integrators():
    plant = quadrotor_surrogate(ReferenceGains(1.0, 2.0), mass=1.0, tracker_bandwidth=3.0, d=2)
    ev = eigenvalues(plant.lti.a)
    assert np.sum(np.abs(ev) < 1e-9) == 2
    # tracker block is the leading 2x2 per axis before the lift
    single = quadrotor_surrogate(ReferenceGains(1.0, 2.0), tracker_bandwidth=3.0).lti
    assert spectral_abscissa(single.a[:2, :2]) == pytest.approx(-3.0, abs=1e-6)


def test_quadrotor_perfect_tracker_limit():
    # a very fast tracker behaves like the reference block alone: (s+1)^2 at k=1
    plant = quadrotor_surrogate(ReferenceGains(1.0, 2.0), tracker_bandwidth=2000.0)
    rate = worst_case_quadratic_rate(plant, SectorBounds(1, 1), grid=2)
    assert rate == pytest.approx(1.0, abs=2e-2)


def test_quadrotor_rejects_bad_parameters():
    with pytest.raises(ValueError):
        quadrotor_surrogate(mass=0.0)


def test_two_mode_vertices():
    plant = two_mode_quadrotor((0.2, 2.0))
    assert len(plant.vertices) == 2 and plant.is_lpv
    rates = [worst_case_quadratic_rate(v, SectorBounds(1, 4)) for v in plant.vertices]
    assert abs(rates[0] - rates[1]) > 1e-3
    same = two_mode_quadrotor((0.5, 0.5))
    assert np.array_equal(same.vertices[0].a, same.vertices[1].a)
    with pytest.raises(ValueError):
        two_mode_quadrotor((1.0, 2.0, 3.0))


def test_plant_requires_common_kernel():
    stable = StateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
    with pytest.raises(PlantValidationError, match="kernel"):
        PlantModel((stable,), 1)
    a = StateSpace([[0, 1], [0, -1]], [[0], [1]], [[1, 0]], [[0]])
    b = StateSpace([[-1, 0], [1, 0]], [[0], [1]], [[1, 0]], [[0]])
    with pytest.raises(PlantValidationError):
        PlantModel((a, b), 1)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_save_load_round_trip(tmp_path, name):
    plant = builtin(name)
    path = tmp_path / "plant.json"
    save_plant(plant, path)
    back = load_plant(path)
    assert back.kind == plant.kind and back.d == plant.d and back.label == plant.label
    for v, w in zip(plant.vertices, back.vertices):
        for x, y in zip((v.a, v.b, v.c, v.d), (w.a, w.b, w.c, w.d)):
            assert np.array_equal(x, y)


def _write(tmp_path, doc):
    path = tmp_path / "p.json"
    path.write_text(json.dumps(doc))
    return path


def test_missing_c_matrix(tmp_path):
    doc = {"kind": "lti", "d": 1, "vertices": [{"A": [[0]], "B": [[1]]}]}
    with pytest.raises(PlantFileError, match="'C'"):
        load_plant(_write(tmp_path, doc))


def test_mismatched_vertex_dims(tmp_path):
    doc = {"kind": "lpv", "d": 1, "vertices": [
        {"A": [[0]], "B": [[1]], "C": [[1]]},
        {"A": [[0, 1], [0, -1]], "B": [[0], [1]], "C": [[1, 0]]},
    ]}
    with pytest.raises(PlantValidationError, match="vertex 1"):
        load_plant(_write(tmp_path, doc))


def test_malformed_files(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(PlantFileError, match="invalid JSON"):
        load_plant(path)
    with pytest.raises(PlantFileError, match="'d'"):
        load_plant(_write(tmp_path, {"kind": "lti", "vertices": []}))
    with pytest.raises(PlantFileError, match="numeric"):
        load_plant(_write(tmp_path, {"kind": "lti", "d": 1, "vertices": [
            {"A": [["x"]], "B": [[1]], "C": [[1]]}]}))
