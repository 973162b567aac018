import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from zfrate.iqc import (
    SignalPair,
    WeightedResidual,
    beta,
    dissipation_residual,
    filter_foh,
    foh_matrices,
    lemma1_direct_sum,
    lemma1_residual,
    make_signals,
    theorem2_residual,
    theorem3_residual,
)
from zfrate.multiplier import MultiplierVars, build_basis
from zfrate.plants import lpv_vehicle_example
from zfrate.psi import SectorBounds, build_P, build_psi
from zfrate.sim import (
    equilibrium_state,
    field_minimizer,
    quadratic_field,
    random_quadratic_field,
    scaled_smooth_field,
    simulate_closed_loop,
)
from zfrate.validation import prepare_case

SECTOR = SectorBounds(1.0, 3.0)
LPV = lpv_vehicle_example()


@pytest.fixture(scope="module")
def lpv_case():
    return prepare_case("lpv-vehicle", 3.0, order=2)


@pytest.fixture(scope="module")
def nonmin_case():
    return prepare_case("nonmin-phase", 1.0)


def _run(seed, kind="quadratic", dt=1e-2, T=20.0, plant=LPV, sector=SECTOR):
    rng = np.random.default_rng(seed)
    if kind == "quadratic":
        fld = random_quadratic_field(rng, sector, 1, spread=2.0)
    else:
        fld = scaled_smooth_field(sector, rng.standard_normal(1))
    y_star = field_minimizer(fld)
    eta = equilibrium_state(plant, y_star)
    x0 = eta + rng.standard_normal(plant.nx)
    traj = simulate_closed_loop(plant, fld, x0, dt=dt, t_final=T)
    return traj, fld, y_star, eta


def test_signal_pair_definitions():
    t = np.linspace(0, 1, 5)
    y = np.sin(t)[:, None]
    u = 2.0 * y
    sig = SignalPair(t, y, u, SECTOR)
    assert np.array_equal(sig.p, u - 1.0 * y)
    assert np.array_equal(sig.q, 3.0 * y - u)
    with pytest.raises(ValueError):
        SignalPair(t, y, u[:-1], SECTOR)


def test_make_signals_edge_cases():
    t = np.linspace(0, 2, 21)
    y_star = np.array([0.5])
    const = np.full((21, 1), 0.5)

    class _T:
        times, outputs = t, const

    fld = quadratic_field(np.eye(1) * 1.0, c=[-1.0], sector=SECTOR)
    sig = make_signals(_T, fld, SECTOR, y_star)
    assert not np.any(sig.p) and not np.any(sig.q)

    _T.outputs = np.sin(t)[:, None]
    low = quadratic_field(np.eye(1) * 0.5, sector=SECTOR)
    high = quadratic_field(np.eye(1) * 1.5, sector=SECTOR)
    assert np.allclose(make_signals(_T, low).p, 0)
    assert np.allclose(make_signals(_T, high).q, 0)


def test_beta():
    assert beta(0.3, 0.0) == 1.0
    assert beta(0.3, -1.0) == 1.0
    assert beta(0.3, 1.0) == pytest.approx(np.exp(-0.6))


def test_lemma1_tau_zero_is_zero():
    traj, fld, y_star, _ = _run(0)
    sig = make_signals(traj, fld, SECTOR, y_star)
    assert lemma1_residual(sig, 0.1, 0.0, 20.0).value == 0.0


@pytest.mark.parametrize("tau", [0.7, -0.7])
@pytest.mark.parametrize("seed", range(3))
def test_lemma1_nonnegative(seed, tau):
    traj, fld, y_star, _ = _run(seed)
    sig = make_signals(traj, fld, SECTOR, y_star)
    res = lemma1_residual(sig, 0.1, tau, 20.0)
    assert res.ok(1e-6), res


@pytest.mark.parametrize("tau", [0.0, 0.37, -1.2, 2.0])
def test_lemma1_alpha_zero_matches_direct_sum(tau):
    traj, fld, y_star, _ = _run(4, kind="smooth")
    sig = make_signals(traj, fld, SECTOR, y_star)
    assert lemma1_residual(sig, 0.0, tau, 20.0).value == pytest.approx(
        lemma1_direct_sum(sig, tau, 20.0), abs=1e-12
    )


def test_lemma1_grid_checks():
    traj, fld, y_star, _ = _run(0)
    sig = make_signals(traj, fld, SECTOR, y_star)
    with pytest.raises(ValueError, match="multiple"):
        lemma1_residual(sig, 0.1, 0.123, 20.0)
    with pytest.raises(ValueError, match="grid point"):
        lemma1_residual(sig, 0.1, 0.0, 25.0)
    with pytest.raises(ValueError):
        lemma1_residual(sig, -0.1, 0.0, 20.0)


def test_foh_exact_on_ramp():
    a, b = np.array([[-0.7, 1.0], [0.0, -2.0]]), np.array([[0.0], [1.0]])
    dt = 0.05
    t = np.arange(0, 3 + dt / 2, dt)
    u = (0.3 + 1.1 * t)[:, None]
    y = filter_foh(a, b, np.eye(2), np.zeros((2, 1)), u, dt)
    # exact response to a ramp from rest, via an augmented exponential
    big = np.zeros((4, 4))
    big[:2, :2], big[:2, 2:3], big[2, 3] = a, b, 1.0
    for k in (10, 37, t.size - 1):
        x = expm(big * t[k]) @ np.array([0, 0, 0.3, 1.1])
        assert np.allclose(y[k], x[:2], atol=1e-13)
    phi, g0, g1 = foh_matrices(a, b, dt)
    assert np.allclose(phi, expm(a * dt))
    assert np.allclose(g0 + g1, np.linalg.solve(a, (phi - np.eye(2)) @ b))


def test_theorem2_circle_is_sector_integral():
    traj, fld, y_star, _ = _run(1)
    sig = make_signals(traj, fld, SECTOR, y_star)
    basis = build_basis(1)
    res = theorem2_residual(sig, basis, [[0.0]], [[0.0]], 0.2, 20.0)
    w = np.exp(0.4 * sig.times) * np.sum(sig.p * sig.q, axis=-1)
    assert res.value == pytest.approx(np.trapezoid(w, sig.times), rel=1e-12)
    assert res.value >= 0


def test_theorem2_zero_trajectory():
    t = np.linspace(0, 5, 501)
    z = np.zeros((501, 1))
    sig = SignalPair(t, z, z, SECTOR)
    res = theorem2_residual(sig, build_basis(2), [[0.3, 0.1]], [[0.2, 0.0]], 0.1, 5.0)
    assert res.value == 0.0 and res.relative == 0.0


def test_theorem2_with_certified_multiplier():
    case = prepare_case("nonmin-phase", 1.5)
    sector = case.sector
    traj, fld, y_star, _ = _run(2, plant=case.plant, sector=sector, T=30.0)
    sig = make_signals(traj, fld, sector, y_star)
    basis = build_basis(1)
    res = theorem2_residual(sig, basis, case.vars.p1, case.vars.p3, 0.18, 30.0, case.vars.h_cap)
    assert res.ok(1e-6), res


def test_theorem3_is_twice_theorem2(lpv_case):
    traj, fld, y_star, _ = _run(5)
    sig = make_signals(traj, fld, SECTOR, y_star)
    v = lpv_case.vars
    t2 = theorem2_residual(sig, build_basis(2), v.p1, v.p3, lpv_case.alpha, 20.0, v.h_cap)
    t3 = theorem3_residual(sig, lpv_case.psi, lpv_case.P, lpv_case.alpha, 20.0)
    assert t3.value == pytest.approx(2 * t2.value, rel=1e-10)


def test_theorem3_circle_on_lower_edge():
    traj, _, _, _ = _run(0)
    fld = quadratic_field(np.eye(1) * 0.5, sector=SECTOR)
    sig = make_signals(traj, fld, SECTOR, [0.0])
    psi = build_psi(build_basis(1), SECTOR, 0.1, 1)
    P = build_P(MultiplierVars(1.0, [[0.0]], [[0.0]]))
    assert theorem3_residual(sig, psi, P, 0.1, 20.0).value == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_theorem3_with_certified_witness(lpv_case, seed):
    traj, fld, y_star, _ = _run(10 + seed)
    sig = make_signals(traj, fld, SECTOR, y_star)
    res = theorem3_residual(sig, lpv_case.psi, lpv_case.P, lpv_case.alpha, 20.0)
    assert res.ok(1e-6), res


def test_theorem3_reports_violation_when_l1_bound_fails():
    # H = 0.2 < int h = 1 breaks the L1 bound; a slowly varying signal in the
    # interior of the sector then makes the integral negative
    t = np.arange(0, 20 + 5e-3, 1e-2)
    y = np.ones((t.size, 1))
    sig = SignalPair(t, y, 2.0 * y, SECTOR)
    psi = build_psi(build_basis(1), SECTOR, 0.0, 1)
    P = build_P(MultiplierVars(0.2, [[0.0]], [[1.0]]))
    res = theorem3_residual(sig, psi, P, 0.0, 20.0)
    assert res.value < -0.5 * res.scale
    assert not res.ok(1e-5)


def test_dissipation_equilibrium_is_zero(nonmin_case):
    fld = quadratic_field(np.eye(1) * 0.5, c=[-0.4], sector=nonmin_case.sector)
    y_star = field_minimizer(fld)
    eta = equilibrium_state(nonmin_case.plant, y_star)
    traj = simulate_closed_loop(nonmin_case.plant, fld, eta, dt=1e-2, t_final=10)
    sig = make_signals(traj, fld, nonmin_case.sector, y_star)
    res = dissipation_residual(nonmin_case.psi, nonmin_case.X, nonmin_case.P, traj, sig,
                               eta, nonmin_case.alpha, 10.0)
    # eta_* comes from a least-squares solve, so zero up to round-off
    assert abs(res.value) <= 1e-20


@pytest.mark.parametrize("seed", range(3))
def test_dissipation_chain_holds(nonmin_case, seed):
    c = nonmin_case
    traj, fld, y_star, eta = _run(seed, plant=c.plant, sector=c.sector)
    sig = make_signals(traj, fld, c.sector, y_star)
    res = dissipation_residual(c.psi, c.X, c.P, traj, sig, eta, c.alpha, 20.0)
    xi0 = np.r_[np.zeros(c.psi.ss.nx), traj.states[0] - eta]
    assert res.value >= -1e-5 * (xi0 @ c.X @ xi0)


def test_dissipation_stale_witness_fails(nonmin_case):
    c = nonmin_case
    alpha = 1.5 * c.alpha
    psi = build_psi(build_basis(1), c.sector, alpha, 1)
    traj, fld, y_star, eta = _run(0, plant=c.plant, sector=c.sector)
    sig = make_signals(traj, fld, c.sector, y_star)
    res = dissipation_residual(psi, c.X, c.P, traj, sig, eta, alpha, 20.0)
    assert res.value < 0


def test_dissipation_shape_check(nonmin_case):
    c = nonmin_case
    traj, fld, y_star, eta = _run(0, plant=c.plant, sector=c.sector)
    sig = make_signals(traj, fld, c.sector, y_star)
    with pytest.raises(ValueError, match="storage"):
        dissipation_residual(c.psi, np.eye(2), c.P, traj, sig, eta, c.alpha, 20.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(0.0, 1e3))
def test_weighted_residual_relative(value, scale):
    r = WeightedResidual(value, scale, 1.0)
    if scale == 0:
        assert r.relative == 0.0
    else:
        assert r.relative == pytest.approx(value / scale)
    assert r.ok(1.0) == (value >= -scale)
