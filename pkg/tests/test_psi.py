import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zfrate.multiplier import MultiplierVars, build_basis
from zfrate.psi import SectorBounds, build_interconnection, build_P, build_psi
from zfrate.sim import rk4
from zfrate.ss import StateSpace, spectral_abscissa, static_gain


def test_sector_validation():
    with pytest.raises(ValueError):
        SectorBounds(0.0, 1.0)
    with pytest.raises(ValueError):
        SectorBounds(2.0, 1.0)


def test_psi_block_example():
    psi = build_psi(build_basis(1), SectorBounds(1, 2), 0.0, 1).ss
    assert np.array_equal(psi.a, np.diag([-1.0, -1.0]))
    assert np.array_equal(psi.b, [[-1, 1], [2, -1]])
    assert np.array_equal(psi.c, [[0, 0], [1, 0], [0, 0], [0, 1]])
    assert np.array_equal(psi.d, [[-1, 1], [0, 0], [2, -1], [0, 0]])


def test_psi_alpha_shift():
    psi = build_psi(build_basis(1), SectorBounds(1, 2), 0.5, 1).ss
    assert np.array_equal(psi.a, np.diag([-2.0, -2.0]))


@pytest.mark.parametrize("nu,d", [(1, 1), (2, 1), (3, 2)])
def test_psi_dimensions_and_stability(nu, d):
    basis = build_basis(nu)
    for alpha in (0.0, 0.3):
        psi = build_psi(basis, SectorBounds(1, 3), alpha, d)
        assert psi.ss.nx == 2 * nu * d
        assert psi.ss.nu == 2 * d
        assert psi.ss.ny == psi.nz == 2 * (1 + nu) * d
        assert spectral_abscissa(psi.ss.a) == pytest.approx(-1 - 2 * alpha)
        shifted = basis.a_nu - 2 * alpha * np.eye(nu)
        assert np.array_equal(psi.ss.a[: nu * d, : nu * d], np.kron(shifted, np.eye(d)))


def test_psi_rejects_negative_alpha():
    with pytest.raises(ValueError):
        build_psi(build_basis(1), SectorBounds(1, 2), -0.1, 1)


def test_psi_p_vanishes_on_lower_edge():
    psi = build_psi(build_basis(2), SectorBounds(1.5, 4), 0.2, 1).ss
    y = np.array([0.7])
    yu = np.concatenate([y, 1.5 * y])
    assert psi.d[0] @ yu == 0.0


def test_interconnection_static_zero_plant():
    psi = build_psi(build_basis(1), SectorBounds(1, 2), 0.0, 1)
    sys = build_interconnection(psi, static_gain([[0.0]]))
    assert sys.d[0, 0] == 1.0


def test_interconnection_integrator_dimension():
    psi = build_psi(build_basis(1), SectorBounds(1, 2), 0.0, 1)
    sys = build_interconnection(psi, StateSpace([[0]], [[1]], [[1]], [[0]]))
    assert sys.nx == 3


def test_interconnection_width_check():
    psi = build_psi(build_basis(1), SectorBounds(1, 2), 0.0, 2)
    with pytest.raises(ValueError):
        build_interconnection(psi, StateSpace([[0]], [[1]], [[1]], [[0]]))


def test_interconnection_q_channel_frequency_response():
    g = StateSpace([[0, 1], [0, -0.8]], [[0], [-1]], [[1, 0]], [[0]])
    L = 3.0
    psi = build_psi(build_basis(2), SectorBounds(1, L), 0.1, 1)
    sys = build_interconnection(psi, g)
    q_row = 1 + 2  # [p; x_p (2); q; ...]
    for w in np.logspace(-2, 2, 15):
        s = 1j * w
        expected = L * g.transfer(s)[0, 0] - 1.0
        assert sys.transfer(s)[q_row, 0] == pytest.approx(expected, abs=1e-9)


def test_build_P_circle():
    P = build_P(MultiplierVars(1.0, [[0.0]], [[0.0]]))
    assert P.shape == (4, 4)
    assert np.count_nonzero(P) == 2
    assert P[0, 2] == P[2, 0] == 1.0


def test_build_P_causal_entry():
    P = build_P(MultiplierVars(1.0, [[0.0]], [[0.5]]))
    # rows [p, x_p, q, x_q]
    assert P[0, 3] == P[3, 0] == -0.5


def test_build_P_order_mismatch():
    with pytest.raises(ValueError):
        build_P(MultiplierVars(1.0, [[0.0]], [[0.5]]), 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 10_000))
def test_build_P_quadratic_form_expansion(nu, d, seed):
    rng = np.random.default_rng(seed)
    h = rng.uniform(0.1, 2)
    p1, p3 = rng.standard_normal((1, nu)), rng.standard_normal((1, nu))
    P = build_P(MultiplierVars(h, p1, p3))
    assert np.array_equal(P, P.T)
    p, q = rng.standard_normal(d), rng.standard_normal(d)
    xp, xq = rng.standard_normal((nu, d)), rng.standard_normal((nu, d))
    # stacked z = [p; x_p; q; x_q] with axis index fastest
    z = np.concatenate([p, xp.ravel(), q, xq.ravel()])
    w1 = (p3 @ xq).ravel()
    w2 = (p1 @ xp).ravel()
    lhs = z @ np.kron(P, np.eye(d)) @ z
    rhs = 2 * h * p @ q - 2 * p @ w1 - 2 * q @ w2
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_filter_states_match_convolution():
    lam, alpha, dt, T = -1.0, 0.2, 1e-3, 10.0
    sector = SectorBounds(1.0, 2.5)
    psi = build_psi(build_basis(1, lam), sector, alpha, 1).ss

    def y(t):
        return np.sin(1.3 * t) + 0.5 * np.cos(0.4 * t)

    def u(t):
        return 1.7 * y(t) + 0.3 * np.sin(2.1 * t)

    n = int(round(T / dt))
    states = rk4(lambda t, x: psi.a @ x + psi.b @ np.array([y(t), u(t)]), np.zeros(2), dt, n)
    t = np.arange(n + 1) * dt
    p = u(t) - sector.m * y(t)
    q = sector.l * y(t) - u(t)
    rate = lam - 2 * alpha
    for k in (2500, 6000, n):
        kern = np.exp(rate * (t[k] - t[: k + 1]))
        xp = np.trapezoid(kern * p[: k + 1], dx=dt)
        xq = np.trapezoid(kern * q[: k + 1], dx=dt)
        assert states[k, 0] == pytest.approx(xp, abs=1e-5)
        assert states[k, 1] == pytest.approx(xq, abs=1e-5)
