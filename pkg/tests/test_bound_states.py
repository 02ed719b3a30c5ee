import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from supercorr import bound_states as bs
from supercorr.errors import PhysicsError, ValidationError

U_s = st.floats(0.1, 20.0)
K_s = st.floats(0.01, np.pi - 0.01)


def test_lattice_validation():
    with pytest.raises(ValidationError, match="U"):
        bs.LatticeParams(U=-1.0)
    with pytest.raises(ValidationError):
        bs.LatticeParams(U=1.0, dimension=4)


def test_bound_energy_limits():
    lat = bs.LatticeParams(U=1.0)
    assert bs.bound_energy_1d(0.0, lat) == pytest.approx(-np.sqrt(17))
    assert bs.bound_energy_1d(np.pi, lat) == pytest.approx(-1.0)
    st_pi = bs.bound_state_1d(np.pi, lat)
    assert st_pi.lambda_K < 0.05 and st_pi.psi0 == pytest.approx(1.0)


@given(U_s, K_s)
def test_1d_closed_form_solves_binding_condition(U, K):
    lat = bs.LatticeParams(U=U, dimension=1)
    E = float(bs.bound_energy_1d(K, lat))
    assert abs(bs.binding_residual(E, np.array([K]), lat)) < 1e-9 / U


@given(U_s, K_s)
@settings(max_examples=30)
def test_1d_wavefunction_normalized(U, K):
    lat = bs.LatticeParams(U=U)
    lam = bs.bound_state_1d(K, lat).lambda_K
    r = np.arange(-int(60 * lam) - 60, int(60 * lam) + 61)
    psi = bs.bound_wavefunction_1d(K, r, lat)
    assert np.sum(psi**2) == pytest.approx(1.0, rel=1e-9)


@given(U_s, st.floats(0.02, 0.98))
def test_resonant_K0_inverts_dispersion(U, s):
    lat = bs.LatticeParams(U=U)
    E_lo, E_hi = bs.bound_energy_1d(0.0, lat), bs.bound_energy_1d(np.pi, lat)
    omega_e = 0.5 * (E_lo + s * (E_hi - E_lo))
    K0 = bs.resonant_K0(omega_e, lat)
    assert bs.bound_energy_1d(K0, lat) == pytest.approx(2 * omega_e, rel=1e-12)


def test_resonant_K0_off_band():
    with pytest.raises(PhysicsError):
        bs.resonant_K0(-3.0, bs.LatticeParams(U=1.0))


@given(U_s, K_s)
@settings(max_examples=30)
def test_group_velocity_is_derivative(U, K):
    lat = bs.LatticeParams(U=U)
    h = 1e-6
    num = (bs.bound_energy_1d(K + h, lat) - bs.bound_energy_1d(K - h, lat)) / (2 * h)
    vg, rho = bs.group_velocity_and_dos(K, lat)
    assert vg == pytest.approx(num, rel=1e-6, abs=1e-9)
    assert rho == pytest.approx(1 / vg)


def test_group_velocity_edges_rejected():
    with pytest.raises(PhysicsError):
        bs.group_velocity_and_dos(0.0, bs.LatticeParams(U=1.0))


@pytest.mark.parametrize("dim, eps", [(1, 1e-3), (1, 0.1), (1, 2.0), (2, 1e-3), (2, 0.1), (2, 2.0),
                                      (3, 0.1), (3, 2.0)])
def test_binding_integral_vs_trapezoid_oracle(dim, eps):
    lat = bs.LatticeParams(U=1.0, dimension=dim)
    K = np.linspace(0.3, 1.1, dim)
    a = bs.binding_integral(eps, K, lat)
    b = bs.binding_integral_trapezoid(eps, K, lat)
    assert a == pytest.approx(b, rel=1e-6)


@pytest.mark.parametrize("U", [0.3, 0.5])
def test_2d_weak_coupling_depth(U):
    # frozen: depth -> 64 exp(-8 pi / U) for U -> 0 at K = 0
    eps = bs.binding_depth_nd(np.zeros(2), bs.LatticeParams(U=U, dimension=2))
    assert eps / np.exp(-8 * np.pi / U) == pytest.approx(64.0, rel=1e-9)


def test_3d_threshold_frozen():
    assert bs.critical_U(3) == pytest.approx(7.9135538, rel=1e-7)
    assert not bs.bound_exists(np.zeros(3), bs.LatticeParams(U=7.8, dimension=3), eps_min=1e-12)
    assert bs.bound_exists(np.zeros(3), bs.LatticeParams(U=8.0, dimension=3), eps_min=1e-12)


@pytest.mark.parametrize("dim", [2, 3])
@given(U=st.floats(0.5, 20.0))
@settings(max_examples=10, deadline=None)
def test_nd_energy_below_continuum(dim, U):
    lat = bs.LatticeParams(U=U, dimension=dim)
    K = np.full(dim, 0.7)
    E = bs.solve_bound_energy_nd(K, lat)
    if E is not None:
        assert E <= -4 * np.abs(np.cos(K / 2)).sum()
        assert E >= -4 * np.abs(np.cos(K / 2)).sum() - U - 1e-12


def test_nd_matches_independent_root():
    lat = bs.LatticeParams(U=3.0, dimension=2)
    K = np.array([0.4, 1.3])
    b = 4 * np.abs(np.cos(K / 2))
    eps = optimize.brentq(lambda e: bs.binding_integral_trapezoid(e, K, lat) - 1 / 3.0, 1e-3, 3.0,
                          xtol=1e-14)
    assert bs.solve_bound_energy_nd(K, lat) == pytest.approx(-b.sum() - eps, rel=1e-7)


def test_nd_wavefunction_symmetric_and_peaked():
    psi = bs.bound_wavefunction_nd(np.zeros(2), bs.LatticeParams(U=8.0, dimension=2), 6)
    assert np.allclose(psi, psi.T) and np.allclose(psi, psi[::-1, ::-1])
    assert np.argmax(np.abs(psi)) == psi.size // 2


def test_band_table_csv(tmp_path):
    band = bs.band_table(bs.LatticeParams(U=2.0), n_K=11)
    path = tmp_path / "band.csv"
    band.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape[0] == 11
    assert np.all(np.diff(data[:, 1]) > 0)
