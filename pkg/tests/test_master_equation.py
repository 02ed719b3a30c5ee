import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from supercorr import bound_states as bs
from supercorr import coupling as cp
from supercorr import master_equation as me
from supercorr.errors import PhysicsError, ValidationError

LAT = bs.LatticeParams(U=1.0)
WE, G = -2.04, 0.02


def _random_rho(d, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = X @ X.conj().T
    return rho / np.trace(rho)


def test_basis_convention():
    assert np.argmax(np.abs(me.basis_state("eg"))) == 2
    s0 = me.lowering_operators(2)[0]
    assert np.allclose(s0 @ me.basis_state("eg"), me.basis_state("gg"))
    assert np.allclose(s0 @ me.basis_state("ge"), 0)
    with pytest.raises(ValidationError):
        me.basis_state("exg")


def test_validate_density_matrix():
    me.validate_density_matrix(me.excited_state(2))
    with pytest.raises(ValidationError, match="trace"):
        me.validate_density_matrix(2 * me.excited_state(2))
    with pytest.raises(ValidationError, match="positive"):
        me.validate_density_matrix(np.diag([1.5, -0.5]))


@pytest.mark.parametrize("positions", [(0, 0, 0), (0, 2, 5), (0, 3, 6, 9)])
def test_generator_matches_tensor_product_oracle(positions):
    ens = cp.EmitterEnsemble(positions, WE, G)
    gen = me.build_generator(ens, LAT)
    ref = oracles.pair_lindblad(gen.A_pairs, gen.Gamma0, ens.N)
    L = gen.liouvillian()
    assert np.max(np.abs(L - ref)) < 1e-12 * np.max(np.abs(ref))


@given(st.integers(0, 10**6))
@settings(max_examples=10, deadline=None)
def test_apply_matches_liouvillian_and_preserves_trace(seed):
    gen = me.build_generator(cp.EmitterEnsemble((0, 1, 4), WE, G), LAT)
    rho = _random_rho(gen.dim, seed)
    a = gen.apply(rho)
    b = (gen.liouvillian() @ rho.reshape(-1)).reshape(gen.dim, gen.dim)
    assert np.max(np.abs(a - b)) < 1e-12 * gen.Gamma0 * 1e3
    assert abs(np.trace(a)) < 1e-12 * gen.Gamma0 * 1e3
    assert np.max(np.abs(a - a.conj().T)) < 1e-12 * gen.Gamma0 * 1e3


def test_evolution_physical_and_methods_agree():
    gen = me.build_generator(cp.EmitterEnsemble((0, 3, 6, 9), WE, G), LAT)
    tf = 5 / gen.Gamma0
    a = me.evolve_density_matrix(gen, me.excited_state(4), tf, n_out=21, method="expm")
    b = me.evolve_density_matrix(gen, me.excited_state(4), tf, n_out=21, method="ode")
    assert np.max(np.abs(a.P_e - b.P_e)) < 1e-8
    assert np.allclose(a.sector_populations.sum(axis=1), 1.0, atol=1e-10)
    # pair processes conserve excitation parity
    assert np.allclose(a.sector_populations[:, [1, 3]], 0.0, atol=1e-12)
    assert a.min_eigenvalue > -me.POSITIVITY_TOL
    assert np.all(np.diff(a.P_e) <= 1e-12)


def test_single_excitation_sector_is_frozen():
    gen = me.build_generator(cp.EmitterEnsemble((0, 1, 4), WE, G), LAT)
    idx, Hs = gen.sector(1)
    assert np.max(np.abs(Hs)) == 0.0


def test_same_site_pair_normalization():
    cal = me.calibrate_pair_normalization(WE, G, LAT)
    assert cal["ratio"] == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("x", [2, 5])
def test_two_excitation_block_of_equally_spaced_quartet(x):
    ens = cp.EmitterEnsemble((0, x, 2 * x, 3 * x), WE, G)
    gen = me.build_generator(ens, LAT)
    idx, Hs = gen.sector(2)
    fx = gen.amplitude.f_matrix[0, 1]
    f3x = gen.amplitude.f_matrix[0, 3]
    sel = [int(np.nonzero(idx == int(b, 2))[0][0]) for b in ("1001", "0110")]
    block = Hs[np.ix_(sel, sel)]
    ref = -0.5j * gen.Gamma0 * np.array([[f3x**2, fx * f3x], [fx * f3x, fx**2]])
    assert np.max(np.abs(block - ref)) < 1e-12 * gen.Gamma0 * abs(fx) ** 2


def test_trap_dark_state():
    tr = me.semianalytic_trap(cp.EmitterEnsemble((0, 3, 6, 9), WE, G), LAT)
    assert tr.dark_residual < 1e-10
    assert 0 < tr.P_e_infinity_general < 0.5
    with pytest.raises(ValidationError):
        me.semianalytic_trap(cp.EmitterEnsemble((0, 1, 3, 4), WE, G), LAT)


def test_eigen_analysis_sorted_and_json():
    gen = me.build_generator(cp.EmitterEnsemble((0, 3, 6, 9), WE, G), LAT)
    rep = me.eigen_analysis(gen, 2)
    assert np.all(np.diff(rep.rates) >= 0)
    assert rep.dark[0]
    assert '"sector": 2' in rep.to_json()


def test_local_T1_decay():
    gen = me.build_generator_from_matrix(np.zeros((1, 1)), 1.0, 2, T1=10.0)
    s = me.evolve_density_matrix(gen, me.excited_state(2), 30.0, n_out=7)
    assert np.allclose(s.P_e, np.exp(-s.t / 10.0), atol=1e-12)


def test_local_T2_dephasing():
    gen = me.build_generator_from_matrix(np.zeros((0, 0)), 1.0, 1, T2=4.0)
    plus = np.full((2, 2), 0.5, dtype=complex)
    s = me.evolve_density_matrix(gen, plus, 8.0, n_out=5)
    assert s.rho_final[0, 1].real == pytest.approx(0.5 * np.exp(-8.0 / 4.0), rel=1e-10)
    assert s.P_e == pytest.approx(np.full(5, 0.5))


def test_local_channels_via_helper():
    gen = me.build_generator(cp.EmitterEnsemble((0, 0), WE, G), LAT)
    with_T1 = me.build_generator(cp.EmitterEnsemble((0, 0), WE, G, T1=1e5), LAT)
    a = me.evolve_with_local_channels(gen, 1e5, np.inf, me.excited_state(2), 1e5, n_out=5)
    b = me.evolve_density_matrix(with_T1, me.excited_state(2), 1e5, n_out=5)
    assert np.allclose(a.P_e, b.P_e, atol=1e-12)
    with pytest.raises(ValidationError):
        me.evolve_with_local_channels(with_T1, 1.0, 1.0, me.excited_state(2), 1.0)


def test_non_psd_pair_matrix_rejected():
    with pytest.raises(PhysicsError):
        me.build_generator_from_matrix(np.array([[-1.0]]), 1.0, 2)


def test_size_and_shape_validation():
    with pytest.raises(ValidationError):
        me.build_generator_from_matrix(np.zeros((2, 2)), 1.0, 2)
    gen = me.build_generator(cp.EmitterEnsemble((0, 0), WE, G), LAT)
    with pytest.raises(ValidationError):
        me.evolve_density_matrix(gen, me.excited_state(3), 1.0)
    with pytest.raises(ValidationError):
        gen.sector(5)


def test_series_csv(tmp_path):
    gen = me.build_generator(cp.EmitterEnsemble((0, 0), WE, G), LAT)
    s = me.evolve_density_matrix(gen, me.excited_state(2), 1e4, n_out=5)
    s.to_csv(tmp_path / "me.csv")
    data = np.loadtxt(tmp_path / "me.csv", delimiter=",", skiprows=1)
    assert np.allclose(data[:, 1], s.P_e, rtol=1e-11)
