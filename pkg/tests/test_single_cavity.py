import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from supercorr import collective_spin as cs
from supercorr import single_cavity as sc
from supercorr.errors import ValidationError


def test_resonant_rate_closed_form():
    m = sc.CavityModel.resonant(10, U=2.0, g=0.1, kappa1=0.0, kappa2=1.0)
    r = sc.effective_rate(m)
    assert r.A == pytest.approx(8 * 0.1**4 / (2.0**2 * 1.0))
    assert r.A.imag == 0.0
    assert r.Gamma == pytest.approx(2 * r.A.real)


@given(U=st.floats(0.5, 10), g=st.floats(0.01, 0.3), k2=st.floats(0.1, 5),
       d=st.floats(-3, 3))
@settings(max_examples=40)
def test_rate_positive_and_maximal_on_resonance(U, g, k2, d):
    base = sc.CavityModel.resonant(4, U, g, 0.0, k2)
    om = base.omega_e + d
    if abs(base.omega_c - om) < 1e-3:
        return
    det = sc.CavityModel(4, U, g, 0.0, k2, om)
    r = sc.effective_rate(det)
    assert r.A.real > 0
    assert r.Gamma <= 2 * r.G**2 / k2 * (1 + 1e-12)


def test_no_coupling_keeps_emitters_excited():
    m = sc.CavityModel.resonant(4, U=2.0, g=0.0, kappa1=0.01, kappa2=1.0)
    s = sc.evolve_full_cavity(m, 10.0, n_out=6)
    assert np.allclose(s.Sz, 2.0, atol=1e-12)
    assert sc.validity_bound(m).ok and sc.validity_bound(m).Gamma == 0.0


@pytest.mark.parametrize("N", [3, 4, 6])
def test_full_model_vs_tensor_product_oracle(N):
    m = sc.CavityModel.resonant(N, U=2.0, g=0.3, kappa1=0.01, kappa2=1.0, n_ph_max=4)
    t = np.linspace(0.0, 6.0, 7)
    s = sc.evolve_full_cavity(m, times=t, check_cutoff=False)
    ref = oracles.dense_cavity_Sz(N, 2.0, 0.3, 0.01, 1.0, m.Delta, 4, t)
    assert np.max(np.abs(s.Sz - ref)) < 1e-10
    assert np.allclose(s.fock.sum(axis=1), 1.0, atol=1e-10)


def test_two_emitters_end_in_ground_state():
    m = sc.CavityModel.resonant(2, U=2.0, g=0.2, kappa1=0.0, kappa2=1.0)
    s = sc.evolve_full_cavity(m, 3000.0, n_out=11)
    assert s.Sz[-1] == pytest.approx(-1.0, abs=1e-4)
    assert s.cutoff_change < sc.CUTOFF_TOL


@pytest.mark.parametrize("N", [4, 20])
def test_effective_model_vs_rate_equations(N):
    m = sc.CavityModel.resonant(N, U=2.0, g=0.05, kappa1=0.0, kappa2=1.0)
    Gam = sc.effective_rate(m).Gamma
    tf = 2 * cs.mean_first_passage_time(N, "two-photon", Gam)
    eff = sc.evolve_effective_cavity(m, tf, n_out=21)
    rate = cs.evolve_rate_equations(N, Gam, "two-photon", t_final=tf, n_out=21)
    assert np.max(np.abs(eff.Sz - rate.Sz)) < 1e-8 * N


def test_effective_model_matches_full_model_in_weak_coupling():
    m = sc.CavityModel.resonant(4, U=2.0, g=0.05, kappa1=0.0, kappa2=1.0)
    Gam = sc.effective_rate(m).Gamma
    tf = 2 * cs.mean_first_passage_time(4, "two-photon", Gam)
    full = sc.evolve_full_cavity(m, tf, n_out=11)
    eff = sc.evolve_effective_cavity(m, tf, n_out=11)
    assert np.max(np.abs(full.Sz - eff.Sz)) < 0.05 * 2


def test_validity_ratio():
    m = sc.CavityModel.resonant(10, U=2.0, g=0.1, kappa1=0.0, kappa2=1.0)
    v = sc.validity_bound(m)
    assert v.ratio == pytest.approx(v.Gamma * 1000)
    assert v.ok == (v.ratio <= 1)
    assert sc.validity_bound(m, N=100).ratio == pytest.approx(v.ratio * 1000)


def test_kappa_ratio_flag():
    assert sc.CavityModel.resonant(2, 2.0, 0.1, 0.05, 1.0).kappa_ratio_ok
    assert not sc.CavityModel.resonant(2, 2.0, 0.1, 0.5, 1.0).kappa_ratio_ok


def test_validation():
    with pytest.raises(ValidationError, match="kappa"):
        sc.CavityModel.resonant(2, 2.0, 0.1, 0.0, 0.0)
    with pytest.raises(ValidationError, match="n_ph_max"):
        sc.CavityModel.resonant(2, 2.0, 0.1, 0.0, 1.0, n_ph_max=1)
    with pytest.raises(ValidationError, match="omega_e"):
        sc.CavityModel(2, 2.0, 0.1, 0.0, 1.0, omega_e=0.0)
    m = sc.CavityModel.resonant(2, 2.0, 0.1, 0.0, 1.0)
    with pytest.raises(ValidationError):
        sc.evolve_full_cavity(m, times=[0.0, 2.0, 1.0])
    with pytest.raises(ValidationError):
        sc.evolve_effective_cavity(m, times=[0.0, 1.0, 3.0])


def test_series_csv(tmp_path):
    m = sc.CavityModel.resonant(2, 2.0, 0.2, 0.0, 1.0)
    s = sc.evolve_full_cavity(m, 5.0, n_out=6, check_cutoff=False)
    eff = sc.evolve_effective_cavity(m, 5.0, n_out=6)
    s.to_csv(tmp_path / "c.csv", Sz_effective=eff.Sz)
    data = np.loadtxt(tmp_path / "c.csv", delimiter=",", skiprows=1)
    assert data.shape == (6, 3 + m.n_ph_max + 1)
    assert np.allclose(data[:, 2], eff.Sz, rtol=1e-11, atol=1e-12)
