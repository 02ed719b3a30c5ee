import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

import oracles
from supercorr import collective_spin as cs
from supercorr.errors import ValidationError

MODELS = ["two-photon", "one-photon"]


@pytest.mark.parametrize("model", MODELS)
@pytest.mark.parametrize("N", [3, 6])
def test_rates_are_squared_matrix_elements(N, model):
    Sm = oracles.spin_lowering(N)
    op = Sm @ Sm if model == "two-photon" else Sm
    step = 2 if model == "two-photon" else 1
    S = N / 2
    m = S - np.arange(N + 1)
    rate_fn = cs.two_photon_rate if step == 2 else cs.one_photon_rate
    for i in range(N + 1):
        elem = op[i + step, i] ** 2 if i + step <= N else 0.0
        assert rate_fn(m[i], N, 1.0) == pytest.approx(elem, abs=1e-12)


@pytest.mark.parametrize("model", MODELS)
def test_rate_equations_vs_phase_type_oracle(model):
    N = 6
    t = np.linspace(0, 0.5, 11)
    pops = cs.evolve_rate_equations(N, 1.0, model, t_final=0.5, n_out=11)
    _, rate = cs.chain(N, model)
    ref = oracles.pure_death_populations(rate[:-1], t)
    assert np.max(np.abs(pops.p - ref)) < 1e-12


@pytest.mark.parametrize("model", MODELS)
def test_rate_equations_vs_dicke_master_equation(model):
    N = 5
    Sm = oracles.spin_lowering(N)
    L = oracles.dissipator(Sm @ Sm if model == "two-photon" else Sm)
    rho0 = np.zeros((N + 1) ** 2)
    rho0[0] = 1.0
    pops = cs.evolve_rate_equations(N, 1.0, model, t_final=1.0, n_out=5)
    S = N / 2
    for i, tt in enumerate(pops.t):
        rho = (linalg.expm(L * tt) @ rho0).reshape(N + 1, N + 1)
        Sz = np.real(np.diag(rho)) @ (S - np.arange(N + 1))
        assert pops.Sz[i] == pytest.approx(Sz, abs=1e-12)


def test_mean_first_passage_frozen():
    assert cs.mean_first_passage_time(4, "two-photon") == pytest.approx(1 / 12)
    assert cs.mean_first_passage_time(4, "one-photon") == pytest.approx(5 / 6)
    assert cs.mean_first_passage_time(4, "two-photon", 2.0) == pytest.approx(1 / 24)


def test_two_photon_parity():
    m, rate = cs.chain(7, "two-photon")
    assert np.allclose(m, [3.5, 1.5, -0.5, -2.5])
    assert rate[-1] == 0.0
    m, _ = cs.chain(6, "two-photon")
    assert m[-1] == -3.0


@given(N=st.integers(1, 40), model=st.sampled_from(MODELS), tf=st.floats(1e-4, 1.0))
@settings(max_examples=25, deadline=None)
def test_probability_conserved(N, model, tf):
    pops = cs.evolve_rate_equations(N, 1.0, model, t_final=tf, n_out=9)
    assert np.allclose(pops.p.sum(axis=1), 1.0, atol=1e-10)
    assert np.all(pops.p >= 0)
    assert np.all(np.diff(pops.Sz) <= 1e-10)


def test_two_emitter_half_decay_snapshot():
    pops = cs.evolve_rate_equations(2, 1.0, "two-photon")
    Th, m, p = cs.half_decay_snapshot(pops)
    assert Th == pytest.approx(np.log(2) / 4, rel=1e-10)
    assert p[0] == pytest.approx(0.5, abs=1e-10) and p[-1] == pytest.approx(0.5, abs=1e-10)


def test_correlation_parameter_bounds():
    C, t = cs.correlation_parameter(cs.evolve_rate_equations(2, 1.0, "two-photon"))
    assert C == pytest.approx(1.0, rel=1e-8)
    C1, _ = cs.correlation_parameter(cs.evolve_rate_equations(40, 1.0, "one-photon"))
    assert 0 < C1 < 1


def test_decay_time_interpolates():
    pops = cs.evolve_rate_equations(2, 1.0, "one-photon")
    # one emitter-pair chain 1 -> 0 -> -1 with rates 2, 2
    Td = cs.decay_time(pops)
    assert -0.9 == pytest.approx(np.interp(Td, pops.t, pops.Sz), abs=1e-3)


def test_mean_field():
    t = np.linspace(0, 1, 5)
    assert np.allclose(cs.mean_field_evolve(10, 0.0, "two-photon", t), 5 - 5e-3)
    s = cs.mean_field_evolve(10, 1.0, "one-photon", np.linspace(0, 2, 50))
    assert np.all(np.diff(s) < 0)


def test_trajectories_deterministic_and_batch_independent():
    a = cs.sample_trajectories(20, 1.0, "two-photon", 50, seed=7)
    b = cs.sample_trajectories(20, 1.0, "two-photon", 50, seed=7)
    c = cs.sample_trajectories(20, 1.0, "two-photon", 10, seed=7)
    assert np.array_equal(a.event_times, b.event_times)
    assert np.array_equal(a.event_times[:10], c.event_times)
    d = cs.sample_trajectories(20, 1.0, "two-photon", 50, seed=8)
    assert not np.array_equal(a.event_times, d.event_times)


def test_trajectory_average_matches_rate_equations():
    N = 20
    pops = cs.evolve_rate_equations(N, 1.0, "one-photon", n_out=31)
    ens = cs.sample_trajectories(N, 1.0, "one-photon", 4000, seed=1)
    mean, se = ens.average_Sz(pops.t)
    exact = 2 * pops.Sz / N
    sd = 2 * np.sqrt(pops.var / ens.n_traj) / N
    z = np.abs(mean - exact)[1:] / sd[1:]
    assert np.max(z) < 5


def test_dwell_and_transit_sum():
    ens = cs.sample_trajectories(10, 1.0, "one-photon", 20, seed=3)
    Te, Tt = cs.dwell_and_transit(ens)
    assert np.all(Te > 0) and np.all(Tt > 0)
    assert np.all(Te + Tt <= ens.event_times[:, -1] + 1e-12)
    tr = ens.trajectory(0)
    assert tr.m_at(0.0) == 5 and tr.m_at(tr.event_times[-1] + 1) == -5


def test_validation_and_aliases():
    assert cs._model("superradiance") == "one-photon"
    with pytest.raises(ValidationError):
        cs.chain(0, "two-photon")
    with pytest.raises(ValidationError):
        cs.chain(4, "three-photon")
    with pytest.raises(ValidationError):
        cs.evolve_rate_equations(4, -1.0, "two-photon")
    with pytest.raises(ValidationError):
        cs.sample_trajectories(4, 1.0, "two-photon", 0, seed=1)


def test_populations_csv(tmp_path):
    pops = cs.evolve_rate_equations(6, 1.0, "two-photon", n_out=11)
    pops.to_csv(tmp_path / "p.csv")
    data = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=1)
    assert np.allclose(data[:, 1], pops.Sz, rtol=1e-11, atol=1e-12)
