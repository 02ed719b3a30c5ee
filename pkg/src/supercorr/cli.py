"""Scenario runner: ``supercorr run <config>``, ``supercorr run --builtin NAME``,
``supercorr list``.

A scenario is a kind (one of the builtin names) plus parameter overrides and
a seed.  Outputs are CSV tables (12 significant digits, units in the header
row), a ``summary.json`` with derived numbers and the scenario hash, and a
``manifest.json`` with output checksums.  Everything is written to a
temporary directory that is moved into place only after the run succeeded.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import io
import json
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import bound_states as bs
from . import collective_spin as cs
from . import coupling as cp
from . import exact_dynamics as ed
from . import master_equation as me
from . import single_cavity as sc
from .errors import NumericalError, PhysicsError, SupercorrError, ValidationError

__all__ = ["Scenario", "RunManifest", "Table", "BUILTINS", "list_builtins", "load_config",
           "run_scenario", "export", "main"]

TIME_UNIT = "1/J"


@dataclass
class Table:
    """Column-oriented numeric table; ``columns`` are "name [unit]" strings."""

    name: str
    columns: list
    data: np.ndarray

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.data.shape[1] != len(self.columns):
            raise ValidationError(self.name, f"{self.data.shape[1]} data columns for "
                                             f"{len(self.columns)} headers")


def _stack(name, columns, *cols) -> Table:
    return Table(name, list(columns), np.column_stack([np.asarray(c, dtype=float) for c in cols]))


# ---------------------------------------------------------------- scenarios

def _map(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _fig1c_curve(args):
    (U, omega_e, g, r), N_c, kappa, n_out = args
    lat = bs.LatticeParams(U=U, N_c=N_c, kappa=kappa)
    ens = cp.EmitterEnsemble((0, r), omega_e, g)
    rate = cp.decay_rate_two_emitters(ens, lat)
    K0 = bs.resonant_K0(omega_e, lat)
    vg, _ = bs.group_velocity_and_dos(K0, lat)
    window = ed.lap_limited_window(rate, float(vg), N_c)
    t = np.linspace(0.0, window[1], n_out)
    pair = ed.evolve_momentum_model(ens, lat, times=t)
    single = ed.evolve_single_emitter(omega_e, g, lat, times=t)
    fit = ed.fit_decay_rate(t, pair.P_e, window)
    g1 = cp.single_emitter_rate(cp.EmitterEnsemble((0,), omega_e, g), lat)
    table = _stack("", ["t [1/J]", "P_e N=2 exact [1]", "P_e N=2 rate formula [1]",
                        "P_e N=1 exact [1]", "P_e N=1 residual rate [1]"],
                   t, pair.P_e, np.exp(-rate * t), single.P_e, np.exp(-g1.rate * t))
    info = {"U": U, "omega_e": omega_e, "g": g, "separation": r, "K0_over_pi": K0 / np.pi,
            "rate_formula": rate, "rate_fit": fit.rate, "rate_fit_stderr": fit.stderr,
            "fit_over_formula": fit.rate / rate, "fit_window": list(map(float, window)),
            "single_emitter_rate": g1.rate, "sin2_theta": g1.sin2_theta}
    return table, info


def _run_fig1c(p, seed, workers):
    jobs = [(tuple(c), p["N_c"], p["kappa"], p["n_out"]) for c in p["curves"]]
    tables, infos = [], []
    for i, (tab, info) in enumerate(_map(_fig1c_curve, jobs, workers)):
        tab.name = f"fig1c_curve{i}"
        tables.append(tab)
        infos.append(info)
    return tables, {"curves": infos}


def _run_fig2b(p, seed, workers):
    n = np.arange(-p["n_max"], p["n_max"] + 1)
    n1, n2 = np.meshgrid(n, n, indexing="ij")
    rows, info = [], []
    for U in p["U_values"]:
        lat = bs.LatticeParams(U=U)
        # K0 = 0: 2 omega_e sits at the bottom of the bound band
        omega_e = lat.omega_c - np.sqrt(U**2 + 16 * lat.J**2) / 2
        r = np.arange(0, 2 * p["n_max"] + 1)
        f = np.asarray(cp.pair_coupling_f(0.0, r, lat, omega_e), dtype=float)
        fr = f[np.abs(n1 - n2)]
        rows.append(np.column_stack([np.full(fr.size, U), n1.ravel(), n2.ravel(), fr.ravel()]))
        below = np.nonzero(np.abs(f) < np.abs(f[0]) / np.e)[0]
        if len(below):
            k = below[0]
            # linear interpolation of |f| between r = k-1 and r = k
            a, b = abs(f[k - 1]), abs(f[k])
            L_e = (k - 1) + (a - abs(f[0]) / np.e) / (a - b)
        else:
            L_e = float("nan")
        info.append({"U": U, "omega_e": omega_e, "lambda_K0": bs.bound_state_1d(0.0, lat).lambda_K,
                     "f_decay_length_1e": float(L_e)})
    table = Table("fig2b_f_K0", ["U [J]", "n1 [site]", "n2 [site]", "f_K0 [1]"], np.vstack(rows))
    return [table], {"U_values": info}


def _fig3a_run(args):
    x, p = args
    lat = bs.LatticeParams(U=p["U"])
    ens = cp.EmitterEnsemble(tuple(x * np.arange(4)), p["omega_e"], p["g"])
    gen = me.build_generator(ens, lat)
    trap = me.semianalytic_trap(ens, lat)
    t = np.concatenate([[0.0], np.logspace(p["log_t_min"], p["log_t_max"], p["n_out"] - 1)]) / gen.Gamma0
    s = me.evolve_density_matrix(gen, me.excited_state(4), times=t)
    table = _stack(f"fig3a_x{x}", ["t [1/J]", "P_e master equation [1]", "P_e semi-analytic plateau [1]"],
                   t, s.P_e, np.full(len(t), trap.P_e_infinity))
    info = {"x": x, "Gamma0": gen.Gamma0, "rank": trap.rank, "dark_residual": trap.dark_residual,
            "alpha_over_beta": trap.alpha_over_beta, "P_e_infinity": trap.P_e_infinity,
            "P_e_final_master_equation": float(s.P_e[-1])}
    return table, info


def _run_fig3a(p, seed, workers):
    out = _map(_fig3a_run, [(x, p) for x in p["spacings"]], workers)
    return [o[0] for o in out], {"spacings": [o[1] for o in out]}


def _fig4_panels(p, seed, panels):
    N, G = p["N"], p["Gamma"]
    tables, info = [], {}
    models = ("two-photon", "one-photon")
    if "a" in panels:
        for model in models:
            for Nv in p["N_values"]:
                pops = cs.evolve_rate_equations(Nv, G, model, n_out=p["n_out"])
                tables.append(_stack(f"fig4a_{model}_N{Nv}",
                                     ["t [1/Gamma]", "<S_z> [1]", "2<S_z>/N [1]", "4Var(S_z)/N^2 [1]"],
                                     pops.t, pops.Sz, 2 * pops.Sz / Nv, 4 * pops.var / Nv**2))
    if "b" in panels:
        snap = {}
        cols = []
        for model in models:
            pops = cs.evolve_rate_equations(N, G, model, n_out=p["n_out"])
            Th, m_all, pm = cs.half_decay_snapshot(pops)
            snap[model] = {"T_h": Th, "p_plus_S": float(pm[-1]), "p_minus_S": float(pm[0]),
                           "p_zero": float(pm[np.argmin(np.abs(m_all))])}
            cols.append(pm)
        tables.append(_stack("fig4b_snapshot", ["m [1]", "p_m two-photon [1]", "p_m one-photon [1]"],
                             m_all, *cols))
        info["snapshot"] = snap
    for panel, model in (("c", "two-photon"), ("d", "one-photon")):
        if panel not in panels:
            continue
        pops = cs.evolve_rate_equations(N, G, model, n_out=p["n_out"])
        ens = cs.sample_trajectories(N, G, model, p["n_traj"], seed)
        mu, se = ens.average_Sz(pops.t)
        m = ens.m_at(pops.t)
        var = 4 * m.var(axis=0) / N**2
        examples = [2 * ens.trajectory(i).m_at(pops.t) / N for i in range(min(p["n_examples"], ens.n_traj))]
        tables.append(_stack(f"fig4{panel}_{model}_trajectories",
                             ["t [1/Gamma]", "2<S_z>/N trajectories [1]", "stderr [1]",
                              "2<S_z>/N rate equations [1]", "4Var(S_z)/N^2 trajectories [1]"]
                             + [f"2m/N example {i} [1]" for i in range(len(examples))],
                             pops.t, mu, se, 2 * pops.Sz / N, var, *examples))
        Te, Tt = cs.dwell_and_transit(ens)
        info[f"trajectories_{model}"] = {"n_traj": ens.n_traj, "seed": seed,
                                         "mean_T_e": float(Te.mean()), "mean_T_t": float(Tt.mean())}
    return tables, info


def _fig4_runner(panels):
    def run(p, seed, workers):
        return _fig4_panels(p, seed, panels)
    return run


def _run_sm_bound(p, seed, workers):
    tables, info = [], {}
    rows = []
    for U in p["U_1d"]:
        band = bs.band_table(bs.LatticeParams(U=U), p["n_K"])
        for k, st, v, d in zip(band.K_grid, band.states, band.group_velocity, band.dos):
            rows.append([U, k, st.energy, st.lambda_K, v, d])
    tables.append(Table("sm_bound_1d", ["U [J]", "K [1/site]", "E_K [J]", "lambda_K [site]",
                                        "v_g [J site]", "rho [1]"], rows))
    rows = []
    for dim in (2, 3):
        for U in p[f"U_{dim}d"]:
            lat = bs.LatticeParams(U=U, dimension=dim)
            for s in np.linspace(0.0, 1.0, p["n_diag"]):
                K = np.full(dim, s * np.pi)
                E = bs.solve_bound_energy_nd(K, lat)
                lower = 2 * lat.omega_c - 4 * lat.J * np.abs(np.cos(K / 2)).sum()
                rows.append([dim, U, s * np.pi, np.nan if E is None else E, lower, -U])
    tables.append(Table("sm_bound_nd", ["dimension [1]", "U [J]", "K_diagonal [1/site]",
                                        "E_bound [J]", "continuum lower edge [J]",
                                        "bound band upper limit [J]"], rows))
    info["critical_U_3d"] = bs.critical_U(3)
    r = np.arange(-p["r_max"], p["r_max"] + 1)
    for U in p["U_wavefunction_2d"]:
        psi = bs.bound_wavefunction_nd(np.zeros(2), bs.LatticeParams(U=U, dimension=2), p["r_max"])
        x, y = np.meshgrid(r, r, indexing="ij")
        tables.append(_stack(f"sm_bound_wavefunction_2d_U{U:g}", ["x [site]", "y [site]", "psi [1]"],
                             x.ravel(), y.ravel(), psi.ravel()))
    return tables, info


def _run_sm_dynamics(p, seed, workers):
    jobs = [((p["U"], p["omega_e"], g, 0), p["N_c"], p["kappa"], p["n_out"]) for g in p["g_values"]]
    tables, infos = [], []
    for g, (tab, inf) in zip(p["g_values"], _map(_fig1c_curve, jobs, workers)):
        tab.name = f"sm_dynamics_g{g:g}"
        tables.append(tab)
        infos.append(inf)
    return tables, {"curves": infos}


def _run_sm_scattering(p, seed, workers):
    lat = bs.LatticeParams(U=p["U"], N_c=p["N_c"], kappa=p["kappa"])
    ens = cp.EmitterEnsemble((0, 0), p["omega_e"], p["g"])
    t = np.linspace(0.0, p["t_final"], p["n_out"])
    mom = ed.evolve_momentum_model(ens, lat, times=t)
    real = ed.evolve_realspace_model(ens, lat, times=t)
    rate = cp.decay_rate_two_emitters(ens, lat, check_markov=False)
    table = _stack("sm_scattering", ["t [1/J]", "P_e with scattering states [1]",
                                     "P_e bound states only [1]", "P_e rate formula [1]"],
                   t, real.P_e, mom.P_e, np.exp(-rate * t))
    return [table], {"max_deviation": float(np.max(np.abs(real.P_e - mom.P_e))),
                     "matvecs": real.meta.get("matvecs")}


def _run_sm_subradiance(p, seed, workers):
    lat = bs.LatticeParams(U=p["U"])
    ens = cp.EmitterEnsemble(tuple(p["positions"]), p["omega_e"], p["g"])
    gen = me.build_generator(ens, lat)
    t = np.concatenate([[0.0], np.logspace(p["log_t_min"], p["log_t_max"], p["n_out"] - 1)]) / gen.Gamma0
    s = me.evolve_density_matrix(gen, me.excited_state(ens.N), times=t)
    rep = me.eigen_analysis(gen, 2)
    table = _stack("sm_subradiance", ["t [1/J]", "P_e [1]"]
                   + [f"population {n} excitations [1]" for n in range(s.sector_populations.shape[1])],
                   t, s.P_e, *s.sector_populations.T)
    rates = Table("sm_subradiance_rates", ["mode [1]", "rate/Gamma0 [1]"],
                  np.column_stack([np.arange(len(rep.rates)), rep.rates / gen.Gamma0]))
    return [table, rates], {"Gamma0": gen.Gamma0, "n_dark": int(np.sum(rep.dark)),
                            "n_subradiant": int(np.sum(rep.subradiant)),
                            "slowest_rate_over_Gamma0": float(np.min(rep.rates) / gen.Gamma0)}


def _run_sm_meanfield(p, seed, workers):
    tables, info = [], {}
    N, G = p["N"], p["Gamma"]
    for model in ("two-photon", "one-photon"):
        pops = cs.evolve_rate_equations(N, G, model, n_out=p["n_out"])
        mf = cs.mean_field_evolve(N, G, model, pops.t)
        tables.append(_stack(f"sm_meanfield_{model}", ["t [1/Gamma]", "<S_z> master equation [1]",
                                                       "<S_z> mean field [1]"], pops.t, pops.Sz, mf))
        info[model] = {"max_deviation_over_S": float(np.max(np.abs(pops.Sz - mf)) / (N / 2))}
    rows = []
    for Nv in p["C_N_values"]:
        row = [Nv]
        for model in ("two-photon", "one-photon"):
            row.append(cs.correlation_parameter(cs.evolve_rate_equations(Nv, G, model,
                                                                         n_out=p["n_out"]))[0])
        rows.append(row)
    tables.append(Table("sm_meanfield_correlation", ["N [1]", "C two-photon [1]", "C one-photon [1]"],
                        rows))
    return tables, info


def _run_sm_t1t2(p, seed, workers):
    lat = bs.LatticeParams(U=p["U"])
    ens = cp.EmitterEnsemble((0, 0), p["omega_e"], p["g"])
    gen = me.build_generator(ens, lat)
    Gamma = cp.collective_gamma(p["omega_e"], p["g"], lat)
    t = np.linspace(0.0, p["t_final_Gamma"] / Gamma, p["n_out"])
    cols = [t, me.evolve_density_matrix(gen, me.excited_state(2), times=t).P_e]
    names = ["t [1/J]", "P_e two-photon only [1]"]
    for inv_T1, inv_T2 in p["local_rates"]:
        s = me.evolve_with_local_channels(gen, 1.0 / (inv_T1 * Gamma), 1.0 / (inv_T2 * Gamma),
                                          me.excited_state(2), times=t)
        cols.append(s.P_e)
        names.append(f"P_e T1^-1={inv_T1:g}Gamma T2^-1={inv_T2:g}Gamma [1]")
    return [_stack("sm_t1t2", names, *cols)], {"Gamma": Gamma}


def _run_sm_cavity(p, seed, workers):
    model = sc.CavityModel.resonant(p["N"], p["U"], p["g"], p["kappa1"], p["kappa2"],
                                    n_ph_max=p["n_ph_max"])
    Gamma = sc.effective_rate(model).Gamma
    tf = p["t_final_mfpt"] * cs.mean_first_passage_time(model.N, "two-photon", Gamma)
    full = sc.evolve_full_cavity(model, tf, p["n_out"], check_cutoff=p["check_cutoff"])
    eff = sc.evolve_effective_cavity(model, tf, p["n_out"])
    table = _stack("sm_cavity", ["t [1/kappa2]", "<S_z> full [1]", "<S_z> effective [1]"]
                   + [f"p_{n} [1]" for n in range(full.fock.shape[1])],
                   full.t, full.Sz, eff.Sz, *full.fock.T)
    vb = sc.validity_bound(model)
    return [table], {"Gamma": Gamma, "validity_ratio": vb.ratio, "validity_ok": vb.ok,
                     "max_deviation_over_S": float(np.max(np.abs(full.Sz - eff.Sz)) / (model.N / 2)),
                     "cutoff_change_over_S": full.cutoff_change,
                     "max_p_ge3": float(full.fock[:, 3:].max())}


@dataclass(frozen=True)
class Builtin:
    name: str
    description: str
    runtime: str
    runner: object = field(repr=False)
    params: dict = field(repr=False)


_FIG1C_CURVES = [[1.0, -2.04, 0.02, 0], [1.0, -2.04, 0.02, 5], [4.0, -2.45, 0.1, 0]]
_FIG4 = {"N": 100, "Gamma": 1.0, "n_out": 401, "n_traj": 10000, "n_examples": 5,
         "N_values": [20, 100, 500]}

BUILTINS = {b.name: b for b in [
    Builtin("fig1c", "pair decay vs rate formula, three curves, plus single-emitter residuals",
            "~2 min", _run_fig1c, {"curves": _FIG1C_CURVES, "N_c": 2001, "kappa": 3e-4, "n_out": 400}),
    Builtin("fig2b", "contour table of f_{K=0}(n1, n2) for U/J in {0.5, 1, 2, 4}", "~5 s",
            _run_fig2b, {"U_values": [0.5, 1.0, 2.0, 4.0], "n_max": 10}),
    Builtin("fig3a", "N=4 equal spacing: master equation and semi-analytic plateau", "~15 s",
            _run_fig3a, {"spacings": [1, 2, 3], "U": 1.0, "omega_e": -2.04, "g": 0.02,
                         "log_t_min": -3.0, "log_t_max": 4.0, "n_out": 141}),
    Builtin("fig4", "collective spin: rate equations, T_h snapshot, trajectories (N=100)", "~5 s",
            _fig4_runner("abcd"), _FIG4),
    Builtin("fig4a", "collective spin <S_z>(t) for both models", "~5 s", _fig4_runner("a"), _FIG4),
    Builtin("fig4b", "p_m snapshot at <S_z> = 0 (N=100)", "~2 s", _fig4_runner("b"), _FIG4),
    Builtin("fig4c", "two-photon jump trajectories (N=100)", "~5 s", _fig4_runner("c"), _FIG4),
    Builtin("fig4d", "one-photon jump trajectories (N=100)", "~5 s", _fig4_runner("d"), _FIG4),
    Builtin("sm-bound", "bound-state bands in 1D/2D/3D and 2D wavefunctions", "~10 s",
            _run_sm_bound, {"U_1d": [1.0, 4.0], "n_K": 101, "U_2d": [0.5, 2.0, 8.0],
                            "U_3d": [4.0, 8.0, 16.0], "n_diag": 21, "r_max": 10,
                            "U_wavefunction_2d": [1.0, 8.0]}),
    Builtin("sm-dynamics", "pair decay at larger couplings vs rate formula", "~1 min",
            _run_sm_dynamics, {"U": 1.0, "omega_e": -2.04, "g_values": [0.02, 0.035, 0.05],
                               "N_c": 2001, "kappa": 3e-4, "n_out": 400}),
    Builtin("sm-scattering", "real-space model with scattering states vs bound-state model", "~1 min",
            _run_sm_scattering, {"U": 1.0, "omega_e": -2.04, "g": 0.035, "N_c": 601, "kappa": 3e-4,
                                 "t_final": 3000.0, "n_out": 61}),
    Builtin("sm-subradiance", "unequal spacing: two-excitation modes and plateau decay", "~5 s",
            _run_sm_subradiance, {"positions": [0, 1, 3, 6], "U": 1.0, "omega_e": -2.04, "g": 0.02,
                                  "log_t_min": -3.0, "log_t_max": 6.0, "n_out": 91}),
    Builtin("sm-meanfield", "mean field vs rate equations (N=1200) and C vs N", "~5 s",
            _run_sm_meanfield, {"N": 1200, "Gamma": 1.0, "n_out": 2001,
                                "C_N_values": [50, 100, 200, 400, 800]}),
    Builtin("sm-t1t2", "N=2 master equation with local T1/T2 channels", "~5 s",
            _run_sm_t1t2, {"U": 1.0, "omega_e": -2.04, "g": 0.035, "t_final_Gamma": 3.0, "n_out": 301,
                           "local_rates": [[0.1, 0.2], [0.2, 0.4]]}),
    Builtin("sm-cavity", "single Kerr cavity: full model vs effective two-photon decay (N=50)", "~15 s",
            _run_sm_cavity, {"N": 50, "U": 30.0, "g": 0.12, "kappa1": 0.01, "kappa2": 1.0,
                             "n_ph_max": 4, "t_final_mfpt": 3.0, "n_out": 301, "check_cutoff": True}),
]}


def list_builtins() -> list:
    """(name, description, runtime) in registry order."""
    return [(b.name, b.description, b.runtime) for b in BUILTINS.values()]


# ---------------------------------------------------------------- config

@dataclass
class Scenario:
    name: str
    kind: str
    params: dict
    seed: int = 0
    J_in_MHz: float | None = None

    @property
    def hash(self) -> str:
        blob = json.dumps({"kind": self.kind, "params": self.params, "seed": self.seed,
                           "version": __version__}, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_TOP_KEYS = {"name", "scenario", "params", "seed", "J_in_MHz"}


def _check_value(key, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValidationError(f"params.{key}", "must be a boolean")
    elif isinstance(default, (int, float)):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
            raise ValidationError(f"params.{key}", "must be a finite number")
        if isinstance(default, int) and int(value) != value:
            raise ValidationError(f"params.{key}", "must be an integer")
    elif isinstance(default, list):
        if not isinstance(value, list) or not value:
            raise ValidationError(f"params.{key}", "must be a non-empty list")
        flat = np.asarray(value, dtype=object).ravel()
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in flat):
            raise ValidationError(f"params.{key}", "must contain numbers only")


def scenario_from_dict(cfg: dict, seed: int | None = None) -> Scenario:
    if not isinstance(cfg, dict):
        raise ValidationError("config", "top level must be a mapping")
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ValidationError(sorted(unknown)[0], f"unknown key (allowed: {sorted(_TOP_KEYS)})")
    kind = cfg.get("scenario")
    if kind not in BUILTINS:
        raise ValidationError("scenario", f"must be one of {list(BUILTINS)}")
    params = copy.deepcopy(BUILTINS[kind].params)
    over = cfg.get("params") or {}
    if not isinstance(over, dict):
        raise ValidationError("params", "must be a mapping")
    for k, v in over.items():
        if k not in params:
            raise ValidationError(f"params.{k}", f"unknown parameter for scenario {kind!r}")
        _check_value(k, params[k], v)
        params[k] = v
    s = cfg.get("seed", 0) if seed is None else seed
    if isinstance(s, bool) or not isinstance(s, int) or s < 0:
        raise ValidationError("seed", "must be a non-negative integer")
    J_MHz = cfg.get("J_in_MHz")
    if J_MHz is not None:
        if isinstance(J_MHz, bool) or not isinstance(J_MHz, (int, float)) or J_MHz <= 0:
            raise ValidationError("J_in_MHz", "must be a positive number")
    name = cfg.get("name", kind)
    if not isinstance(name, str) or not name or os.sep in name or name.startswith("."):
        raise ValidationError("name", "must be a plain directory name")
    sc_ = Scenario(name, kind, params, int(s), J_MHz)
    _precheck(sc_)
    return sc_


def _precheck(s: Scenario) -> None:
    """Re-check physical invariants before any heavy work is dispatched."""
    p = s.params
    if s.kind in ("fig1c", "sm-dynamics"):
        curves = p["curves"] if s.kind == "fig1c" else [[p["U"], p["omega_e"], g, 0] for g in p["g_values"]]
        for c in curves:
            if len(c) != 4:
                raise ValidationError("params.curves", "each curve is [U, omega_e, g, separation]")
            lat = bs.LatticeParams(U=c[0], N_c=p["N_c"], kappa=p["kappa"])
            cp.EmitterEnsemble((0, int(c[3])), c[1], c[2])
            bs.resonant_K0(c[1], lat)
    elif s.kind == "sm-scattering":
        lat = bs.LatticeParams(U=p["U"], N_c=p["N_c"], kappa=p["kappa"])
        cp.EmitterEnsemble((0, 0), p["omega_e"], p["g"])
        bs.resonant_K0(p["omega_e"], lat)
    elif s.kind in ("fig3a", "sm-t1t2", "sm-subradiance"):
        lat = bs.LatticeParams(U=p["U"])
        bs.resonant_K0(p["omega_e"], lat)
    elif s.kind == "sm-cavity":
        sc.CavityModel.resonant(p["N"], p["U"], p["g"], p["kappa1"], p["kappa2"], n_ph_max=p["n_ph_max"])
    elif s.kind.startswith("fig4") or s.kind == "sm-meanfield":
        if p["N"] < 2 or p["Gamma"] <= 0:
            raise ValidationError("params.N", "need N >= 2 and Gamma > 0")
    for key in ("n_out", "n_traj", "N_c"):
        if key in p and p[key] < 2:
            raise ValidationError(f"params.{key}", "must be >= 2")


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SupercorrError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ValidationError("config", f"parse error in {path}: {exc}") from exc


# ---------------------------------------------------------------- export

def _fmt(v: float) -> str:
    return f"{v:.12g}"


def export(table: Table, fmt: str = "csv") -> str:
    """Serialize a table; CSV carries the units in its header row."""
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(",".join(table.columns) + "\n")
        for row in table.data:
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()
    if fmt == "json":
        cols = {c: [float(_fmt(v)) for v in table.data[:, i]] for i, c in enumerate(table.columns)}
        return json.dumps({"name": table.name, "columns": cols}, indent=1, allow_nan=True) + "\n"
    raise ValidationError("format", "must be 'csv' or 'json'")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(_fmt(float(x)))
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class RunManifest:
    scenario_hash: str
    version: str
    wall_time: float
    files: dict  # name -> sha256
    out_dir: str

    def to_json(self) -> str:
        return json.dumps({"scenario_hash": self.scenario_hash, "version": self.version,
                           "wall_time_s": round(self.wall_time, 3), "files": self.files},
                          indent=1, sort_keys=True) + "\n"


def run_scenario(scenario: Scenario, out_root=".", workers: int = 1, fmt: str = "csv") -> RunManifest:
    """Run, write outputs atomically into ``out_root/<name>``, return the manifest."""
    t0 = time.perf_counter()
    tables, summary = BUILTINS[scenario.kind].runner(scenario.params, scenario.seed, max(1, workers))
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{scenario.name}-", dir=out_root))
    try:
        files = {}

        def write(name, text):
            (tmp / name).write_text(text)
            files[name] = hashlib.sha256(text.encode()).hexdigest()

        for tab in tables:
            write(f"{tab.name}.{fmt}", export(tab, fmt))
        write("summary.json", json.dumps(_jsonable({
            "scenario": scenario.kind, "name": scenario.name, "scenario_hash": scenario.hash,
            "seed": scenario.seed, "version": __version__, "time_unit": TIME_UNIT,
            "J_in_MHz": scenario.J_in_MHz, "params": scenario.params, "results": summary}),
            indent=1, sort_keys=True) + "\n")
        manifest = RunManifest(scenario.hash, __version__, time.perf_counter() - t0, files,
                               str(out_root / scenario.name))
        (tmp / "manifest.json").write_text(manifest.to_json())
        final = out_root / scenario.name
        if final.exists():
            shutil.rmtree(final)
        os.replace(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return manifest


# ---------------------------------------------------------------- entry point

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="supercorr", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    run = sub.add_parser("run", help="run a config file or a builtin scenario")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("config", nargs="?", help="YAML or JSON scenario file")
    src.add_argument("--builtin", metavar="NAME", help="builtin scenario name")
    run.add_argument("--out", default="out", help="output root directory (default: out)")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--workers", type=int, default=1, help="worker processes for sub-runs")
    run.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    sub.add_parser("list", help="list builtin scenarios")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.cmd == "list":
        for name, desc, rt in list_builtins():
            print(f"{name:<16} {rt:>8}  {desc}")
        return 0
    try:
        if args.workers < 1:
            raise ValidationError("workers", "must be >= 1")
        cfg = {"scenario": args.builtin} if args.builtin else load_config(args.config)
        scenario = scenario_from_dict(cfg, seed=args.seed)
        manifest = run_scenario(scenario, args.out, args.workers, args.format)
    except SupercorrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: I/O failure at {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1
    print(f"wrote {len(manifest.files)} files to {manifest.out_dir} "
          f"(hash {manifest.scenario_hash[:12]}, {manifest.wall_time:.1f} s)")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
