"""Emitter-pair coupling to the bound-pair continuum and derived rates.

Conventions: energies in units of J, ``omega_c`` is the cavity frequency,
``omega_e`` the emitter frequency (below the single-photon band).  The
two-emitter rate follows the Wigner-Weisskopf result

    Gamma = 2 g^4 / J^3 * f_{K0}(n1, n2)^2 * rho(K0),

which decays the doubly excited amplitude at Gamma / 2.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .bound_states import (LatticeParams, bound_wavefunction_1d, group_velocity_and_dos,
                           inverse_size_1d, resonant_K0)
from .errors import NumericalError, PhysicsError, ValidationError

__all__ = [
    "EmitterEnsemble",
    "CouplingTable",
    "AmplitudeTensor",
    "MarkovDiagnostic",
    "detuning_below_band",
    "pair_coupling_f",
    "pair_coupling_f_lattice",
    "pair_coupling_f_oracle",
    "gamma0",
    "decay_rate_two_emitters",
    "collective_gamma",
    "coupling_table",
    "amplitude_tensor",
    "photonic_fraction",
    "single_emitter_rate",
    "markov_check",
]


@dataclass(frozen=True)
class EmitterEnsemble:
    """Two-level emitters at integer sites ``positions`` (ascending)."""

    positions: tuple
    omega_e: float
    g: float
    T1: float = float("inf")
    T2: float = float("inf")

    def __post_init__(self):
        pos = tuple(int(p) for p in self.positions)
        if len(pos) == 0:
            raise ValidationError("positions", "need at least one emitter")
        if any(b < a for a, b in zip(pos, pos[1:])):
            raise ValidationError("positions", "must be ascending")
        object.__setattr__(self, "positions", pos)
        if not self.g > 0:
            raise ValidationError("g", "must be > 0")
        if not (self.T1 > 0 and self.T2 > 0):
            raise ValidationError("T1/T2", "must be positive (inf disables the channel)")

    @property
    def N(self) -> int:
        return len(self.positions)

    @property
    def extent(self) -> int:
        return self.positions[-1] - self.positions[0]


def detuning_below_band(omega_e: float, lat: LatticeParams) -> float:
    """delta_0 = omega_c - 2J - omega_e; must be positive."""
    d0 = lat.omega_c - 2 * lat.J - omega_e
    if not d0 > 0:
        raise PhysicsError(f"emitter frequency {omega_e:.6g} not below the propagation band "
                           f"(edge at {lat.omega_c - 2 * lat.J:.6g})")
    return d0


# ---------------------------------------------------------------- f_K(r)

def _L(q, K, lat):
    inv = inverse_size_1d(K, lat)
    if np.isinf(inv):
        return np.ones_like(q)
    psi0 = np.sqrt(np.tanh(inv))
    return np.sinh(inv) * psi0 / (np.cosh(inv) - np.cos(q))


def pair_coupling_f_lattice(K: float, r, lat: LatticeParams, omega_e: float, n_k: int):
    """Closed-form f_K(r) as the discrete momentum sum on ``n_k`` sites."""
    detuning_below_band(omega_e, lat)
    r = np.atleast_1d(np.asarray(r))
    k = 2 * np.pi * np.arange(n_k) / n_k
    q = k - K / 2
    terms = lat.J * _L(q, K, lat) / (lat.omega_c - 2 * lat.J * np.cos(k) - omega_e)
    f = 2 * np.sqrt(2) / n_k * np.cos(np.outer(r, q)) @ terms
    return f, 2 * np.sqrt(2) * np.mean(np.abs(terms))


def pair_coupling_f(K: float, r, lat: LatticeParams, omega_e: float,
                    rtol: float = 1e-6, n0: int = 64, max_doublings: int = 14):
    """Continuum-limit f_K(r), real and even in r.

    The k-grid is doubled until the change is below ``rtol`` relative to the
    scale of the integrand, so values of f near a node converge too."""
    scalar = np.ndim(r) == 0
    n = n0
    prev, _ = pair_coupling_f_lattice(K, r, lat, omega_e, n)
    for _ in range(max_doublings):
        n *= 2
        cur, scale = pair_coupling_f_lattice(K, r, lat, omega_e, n)
        if np.all(np.abs(cur - prev) <= rtol * np.maximum(np.abs(cur), 1e-3 * scale)):
            return float(cur[0]) if scalar else cur
        prev = cur
    raise NumericalError(f"f_K(r) not converged after {n} k-points "
                         f"(change {np.max(np.abs(cur - prev)):.2e})")


def pair_coupling_f_oracle(K: float, r: int, lat: LatticeParams, omega_e: float,
                           n_sites: int = 201, n_eta: int = 4, panel: float = 1.0,
                           nodes: int = 10) -> float:
    """f_K(r) from its time-integral definition on an open chain.

    The single-photon creation operators are evolved exactly (chain
    eigenbasis), the tau integral is done by Gauss-Legendre panels with an
    exp(-eta tau) regulator, and the limit eta -> 0 is taken by Richardson
    extrapolation over eta = delta_0 / 4, / 8, ...  Independent of the
    momentum-space closed form."""
    d0 = detuning_below_band(omega_e, lat)
    c = n_sites // 2
    n1, n2 = c + int(r), c
    if not (0 <= n1 < n_sites):
        raise ValidationError("r", "separation does not fit on the oracle chain")
    h = lat.omega_c * np.eye(n_sites) - lat.J * (np.eye(n_sites, k=1) + np.eye(n_sites, k=-1))
    lam, V = np.linalg.eigh(h)
    m = np.arange(n_sites)
    w1 = np.exp(1j * K * (n1 - m) / 2) * bound_wavefunction_1d(K, n2 - m, lat)
    w2 = np.exp(1j * K * (n2 - m) / 2) * bound_wavefunction_1d(K, n1 - m, lat)
    alpha = (V.T @ w1) * V[n1] + (V.T @ w2) * V[n2]
    omega = lam - omega_e

    etas = d0 / 4 / 2.0 ** np.arange(n_eta)
    t_max = 38.0 / etas[-1]
    x, wq = np.polynomial.legendre.leggauss(nodes)
    x = 0.5 * panel * (x + 1)
    wq = 0.5 * panel * wq
    n_panels = int(np.ceil(t_max / panel))
    acc = np.zeros(n_eta, dtype=complex)
    chunk = 2048
    for start in range(0, n_panels, chunk):
        p = np.arange(start, min(start + chunk, n_panels))
        tau = (p[:, None] * panel + x[None, :]).ravel()
        wt = np.tile(wq, p.size)
        integrand = np.exp(1j * np.outer(tau, omega)) @ alpha
        damp = np.exp(-np.outer(etas, tau))
        acc += damp @ (wt * integrand)
    vals = -1j * np.sqrt(2) * lat.J * acc
    # Richardson on the sequence eta_j = eta_0 / 2^j (error ~ sum a_n eta^n)
    table = vals.copy()
    for lvl in range(1, n_eta):
        fac = 2.0**lvl
        table = (fac * table[1:] - table[:-1]) / (fac - 1)
    return float(table[0].real)


# ---------------------------------------------------------------- rates

def gamma0(omega_e: float, g: float, lat: LatticeParams) -> float:
    """Rate scale Gamma_0 = 2 g^4 rho(K0) / J^3."""
    K0 = resonant_K0(omega_e, lat)
    _, rho = group_velocity_and_dos(K0, lat)
    return float(2 * g**4 * rho / lat.J**3)


@dataclass(frozen=True)
class MarkovDiagnostic:
    lhs: float
    rhs: float
    ratio: float
    valid: bool


def markov_check(ens: EmitterEnsemble, lat: LatticeParams) -> MarkovDiagnostic:
    """Compare g^2/J^2 with the pair group velocity v_g(K0)/J (divided by the
    ensemble extent for extended ensembles)."""
    K0 = resonant_K0(ens.omega_e, lat)
    vg, _ = group_velocity_and_dos(K0, lat)
    lhs = ens.g**2 / lat.J**2
    rhs = vg / lat.J
    if ens.N > 2 and ens.extent > 1:
        rhs /= ens.extent
    ratio = lhs / rhs
    return MarkovDiagnostic(lhs, rhs, ratio, ratio < 0.1)


def decay_rate_two_emitters(ens: EmitterEnsemble, lat: LatticeParams,
                            check_markov: bool = True) -> float:
    """Wigner-Weisskopf decay rate of the doubly excited state of two emitters."""
    if ens.N != 2:
        raise ValidationError("positions", "need exactly two emitters")
    if check_markov:
        diag = markov_check(ens, lat)
        if not diag.valid:
            raise PhysicsError(f"Markov condition violated (ratio {diag.ratio:.3g} >= 0.1)")
    K0 = resonant_K0(ens.omega_e, lat)
    f = pair_coupling_f(K0, ens.positions[0] - ens.positions[1], lat, ens.omega_e)
    return gamma0(ens.omega_e, ens.g, lat) * f**2


# Ratio between the collective-spin Gamma of a same-site ensemble and the
# Wigner-Weisskopf pair rate; fixed by matching the N = 2 master equation to
# the exact two-emitter decay (see master_equation.calibrate_pair_normalization).
COLLECTIVE_FRACTION = 0.25


def collective_gamma(omega_e: float, g: float, lat: LatticeParams) -> float:
    """Gamma entering the same-site collective two-photon master equation."""
    K0 = resonant_K0(omega_e, lat)
    f0 = pair_coupling_f(K0, 0, lat, omega_e)
    return COLLECTIVE_FRACTION * gamma0(omega_e, g, lat) * f0**2


@dataclass
class CouplingTable:
    K0: float
    f_values: dict
    Gamma0: float

    def gamma_pair(self, r: int) -> float:
        return self.Gamma0 * self.f_values[abs(r)] ** 2

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r [sites]", "f_K0 [1]", "Gamma_pair [J]"])
            for r, f in sorted(self.f_values.items()):
                w.writerow([r, f"{f:.12g}", f"{self.gamma_pair(r):.12g}"])


def coupling_table(omega_e: float, g: float, lat: LatticeParams, r_max: int) -> CouplingTable:
    K0 = resonant_K0(omega_e, lat)
    r = np.arange(r_max + 1)
    f = pair_coupling_f(K0, r, lat, omega_e)
    return CouplingTable(K0, {int(i): float(v) for i, v in zip(r, f)}, gamma0(omega_e, g, lat))


# ---------------------------------------------------------------- A_{ij,kl}

@dataclass
class AmplitudeTensor:
    """A_{ij,kl} = f(n_i - n_j) f(n_k - n_l) exp(i K0 |(n_k + n_l) - (n_i + n_j)| / 2)."""

    entries: np.ndarray
    K0: float
    f_matrix: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    def pairs(self) -> list:
        """Unordered emitter pairs (i < j), the index set of the decay matrix."""
        N = self.N
        return [(i, j) for i in range(N) for j in range(i + 1, N)]

    def pair_matrix(self) -> np.ndarray:
        """A restricted to unordered pairs: rows (i, j), columns (k, l)."""
        P = self.pairs()
        idx_i = np.array([p[0] for p in P], dtype=int)
        idx_j = np.array([p[1] for p in P], dtype=int)
        return self.entries[idx_i[:, None], idx_j[:, None], idx_i[None, :], idx_j[None, :]]


def amplitude_tensor(ens: EmitterEnsemble, lat: LatticeParams) -> AmplitudeTensor:
    K0 = resonant_K0(ens.omega_e, lat)
    n = np.array(ens.positions)
    sep = n[:, None] - n[None, :]
    r_vals = np.unique(np.abs(sep))
    f_r = pair_coupling_f(K0, r_vals, lat, ens.omega_e)
    f_mat = f_r[np.searchsorted(r_vals, np.abs(sep))]
    centre = n[:, None] + n[None, :]
    phase = np.exp(0.5j * K0 * np.abs(centre[None, None, :, :] - centre[:, :, None, None]))
    A = f_mat[:, :, None, None] * f_mat[None, None, :, :] * phase
    return AmplitudeTensor(A, K0, f_mat)


# ---------------------------------------------------------------- single emitter

def photonic_fraction(g: float, delta0: float, J: float = 1.0):
    """Photonic fraction sin^2(theta) of the emitter-photon bound state and its
    energy (relative to omega_c) for an emitter ``delta0`` below the band.

    With x = omega_c - E the bound state solves x - 2J - delta0 =
    g^2 / sqrt(x^2 - 4J^2), i.e. it is pushed below the emitter frequency."""
    if not delta0 > 0:
        raise PhysicsError("emitter must lie below the band (delta0 > 0)")
    x0 = 2 * J + delta0

    def h(x):
        return x - x0 - g**2 / np.sqrt(x**2 - 4 * J**2)

    x_hi = x0 + g**2 / np.sqrt(x0**2 - 4 * J**2)
    x = optimize.brentq(h, x0, x_hi, xtol=1e-15, rtol=1e-15)
    s2 = g**2 / (g**2 + (x**2 - 4 * J**2) ** 1.5 / x)
    return float(s2), float(-x)


@dataclass(frozen=True)
class SingleEmitterRate:
    rate: float
    sin2_theta: float
    precondition_ok: bool


def single_emitter_rate(ens: EmitterEnsemble, lat: LatticeParams) -> SingleEmitterRate:
    """Residual single-emitter decay 1/T1 + sin^2(theta) kappa."""
    d0 = detuning_below_band(ens.omega_e, lat)
    s2, _ = photonic_fraction(ens.g, d0, lat.J)
    T1inv = 0.0 if np.isinf(ens.T1) else 1.0 / ens.T1
    ok = lat.kappa < 0.1 * min(d0, ens.g, lat.J) or lat.kappa == 0
    return SingleEmitterRate(T1inv + s2 * lat.kappa, s2, bool(ok))
