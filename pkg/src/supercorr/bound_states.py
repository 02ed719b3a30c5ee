"""Two-photon bound states of the attractive Bose-Hubbard lattice.

In 1D everything is closed form.  For 2D and 3D hypercubic lattices the
binding condition

    1/U = P(eps),   P(eps) = (2 pi)^-d  int d^d q / (eps + sum_a b_a (1 - cos q_a)),

is solved in terms of the binding depth ``eps`` below the two-photon
continuum, with ``b_a = 4 J |cos(K_a / 2)|``.  Working with ``eps`` instead of
the energy avoids the cancellation near the continuum edge, where 2D bound
states sit exponentially close for small U.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .errors import NumericalError, PhysicsError, ValidationError

__all__ = [
    "LatticeParams",
    "BoundState",
    "BoundStateBand",
    "bound_energy_1d",
    "inverse_size_1d",
    "bound_wavefunction_1d",
    "bound_state_1d",
    "group_velocity_and_dos",
    "band_table",
    "binding_integral",
    "binding_integral_trapezoid",
    "binding_residual",
    "bound_exists",
    "binding_depth_nd",
    "solve_bound_energy_nd",
    "critical_U",
    "bound_wavefunction_nd",
    "resonant_K0",
]


@dataclass(frozen=True)
class LatticeParams:
    """Photonic lattice.  Energies in units of J, ``omega_c`` is the bare
    cavity frequency and ``kappa`` the per-cavity photon loss rate."""

    U: float
    omega_c: float = 0.0
    J: float = 1.0
    dimension: int = 1
    N_c: int = 3001
    kappa: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.U) or self.U <= 0:
            raise ValidationError("U", "must be > 0 (attractive interaction)")
        if not self.J > 0:
            raise ValidationError("J", "must be > 0")
        if self.dimension not in (1, 2, 3):
            raise ValidationError("dimension", "must be 1, 2 or 3")
        if int(self.N_c) != self.N_c or self.N_c < 3 or self.N_c % 2 == 0:
            raise ValidationError("N_c", "must be an odd integer >= 3")
        if not self.kappa >= 0:
            raise ValidationError("kappa", "must be >= 0")

    @property
    def band(self) -> tuple[float, float]:
        """Single-photon propagation band in 1D."""
        return (self.omega_c - 2 * self.J, self.omega_c + 2 * self.J)


@dataclass(frozen=True)
class BoundState:
    K: float
    energy: float
    lambda_K: float
    psi0: float


@dataclass
class BoundStateBand:
    K_grid: np.ndarray
    states: list = field(repr=False)
    group_velocity: np.ndarray = field(repr=False)
    dos: np.ndarray = field(repr=False)

    def rows(self):
        for st, vg, rho in zip(self.states, self.group_velocity, self.dos):
            yield (st.K, st.energy, st.lambda_K, vg, rho)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["K [rad]", "E_K_b [J]", "lambda_K [sites]", "v_g [J*sites]", "rho_tilde [1]"])
            for row in self.rows():
                w.writerow([f"{x:.12g}" for x in row])


# ---------------------------------------------------------------- 1D

def _J_K(K, lat: LatticeParams):
    return lat.J * np.abs(np.cos(np.asarray(K, dtype=float) / 2))


def bound_energy_1d(K, lat: LatticeParams):
    """E_K^b = 2 omega_c - sqrt(U^2 + 16 J_K^2).  Vectorised over K."""
    JK = _J_K(K, lat)
    return 2 * lat.omega_c - np.sqrt(lat.U**2 + 16 * JK**2)


def inverse_size_1d(K, lat: LatticeParams):
    """1/lambda_K = asinh(U / 4 J_K); infinite at K = +-pi."""
    JK = _J_K(K, lat)
    with np.errstate(divide="ignore"):
        return np.arcsinh(lat.U / (4 * JK))


def bound_wavefunction_1d(K, r, lat: LatticeParams):
    """Normalized relative wavefunction sqrt(tanh(1/lambda)) exp(-|r|/lambda)."""
    inv = inverse_size_1d(K, lat)
    r = np.abs(np.asarray(r))
    with np.errstate(invalid="ignore", over="ignore"):
        out = np.sqrt(np.tanh(inv)) * np.exp(-r * inv)
    # K = +-pi: fully localized pair
    return np.where(np.isinf(inv), (r == 0).astype(float), out)


def bound_state_1d(K: float, lat: LatticeParams) -> BoundState:
    inv = float(inverse_size_1d(K, lat))
    lam = 0.0 if np.isinf(inv) else 1.0 / inv
    psi0 = 1.0 if np.isinf(inv) else float(np.sqrt(np.tanh(inv)))
    return BoundState(float(K), float(bound_energy_1d(K, lat)), lam, psi0)


def group_velocity_and_dos(K, lat: LatticeParams):
    """Group velocity dE/dK and normalized density rho = J / v_g on 0 < K < pi."""
    K = np.asarray(K, dtype=float)
    if np.any(K <= 0) or np.any(K >= np.pi):
        raise PhysicsError("group velocity requested at or outside the band edges "
                           "(0 < K < pi required; the density diverges at K = 0)")
    J = lat.J
    vg = 4 * J**2 * np.sin(K) / np.sqrt(lat.U**2 + 16 * J**2 * np.cos(K / 2) ** 2)
    return vg, J / vg


def band_table(lat: LatticeParams, n_K: int = 201) -> BoundStateBand:
    """Tabulate the 1D bound band on an open grid inside (0, pi)."""
    K = np.pi * (np.arange(n_K) + 0.5) / n_K
    vg, rho = group_velocity_and_dos(K, lat)
    return BoundStateBand(K, [bound_state_1d(k, lat) for k in K], vg, rho)


def resonant_K0(omega_e: float, lat: LatticeParams) -> float:
    """Momentum K0 in (0, pi) of the bound pair resonant with two emitters,
    2 omega_e = E_{K0}^b.  The dispersion is inverted in closed form."""
    E_lo = float(bound_energy_1d(0.0, lat))
    E_hi = float(bound_energy_1d(np.pi, lat))
    E = 2 * omega_e
    if not (E_lo < E < E_hi):
        raise PhysicsError(
            f"emitter pair off-resonant: 2*omega_e = {E:.6g} outside the bound band "
            f"({E_lo:.6g}, {E_hi:.6g})")
    c2 = ((2 * lat.omega_c - E) ** 2 - lat.U**2) / (16 * lat.J**2)
    return float(2 * np.arccos(np.sqrt(c2)))


# ---------------------------------------------------------------- d > 1

def _hopping_scales(K_vec, lat: LatticeParams) -> np.ndarray:
    K_vec = np.atleast_1d(np.asarray(K_vec, dtype=float))
    if K_vec.size != lat.dimension:
        raise ValidationError("K_vec", f"needs {lat.dimension} components")
    return 4 * lat.J * np.abs(np.cos(K_vec / 2))


def _P1(s, b):
    # (1/2pi) int dq / (s + b (1 - cos q)) = 1 / sqrt(s (s + 2b))
    return 1.0 / np.sqrt(s * (s + 2 * b))


def _P2(s, b1, b2):
    # anisotropic square-lattice Green's function at depth s below the edge
    if b1 == 0 or b2 == 0:
        return _P1(s, b1 + b2)
    u, v = s + 2 * b1, s + 2 * b2
    one_minus_m = s * (s + 2 * b1 + 2 * b2) / (u * v)
    return (2 / np.pi) * special.ellipkm1(one_minus_m) / np.sqrt(u * v)


def _P3(s, b1, b2, b3):
    if b3 == 0:
        return _P2(s, b1, b2)

    def integrand(q):
        return _P2(s + 2 * b3 * np.sin(q / 2) ** 2, b1, b2)

    # log singularity at q = 0 when s -> 0: geometric breakpoints from the
    # crossover scale sqrt(s / b3) up to pi
    q_c = np.sqrt(max(s, 1e-300) / b3)
    edges = [0.0]
    q = q_c
    while q < np.pi:
        edges.append(q)
        q *= 8
    edges.append(np.pi)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(integrand, lo, hi, epsabs=0, epsrel=1e-11, limit=200)
        total += val
    return total / np.pi


def binding_integral(eps: float, K_vec, lat: LatticeParams) -> float:
    """P(eps) for binding depth ``eps`` > 0 below the continuum at ``K_vec``."""
    if not eps > 0:
        raise PhysicsError("pole in integrand: energy not below the two-photon continuum")
    b = np.sort(_hopping_scales(K_vec, lat))[::-1]
    if lat.dimension == 1:
        return float(_P1(eps, b[0]))
    if lat.dimension == 2:
        return float(_P2(eps, b[0], b[1]))
    return float(_P3(eps, b[0], b[1], b[2]))


def binding_integral_trapezoid(eps: float, K_vec, lat: LatticeParams,
                               rtol: float = 1e-7, n0: int = 16, n_max: int = 4096) -> float:
    """Brute tensor-product trapezoid evaluation of P(eps), doubling the grid
    until the relative change drops below ``rtol``.  Used as an independent
    check of :func:`binding_integral`; only practical at moderate depth."""
    b = _hopping_scales(K_vec, lat)
    d = lat.dimension
    prev = None
    n = n0
    while n <= n_max:
        q = 2 * np.pi * np.arange(n) / n
        w = 2 * np.sin(q / 2) ** 2
        den = np.full((n,) * d, eps)
        for a in range(d):
            shape = [1] * d
            shape[a] = n
            den = den + b[a] * w.reshape(shape)
        val = float(np.mean(1.0 / den))
        if prev is not None and abs(val - prev) <= rtol * abs(val):
            return val
        prev = val
        n *= 2
    raise NumericalError(f"trapezoid quadrature not converged to rtol={rtol} "
                         f"(last change {abs(val - prev) / abs(val):.2e})")


def binding_residual(E: float, K_vec, lat: LatticeParams) -> float:
    """1/U + (2 pi)^-d int d^d q / (E - 2 omega_c + sum_a 4 J_Ka cos q_a)."""
    b = _hopping_scales(K_vec, lat)
    eps = -(E - 2 * lat.omega_c) - b.sum()
    return 1.0 / lat.U - binding_integral(eps, K_vec, lat)


EPS_MIN = 1e-300


def bound_exists(K_vec, lat: LatticeParams, eps_min: float = EPS_MIN) -> bool:
    """Existence is a sign change of the residual: P(eps_min) > 1/U."""
    return binding_integral(eps_min, K_vec, lat) > 1.0 / lat.U


def binding_depth_nd(K_vec, lat: LatticeParams, eps_min: float = EPS_MIN):
    """Binding depth eps > 0 below the continuum, or ``None``.

    The root is bracketed in log(eps) between ``eps_min`` and U (P(eps) < 1/eps
    guarantees the root lies below U)."""
    if not bound_exists(K_vec, lat, eps_min):
        return None
    target = 1.0 / lat.U

    def h(x):
        return binding_integral(np.exp(x), K_vec, lat) - target

    lo, hi = np.log(eps_min), np.log(lat.U * 1.000001)
    x = optimize.brentq(h, lo, hi, xtol=1e-13, rtol=1e-14, maxiter=500)
    return float(np.exp(x))


def solve_bound_energy_nd(K_vec, lat: LatticeParams, eps_min: float = EPS_MIN):
    """Bound-state energy at ``K_vec`` or ``None`` if no bound state exists."""
    eps = binding_depth_nd(K_vec, lat, eps_min)
    if eps is None:
        return None
    return 2 * lat.omega_c - _hopping_scales(K_vec, lat).sum() - eps


def critical_U(dimension: int = 3, J: float = 1.0, eps_min: float = 1e-12) -> float:
    """Smallest U with a K = 0 bound state, from P(0+) = 1/U_c.  Existence is
    a sign change of the residual, so the bracket is found by bisection."""
    if dimension < 3:
        return 0.0
    K0 = np.zeros(dimension)
    # P(eps_min) does not depend on U, so evaluate it once
    P0 = binding_integral(eps_min, K0, LatticeParams(U=1.0, J=J, dimension=dimension))

    def exists(U):
        return P0 > 1.0 / U

    lo, hi = 1.0, 16 * np.pi
    if exists(lo) or not exists(hi):
        raise NumericalError("critical U not bracketed")
    while hi - lo > 1e-10 * hi:
        mid = 0.5 * (lo + hi)
        if exists(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def bound_wavefunction_nd(K_vec, lat: LatticeParams, r_max: int, n_grid: int | None = None):
    """Relative-coordinate wavefunction on [-r_max, r_max]^d.

    Computed as the inverse DFT of psi(q) ~ 1/(E - 2 omega_c + sum 4 J_K cos q)
    on a periodic grid large enough that wrap-around is negligible, and
    normalized over that whole grid."""
    eps = binding_depth_nd(K_vec, lat)
    if eps is None:
        raise PhysicsError("no bound state at this K for the given U")
    b = _hopping_scales(K_vec, lat)
    d = lat.dimension
    if n_grid is None:
        size = 1.0 / np.sqrt(max(eps, 1e-30) / max(b.max(), 1e-30))
        need = max(4 * r_max + 8, int(24 * size) + 1, 64)
        cap = {1: 1 << 16, 2: 1 << 12, 3: 1 << 8}[d]
        n_grid = min(1 << int(np.ceil(np.log2(need))), cap)
    q = 2 * np.pi * np.arange(n_grid) / n_grid
    w = 2 * np.sin(q / 2) ** 2
    den = np.full((n_grid,) * d, eps)
    for a in range(d):
        shape = [1] * d
        shape[a] = n_grid
        den = den + b[a] * w.reshape(shape)
    psi = np.fft.ifftn(1.0 / den).real
    psi /= np.sqrt(np.sum(psi**2))
    idx = np.arange(-r_max, r_max + 1) % n_grid
    return psi[np.ix_(*([idx] * d))]
