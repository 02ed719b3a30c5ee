"""Exact two-excitation dynamics of two emitters coupled to the lattice.

All models are written in the frame rotating at the emitter frequency, so
the doubly excited amplitude ``c_e`` has zero energy (in the lab frame it
carries the trivial phase exp(-2 i omega_e t)).  Photon loss enters as
-i kappa / 2 per photon.

Momentum model
    Doubly excited emitters, one emitter plus a photon ``k`` and the
    bound-pair manifold ``K``.  Scattering states are omitted.  The
    production path reduces the problem to the symmetric sector (emitter
    exchange combined with k -> -k parity) and propagates it exactly through
    an eigendecomposition.  The literal fixed-step RK4 integration of the
    unreduced equations is kept as a cross-check for small lattices.

Real-space model
    Emitters, one emitter plus a photon at site n, and the full symmetric
    two-photon amplitude Psi(n, m) on a ring, including the scattering
    states.  Propagated with a Chebyshev expansion whose two-photon step is a
    compiled kernel.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _kernels
from .bound_states import LatticeParams, bound_energy_1d, inverse_size_1d
from .coupling import EmitterEnsemble, detuning_below_band
from .errors import NumericalError, ValidationError

__all__ = [
    "DynamicsSeries",
    "MomentumModelState",
    "RealSpaceState",
    "DecayFit",
    "coupling_element_M",
    "evolve_momentum_model",
    "evolve_single_emitter",
    "single_emitter_bound_state",
    "evolve_realspace_model",
    "fit_decay_rate",
    "lap_limited_window",
]

NORM_TOL = 1e-6


@dataclass
class DynamicsSeries:
    """P_e(t) = |c_e|^2 + (sum |c_1|^2 + sum |c_2|^2) / 2 and the sector norms."""

    t: np.ndarray
    P_e: np.ndarray
    norm_e: np.ndarray
    norm_1ph: np.ndarray
    norm_2ph: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def norm(self) -> np.ndarray:
        return self.norm_e + self.norm_1ph + self.norm_2ph

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t [1/J]", "P_e [1]", "norm_e [1]", "norm_1ph [1]", "norm_2ph [1]"])
            for row in zip(self.t, self.P_e, self.norm_e, self.norm_1ph, self.norm_2ph):
                w.writerow([f"{v:.12g}" for v in row])


@dataclass
class MomentumModelState:
    c_e: complex
    c1k: np.ndarray
    c2k: np.ndarray
    cK: np.ndarray
    time: float

    def norm(self) -> float:
        return float(abs(self.c_e) ** 2 + np.sum(np.abs(self.c1k) ** 2)
                     + np.sum(np.abs(self.c2k) ** 2) + np.sum(np.abs(self.cK) ** 2))


@dataclass
class RealSpaceState:
    c_e: complex
    c1: np.ndarray
    c2: np.ndarray
    Psi: np.ndarray
    time: float

    def norm(self) -> float:
        return float(abs(self.c_e) ** 2 + np.sum(np.abs(self.c1) ** 2)
                     + np.sum(np.abs(self.c2) ** 2) + np.sum(np.abs(self.Psi) ** 2))


def _check_pair(ens: EmitterEnsemble, lat: LatticeParams):
    if ens.N != 2:
        raise ValidationError("positions", "exact dynamics needs exactly two emitters")
    if lat.dimension != 1:
        raise ValidationError("dimension", "exact dynamics is one-dimensional")
    if lat.N_c % 2 != 1 or lat.N_c < 5:
        raise ValidationError("N_c", "must be odd and >= 5")
    detuning_below_band(ens.omega_e, lat)


def _times(t_final, n_out, times):
    if times is not None:
        t = np.asarray(times, dtype=float)
        if t.ndim != 1 or np.any(np.diff(t) < 0) or t[0] < 0:
            raise ValidationError("times", "must be a non-negative ascending 1-D array")
        return t
    if not (t_final is not None and t_final > 0):
        raise ValidationError("t_final", "must be > 0")
    return np.linspace(0.0, float(t_final), int(n_out))


def _check_norm(series: DynamicsSeries, kappa: float):
    if kappa == 0:
        drift = float(np.max(np.abs(series.norm - 1.0)))
        series.meta["norm_drift"] = drift
        if drift > NORM_TOL:
            raise NumericalError(f"norm drift {drift:.3e} exceeds {NORM_TOL:g} at kappa = 0")


# ---------------------------------------------------------------- momentum model

def _L_lattice(q, K, lat: LatticeParams):
    """Sum_r exp(i q r) psi_K(r) for the normalised 1D bound pair."""
    inv = inverse_size_1d(K, lat)
    psi0 = np.sqrt(np.tanh(inv))
    return np.sinh(inv) * psi0 / (np.cosh(inv) - np.cos(q))


def coupling_element_M(k, n: int, K, lat: LatticeParams):
    """M(k, n, K) = <vac| a_k a_n B_K^dag |vac> on a ring of N_c sites."""
    k = np.asarray(k, dtype=float)
    K = np.asarray(K, dtype=float)
    q = k[..., :, None] - K[..., None, :] / 2
    return (np.sqrt(2) / lat.N_c) * np.exp(1j * (K[None, :] - k[:, None]) * n) \
        * _L_lattice(q, K[None, :], lat)


def _reduced_hamiltonian(ens: EmitterEnsemble, lat: LatticeParams):
    """Symmetric-sector Hamiltonian.

    Basis: c_e; even photon combinations S_j of emitter 1 and 2 (gauge
    c_1k e^{i k n_2}, c_2k e^{i k n_1}); odd combinations A_j (absent at
    r = 0); even bound-pair combinations. Returns (H, sizes)."""
    N, J, g = lat.N_c, lat.J, ens.g
    r = ens.positions[1] - ens.positions[0]
    h = (N - 1) // 2
    j = np.arange(h + 1)
    k = 2 * np.pi * j / N
    a = np.where(j == 0, 0.5, 1 / np.sqrt(2))

    def kernel(sign_k, trig):
        q = sign_k * k[:, None] - k[None, :] / 2
        return (np.sqrt(2) / N) * _L_lattice(q, k[None, :], lat) * trig(q * r)

    CS = np.sqrt(2) * g * 2 * a[:, None] * a[None, :] * (kernel(1, np.cos) + kernel(-1, np.cos))
    delta_k = lat.omega_c - 2 * J * np.cos(k) - ens.omega_e
    Delta_K = bound_energy_1d(k, lat) - 2 * ens.omega_e
    u = g / np.sqrt(N) * np.sqrt(2) * np.where(j == 0, 1.0, np.sqrt(2))

    ne, no = h + 1, (h if r != 0 else 0)
    D = 1 + ne + no + ne
    H = np.zeros((D, D), dtype=complex)
    s1 = slice(1, 1 + ne)
    s2 = slice(1 + ne, 1 + ne + no)
    s3 = slice(1 + ne + no, D)
    H[0, s1] = u
    H[s1, 0] = u
    H[s1, s1] = np.diag(delta_k - 0.5j * lat.kappa)
    H[s3, s3] = np.diag(Delta_K - 1j * lat.kappa)
    H[s1, s3] = CS
    H[s3, s1] = CS.T
    if no:
        # odd states multiplied by i so that their coupling is real
        CA = np.sqrt(2) * g * np.sqrt(2) * a[None, :] \
            * (kernel(1, np.sin) - kernel(-1, np.sin))[1:, :]
        H[s2, s2] = np.diag(delta_k[1:] - 0.5j * lat.kappa)
        H[s2, s3] = CA
        H[s3, s2] = CA.T
    return H, (1, ne, no, ne)


def _full_momentum_rhs(ens: EmitterEnsemble, lat: LatticeParams):
    """Unreduced coupled equations as a dense generator -i H (small N_c only)."""
    N = lat.N_c
    n1, n2 = ens.positions
    m = np.arange(N) - (N - 1) // 2
    k = 2 * np.pi * m / N
    delta_k = lat.omega_c - 2 * lat.J * np.cos(k) - ens.omega_e
    Delta_K = bound_energy_1d(k, lat) - 2 * ens.omega_e
    M1 = coupling_element_M(k, n1, k, lat)
    M2 = coupling_element_M(k, n2, k, lat)
    g = ens.g
    H = np.zeros((1 + 3 * N, 1 + 3 * N), dtype=complex)
    i1, i2, iK = slice(1, 1 + N), slice(1 + N, 1 + 2 * N), slice(1 + 2 * N, 1 + 3 * N)
    H[0, i1] = g / np.sqrt(N) * np.exp(1j * k * n2)
    H[0, i2] = g / np.sqrt(N) * np.exp(1j * k * n1)
    H[i1, 0] = H[0, i1].conj()
    H[i2, 0] = H[0, i2].conj()
    H[i1, i1] = np.diag(delta_k - 0.5j * lat.kappa)
    H[i2, i2] = np.diag(delta_k - 0.5j * lat.kappa)
    H[iK, iK] = np.diag(Delta_K - 1j * lat.kappa)
    H[i1, iK] = g * M1
    H[i2, iK] = g * M2
    H[iK, i1] = g * M1.conj().T
    H[iK, i2] = g * M2.conj().T
    return H, delta_k


def _propagate_spectral(H, psi0, t, kappa):
    if kappa == 0:
        w, V = np.linalg.eigh(H)
        coef = V.conj().T @ psi0
    else:
        w, V = np.linalg.eig(H)
        coef = np.linalg.solve(V, psi0)
    return V @ (coef[:, None] * np.exp(-1j * np.outer(w, t)))


def evolve_momentum_model(ens: EmitterEnsemble, lat: LatticeParams, t_final: float | None = None,
                          dt: float | None = None, n_out: int = 401, times=None,
                          method: str = "spectral") -> DynamicsSeries:
    """P_e(t) of the bound-pair momentum model, starting from c_e = 1.

    ``method="spectral"`` diagonalises the reduced symmetric-sector generator
    (exact in time, any N_c up to a few thousand).  ``method="rk4"``
    integrates the unreduced equations with fixed-step RK4 at
    ``dt <= 0.02 / (4J + U + max delta_k)``."""
    _check_pair(ens, lat)
    t = _times(t_final, n_out, times)
    if method == "spectral":
        H, sizes = _reduced_hamiltonian(ens, lat)
        psi0 = np.zeros(H.shape[0], dtype=complex)
        psi0[0] = 1.0
        C = _propagate_spectral(H, psi0, t, lat.kappa)
        P = np.abs(C) ** 2
        n1 = 1 + sizes[1] + sizes[2]
        norm_e, norm_1 = P[0], P[1:n1].sum(axis=0)
        norm_2 = P[n1:].sum(axis=0)
        meta = {"method": "spectral", "dimension": int(H.shape[0])}
    elif method == "rk4":
        state, series = _rk4_full(ens, lat, t, dt)
        norm_e, norm_1, norm_2 = series
        meta = {"method": "rk4", "final_state": state}
    else:
        raise ValidationError("method", "must be 'spectral' or 'rk4'")
    out = DynamicsSeries(t, norm_e + 0.5 * norm_1, norm_e, norm_1, norm_2, meta)
    meta.update(N_c=lat.N_c, kappa=lat.kappa)
    _check_norm(out, lat.kappa)
    return out


def _rk4_full(ens, lat, t, dt):
    if lat.N_c > 801:
        raise ValidationError("N_c", "RK4 reference integration is limited to N_c <= 801")
    H, delta_k = _full_momentum_rhs(ens, lat)
    dt_max = 0.02 / (4 * lat.J + lat.U + np.max(np.abs(delta_k)))
    dt = dt_max if dt is None else min(float(dt), dt_max)
    A = -1j * H
    N = lat.N_c
    y = np.zeros(H.shape[0], dtype=complex)
    y[0] = 1.0
    out = np.empty((3, len(t)))

    def record(i, y):
        p = np.abs(y) ** 2
        out[:, i] = p[0], p[1:1 + 2 * N].sum(), p[1 + 2 * N:].sum()

    tc = 0.0
    for i, tn in enumerate(t):
        span = tn - tc
        if span > 0:
            n = int(np.ceil(span / dt - 1e-12))
            h = span / n
            for _ in range(n):
                k1 = A @ y
                k2 = A @ (y + 0.5 * h * k1)
                k3 = A @ (y + 0.5 * h * k2)
                k4 = A @ (y + h * k3)
                y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            tc = tn
        record(i, y)
    state = MomentumModelState(complex(y[0]), y[1:1 + N].copy(), y[1 + N:1 + 2 * N].copy(),
                               y[1 + 2 * N:].copy(), float(tc))
    return state, out


# ---------------------------------------------------------------- single emitter

def _single_hamiltonian(omega_e, g, lat: LatticeParams):
    N = lat.N_c
    h = (N - 1) // 2
    j = np.arange(h + 1)
    k = 2 * np.pi * j / N
    H = np.zeros((h + 2, h + 2), dtype=complex)
    u = g / np.sqrt(N) * np.where(j == 0, 1.0, np.sqrt(2))
    H[0, 1:] = u
    H[1:, 0] = u
    H[1:, 1:] = np.diag(lat.omega_c - 2 * lat.J * np.cos(k) - omega_e - 0.5j * lat.kappa)
    return H


def evolve_single_emitter(omega_e: float, g: float, lat: LatticeParams, t_final=None,
                          n_out: int = 401, times=None) -> DynamicsSeries:
    """One emitter in the single-excitation sector; P_e = |c_e|^2."""
    detuning_below_band(omega_e, lat)
    t = _times(t_final, n_out, times)
    H = _single_hamiltonian(omega_e, g, lat)
    psi0 = np.zeros(H.shape[0], dtype=complex)
    psi0[0] = 1.0
    P = np.abs(_propagate_spectral(H, psi0, t, lat.kappa)) ** 2
    out = DynamicsSeries(t, P[0], P[0], P[1:].sum(axis=0), np.zeros_like(t),
                         {"N_c": lat.N_c, "kappa": lat.kappa})
    _check_norm(out, lat.kappa)
    return out


def single_emitter_bound_state(omega_e: float, g: float, lat: LatticeParams):
    """Energy (relative to omega_c) and photonic weight of the lowest
    eigenstate of the single-emitter problem at kappa = 0."""
    lat0 = LatticeParams(U=lat.U, omega_c=lat.omega_c, J=lat.J, N_c=lat.N_c)
    H = _single_hamiltonian(omega_e, g, lat0).real
    w, V = np.linalg.eigh(H)
    return float(w[0] + omega_e - lat.omega_c), float(1 - V[0, 0] ** 2)


# ---------------------------------------------------------------- real space

class _RealSpaceOperator:
    """H acting on (c_e, c1, c2, Psi) in the emitter rotating frame."""

    def __init__(self, ens: EmitterEnsemble, lat: LatticeParams, kernel, U: float):
        self.N = lat.N_c
        self.n1, self.n2 = (p % lat.N_c for p in ens.positions)
        self.g, self.J, self.U = ens.g, lat.J, U
        self.kernel = kernel
        d1 = lat.omega_c - ens.omega_e
        d2 = 2 * d1
        g = ens.g
        lo = min(-2 * g, d1 - 2 * lat.J - 3 * g, d2 - U - 4 * lat.J - 2 * g)
        hi = max(2 * g, d1 + 2 * lat.J + 3 * g, d2 + 4 * lat.J + 2 * g)
        self.half = 0.5 * (hi - lo) * 1.01
        self.shift = 0.5 * (hi + lo) - 0.5j * lat.kappa
        self.de = -self.shift
        self.d1 = d1 - 0.5j * lat.kappa - self.shift
        self.d2 = d2 - 1j * lat.kappa - self.shift

    def small(self, v, alpha, prev):
        """Emitter and single-photon part of alpha (H - shift) v - prev."""
        ce, c1, c2, Psi = v
        g, J, n1, n2 = self.g, self.J, self.n1, self.n2
        he = self.de * ce + g * (c1[n2] + c2[n1])
        h1 = self.d1 * c1 - J * (np.roll(c1, 1) + np.roll(c1, -1)) + np.sqrt(2) * g * Psi[n1]
        h2 = self.d1 * c2 - J * (np.roll(c2, 1) + np.roll(c2, -1)) + np.sqrt(2) * g * Psi[n2]
        h1[n2] += g * ce
        h2[n1] += g * ce
        if prev is None:
            return alpha * he, alpha * h1, alpha * h2
        return alpha * he - prev[0], alpha * h1 - prev[1], alpha * h2 - prev[2]

    def cheb_step(self, v, prev, alpha, coef, acc, out_psi):
        """Returns w = alpha (H - shift) v - prev and adds coef * w to acc."""
        ce, c1, c2, Psi = v
        s = np.sqrt(0.5) * self.g
        prev_psi = prev[3] if prev is not None else self._zero
        self.kernel(Psi, prev_psi, out_psi, acc[3], coef, alpha, self.d2, self.U, self.J,
                    self.n1, np.ascontiguousarray(s * c1), self.n2, np.ascontiguousarray(s * c2))
        he, h1, h2 = self.small(v, alpha, prev)
        acc[0] += coef * he
        acc[1] += coef * h1
        acc[2] += coef * h2
        return [he, h1, h2, out_psi]

    def propagate(self, v, tau):
        """exp(-i H tau) v by a Chebyshev series."""
        x = self.half * tau
        n_terms = int(x + 12 * max(x, 1.0) ** (1 / 3) + 30)
        kk = np.arange(n_terms)
        c = (2.0 - (kk == 0)) * (-1j) ** kk * special.jv(kk, x)
        big = np.nonzero(np.abs(c) > 1e-17)[0]
        n_terms = int(big[-1]) + 1
        self._zero = np.zeros_like(v[3])
        acc = [c[0] * v[0], c[0] * v[1], c[0] * v[2], c[0] * v[3]]
        alpha1 = 1.0 / self.half
        bufs = [np.empty_like(v[3]) for _ in range(3)]
        prev, cur = None, v
        nxt_buf = 0
        for n in range(1, n_terms):
            alpha = alpha1 if n == 1 else 2 * alpha1
            out = bufs[nxt_buf]
            new = self.cheb_step(cur, prev, alpha, complex(c[n]), acc, out)
            prev, cur = cur, new
            # rotate Psi buffers: keep the two most recent, reuse the third
            used = {id(cur[3]), id(prev[3])}
            nxt_buf = next(i for i, b in enumerate(bufs) if id(b) not in used)
        phase = np.exp(-1j * self.shift * tau)
        acc[0] = complex(acc[0] * phase)
        for i in (1, 2, 3):
            acc[i] *= phase
        return acc, n_terms


def evolve_realspace_model(ens: EmitterEnsemble, lat: LatticeParams, t_final: float | None = None,
                           n_out: int = 201, times=None, backend=None,
                           U: float | None = None) -> DynamicsSeries:
    """P_e(t) of the full position-basis model (bound and scattering pairs).

    ``backend`` selects the two-photon kernel: None uses the import-time
    choice, ``"python"`` forces the numpy fallback.  ``U`` overrides
    ``lat.U`` and may be 0 (linear waveguide, no bound pairs)."""
    _check_pair(ens, lat)
    if lat.N_c > 2001:
        raise ValidationError("N_c", "real-space model is limited to N_c <= 2001")
    t = _times(t_final, n_out, times)
    kernel = _kernels.python_backend.pair_cheb_step if backend == "python" \
        else _kernels.pair_cheb_step
    U = lat.U if U is None else float(U)
    if not (np.isfinite(U) and U >= 0):
        raise ValidationError("U", "must be >= 0")
    op = _RealSpaceOperator(ens, lat, kernel, U)
    N = lat.N_c
    v = [1.0 + 0j, np.zeros(N, complex), np.zeros(N, complex), np.zeros((N, N), complex)]
    rec = np.empty((3, len(t)))
    tc, n_mv = 0.0, 0

    def record(i, v):
        rec[:, i] = (abs(v[0]) ** 2, np.sum(np.abs(v[1]) ** 2) + np.sum(np.abs(v[2]) ** 2),
                     np.sum(np.abs(v[3]) ** 2))

    for i, tn in enumerate(t):
        span = tn - tc
        if span > 0:
            # long gaps are split so the series length stays moderate
            n_seg = int(np.ceil(span * op.half / 400.0))
            for _ in range(n_seg):
                v, n_terms = op.propagate(v, span / n_seg)
                n_mv += n_terms
            tc = tn
        record(i, v)
    out = DynamicsSeries(t, rec[0] + 0.5 * rec[1], rec[0], rec[1], rec[2],
                         {"method": "chebyshev", "backend": "python" if backend == "python"
                          else _kernels.BACKEND, "matvecs": n_mv, "N_c": N, "kappa": lat.kappa,
                          "final_state": RealSpaceState(complex(v[0]), v[1], v[2], v[3], float(tc))})
    _check_norm(out, lat.kappa)
    return out


# ---------------------------------------------------------------- fitting

@dataclass(frozen=True)
class DecayFit:
    rate: float
    stderr: float
    residual: float
    n_points: int
    flagged: bool


def lap_limited_window(rate: float, v_g: float, N_c: int, lo: float = 0.1, hi: float = 2.0):
    """Fit window [lo / rate, min(hi / rate, 0.9 N_c / v_g)]: the emitted pair
    must not have travelled around the ring before the window ends."""
    t1 = min(hi / rate, 0.9 * N_c / v_g)
    return lo / rate, t1


def fit_decay_rate(t, P_e, window=None, monotone_tol: float = 1e-3) -> DecayFit:
    """Least-squares slope of log P_e on ``window``; returns -slope as rate."""
    t = np.asarray(t, dtype=float)
    P = np.asarray(P_e, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, P = t[sel], P[sel]
    if len(t) < 3:
        raise ValidationError("window", "needs at least three samples")
    if np.any(P <= 0):
        raise ValidationError("P_e", "must be strictly positive on the fit window")
    y = np.log(P)
    coef, cov = np.polyfit(t, y, 1, cov="unscaled")
    res = y - np.polyval(coef, t)
    rss = float(np.sum(res**2))
    dof = max(len(t) - 2, 1)
    stderr = float(np.sqrt(cov[0, 0] * rss / dof))
    rate = -float(coef[0])
    # flag series that rise against the fitted decay by more than the tolerance
    rises = np.diff(y) * np.sign(rate if rate != 0 else -1.0)
    flagged = bool(np.any(rises > monotone_tol))
    return DecayFit(rate, stderr, float(np.sqrt(rss / len(t))), len(t), flagged)
