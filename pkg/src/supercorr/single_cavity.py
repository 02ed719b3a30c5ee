"""Emitter ensemble in a single Kerr cavity with engineered two-photon loss.

Full model (frame rotating at omega_e, collective spin S = N/2)

    H = Delta a^dag a - (U/2) a^dag a^dag a a + g (a^dag S_- + a S_+),
    L[rho] = -i[H, rho] + kappa2 D[a^2] rho + kappa1 D[a] rho,

with Delta = omega_c - omega_e.  The total excitation number k = (m + S) + n
is conserved by H and lowered by both loss channels, so starting from
|S, S> |0> the density matrix stays block diagonal in k; only those blocks
are stored.

Effective model: the cavity is eliminated, leaving collective two-photon decay

    d rho / dt = A (S_-^2 rho S_+^2 - S_+^2 S_-^2 rho) + A^* (S_-^2 rho S_+^2 - rho S_+^2 S_-^2),
    A = -G^2 / (2 i (omega_e - omega_c + U/2) - kappa2),   G = sqrt(2) g^2 / Delta,

which is the collective-spin two-photon equation with Gamma = 2 Re A.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import expm_multiply

from .errors import NumericalError, ValidationError

__all__ = [
    "CavityModel",
    "EffectiveRate",
    "CavitySeries",
    "ValidityDiagnostic",
    "effective_rate",
    "evolve_full_cavity",
    "evolve_effective_cavity",
    "validity_bound",
]

TRACE_TOL = 1e-8
CUTOFF_TOL = 1e-4


@dataclass(frozen=True)
class CavityModel:
    """Parameters in units of kappa2 (or any common unit)."""

    N: int
    U: float
    g: float
    kappa1: float
    kappa2: float
    omega_e: float
    omega_c: float = 0.0
    n_ph_max: int = 4

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValidationError("N", "must be a positive integer")
        if not (self.kappa2 > 0 and self.kappa1 >= 0):
            raise ValidationError("kappa", "need kappa2 > 0 and kappa1 >= 0")
        if not self.g >= 0:
            raise ValidationError("g", "must be >= 0")
        if self.n_ph_max < 2:
            raise ValidationError("n_ph_max", "must be >= 2 (two-photon channel)")
        if self.Delta == 0:
            raise ValidationError("omega_e", "Delta = omega_c - omega_e must be nonzero")

    @classmethod
    def resonant(cls, N, U, g, kappa1, kappa2, omega_c=0.0, n_ph_max=4) -> "CavityModel":
        """omega_e = omega_c - U/2: emitter pairs resonant with the two-photon state."""
        return cls(N, U, g, kappa1, kappa2, omega_c - U / 2, omega_c, n_ph_max)

    @property
    def Delta(self) -> float:
        return self.omega_c - self.omega_e

    @property
    def kappa_ratio_ok(self) -> bool:
        """kappa1 << kappa2 (flagged when kappa1 > 0.1 kappa2)."""
        return self.kappa1 <= 0.1 * self.kappa2


@dataclass(frozen=True)
class EffectiveRate:
    A: complex
    G: float

    @property
    def Gamma(self) -> float:
        """Collective two-photon Gamma of the rate equations."""
        return 2 * self.A.real


def effective_rate(model: CavityModel) -> EffectiveRate:
    G = np.sqrt(2) * model.g**2 / model.Delta
    A = -G**2 / (2j * (model.omega_e - model.omega_c + model.U / 2) - model.kappa2)
    return EffectiveRate(complex(A), float(G))


@dataclass(frozen=True)
class ValidityDiagnostic:
    Gamma: float
    ratio: float
    ok: bool


def validity_bound(model: CavityModel, N: int | None = None) -> ValidityDiagnostic:
    """Gamma N^3 / kappa2 with pass at <= 1."""
    N = model.N if N is None else N
    Gamma = effective_rate(model).Gamma
    ratio = Gamma * N**3 / model.kappa2
    return ValidityDiagnostic(Gamma, float(ratio), bool(ratio <= 1))


@dataclass
class CavitySeries:
    t: np.ndarray
    Sz: np.ndarray
    fock: np.ndarray | None = None  # (len(t), n_ph_max + 1)
    cutoff_change: float | None = None

    def to_csv(self, path, Sz_effective=None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["t [1/kappa2]", "<S_z> full [1]"]
            if Sz_effective is not None:
                head.append("<S_z> effective [1]")
            nf = 0 if self.fock is None else self.fock.shape[1]
            head += [f"p_{n} [1]" for n in range(nf)]
            w.writerow(head)
            for i in range(len(self.t)):
                row = [self.t[i], self.Sz[i]]
                if Sz_effective is not None:
                    row.append(Sz_effective[i])
                if nf:
                    row += list(self.fock[i])
                w.writerow([f"{v:.12g}" for v in row])


# ---------------------------------------------------------------- full model

class _BlockSpace:
    """States (m, n) grouped by excitation number k = m + S + n."""

    def __init__(self, N: int, n_max: int):
        S = N / 2
        self.S = S
        self.blocks = []
        for k in range(N + n_max + 1):
            ns = [n for n in range(0, min(n_max, k) + 1) if k - n <= N]
            if ns:
                self.blocks.append((k, np.array(ns), np.array([k - S - n for n in ns])))
        self.kindex = {k: i for i, (k, _, _) in enumerate(self.blocks)}
        sizes = [len(b[1]) ** 2 for b in self.blocks]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.dim = int(self.offsets[-1])


def _full_liouvillian(model: CavityModel, space: _BlockSpace):
    S = space.S
    c = S * (S + 1)
    rows, cols, vals = [], [], []

    def put(block_out, block_in, M):
        M = sparse.coo_matrix(M)
        rows.append(M.row + space.offsets[block_out])
        cols.append(M.col + space.offsets[block_in])
        vals.append(M.data)

    for bi, (k, ns, ms) in enumerate(space.blocks):
        d = len(ns)
        H = np.diag(model.Delta * ns - 0.5 * model.U * ns * (ns - 1)
                    - 0.5j * (model.kappa2 * ns * (ns - 1) + model.kappa1 * ns)).astype(complex)
        for a in range(d):
            for b in range(d):
                # a^dag S_-: (m, n) -> (m - 1, n + 1)
                if ns[a] == ns[b] + 1:
                    H[a, b] += model.g * np.sqrt(ns[b] + 1) * np.sqrt(max(c - ms[b] * (ms[b] - 1), 0))
                if ns[a] + 1 == ns[b]:
                    H[a, b] += model.g * np.sqrt(ns[a] + 1) * np.sqrt(max(c - ms[a] * (ms[a] - 1), 0))
        I = np.eye(d)
        put(bi, bi, -1j * (np.kron(H, I) - np.kron(I, H.conj())))
        # jumps into this block from k + 2 (a^2) and k + 1 (a)
        for step, rate in ((2, model.kappa2), (1, model.kappa1)):
            src = space.kindex.get(k + step)
            if src is None or rate == 0:
                continue
            _, ns_in, _ = space.blocks[src]
            C = np.zeros((d, len(ns_in)))
            for a in range(d):
                for b in range(len(ns_in)):
                    if ns_in[b] - step == ns[a]:
                        n = ns_in[b]
                        C[a, b] = np.sqrt(n * (n - 1)) if step == 2 else np.sqrt(n)
            put(bi, src, rate * np.kron(C, C))
    L = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(space.dim, space.dim))
    return L


def _run_full(model: CavityModel, t):
    space = _BlockSpace(model.N, model.n_ph_max)
    L = _full_liouvillian(model, space)
    v = np.zeros(space.dim, dtype=complex)
    b0 = space.kindex[model.N]
    _, ns0, _ = space.blocks[b0]
    i0 = int(np.nonzero(ns0 == 0)[0][0])
    v[space.offsets[b0] + i0 * len(ns0) + i0] = 1.0
    dts = np.diff(t)
    uniform = len(dts) > 0 and np.allclose(dts, dts[0], rtol=1e-12, atol=0)
    if uniform:
        E = linalg.expm(L.toarray() * dts[0])
    Sz = np.empty(len(t))
    fock = np.zeros((len(t), model.n_ph_max + 1))
    for i in range(len(t)):
        if i > 0:
            v = E @ v if uniform else expm_multiply(L * dts[i - 1], v)
        tr, sz, min_ev = 0.0, 0.0, 0.0
        for bi, (k, ns, ms) in enumerate(space.blocks):
            d = len(ns)
            rho = v[space.offsets[bi]:space.offsets[bi + 1]].reshape(d, d)
            p = np.real(np.diag(rho))
            tr += p.sum()
            sz += p @ ms
            np.add.at(fock[i], ns, p)
            if d > 1:
                min_ev = min(min_ev, float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)))))
            else:
                min_ev = min(min_ev, float(p[0]))
        if abs(tr - 1) > TRACE_TOL or min_ev < -TRACE_TOL:
            raise NumericalError(f"cavity master equation lost trace/positivity at t = {t[i]:.6g} "
                                 f"(trace {tr:.12g}, min eigenvalue {min_ev:.3e})")
        Sz[i] = sz
    return Sz, fock


def _times(t_final, n_out, times):
    if times is not None:
        t = np.asarray(times, dtype=float)
    else:
        if not (t_final is not None and t_final > 0):
            raise ValidationError("t_final", "must be > 0")
        t = np.linspace(0.0, float(t_final), int(n_out))
    if t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValidationError("times", "must start at 0 and increase")
    return t


def evolve_full_cavity(model: CavityModel, t_final: float | None = None, n_out: int = 401,
                       times=None, check_cutoff: bool = True) -> CavitySeries:
    """<S_z>(t) and Fock populations of the full emitter-cavity model from
    |S, S>|0>.  With ``check_cutoff`` the run is repeated at n_ph_max + 1 and
    must change <S_z> by less than 1e-4 S."""
    t = _times(t_final, n_out, times)
    Sz, fock = _run_full(model, t)
    change = None
    if check_cutoff:
        bigger = CavityModel(model.N, model.U, model.g, model.kappa1, model.kappa2,
                             model.omega_e, model.omega_c, model.n_ph_max + 1)
        Sz2, _ = _run_full(bigger, t)
        change = float(np.max(np.abs(Sz2 - Sz))) / (model.N / 2)
        if change > CUTOFF_TOL:
            raise NumericalError(f"Fock cutoff {model.n_ph_max} not converged "
                                 f"(<S_z> changes by {change:.3e} S)")
    return CavitySeries(t, Sz, fock, change)


# ---------------------------------------------------------------- effective model

def _spin_lowering(N: int):
    S = N / 2
    m = S - np.arange(N + 1)  # descending
    amp = np.sqrt(S * (S + 1) - m[:-1] * (m[:-1] - 1))
    Sm = sparse.diags(amp, -1, shape=(N + 1, N + 1), format="csr")
    return Sm, m


def evolve_effective_cavity(model: CavityModel, t_final: float | None = None, n_out: int = 401,
                            times=None) -> CavitySeries:
    """<S_z>(t) of the effective collective two-photon master equation,
    integrated on the full (N+1)^2 spin density matrix."""
    t = _times(t_final, n_out, times)
    A = effective_rate(model).A
    Sm, m = _spin_lowering(model.N)
    Sm2 = (Sm @ Sm).tocsr()
    Sp2 = Sm2.conj().T.tocsr()
    X = (Sp2 @ Sm2).tocsr()
    d = model.N + 1
    I = sparse.identity(d, format="csr")
    # row-major vec: vec(A rho B) = kron(A, B^T) vec(rho)
    L = (2 * A.real) * sparse.kron(Sm2, Sp2.T) - A * sparse.kron(X, I) - np.conj(A) * sparse.kron(I, X.T)
    rho0 = np.zeros(d * d, dtype=complex)
    rho0[0] = 1.0
    states = expm_multiply(L.tocsc(), rho0, start=t[0], stop=t[-1], num=len(t), endpoint=True) \
        if len(t) > 1 else rho0[None, :]
    if not np.allclose(np.linspace(t[0], t[-1], len(t)), t, rtol=1e-12, atol=1e-14 * t[-1]):
        raise ValidationError("times", "effective model needs a uniform grid")
    diag = np.real(states[:, :: d + 1])
    if np.max(np.abs(diag.sum(axis=1) - 1)) > TRACE_TOL:
        raise NumericalError("effective master equation lost trace")
    return CavitySeries(t, diag @ m)
