"""Markovian two-photon master equation for emitters at arbitrary sites.

Conventions (frame rotating at omega_e):

    d rho / dt = -i (H_eff rho - rho H_eff^dag) + Gamma_0 sum_{p,q} Re A_pq L_p rho L_q^dag,
    H_eff      = -i (Gamma_0 / 2) sum_{p,q} A_pq L_q^dag L_p,

where p, q run over *unordered* emitter pairs and L_p = sigma_i^- sigma_j^-
for p = (i, j).  With this normalisation two emitters on the same site
decay from |ee> at Gamma_0 f^2(0), which equals the Wigner-Weisskopf rate of
the exact two-emitter dynamics, and a same-site ensemble reduces to the
collective-spin equation with Gamma = Gamma_0 f^2(0) / 4.

Basis: computational product basis, emitter 0 is the most significant bit
and bit value 1 means excited.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, linalg, sparse

from .bound_states import LatticeParams
from .coupling import AmplitudeTensor, EmitterEnsemble, amplitude_tensor, gamma0
from .errors import NumericalError, PhysicsError, ValidationError

__all__ = [
    "Generator",
    "MESeries",
    "EigenmodeReport",
    "TrapAnalysis",
    "lowering_operators",
    "basis_state",
    "excited_state",
    "ground_state",
    "validate_density_matrix",
    "build_generator",
    "build_generator_from_matrix",
    "evolve_density_matrix",
    "evolve_with_local_channels",
    "eigen_analysis",
    "semianalytic_trap",
    "calibrate_pair_normalization",
]

N_MAX = 12
DARK_REL = 1e-12
SUBRADIANT_REL = 1e-2
POSITIVITY_TOL = 1e-7


def lowering_operators(N: int):
    """sigma_i^- for i = 0..N-1 as sparse CSR matrices on 2^N states."""
    dim = 2**N
    idx = np.arange(dim)
    ops = []
    for i in range(N):
        bit = 1 << (N - 1 - i)
        src = idx[(idx & bit) != 0]
        ops.append(sparse.csr_matrix((np.ones(len(src)), (src - bit, src)), shape=(dim, dim)))
    return ops


def excitation_numbers(N: int) -> np.ndarray:
    idx = np.arange(2**N)
    return np.array([bin(i).count("1") for i in idx])


def basis_state(label: str) -> np.ndarray:
    """State vector for a label such as 'egge'."""
    if not label or set(label) - {"e", "g"}:
        raise ValidationError("label", "must consist of 'e' and 'g'")
    N = len(label)
    v = np.zeros(2**N, dtype=complex)
    v[int("".join("1" if c == "e" else "0" for c in label), 2)] = 1.0
    return v


def excited_state(N: int) -> np.ndarray:
    v = basis_state("e" * N)
    return np.outer(v, v.conj())


def ground_state(N: int) -> np.ndarray:
    v = basis_state("g" * N)
    return np.outer(v, v.conj())


def validate_density_matrix(rho, tol: float = 1e-9) -> None:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError("rho", "must be a square matrix")
    if abs(np.trace(rho) - 1) > tol:
        raise ValidationError("rho", f"trace {np.trace(rho).real:.12g} != 1")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValidationError("rho", "must be Hermitian")
    if np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) < -tol:
        raise ValidationError("rho", "must be positive semidefinite")


@dataclass
class Generator:
    """Lindblad generator: non-Hermitian H_eff plus jump operators."""

    N: int
    Gamma0: float
    H_eff: sparse.csr_matrix
    jumps: list
    pairs: list
    decay_matrix: np.ndarray
    A_pairs: np.ndarray
    T1: float = float("inf")
    T2: float = float("inf")
    amplitude: AmplitudeTensor | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return 2**self.N

    def apply(self, rho: np.ndarray) -> np.ndarray:
        H = self.H_eff
        out = -1j * (H @ rho - (H @ rho.conj().T).conj().T)
        for C in self.jumps:
            out += C @ (C @ rho.conj().T).conj().T
        return out

    def liouvillian(self) -> np.ndarray:
        """Dense matrix acting on row-major vec(rho) (small N only)."""
        if self.N > 6:
            raise ValidationError("N", "dense Liouvillian limited to N <= 6")
        d = self.dim
        I = np.eye(d)
        H = self.H_eff.toarray()
        L = -1j * (np.kron(H, I) - np.kron(I, H.conj()))
        for C in self.jumps:
            Cd = C.toarray()
            L += np.kron(Cd, Cd.conj())
        return L

    def sector(self, n: int):
        """Basis indices with n excitations and the H_eff block on them."""
        if not 0 <= n <= self.N:
            raise ValidationError("sector", f"must lie in 0..{self.N}")
        idx = np.nonzero(excitation_numbers(self.N) == n)[0]
        return idx, self.H_eff[idx][:, idx].toarray()


def _pair_operators(N: int):
    sm = lowering_operators(N)
    pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
    return pairs, [(sm[i] @ sm[j]).tocsr() for i, j in pairs], sm


def build_generator_from_matrix(A_pairs: np.ndarray, Gamma0: float, N: int,
                                T1: float = float("inf"), T2: float = float("inf"),
                                amplitude: AmplitudeTensor | None = None,
                                psd_tol: float = 1e-9) -> Generator:
    """Generator for a given complex symmetric pair matrix A over unordered pairs."""
    if N > N_MAX:
        raise ValidationError("N", f"dense master equation limited to N <= {N_MAX}")
    pairs, Lp, sm = _pair_operators(N)
    A = np.asarray(A_pairs, dtype=complex)
    if A.shape != (len(pairs), len(pairs)):
        raise ValidationError("A_pairs", "shape must match the number of unordered pairs")
    R = A.real
    dim = 2**N
    H = sparse.csr_matrix((dim, dim), dtype=complex)
    jumps = []
    if len(pairs):
        w, y = np.linalg.eigh(0.5 * (R + R.T))
        scale = max(np.max(np.abs(w)), 1e-300)
        if np.min(w) < -psd_tol * scale:
            raise PhysicsError(f"Re A is not positive semidefinite (min eigenvalue {np.min(w):.3e})")
        for wm, ym in zip(w, y.T):
            if wm > psd_tol * scale:
                jumps.append(np.sqrt(Gamma0 * wm) * sum(c * L for c, L in zip(ym, Lp) if c != 0))
        for p, Lp_ in enumerate(Lp):
            for q, Lq in enumerate(Lp):
                if A[p, q] != 0:
                    H = H + (-0.5j * Gamma0 * A[p, q]) * (Lq.conj().T @ Lp_)
    gen = Generator(N, Gamma0, H.tocsr(), [j.tocsr() for j in jumps], pairs, R, A,
                    amplitude=amplitude)
    return _add_local(gen, T1, T2, sm)


def _add_local(gen: Generator, T1: float, T2: float, sm=None) -> Generator:
    if not (T1 > 0 and T2 > 0):
        raise ValidationError("T1/T2", "must be positive (inf disables the channel)")
    if np.isinf(T1) and np.isinf(T2):
        return replace(gen, T1=T1, T2=T2)
    sm = lowering_operators(gen.N) if sm is None else sm
    H = gen.H_eff.copy()
    jumps = list(gen.jumps)
    I = sparse.identity(gen.dim, format="csr")
    for s in sm:
        if np.isfinite(T1):
            jumps.append((np.sqrt(1 / T1) * s).tocsr())
            H = H - 0.5j / T1 * (s.T @ s)
        if np.isfinite(T2):
            sz = (2 * (s.T @ s) - I).tocsr()
            jumps.append((np.sqrt(0.5 / T2) * sz).tocsr())
            H = H - 0.5j * (0.5 / T2) * I
    return replace(gen, H_eff=H.tocsr(), jumps=jumps, T1=T1, T2=T2)


def build_generator(ens: EmitterEnsemble, lat: LatticeParams) -> Generator:
    """H_eff and recycling jumps from the pair amplitudes A_{ij,kl}.

    Local channels of the ensemble (finite T1 / T2) are included."""
    tensor = amplitude_tensor(ens, lat)
    G0 = gamma0(ens.omega_e, ens.g, lat)
    return build_generator_from_matrix(tensor.pair_matrix(), G0, ens.N, ens.T1, ens.T2, tensor)


# ---------------------------------------------------------------- evolution

@dataclass
class MESeries:
    t: np.ndarray
    P_e: np.ndarray
    sector_populations: np.ndarray
    purity: np.ndarray
    rho_final: np.ndarray = field(repr=False)
    min_eigenvalue: float = 0.0

    def to_csv(self, path) -> None:
        n = self.sector_populations.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t [1/J]", "P_e [1]", "purity [1]"] + [f"p_{k}exc [1]" for k in range(n)])
            for i in range(len(self.t)):
                w.writerow([f"{self.t[i]:.12g}", f"{self.P_e[i]:.12g}", f"{self.purity[i]:.12g}"]
                           + [f"{v:.12g}" for v in self.sector_populations[i]])


def evolve_density_matrix(gen: Generator, rho0, t_final: float | None = None, n_out: int = 201,
                          times=None, method: str = "auto", rtol: float = 1e-10,
                          atol: float = 1e-13) -> MESeries:
    """Integrate the master equation and record P_e, sector populations and purity.

    ``method="expm"`` propagates with the exponential of the dense Liouvillian
    (N <= 5, exact for any time span); ``method="ode"`` integrates with DOP853."""
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (gen.dim, gen.dim):
        raise ValidationError("rho0", f"must be {gen.dim}x{gen.dim}")
    validate_density_matrix(rho0)
    if times is None:
        if not (t_final is not None and t_final > 0):
            raise ValidationError("t_final", "must be > 0")
        times = np.linspace(0.0, float(t_final), int(n_out))
    t = np.asarray(times, dtype=float)
    if np.any(np.diff(t) < 0) or t[0] < 0:
        raise ValidationError("times", "must be non-negative and ascending")
    if method == "auto":
        method = "expm" if gen.N <= 5 else "ode"
    d = gen.dim
    if method == "expm":
        L = gen.liouvillian()
        states = []
        v = rho0.reshape(-1)
        tc = 0.0
        cache = {}
        for tn in t:
            dt = tn - tc
            if dt > 0:
                key = round(dt, 12)
                if key not in cache:
                    cache[key] = linalg.expm(L * dt)
                v = cache[key] @ v
                tc = tn
            states.append(v.reshape(d, d))
    elif method == "ode":
        def rhs(_, y):
            return gen.apply(y.reshape(d, d)).reshape(-1)

        sol = integrate.solve_ivp(rhs, (0.0, t[-1]), rho0.reshape(-1), method="DOP853",
                                  t_eval=t, rtol=rtol, atol=atol)
        if not sol.success:
            raise NumericalError(f"master equation integration failed: {sol.message}")
        states = [sol.y[:, i].reshape(d, d) for i in range(len(t))]
    else:
        raise ValidationError("method", "must be 'auto', 'expm' or 'ode'")
    return _observables(gen, t, states)


def _observables(gen: Generator, t, states) -> MESeries:
    nexc = excitation_numbers(gen.N)
    P = np.empty(len(t))
    sec = np.empty((len(t), gen.N + 1))
    pur = np.empty(len(t))
    min_ev = 0.0
    for i, rho in enumerate(states):
        pops = np.real(np.diag(rho))
        P[i] = np.dot(pops, nexc) / gen.N
        sec[i] = np.bincount(nexc, weights=pops, minlength=gen.N + 1)
        pur[i] = np.real(np.vdot(rho, rho))
        ev = np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)))
        min_ev = min(min_ev, ev)
        if ev < -POSITIVITY_TOL:
            raise NumericalError(f"density matrix lost positivity at t = {t[i]:.6g} "
                                 f"(eigenvalue {ev:.3e})")
    return MESeries(t, P, sec, pur, np.array(states[-1]), float(min_ev))


def evolve_with_local_channels(gen: Generator, T1: float, T2: float, rho0, t_final=None,
                               **kwargs) -> MESeries:
    """Same as evolve_density_matrix with per-emitter amplitude damping at
    1/T1 and pure dephasing (1 / 2T2)(sigma_z rho sigma_z - rho)."""
    if np.isfinite(gen.T1) or np.isfinite(gen.T2):
        raise ValidationError("gen", "generator already carries local channels")
    return evolve_density_matrix(_add_local(gen, T1, T2), rho0, t_final, **kwargs)


# ---------------------------------------------------------------- eigenmodes

@dataclass
class EigenmodeReport:
    sector: int
    basis: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rates: np.ndarray
    dark: np.ndarray
    subradiant: np.ndarray
    Gamma0: float
    defective: bool = False

    def to_json(self) -> str:
        modes = []
        for i in range(len(self.eigenvalues)):
            vec = self.eigenvectors[:, i] if self.eigenvectors is not None else None
            modes.append({
                "eigenvalue": [float(self.eigenvalues[i].real), float(self.eigenvalues[i].imag)],
                "rate": float(self.rates[i]),
                "rate_over_Gamma0": float(self.rates[i] / self.Gamma0),
                "amplitudes": None if vec is None else [[float(c.real), float(c.imag)] for c in vec],
                "dark": bool(self.dark[i]),
                "subradiant": bool(self.subradiant[i]),
            })
        return json.dumps({"sector": self.sector, "basis": [int(b) for b in self.basis],
                           "defective": self.defective, "modes": modes}, indent=2)


def eigen_analysis(gen: Generator, sector: int) -> EigenmodeReport:
    """Eigenpairs of the H_eff block with ``sector`` excitations, sorted by
    decay rate -2 Im(lambda) ascending."""
    idx, Hs = gen.sector(sector)
    defective = False
    w, V = np.linalg.eig(Hs)
    if V.size and np.linalg.cond(V) > 1e12:
        T, Z = linalg.schur(Hs, output="complex")
        w, V, defective = np.diag(T), None, True
    rates = -2 * w.imag
    order = np.argsort(rates, kind="stable")
    w, rates = w[order], rates[order]
    if V is not None:
        V = V[:, order]
        V = V / np.linalg.norm(V, axis=0)
    scale = gen.Gamma0
    return EigenmodeReport(sector, idx, w, V, rates, rates < DARK_REL * scale,
                           rates < SUBRADIANT_REL * scale, scale, defective)


# ---------------------------------------------------------------- trap analysis

@dataclass
class TrapAnalysis:
    w: np.ndarray
    Y: np.ndarray
    Ybar: np.ndarray
    T_states: np.ndarray
    T_rates: np.ndarray
    R_G: np.ndarray
    R_E: np.ndarray
    rank: int
    D2: np.ndarray
    dark_residual: float
    alpha_over_beta: float
    P_e_infinity: float
    P_e_infinity_general: float


def semianalytic_trap(ens: EmitterEnsemble, lat: LatticeParams, rank_tol: float = 1e-10) -> TrapAnalysis:
    """Decay paths through the two-excitation eigenstates of four equally
    spaced emitters and the trapped population P_e(infinity).

    Rates are in units of Gamma_0.  The simplified expression uses the two
    non-zero eigenvalues of Re A; ``P_e_infinity_general`` sums over all."""
    if ens.N != 4:
        raise ValidationError("positions", "trap analysis needs four emitters")
    gaps = np.diff(ens.positions)
    if np.any(gaps != gaps[0]) or gaps[0] <= 0:
        raise ValidationError("positions", "trap analysis needs equal spacing x > 0")
    gen = build_generator(replace(ens, T1=float("inf"), T2=float("inf")), lat)
    N = 4
    pairs, Lp, _ = _pair_operators(N)
    idx2 = np.nonzero(excitation_numbers(N) == 2)[0]
    G = basis_state("gggg")
    E = basis_state("eeee")
    w, y = np.linalg.eigh(gen.decay_matrix)
    w = np.where(np.abs(w) < rank_tol * np.max(np.abs(w)), 0.0, w)
    rank = int(np.count_nonzero(w))
    Y = np.array([sum(c * (L.conj().T @ G) for c, L in zip(ym, Lp)) for ym in y.T])[:, idx2]
    Ybar = np.array([sum(c * (L @ E) for c, L in zip(ym, Lp)) for ym in y.T])[:, idx2]
    rep = eigen_analysis(gen, 2)
    T = rep.eigenvectors
    R_G = np.array([np.sum(w * np.abs(Y.conj() @ T[:, i]) ** 2) for i in range(T.shape[1])])
    rhoE = (Ybar.T * w) @ Ybar.conj() / np.sum(w)
    R_E = np.real(np.einsum("ai,ab,bi->i", T.conj(), rhoE, T))

    # exact dark state in span{|egge>, |geeg>}
    fx = gen.amplitude.f_matrix[0, 1]
    f3x = gen.amplitude.f_matrix[0, 3]
    D = (fx * basis_state("egge") - f3x * basis_state("geeg"))[idx2]
    D = D / np.linalg.norm(D)
    Hs = gen.sector(2)[1]
    dark_res = float(np.linalg.norm(Hs @ D) / gen.Gamma0)
    overlaps = np.abs(Ybar.conj() @ D) ** 2
    general = float(np.sum(w * overlaps) / (2 * np.sum(w)))
    nz = np.nonzero(w)[0]
    if rank == 2:
        m1 = nz[np.argmax(overlaps[nz])]
        simple = float(w[m1] * overlaps[m1] / (2 * np.sum(w[nz])))
    else:
        simple = float("nan")
    # alpha / beta read off the numerically slowest two-excitation eigenvector
    v = T[:, 0]
    i_egge = int(np.nonzero(idx2 == int("1001", 2))[0][0])
    i_geeg = int(np.nonzero(idx2 == int("0110", 2))[0][0])
    ratio = float(np.real(-v[i_egge] / v[i_geeg]))
    return TrapAnalysis(w, Y, Ybar, T, rep.rates / gen.Gamma0, R_G, R_E, rank, D, dark_res,
                        ratio, simple, general)


def calibrate_pair_normalization(omega_e: float, g: float, lat: LatticeParams) -> dict:
    """Decay rate of |ee> for two same-site emitters under this generator,
    compared with the Wigner-Weisskopf pair rate and with the collective
    Gamma of a same-site ensemble."""
    from .coupling import COLLECTIVE_FRACTION, decay_rate_two_emitters

    ens = EmitterEnsemble((0, 0), omega_e, g)
    gen = build_generator(ens, lat)
    idx, Hs = gen.sector(2)
    rate_me = float(-2 * np.linalg.eigvals(Hs).imag.min())
    rate_ww = decay_rate_two_emitters(ens, lat, check_markov=False)
    return {"rate_master_equation": rate_me, "rate_pair": rate_ww,
            "ratio": rate_me / rate_ww, "collective_fraction": COLLECTIVE_FRACTION}
