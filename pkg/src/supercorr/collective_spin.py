"""Same-site (Dicke) limit: collective two-photon decay versus superradiance.

Populations p_m of the symmetric states |S, m>, S = N/2, obey pure death
chains starting from m = S:

    two-photon   m -> m - 2 at Gamma [S(S+1) - m(m-1)] [S(S+1) - (m-1)(m-2)]
    one-photon   m -> m - 1 at Gamma [S(S+1) - m(m-1)]

The rate equations are propagated exactly with the matrix exponential of the
(bidiagonal) generator over a uniform step, which keeps p a probability
vector at every step.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg, optimize
from scipy.sparse import diags
from scipy.sparse.linalg import expm_multiply

from .errors import ValidationError

__all__ = [
    "MODELS",
    "SpinPopulations",
    "JumpTrajectory",
    "TrajectoryEnsemble",
    "two_photon_rate",
    "one_photon_rate",
    "chain",
    "generator",
    "evolve_rate_equations",
    "half_decay_snapshot",
    "mean_field_evolve",
    "sample_trajectories",
    "correlation_parameter",
    "decay_time",
    "mean_first_passage_time",
    "dwell_and_transit",
]

MODELS = ("two-photon", "one-photon")
_ALIASES = {"superradiance": "one-photon", "two_photon": "two-photon", "one_photon": "one-photon"}


def _model(model: str) -> str:
    model = _ALIASES.get(model, model)
    if model not in MODELS:
        raise ValidationError("model", f"must be one of {MODELS + tuple(_ALIASES)}")
    return model


def _check_N(N: int):
    if int(N) != N or N < 1:
        raise ValidationError("N", "must be a positive integer")


def two_photon_rate(m, N: int, Gamma: float = 1.0):
    """Gamma |<m-2| S_-^2 |m>|^2; zero when m - 2 < -S."""
    S = N / 2
    m = np.asarray(m, dtype=float)
    c = S * (S + 1)
    r = Gamma * (c - m * (m - 1)) * (c - (m - 1) * (m - 2))
    return np.where(m - 2 >= -S - 1e-12, r, 0.0)


def one_photon_rate(m, N: int, Gamma: float = 1.0):
    """Gamma |<m-1| S_- |m>|^2; zero at m = -S."""
    S = N / 2
    m = np.asarray(m, dtype=float)
    r = Gamma * (S * (S + 1) - m * (m - 1))
    return np.where(m - 1 >= -S - 1e-12, r, 0.0)


def chain(N: int, model: str, Gamma: float = 1.0):
    """States visited from m = S (descending) and the rates out of each; the
    last state is absorbing (rate 0)."""
    _check_N(N)
    model = _model(model)
    S = N / 2
    step = 2 if model == "two-photon" else 1
    m = S - step * np.arange(int(np.floor(N / step)) + 1)
    rate = two_photon_rate(m, N, Gamma) if step == 2 else one_photon_rate(m, N, Gamma)
    return m, rate


def generator(N: int, model: str, Gamma: float = 1.0):
    """Sparse generator Q with dp/dt = Q p on the visited chain."""
    m, rate = chain(N, model, Gamma)
    return diags([-rate, rate[:-1]], [0, -1], format="csc"), m


@dataclass
class SpinPopulations:
    """p_m over the visited chain (descending m) on a time grid."""

    N: int
    model: str
    Gamma: float
    t: np.ndarray
    m: np.ndarray
    p: np.ndarray
    terminal_m: float = field(init=False)

    def __post_init__(self):
        self.terminal_m = float(self.m[-1])

    @property
    def S(self) -> float:
        return self.N / 2

    @property
    def Sz(self) -> np.ndarray:
        return self.p @ self.m

    @property
    def Sz2(self) -> np.ndarray:
        return self.p @ self.m**2

    @property
    def var(self) -> np.ndarray:
        return self.Sz2 - self.Sz**2

    def full_distribution(self, i: int) -> tuple:
        """(m over -S..S, p_m) at time index i, zeros on unvisited m."""
        S = self.S
        m_all = -S + np.arange(self.N + 1)
        p = np.zeros(self.N + 1)
        p[np.rint(self.m + S).astype(int)] = self.p[i]
        return m_all, p

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t [1/Gamma]", "<S_z> [1]", "Var S_z [1]"])
            for row in zip(self.t, self.Sz, self.var):
                w.writerow([f"{v:.12g}" for v in row])


def mean_first_passage_time(N: int, model: str, Gamma: float = 1.0) -> float:
    """Mean time to reach the absorbing state: sum of 1/rate along the chain."""
    _, rate = chain(N, model, Gamma)
    return float(np.sum(1.0 / rate[:-1])) if len(rate) > 1 else 0.0


def evolve_rate_equations(N: int, Gamma: float, model: str, t_final: float | None = None,
                          n_out: int = 2001) -> SpinPopulations:
    """Exact populations from the fully excited state on a uniform grid.

    ``t_final`` defaults to three mean first-passage times."""
    if not Gamma >= 0:
        raise ValidationError("Gamma", "must be >= 0")
    model = _model(model)
    if t_final is None:
        t_final = 3 * mean_first_passage_time(N, model, Gamma) if Gamma > 0 else 1.0
    if not t_final > 0:
        raise ValidationError("t_final", "must be > 0")
    Q, m = generator(N, model, Gamma)
    t = np.linspace(0.0, float(t_final), int(n_out))
    E = linalg.expm(Q.toarray() * (t[1] - t[0]))
    p = np.empty((len(t), len(m)))
    v = np.zeros(len(m))
    v[0] = 1.0
    p[0] = v
    for i in range(1, len(t)):
        v = E @ v
        np.clip(v, 0.0, None, out=v)
        p[i] = v
    return SpinPopulations(int(N), model, float(Gamma), t, m, p)


def _p_at(pops: SpinPopulations, t: float) -> np.ndarray:
    """Exact p at an arbitrary time from the nearest earlier grid point."""
    i = int(np.clip(np.searchsorted(pops.t, t, side="right") - 1, 0, len(pops.t) - 1))
    Q, _ = generator(pops.N, pops.model, pops.Gamma)
    dt = t - pops.t[i]
    v = pops.p[i] if dt == 0 else expm_multiply(Q * dt, pops.p[i])
    return np.clip(v, 0.0, None)


def half_decay_snapshot(pops: SpinPopulations):
    """T_h where <S_z> crosses zero and p_m at that instant (full -S..S grid)."""
    Sz = pops.Sz
    idx = np.nonzero((Sz[:-1] > 0) & (Sz[1:] <= 0))[0]
    if len(idx) == 0:
        raise ValidationError("trajectory", "<S_z> does not cross zero on the grid")
    i = idx[0]
    t0, t1 = pops.t[i], pops.t[i + 1]

    def sz(t):
        return _p_at(pops, t) @ pops.m

    Th = optimize.brentq(sz, t0, t1, xtol=1e-14 * max(t1, 1e-300), rtol=1e-14) \
        if sz(t1) < 0 else t1
    p = _p_at(pops, Th)
    S = pops.S
    m_all = -S + np.arange(pops.N + 1)
    full = np.zeros(pops.N + 1)
    full[np.rint(pops.m + S).astype(int)] = p
    return float(Th), m_all, full


def correlation_parameter(pops: SpinPopulations) -> tuple:
    """C = max_t 4 Var(S_z) / N^2 from the exact moments.

    The coarse maximum on the grid is refined with a bounded search on the
    exact propagator between the neighbouring grid points; returns (C, t_max)."""
    N = pops.N
    c = 4 * pops.var / N**2
    i = int(np.argmax(c))
    lo, hi = pops.t[max(i - 1, 0)], pops.t[min(i + 1, len(pops.t) - 1)]
    if hi <= lo:
        return float(c[i]), float(pops.t[i])

    def negC(t):
        p = _p_at(pops, t)
        mu = p @ pops.m
        return -4 * (p @ pops.m**2 - mu**2) / N**2

    res = optimize.minimize_scalar(negC, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-9 * (hi - lo)})
    if -res.fun >= c[i]:
        return float(-res.fun), float(res.x)
    return float(c[i]), float(pops.t[i])


def decay_time(pops: SpinPopulations, level: float = -0.9) -> float:
    """First time <S_z> reaches ``level * S`` (linear interpolation)."""
    Sz = pops.Sz
    target = level * pops.S
    idx = np.nonzero(Sz <= target)[0]
    if len(idx) == 0:
        raise ValidationError("t_final", f"<S_z> never reaches {level} S on the grid")
    i = idx[0]
    if i == 0:
        return 0.0
    t0, t1, s0, s1 = pops.t[i - 1], pops.t[i], Sz[i - 1], Sz[i]
    return float(t0 + (target - s0) * (t1 - t0) / (s1 - s0))


# ---------------------------------------------------------------- mean field

def mean_field_evolve(N: int, Gamma: float, model: str, t, eps: float | None = None):
    """Mean-field <S_z>(t) from s(0) = S - eps, eps = 1e-3 S by default."""
    model = _model(model)
    S = N / 2
    c = S * (S + 1)
    eps = 1e-3 * S if eps is None else float(eps)
    t = np.asarray(t, dtype=float)

    if model == "two-photon":
        def rhs(_, s):
            return -2 * Gamma * (c - s * s + s) * (c - s * s + 3 * s - 2)
    else:
        def rhs(_, s):
            return -Gamma * (c - s * s + s)

    if Gamma == 0:
        return np.full_like(t, S - eps)
    sol = integrate.solve_ivp(rhs, (0.0, t[-1]), [S - eps], method="LSODA", t_eval=t,
                              rtol=1e-10, atol=1e-10 * S)
    return sol.y[0]


# ---------------------------------------------------------------- trajectories

@dataclass
class JumpTrajectory:
    seed: int
    index: int
    model: str
    event_times: np.ndarray
    m_path: np.ndarray

    def m_at(self, t):
        """Piecewise-constant m(t)."""
        k = np.searchsorted(self.event_times, t, side="right")
        return self.m_path[k]


@dataclass
class TrajectoryEnsemble:
    N: int
    model: str
    Gamma: float
    seed: int
    m_path: np.ndarray
    event_times: np.ndarray  # (n_traj, n_events) cumulative

    @property
    def n_traj(self) -> int:
        return self.event_times.shape[0]

    def trajectory(self, i: int) -> JumpTrajectory:
        return JumpTrajectory(self.seed, i, self.model, self.event_times[i], self.m_path)

    def m_at(self, t) -> np.ndarray:
        """m of every trajectory at each time: shape (n_traj, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.empty((self.n_traj, len(t)), dtype=int)
        for i in range(self.n_traj):
            k[i] = np.searchsorted(self.event_times[i], t, side="right")
        return self.m_path[k]

    def average_Sz(self, t):
        """Trajectory mean of 2 S_z / N and its standard error."""
        x = 2 * self.m_at(t) / self.N
        return x.mean(axis=0), x.std(axis=0, ddof=1) / np.sqrt(self.n_traj)


def sample_trajectories(N: int, Gamma: float, model: str, n_traj: int, seed: int) -> TrajectoryEnsemble:
    """Exact next-event sampling of the death chain.

    Trajectory i draws from its own stream SeedSequence([seed, i]), so the
    result does not depend on how trajectories are batched."""
    if n_traj < 1:
        raise ValidationError("n_traj", "must be >= 1")
    if not Gamma > 0:
        raise ValidationError("Gamma", "must be > 0")
    model = _model(model)
    m, rate = chain(N, model, Gamma)
    r = rate[:-1]
    waits = np.empty((n_traj, len(r)))
    for i in range(n_traj):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        waits[i] = rng.standard_exponential(len(r))
    times = np.cumsum(waits / r, axis=1)
    return TrajectoryEnsemble(int(N), model, float(Gamma), int(seed), m, times)


def dwell_and_transit(ens: TrajectoryEnsemble, frac: float = 0.5):
    """Per-trajectory dwell time T_e (time before m first drops to or below
    frac * S) and transit time T_t (time spent with |m| < frac * S)."""
    S = ens.N / 2
    m = ens.m_path
    t_in = np.concatenate([np.zeros((ens.n_traj, 1)), ens.event_times], axis=1)
    hold = np.diff(t_in, axis=1)  # time spent in m_path[k], k < last
    hold_m = m[:-1]
    Te = hold[:, hold_m > frac * S].sum(axis=1)
    Tt = hold[:, np.abs(hold_m) < frac * S].sum(axis=1)
    return Te, Tt
