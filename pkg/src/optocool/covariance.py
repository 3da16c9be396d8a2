"""Exact second-moment dynamics of the linearized optomechanical system.

The six moments <a^dag a>, <b^dag b>, <a^dag b>, <a b>, <a^2>, <b^2> obey a
closed linear ODE. They are stored as ten real components

    [n_a, n_b, Re adag_b, Im adag_b, Re a_b, Im a_b, Re a_sq, Im a_sq, Re b_sq, Im b_sq]

and integrated either with an adaptive Dormand-Prince 5(4) pair (default) or
with the exact matrix-exponential propagator.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .errors import DomainError, SingularSystem, StepUnderflow, UnstableParams
from .params import ReducedParams, stability_check

COLUMNS = (
    "n_a", "n_b",
    "re_adag_b", "im_adag_b", "re_a_b", "im_a_b",
    "re_a_sq", "im_a_sq", "re_b_sq", "im_b_sq",
)

RTOL = 1e-9
ATOL = 1e-12
H_MIN = 1e-12


@dataclass(frozen=True)
class MomentState:
    n_a: float = 0.0
    n_b: float = 0.0
    adag_b: complex = 0j
    a_b: complex = 0j
    a_sq: complex = 0j
    b_sq: complex = 0j

    @classmethod
    def thermal(cls, n_th):
        """Optical vacuum with the mechanics in thermal equilibrium."""
        return cls(n_b=float(n_th))

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(
            n_a=float(v[0]), n_b=float(v[1]),
            adag_b=complex(v[2], v[3]), a_b=complex(v[4], v[5]),
            a_sq=complex(v[6], v[7]), b_sq=complex(v[8], v[9]),
        )

    def to_vector(self):
        return np.array([
            np.real(self.n_a), np.real(self.n_b),
            self.adag_b.real, self.adag_b.imag, self.a_b.real, self.a_b.imag,
            self.a_sq.real, self.a_sq.imag, self.b_sq.real, self.b_sq.imag,
        ])

    def covariance_matrix(self):
        """Symmetrized quadrature covariance for (x_a, p_a, x_b, p_b), x = c + c^dag.

        Normalized so that the two-mode vacuum gives the identity.
        """
        na, nb = np.real(self.n_a), np.real(self.n_b)
        x, y, a2, b2 = self.adag_b, self.a_b, self.a_sq, self.b_sq
        # <c_i c_j> for c = (a, a^dag, b, b^dag)
        Q = np.array([
            [a2, na + 1, y, np.conj(x)],
            [na, np.conj(a2), x, np.conj(y)],
            [y, x, b2, nb + 1],
            [np.conj(x), np.conj(y), nb, np.conj(b2)],
        ], dtype=complex)
        T = np.array([
            [1, 1, 0, 0],
            [-1j, 1j, 0, 0],
            [0, 0, 1, 1],
            [0, 0, -1j, 1j],
        ])
        M = T @ Q @ T.T
        return np.real(0.5 * (M + M.T))

    def symplectic_eigenvalues(self):
        V = self.covariance_matrix()
        omega = np.kron(np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]]))
        ev = np.sort(np.abs(np.linalg.eigvals(1j * omega @ V)))
        return ev[::2]


def moment_derivatives(state: MomentState, rp: ReducedParams, G=None) -> MomentState:
    """Right-hand sides of the six moment equations (omega_m = 1).

    ``G`` overrides the coupling with an arbitrary complex value; by default
    it is the real ``rp.g_eff``.
    """
    G = complex(rp.g_eff if G is None else G)
    Gc = G.conjugate()
    d, k, g, nth = rp.detuning, rp.kappa, rp.gamma, rp.n_th
    na, nb = state.n_a, state.n_b
    x, y, a2, b2 = state.adag_b, state.a_b, state.a_sq, state.b_sq
    xc, yc = np.conj(x), np.conj(y)

    dna = -1j * (G * x - Gc * xc + G * yc - Gc * y) - k * na
    dnb = -1j * (-G * x + Gc * xc + G * yc - Gc * y) - g * nb + g * nth
    dx = (-1j * (d + 1.0) - 0.5 * (k + g)) * x - 1j * (Gc * na - Gc * nb + G * np.conj(a2) - Gc * b2)
    dy = (1j * (d - 1.0) - 0.5 * (k + g)) * y - 1j * (G * na + G * nb + G + Gc * a2 + G * b2)
    da2 = (2j * d - k) * a2 - 2j * G * (y + xc)
    db2 = (-2j - g) * b2 - 2j * (Gc * y + G * x)
    return MomentState(n_a=dna, n_b=dnb, adag_b=dx, a_b=dy, a_sq=da2, b_sq=db2)


def generator(rp: ReducedParams, G=None):
    """Matrix ``A`` and drive ``b`` with d/dt v = A v + b on the real moment vector.

    Built by probing :func:`moment_derivatives`, which is real-linear in the state.
    """
    def f(v):
        dv = moment_derivatives(MomentState.from_vector(v), rp, G)
        return np.array([
            np.real(dv.n_a), np.real(dv.n_b),
            dv.adag_b.real, dv.adag_b.imag, dv.a_b.real, dv.a_b.imag,
            dv.a_sq.real, dv.a_sq.imag, dv.b_sq.real, dv.b_sq.imag,
        ])

    b = f(np.zeros(10))
    A = np.empty((10, 10))
    for col in range(10):
        e = np.zeros(10)
        e[col] = 1.0
        A[:, col] = f(e) - b
    return A, b


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    data: np.ndarray  # (len(times), 10) real moment vectors
    params: ReducedParams
    kappa_trace: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.times) != len(self.data):
            raise ValueError("times and states differ in length")
        if len(self.times) and self.times[0] != 0.0:
            raise ValueError("trajectories start at t = 0")

    def __len__(self):
        return len(self.times)

    @property
    def n_a(self):
        return self.data[:, 0]

    @property
    def n_b(self):
        return self.data[:, 1]

    @property
    def states(self):
        return [MomentState.from_vector(row) for row in self.data]

    def min_symplectic_eigenvalue(self):
        return min(float(s.symplectic_eigenvalues().min()) for s in self.states)

    def to_csv_rows(self):
        header = ["t", *COLUMNS]
        if self.kappa_trace is not None:
            header.append("kappa")
        rows = []
        for i, t in enumerate(self.times):
            row = [float(t), *map(float, self.data[i])]
            if self.kappa_trace is not None:
                row.append(float(self.kappa_trace[i]))
            rows.append(row)
        return header, rows


def check_stability(rp: ReducedParams, mode="raise"):
    """Apply the stability criterion; ``mode`` is 'raise', 'warn' or 'ignore'."""
    if mode == "ignore":
        return
    if not stability_check(rp):
        message = f"parameters outside the stable regime: {rp}"
        if mode == "warn":
            warnings.warn(message, RuntimeWarning, stacklevel=3)
        else:
            raise UnstableParams(message)


def step_cap(rp: ReducedParams, dt_max=math.inf):
    return min(dt_max, 0.05 / max(rp.kappa, 1.0, abs(rp.detuning)))


def output_grid(t_final, dt_out=None):
    if t_final <= 0:
        raise ValueError("t_final must be > 0")
    if dt_out is None:
        dt_out = t_final / 1000
    n = max(1, int(round(t_final / dt_out)))
    return np.linspace(0.0, t_final, n + 1)


def integrate_segment(A, b, y0, t0, t_out, h_max, backend="rk45"):
    """Integrate from ``t0`` and return the states at ``t_out`` (all >= t0)."""
    t_out = np.asarray(t_out, dtype=float)
    if backend == "expm":
        return _expm_segment(A, b, y0, t0, t_out)
    Y, status, _, _ = kernels.dopri_linear(A, b, y0, t0, t_out, RTOL, ATOL, h_max, H_MIN)
    if status != 0:
        raise StepUnderflow(f"step size fell below {H_MIN:g} after t = {t0:g}")
    return Y


def _expm_segment(A, b, y0, t0, t_out):
    n = len(b)
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = A
    aug[:n, n] = b
    cache = {}
    Y = np.empty((len(t_out), n))
    z = np.append(np.asarray(y0, dtype=float), 1.0)
    t = t0
    for i, target in enumerate(t_out):
        step = round(target - t, 14)
        if step > 0:
            if step not in cache:
                cache[step] = scipy.linalg.expm(aug * step)
            z = cache[step] @ z
            t = target
        Y[i] = z[:n]
    return Y


def evolve(initial: MomentState, rp: ReducedParams, t_final, dt_max=math.inf,
           dt_out=None, backend="rk45", stability="raise") -> Trajectory:
    """Integrate the moment equations on a uniform output grid from t = 0 to ``t_final``."""
    check_stability(rp, stability)
    times = output_grid(t_final, dt_out)
    A, b = generator(rp)
    Y = integrate_segment(A, b, initial.to_vector(), 0.0, times, step_cap(rp, dt_max), backend)
    return Trajectory(times=times, data=Y, params=rp)


def steady_state_moments(rp: ReducedParams) -> MomentState:
    check_stability(rp)
    A, b = generator(rp)
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            lu, piv = scipy.linalg.lu_factor(A)
        except (scipy.linalg.LinAlgWarning, np.linalg.LinAlgError) as exc:
            raise SingularSystem(str(exc)) from exc
    if np.min(np.abs(np.diag(lu))) <= 10 * np.finfo(float).eps * np.abs(A).max():
        raise SingularSystem("moment system is singular (stability boundary)")
    x = scipy.linalg.lu_solve((lu, piv), -b)
    if np.linalg.norm(A @ x + b) > 1e-10 * np.linalg.norm(b):
        raise SingularSystem("steady-state residual above tolerance")
    return MomentState.from_vector(x)


@dataclass(frozen=True)
class SteadyForms:
    full: float
    resolved: float
    weak: float
    strong: float


def _warn_off_resonance(rp, what):
    if abs(rp.detuning + 1.0) > 1e-9:
        warnings.warn(f"{what} assumes detuning = -1; got {rp.detuning}", RuntimeWarning, stacklevel=3)


def nstd_closed_form(rp: ReducedParams) -> SteadyForms:
    """Closed-form steady phonon numbers at Delta' = -omega_m.

    ``full`` keeps all orders in kappa; ``resolved`` drops the kappa^2 corrections
    of the quantum term; ``weak`` and ``strong`` are the two coupling limits.
    """
    _warn_off_resonance(rp, "nstd_closed_form")
    G2, k, g, nth = rp.g_eff ** 2, rp.kappa, rp.gamma, rp.n_th
    if 16.0 * G2 >= 4.0 + k * k:
        raise DomainError("16|G|^2 >= 4 omega_m^2 + kappa^2: closed form has a pole")
    classical = (4.0 * G2 + k * k) / (4.0 * G2 * (k + g)) * g * nth if G2 > 0 else nth
    full_q = (4.0 * (k * k + 8.0 * G2) + k * k * (k * k - 8.0 * G2)) / (16.0 * (4.0 + k * k - 16.0 * G2))
    if 4.0 * G2 < 1.0:
        resolved = classical + (k * k + 8.0 * G2) / (16.0 * (1.0 - 4.0 * G2))
        strong = g * nth / (k + g) + G2 / (2.0 * (1.0 - 4.0 * G2))
    else:
        resolved = strong = math.nan
    cooling_rate = 4.0 * G2 / k
    weak = g * nth / (cooling_rate + g) + k * k / 16.0
    return SteadyForms(full=classical + full_q, resolved=resolved, weak=weak, strong=strong)


def normal_mode_freqs(rp):
    """Hybridized frequencies sqrt(1 +- 2|G|); accepts ReducedParams or a bare |G|."""
    g = float(getattr(rp, "g_eff", rp))
    if 2.0 * g > 1.0:
        raise DomainError("2|G| > omega_m: lower normal mode is not oscillatory")
    return math.sqrt(1.0 + 2.0 * g), math.sqrt(1.0 - 2.0 * g)


def nb_weak_analytic(t, rp: ReducedParams):
    if rp.g_eff > 0.25 * rp.kappa:
        warnings.warn("weak-coupling form used with |G| > kappa/4", RuntimeWarning, stacklevel=2)
    t = np.asarray(t, dtype=float)
    G2, k, g, nth = rp.g_eff ** 2, rp.kappa, rp.gamma, rp.n_th
    rate = 4.0 * G2 / k
    decay = np.exp(-rate * t)
    return nth * (g + rate * decay) / (g + rate) + k * k / 16.0 * (1.0 - decay)


def nb_strong_analytic(t, rp: ReducedParams):
    if rp.g_eff < 0.25 * rp.kappa:
        warnings.warn("strong-coupling form used with |G| < kappa/4", RuntimeWarning, stacklevel=2)
    w_plus, w_minus = normal_mode_freqs(rp)
    t = np.asarray(t, dtype=float)
    G2, k, g, nth = rp.g_eff ** 2, rp.kappa, rp.gamma, rp.n_th
    envelope = np.exp(-0.5 * (k + g) * t)
    beat = np.cos((w_plus - w_minus) * t)
    exchange = nth * (g + 0.5 * envelope * (k - g + (k + g) * beat)) / (k + g)
    backaction = G2 * (1.0 - envelope * np.cos((w_plus + w_minus) * t) * beat) / (2.0 * (1.0 - 4.0 * G2))
    return exchange + backaction
