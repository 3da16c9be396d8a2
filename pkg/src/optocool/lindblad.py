"""Truncated Fock-space master-equation oracle for the linearized system.

States live on photon (x) phonon space with row-major ordering: basis index
``i = n * dim_b + m`` for |n photons, m phonons>. Operators are the usual
ladder matrices truncated at the cutoffs, so b b^dag vanishes on the top
phonon level; the master equation preserves the trace exactly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import covariance as cov
from . import kernels
from .errors import BudgetExceeded, ConfigError, NumericalError, StepTooLarge, TruncationWarning
from .params import ReducedParams

DEFAULT_BUDGET = 4096
LEAK_TOL = 1e-4
HERM_TOL = 1e-10
TRACE_TOL = 1e-8
POS_TOL = 1e-8
DRIFT_PER_STEP = 1e-6
RENORM_TOL = 1e-10


@dataclass(frozen=True)
class FockConfig:
    dim_a: int
    dim_b: int
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if int(self.dim_a) != self.dim_a or int(self.dim_b) != self.dim_b:
            raise ConfigError("Fock cutoffs must be integers")
        if self.dim_a < 2 or self.dim_b < 2:
            raise ConfigError("Fock cutoffs must be >= 2")
        if self.dim_a * self.dim_b > self.budget:
            raise BudgetExceeded(
                f"dim_a * dim_b = {self.dim_a * self.dim_b} exceeds budget {self.budget}"
            )

    @property
    def size(self):
        return self.dim_a * self.dim_b

    def doubled(self):
        return FockConfig(2 * self.dim_a, 2 * self.dim_b, max(self.budget, 4 * self.size))


@lru_cache(maxsize=16)
def operators(dim_a, dim_b):
    """Sparse (a, b) on the product space."""
    def destroy(n):
        return sp.diags(np.sqrt(np.arange(1, n, dtype=float)), 1, format="csr")

    a = sp.kron(destroy(dim_a), sp.identity(dim_b), format="csr")
    b = sp.kron(sp.identity(dim_a), destroy(dim_b), format="csr")
    return a, b


@dataclass(frozen=True)
class Health:
    hermiticity: float
    trace_error: float
    min_eigenvalue: float
    top_photon: float
    top_phonon: float

    @property
    def leaking(self):
        return max(self.top_photon, self.top_phonon) >= LEAK_TOL

    @property
    def ok(self):
        return (self.hermiticity <= HERM_TOL and self.trace_error <= TRACE_TOL
                and self.min_eigenvalue >= -POS_TOL)


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray
    dim_a: int
    dim_b: int

    def __post_init__(self):
        n = self.dim_a * self.dim_b
        if self.entries.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix, got {self.entries.shape}")

    @property
    def trace(self):
        return float(np.trace(self.entries).real)

    @property
    def config(self):
        return FockConfig(self.dim_a, self.dim_b, max(DEFAULT_BUDGET, self.dim_a * self.dim_b))

    def populations(self):
        """Marginal photon and phonon number distributions."""
        p = np.real(np.diag(self.entries)).reshape(self.dim_a, self.dim_b)
        return p.sum(axis=1), p.sum(axis=0)

    def health(self):
        rho = self.entries
        p_a, p_b = self.populations()
        lowest = scipy.linalg.eigvalsh(0.5 * (rho + rho.conj().T), subset_by_index=[0, 0])[0]
        return Health(
            hermiticity=float(np.abs(rho - rho.conj().T).max()),
            trace_error=abs(self.trace - 1.0),
            min_eigenvalue=float(lowest),
            top_photon=float(p_a[-1]),
            top_phonon=float(p_b[-1]),
        )

    def validate(self):
        """Raise on broken invariants, warn on truncation leakage; returns the report."""
        report = self.health()
        if not report.ok:
            raise NumericalError(f"density matrix failed health check: {report}")
        if report.leaking:
            warnings.warn(
                f"top-level populations {report.top_photon:.2e} (photon), "
                f"{report.top_phonon:.2e} (phonon) exceed {LEAK_TOL:g}",
                TruncationWarning, stacklevel=2,
            )
        return report


def _thermal_diag(dim, n_th):
    if n_th == 0:
        p = np.zeros(dim)
        p[0] = 1.0
        return p
    x = n_th / (n_th + 1.0)
    p = x ** np.arange(dim)
    return p / p.sum()


def product_state(rho_a, rho_b):
    rho_a, rho_b = np.asarray(rho_a, dtype=complex), np.asarray(rho_b, dtype=complex)
    return DensityMatrix(np.kron(rho_a, rho_b), len(rho_a), len(rho_b))


def thermal_state(cfg: FockConfig, n_th, n_photon=0.0):
    """Photon and phonon thermal states (truncated and renormalized)."""
    return product_state(np.diag(_thermal_diag(cfg.dim_a, n_photon)),
                         np.diag(_thermal_diag(cfg.dim_b, n_th)))


def vacuum_state(cfg: FockConfig):
    return thermal_state(cfg, 0.0)


def coherent_vector(dim, alpha):
    n = np.arange(dim)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    amp = np.exp(-0.5 * abs(alpha) ** 2 - 0.5 * log_fact) * np.power(complex(alpha), n)
    return amp / np.linalg.norm(amp)


def coherent_state(cfg: FockConfig, alpha, beta):
    psi = np.kron(coherent_vector(cfg.dim_a, alpha), coherent_vector(cfg.dim_b, beta))
    return DensityMatrix(np.outer(psi, psi.conj()), cfg.dim_a, cfg.dim_b)


def moments_from_rho(rho: DensityMatrix) -> cov.MomentState:
    a, b = operators(rho.dim_a, rho.dim_b)
    R = rho.entries

    def expect(op):
        # tr(rho O) = sum_ij rho_ij O_ji
        return complex(op.T.multiply(R).sum())

    ad, bd = a.conj().T, b.conj().T
    n_a, n_b = expect(ad @ a), expect(bd @ b)
    if max(abs(n_a.imag), abs(n_b.imag)) > 1e-10:
        raise NumericalError("occupation numbers have imaginary parts above 1e-10")
    return cov.MomentState(
        n_a=n_a.real, n_b=n_b.real,
        adag_b=expect(ad @ b), a_b=expect(a @ b),
        a_sq=expect(a @ a), b_sq=expect(b @ b),
    )


@dataclass(frozen=True)
class Generator:
    """Lindblad generator for given parameters; applied matrix-free, assembled on demand."""

    rp: ReducedParams
    cfg: FockConfig
    G: complex = None

    def __post_init__(self):
        if self.G is None:
            object.__setattr__(self, "G", complex(self.rp.g_eff))

    @property
    def args(self):
        rp = self.rp
        return (self.cfg.dim_a, self.cfg.dim_b, rp.detuning, self.G, rp.kappa, rp.gamma, rp.n_th)

    def apply(self, rho):
        entries = rho.entries if isinstance(rho, DensityMatrix) else rho
        return kernels.lindblad_rhs(np.ascontiguousarray(entries, dtype=complex), *self.args)

    def hamiltonian(self):
        a, b = operators(self.cfg.dim_a, self.cfg.dim_b)
        ad, bd = a.conj().T, b.conj().T
        G = self.G
        return (-self.rp.detuning * (ad @ a) + bd @ b
                + (G * ad + np.conj(G) * a) @ (b + bd)).tocsr()

    @cached_property
    def matrix(self):
        """Sparse superoperator acting on the row-major flattened density matrix."""
        a, b = operators(self.cfg.dim_a, self.cfg.dim_b)
        eye = sp.identity(self.cfg.size, format="csr")
        H = self.hamiltonian()
        L = -1j * (sp.kron(H, eye) - sp.kron(eye, H.T))
        rp = self.rp
        for rate, c in ((rp.kappa, a), (rp.gamma * (rp.n_th + 1.0), b), (rp.gamma * rp.n_th, b.conj().T)):
            if rate == 0:
                continue
            cdc = (c.conj().T @ c).tocsr()
            L = L + rate * (sp.kron(c, c.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T))
        return L.tocsr()


def build_generator(rp: ReducedParams, cfg: FockConfig, G=None) -> Generator:
    return Generator(rp, cfg, G)


def max_step(rp: ReducedParams):
    return 0.01 / max(1.0, rp.kappa, abs(rp.detuning))


@dataclass
class OracleRun:
    times: np.ndarray
    moments: list
    health: list
    renormalizations: list = field(default_factory=list)  # (time, trace before rescaling)
    snapshots: list = field(default_factory=list)
    final: DensityMatrix = None

    @property
    def n_a(self):
        return np.array([m.n_a for m in self.moments])

    @property
    def n_b(self):
        return np.array([m.n_b for m in self.moments])

    def worst_health(self):
        return Health(
            hermiticity=max(h.hermiticity for h in self.health),
            trace_error=max(h.trace_error for h in self.health),
            min_eigenvalue=min(h.min_eigenvalue for h in self.health),
            top_photon=max(h.top_photon for h in self.health),
            top_phonon=max(h.top_phonon for h in self.health),
        )


def evolve_rho(rho0: DensityMatrix, generator: Generator, t_final, dt=None, dt_snap=None,
               keep_states=False) -> OracleRun:
    """Fixed-step RK4 of the master equation with snapshots every ``dt_snap``."""
    limit = max_step(generator.rp)
    dt = limit if dt is None else float(dt)
    if dt > limit * (1 + 1e-12):
        raise ConfigError(f"dt = {dt:g} exceeds the RK4 step bound {limit:g}")
    if dt_snap is None:
        dt_snap = t_final / 100
    per_snap = max(1, int(round(dt_snap / dt)))
    n_snap = max(1, int(math.ceil(t_final / (per_snap * dt) - 1e-9)))
    rho0.validate()

    rho = np.array(rho0.entries, dtype=complex, order="C")
    run = OracleRun(times=np.zeros(n_snap + 1), moments=[moments_from_rho(rho0)],
                    health=[rho0.health()])
    if keep_states:
        run.snapshots.append(rho0)
    previous = np.trace(rho).real
    warned = False
    t = 0.0
    for k in range(1, n_snap + 1):
        steps = per_snap if k < n_snap else max(1, int(round((t_final - t) / dt)))
        traces = kernels.lindblad_rk4(rho, *generator.args, dt, steps)
        drift = np.abs(np.diff(np.concatenate(([previous], traces)))).max()
        if drift > DRIFT_PER_STEP:
            raise StepTooLarge(f"trace drift {drift:.2e} per step at t = {t:g}")
        t += steps * dt
        tr = traces[-1]
        if abs(tr - 1.0) > RENORM_TOL:
            rho /= tr
            run.renormalizations.append((t, float(tr)))
        previous = np.trace(rho).real
        state = DensityMatrix(rho.copy() if keep_states else rho, rho0.dim_a, rho0.dim_b)
        report = state.health()
        if not report.ok:
            raise NumericalError(f"density matrix failed health check at t = {t:g}: {report}")
        if report.leaking and not warned:
            warnings.warn(f"truncation leakage at t = {t:g}: {report}", TruncationWarning, stacklevel=2)
            warned = True
        run.times[k] = t
        run.moments.append(moments_from_rho(state))
        run.health.append(report)
        if keep_states:
            run.snapshots.append(state)
    run.final = DensityMatrix(rho, rho0.dim_a, rho0.dim_b)
    return run


@dataclass(frozen=True)
class OracleComparison:
    times: np.ndarray
    n_b_cov: np.ndarray
    n_b_oracle: np.ndarray
    max_deviation: float  # max_t |diff| / max(1, n_b)
    run: OracleRun
    trajectory: cov.Trajectory


def compare_with_covariance(rp: ReducedParams, cfg: FockConfig, t_final, dt=None, dt_snap=None,
                            n_photon=0.0) -> OracleComparison:
    """Run both engines from the same thermal initial state and compare n_b(t)."""
    rho0 = thermal_state(cfg, rp.n_th, n_photon)
    run = evolve_rho(rho0, build_generator(rp, cfg), t_final, dt=dt, dt_snap=dt_snap)
    traj = cov.evolve(run.moments[0], rp, run.times[-1], dt_out=run.times[1] - run.times[0])
    n_cov = np.interp(run.times, traj.times, traj.n_b)
    n_lin = run.n_b
    dev = float(np.max(np.abs(n_cov - n_lin) / np.maximum(1.0, n_cov)))
    return OracleComparison(run.times, n_cov, n_lin, dev, run, traj)


def dump_matrix(rho: DensityMatrix, stream):
    """Plain-text dump: header line, then one row per line as 're im' pairs."""
    n = rho.entries.shape[0]
    stream.write(f"# complex-matrix rows={n} dim_a={rho.dim_a} dim_b={rho.dim_b} index=n*dim_b+m\n")
    for row in rho.entries:
        stream.write(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row))
        stream.write("\n")


def load_matrix(stream) -> DensityMatrix:
    header = stream.readline().split()
    meta = dict(item.split("=", 1) for item in header if "=" in item)
    dim_a, dim_b = int(meta["dim_a"]), int(meta["dim_b"])
    rows = [np.array(line.split(), dtype=float) for line in stream if line.strip()]
    data = np.array(rows)
    return DensityMatrix(data[:, 0::2] + 1j * data[:, 1::2], dim_a, dim_b)
