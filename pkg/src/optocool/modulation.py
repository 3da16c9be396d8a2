"""Cooling by pulsed modulation of the cavity dissipation rate.

The cavity decay rate is raised abruptly whenever the photon-phonon Rabi
oscillation reaches a phonon minimum, dumping the photons and restarting the
exchange from an (almost) empty cavity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import covariance as cov
from .errors import DomainError, InvalidK
from .params import ReducedParams

MODES = ("single", "periodic", "off")

# default pulse: kappa_pulse * duration = PULSE_AREA
PULSE_AREA = 10.0
PULSE_GAIN = 2000.0


@dataclass(frozen=True)
class Pulse:
    t_start: float
    duration: float
    kappa_pulse: float

    @property
    def t_end(self):
        return self.t_start + self.duration


@dataclass(frozen=True)
class ModulationSchedule:
    """Piecewise-constant, right-continuous kappa(t) made of rectangular pulses."""

    kappa_base: float
    pulses: tuple = field(default_factory=tuple)
    mode: str = "single"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.kappa_base <= 0:
            raise ValueError("kappa_base must be > 0")
        pulses = tuple(p if isinstance(p, Pulse) else Pulse(*p) for p in self.pulses)
        object.__setattr__(self, "pulses", pulses)
        for p in pulses:
            if p.t_start < 0 or p.duration <= 0:
                raise ValueError(f"bad pulse {p}")
            if p.kappa_pulse <= self.kappa_base:
                raise ValueError("kappa_pulse must exceed kappa_base")
        for a, b in zip(pulses, pulses[1:]):
            if b.t_start < a.t_end:
                raise ValueError("pulses must be sorted and non-overlapping")

    @classmethod
    def off(cls, kappa_base):
        return cls(kappa_base=kappa_base, pulses=(), mode="off")

    @classmethod
    def single(cls, rp: ReducedParams, kappa_pulse=None, duration=None, t_start=None):
        """One pulse at the first phonon minimum of the Rabi exchange."""
        kappa_pulse, duration = default_pulse(rp.kappa, kappa_pulse, duration)
        if t_start is None:
            t_start = pulse_times(rp, 1)[0]
        return cls(rp.kappa, (Pulse(t_start, duration, kappa_pulse),), "single")

    @classmethod
    def periodic(cls, rp: ReducedParams, n_pulses, kappa_pulse=None, duration=None):
        """``n_pulses`` pulses, each one half Rabi period after the end of the previous."""
        kappa_pulse, duration = default_pulse(rp.kappa, kappa_pulse, duration)
        period = pulse_times(rp, 1)[0]
        pulses = tuple(
            Pulse(period + k * (period + duration), duration, kappa_pulse) for k in range(n_pulses)
        )
        return cls(rp.kappa, pulses, "periodic")

    @property
    def active(self):
        return self.mode != "off" and len(self.pulses) > 0

    def kappa_at(self, t):
        if self.mode != "off":
            for p in self.pulses:
                if p.t_start <= t < p.t_end:
                    return p.kappa_pulse
        return self.kappa_base

    def edges(self, t_final):
        """Times in (0, t_final) where kappa jumps."""
        out = set()
        if self.mode != "off":
            for p in self.pulses:
                out.update(t for t in (p.t_start, p.t_end) if 0.0 < t < t_final)
        return sorted(out)


def default_pulse(kappa_base, kappa_pulse=None, duration=None):
    if kappa_pulse is None:
        kappa_pulse = PULSE_GAIN * kappa_base if duration is None else PULSE_AREA / duration
    if duration is None:
        duration = PULSE_AREA / kappa_pulse
    return float(kappa_pulse), float(duration)


def pulse_times(rp: ReducedParams, n_pulses):
    """Phonon minima of the Rabi exchange, t_k = (k + 1) pi / (omega_+ - omega_-)."""
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    w_plus, w_minus = cov.normal_mode_freqs(rp)
    if w_plus == w_minus:
        raise DomainError("no Rabi exchange at zero coupling")
    half = math.pi / (w_plus - w_minus)
    return [(k + 1) * half for k in range(n_pulses)]


def evolve_modulated(initial: cov.MomentState, rp: ReducedParams, schedule: ModulationSchedule,
                     t_final, dt_max=math.inf, dt_out=None, backend="rk45",
                     stability="raise") -> cov.Trajectory:
    """Covariance dynamics with kappa(t) from ``schedule``; restarts at every kappa jump."""
    if not schedule.active:
        traj = cov.evolve(initial, rp, t_final, dt_max=dt_max, dt_out=dt_out,
                          backend=backend, stability=stability)
        return replace(traj, kappa_trace=np.full(len(traj), rp.kappa))

    base = replace(rp, kappa=schedule.kappa_base)
    cov.check_stability(base, stability)
    times = cov.output_grid(t_final, dt_out)
    bounds = [0.0, *schedule.edges(t_final), float(t_final)]
    data = np.empty((len(times), 10))
    y = initial.to_vector()
    data[0] = y
    cache = {}
    for t0, t1 in zip(bounds, bounds[1:]):
        kappa = schedule.kappa_at(t0)
        if kappa not in cache:
            seg = replace(rp, kappa=kappa)
            cache[kappa] = (*cov.generator(seg), cov.step_cap(seg, dt_max))
        A, b, h_max = cache[kappa]
        mask = (times > t0) & (times <= t1)
        targets = np.append(times[mask], t1)
        Y = cov.integrate_segment(A, b, y, t0, targets, h_max, backend)
        data[mask] = Y[:-1]
        y = Y[-1]
    kappa_trace = np.array([schedule.kappa_at(t) for t in times])
    return cov.Trajectory(times=times, data=data, params=rp, kappa_trace=kappa_trace)


def _check_coupling(g):
    if not 0.0 < g < 0.5:
        raise DomainError("need 0 < |G| < omega_m / 2")


def nins_limit(rp: ReducedParams):
    """Phonon floor kept by re-initializing the cavity at every Rabi minimum."""
    g = rp.g_eff
    _check_coupling(g)
    classical = math.pi * rp.gamma * rp.n_th / (4.0 * g)
    quantum = math.pi ** 2 * g ** 4 / ((1.0 - g * g) * (1.0 - 4.0 * g * g))
    return classical + quantum


def matched_params(k):
    """Coupling for which (omega_+ + omega_-)/(omega_+ - omega_-) = k (odd k >= 3)."""
    if isinstance(k, bool) or int(k) != k or k < 3 or int(k) % 2 == 0:
        raise InvalidK(f"k must be an odd integer >= 3, got {k!r}")
    k = int(k)
    return k / (k * k + 1.0)


def ninsmat_limit(rp: ReducedParams):
    g = rp.g_eff
    _check_coupling(g)
    bracket = rp.gamma * rp.n_th / rp.kappa + g * g / (2.0 * (1.0 - 4.0 * g * g))
    return math.pi * rp.kappa / (4.0 * g) * bracket


@dataclass(frozen=True)
class Speedup:
    t_mod: float
    t_ref: float
    ratio: float


def settling_time(times, n_b, threshold):
    """First time after which ``n_b`` stays at or below ``threshold`` (NaN if it never does)."""
    above = np.nonzero(np.asarray(n_b) > threshold)[0]
    if len(above) == 0:
        return float(times[0])
    last = above[-1]
    if last == len(times) - 1:
        return math.nan
    # interpolate the final downward crossing
    t0, t1 = times[last], times[last + 1]
    y0, y1 = n_b[last], n_b[last + 1]
    return float(t0 + (y0 - threshold) / (y0 - y1) * (t1 - t0))


def speedup_metric(traj_mod: cov.Trajectory, traj_ref: cov.Trajectory, threshold) -> Speedup:
    """Ratio of settling times below ``threshold`` (reference over modulated)."""
    t_mod = settling_time(traj_mod.times, traj_mod.n_b, threshold)
    t_ref = settling_time(traj_ref.times, traj_ref.n_b, threshold)
    if math.isnan(t_mod) or math.isnan(t_ref):
        ratio = math.nan
    elif t_mod == t_ref:
        ratio = 1.0
    elif t_mod == 0.0:
        ratio = math.inf
    else:
        ratio = t_ref / t_mod
    return Speedup(t_mod=t_mod, t_ref=t_ref, ratio=ratio)
