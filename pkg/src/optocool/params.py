"""Physical system description, unit reduction and classical steady state.

Everything downstream of this module works in units where the mechanical
frequency is 1; :func:`to_reduced` is the single crossing point from SI.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, NoConvergence, UnsupportedRegime

HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J / K


def thermal_occupancy(omega_m, temperature):
    """Bose-Einstein occupancy of a mode at angular frequency ``omega_m``."""
    if omega_m <= 0 or temperature < 0:
        raise ValueError("need omega_m > 0 and temperature >= 0")
    if temperature == 0:
        return 0.0
    x = HBAR * omega_m / (K_B * temperature)
    if x > 700.0:
        return 0.0
    return 1.0 / math.expm1(x)


def drive_amplitude(power, omega_in, kappa_ex, phase=0.0):
    """Complex driving strength; modulus sqrt(kappa_ex P / (hbar omega_in)), argument ``phase``."""
    if power < 0 or kappa_ex <= 0 or omega_in <= 0:
        raise ValueError("need power >= 0, kappa_ex > 0, omega_in > 0")
    return math.sqrt(kappa_ex * power / (HBAR * omega_in)) * complex(math.cos(phase), math.sin(phase))


def zero_point_fluctuation(m_eff, omega_m):
    if m_eff <= 0 or omega_m <= 0:
        raise ValueError("need m_eff > 0 and omega_m > 0")
    return math.sqrt(HBAR / (2.0 * m_eff * omega_m))


@dataclass(frozen=True)
class PhysicalParams:
    """SI description of a driven optomechanical system (rates in rad/s)."""

    omega_m: float
    omega_c: float
    omega_in: float
    kappa_0: float
    kappa_ex: float
    gamma: float
    g: float
    m_eff: float
    power: float
    phase: float = 0.0
    temperature: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ConfigError(f"{f.name} must be finite, got {value!r}")
        for name in ("omega_m", "omega_c", "omega_in", "kappa_0", "kappa_ex", "gamma", "m_eff"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.g < 0:
            raise ConfigError("g must be >= 0")
        if self.power < 0:
            raise ConfigError("power must be >= 0")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")

    @property
    def kappa(self):
        return self.kappa_0 + self.kappa_ex

    @property
    def detuning(self):
        """Bare input-cavity detuning omega_in - omega_c."""
        return self.omega_in - self.omega_c

    @property
    def drive(self):
        return drive_amplitude(self.power, self.omega_in, self.kappa_ex, self.phase)

    @property
    def x_zpf(self):
        return zero_point_fluctuation(self.m_eff, self.omega_m)

    @property
    def n_th(self):
        return thermal_occupancy(self.omega_m, self.temperature)


@dataclass(frozen=True)
class ReducedParams:
    """Dimensionless parameters (omega_m = 1) consumed by every engine.

    ``g_eff`` is the field-enhanced coupling |G| and ``detuning`` the effective
    detuning Delta'; both may be set directly instead of derived from a drive.
    """

    kappa: float
    gamma: float
    g_eff: float
    detuning: float = -1.0
    n_th: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ConfigError(f"{f.name} must be finite, got {value!r}")
        if self.kappa <= 0:
            raise ConfigError("kappa must be > 0")
        if self.gamma <= 0:
            raise ConfigError("gamma must be > 0")
        if self.g_eff < 0:
            raise ConfigError("g_eff must be >= 0")
        if self.n_th < 0:
            raise ConfigError("n_th must be >= 0")

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ClassicalFixedPoint:
    """One self-consistent classical solution; ``alpha``/``beta`` are mode amplitudes."""

    alpha: complex
    beta: complex
    detuning_eff: float  # rad/s
    stable: bool
    branch_count: int
    g: float = 0.0  # single-photon coupling, kept to report G

    @property
    def intensity(self):
        return abs(self.alpha) ** 2

    @property
    def coupling(self):
        """Field-enhanced coupling G = g alpha (rad/s)."""
        return self.g * self.alpha


def _intensity_cubic(d, k, eta, w2):
    # I * ((d + eta I)^2 + k^2/4) - w2 = 0, highest power first
    return np.array([eta * eta, 2.0 * d * eta, d * d + 0.25 * k * k, -w2])


def _polish(coeffs, x, tol=1e-15, max_iter=100):
    p = np.poly1d(coeffs)
    dp = p.deriv()
    for _ in range(max_iter):
        slope = dp(x)
        if slope == 0:
            break
        step = p(x) / slope
        x -= step
        if abs(step) <= tol * max(1.0, abs(x)):
            return x
    return x


def classical_steady_state(params: PhysicalParams):
    """All classical fixed points, sorted by intracavity intensity.

    The coupled steady-state conditions reduce to a real cubic in the
    intracavity photon number |alpha|^2; each non-negative real root is
    polished by Newton iteration and mapped back to (alpha, beta, Delta').
    With three roots the middle one (negative slope of the input-output
    curve) is flagged unstable.
    """
    wm = params.omega_m
    d = params.detuning / wm
    k = params.kappa / wm
    gm = params.gamma / wm
    g = params.g / wm
    omega = params.drive / wm
    w2 = abs(omega) ** 2
    eta = 2.0 * g * g / (1.0 + 0.25 * gm * gm)

    if w2 == 0.0:
        roots = [0.0]
    elif eta == 0.0:
        roots = [w2 / (d * d + 0.25 * k * k)]
    else:
        coeffs = _intensity_cubic(d, k, eta, w2)
        raw = np.roots(coeffs)
        scale = max(1.0, float(np.max(np.abs(raw))))
        roots = sorted(
            _polish(coeffs, float(r.real))
            for r in raw
            if abs(r.imag) <= 1e-7 * scale and r.real >= -1e-12 * scale
        )
        # merge roots that collapsed onto each other during polishing
        merged = []
        for r in roots:
            if not merged or abs(r - merged[-1]) > 1e-9 * max(1.0, abs(r)):
                merged.append(max(r, 0.0))
        roots = merged

    points = []
    for intensity in roots:
        dp = d + eta * intensity
        alpha = -1j * omega / (-1j * dp + 0.5 * k)
        beta = -1j * g * abs(alpha) ** 2 / (1j + 0.5 * gm)
        dp_check = d - g * 2.0 * beta.real
        res_a = abs((1j * dp_check - 0.5 * k) * alpha - 1j * omega)
        res_b = abs((-1j - 0.5 * gm) * beta - 1j * g * abs(alpha) ** 2)
        scale_a = max(1.0, abs(omega))
        scale_b = max(1.0, g * abs(alpha) ** 2)
        if res_a > 1e-10 * scale_a or res_b > 1e-10 * scale_b:
            raise NoConvergence(
                f"fixed point residuals {res_a:.3e}, {res_b:.3e} exceed tolerance"
            )
        slope = (dp * dp + 0.25 * k * k) + 2.0 * eta * intensity * dp
        points.append((alpha, beta, dp_check * wm, slope > 0))

    count = len(points)
    return [
        ClassicalFixedPoint(alpha=a, beta=b, detuning_eff=dp, stable=stable,
                            branch_count=count, g=params.g)
        for a, b, dp, stable in points
    ]


def to_reduced(params: PhysicalParams, branch: int = 0) -> ReducedParams:
    """Reduce SI parameters using the chosen classical branch (lowest intensity by default)."""
    points = classical_steady_state(params)
    point = points[branch]
    wm = params.omega_m
    return ReducedParams(
        kappa=params.kappa / wm,
        gamma=params.gamma / wm,
        g_eff=abs(point.coupling) / wm,
        detuning=point.detuning_eff / wm,
        n_th=params.n_th,
    )


def cooperativity(rp: ReducedParams):
    return 4.0 * rp.g_eff ** 2 / (rp.gamma * rp.kappa)


def stability_bound(rp: ReducedParams):
    """Largest |G|^2 allowed on the red side (the check itself is strict)."""
    if rp.detuning >= 0:
        raise UnsupportedRegime("stability bound is only defined for red detuning")
    d = rp.detuning
    return -(4.0 * d * d + rp.kappa ** 2) / (16.0 * d)


def stability_check(rp: ReducedParams) -> bool:
    return rp.g_eff ** 2 < stability_bound(rp)
