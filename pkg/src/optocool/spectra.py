"""Perturbative (quantum noise) description of sideband cooling.

All frequencies and rates are in units of the mechanical frequency. Force
spectra are reported without the 1/x_zpf^2 prefactor; the SI helper
:func:`force_spectrum_si` restores it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import HeatingRegime
from .params import PhysicalParams, ReducedParams, classical_steady_state

KINDS = ("force", "mechanical", "self_energy")


@dataclass(frozen=True)
class SpectrumSeries:
    omegas: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        if len(self.omegas) != len(self.values):
            raise ValueError("omegas and values differ in length")
        if np.any(np.diff(self.omegas) <= 0):
            raise ValueError("omegas must be strictly increasing")

    def integrate(self):
        """Area under the samples divided by 2 pi (phonon number for ``mechanical``)."""
        return float(np.trapezoid(np.real(self.values), self.omegas)) / (2.0 * math.pi)


@dataclass(frozen=True)
class CoolingRates:
    a_minus: float  # phonon absorption
    a_plus: float  # phonon emission
    gamma_opt: float
    spring_shift: float


@dataclass(frozen=True)
class CoolingLimit:
    n_f: float
    n_classical: float
    n_quantum: float
    n_quantum_simplified: float


def cavity_response(omega, rp: ReducedParams):
    return 1.0 / (-1j * (np.asarray(omega) + rp.detuning) + 0.5 * rp.kappa)


def force_spectrum(omega, rp: ReducedParams):
    return rp.kappa * np.abs(rp.g_eff * cavity_response(omega, rp)) ** 2


def self_energy(omega, rp: ReducedParams):
    omega = np.asarray(omega)
    return -1j * rp.g_eff ** 2 * (
        cavity_response(omega, rp) - np.conj(cavity_response(-omega, rp))
    )


def scattering_rates(rp: ReducedParams) -> CoolingRates:
    g2, k, d = rp.g_eff ** 2, rp.kappa, rp.detuning
    a_minus = g2 * k / ((1.0 + d) ** 2 + 0.25 * k * k)
    a_plus = g2 * k / ((1.0 - d) ** 2 + 0.25 * k * k)
    # explicit bracketed forms of Re/Im of the self-energy at omega_m
    bracket = 1.0 / (-1j * (1.0 + d) + 0.5 * k) - 1.0 / (-1j * (1.0 - d) + 0.5 * k)
    return CoolingRates(
        a_minus=a_minus,
        a_plus=a_plus,
        gamma_opt=2.0 * g2 * bracket.real,
        spring_shift=g2 * bracket.imag,
    )


def mechanical_spectrum(omega, rp: ReducedParams):
    """Phonon spectral density; valid near the mechanical resonance (|omega - 1| of order kappa)."""
    omega = np.asarray(omega)
    numerator = rp.gamma * rp.n_th + force_spectrum(-omega, rp)
    denominator = np.abs(1j * omega - 1j * (1.0 + self_energy(omega, rp)) - 0.5 * rp.gamma) ** 2
    return numerator / denominator


def cooling_limit(rp: ReducedParams) -> CoolingLimit:
    rates = scattering_rates(rp)
    if rates.gamma_opt <= 0 or rp.detuning >= 0:
        raise HeatingRegime(f"optical damping {rates.gamma_opt:.3e} is not positive")
    d, k = rp.detuning, rp.kappa
    n_c = rp.gamma * rp.n_th / rates.gamma_opt
    n_q = rates.a_plus / rates.gamma_opt
    return CoolingLimit(
        n_f=n_c + n_q,
        n_classical=n_c,
        n_quantum=n_q,
        n_quantum_simplified=(4.0 * (1.0 + d) ** 2 + k * k) / (-16.0 * d),
    )


def min_quantum_limit(kappa):
    """Minimal quantum cooling limit over detuning, and the detuning that attains it."""
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    n_min = 0.5 * (math.sqrt(1.0 + 0.25 * kappa * kappa) - 1.0)
    return n_min, -math.sqrt(1.0 + 0.25 * kappa * kappa)


def frequency_grid(rp: ReducedParams, points=2001, dense_window=None, dense_points=2001):
    """Uniform grid over [-2, 2] * max(1, |Delta'|), optionally merged with a dense window around 1."""
    half = 2.0 * max(1.0, abs(rp.detuning))
    grid = np.linspace(-half, half, points)
    if dense_window:
        dense = np.linspace(1.0 - dense_window, 1.0 + dense_window, dense_points)
        grid = np.union1d(grid, dense)
    return grid


def sample(kind, rp: ReducedParams, omegas=None) -> SpectrumSeries:
    if omegas is None:
        omegas = frequency_grid(rp)
    omegas = np.asarray(omegas, dtype=float)
    func = {"force": force_spectrum, "mechanical": mechanical_spectrum, "self_energy": self_energy}[kind]
    return SpectrumSeries(omegas=omegas, values=func(omegas, rp), kind=kind)


def force_spectrum_si(omega, params: PhysicalParams, branch=0):
    """Optical force spectral density in SI, evaluated directly from the fixed point."""
    point = classical_steady_state(params)[branch]
    G = abs(point.coupling)
    chi = 1.0 / (-1j * (np.asarray(omega) + point.detuning_eff) + 0.5 * params.kappa)
    return params.kappa * np.abs(G * chi) ** 2 / params.x_zpf ** 2
