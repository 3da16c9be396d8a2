import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from optocool import spectra
from optocool.errors import ConfigError, UnsupportedRegime
from optocool.params import (
    HBAR, PhysicalParams, ReducedParams, classical_steady_state, cooperativity,
    drive_amplitude, stability_bound, stability_check, thermal_occupancy, to_reduced,
    zero_point_fluctuation,
)

TWO_PI = 2 * math.pi

# frozen with 30-digit mpmath evaluations of the same closed forms
NTH_368GHZ_20K = 112.743231187842858
NTH_78MHZ_065K = 173.138972724829826
OMEGA_1UW = 7009439072.07019733
XZPF_10NG_78MHZ = 1.03725574054239472e-16


def physical(**kw):
    base = dict(omega_m=TWO_PI * 10e6, omega_c=TWO_PI * 193e12, omega_in=TWO_PI * 193e12 - TWO_PI * 10e6,
                kappa_0=TWO_PI * 0.2e6, kappa_ex=TWO_PI * 0.3e6, gamma=TWO_PI * 100.0, g=TWO_PI * 500.0,
                m_eff=1e-12, power=1e-6, phase=0.0, temperature=0.1)
    base.update(kw)
    return PhysicalParams(**base)


def test_thermal_occupancy_vectors():
    assert thermal_occupancy(TWO_PI * 3.68e9, 20.0) == pytest.approx(NTH_368GHZ_20K, rel=1e-12)
    assert thermal_occupancy(TWO_PI * 78e6, 0.65) == pytest.approx(NTH_78MHZ_065K, rel=1e-12)
    assert thermal_occupancy(TWO_PI * 1e6, 0.0) == 0.0


def test_thermal_occupancy_high_temperature_is_stable():
    # n ~ kT/(hbar w) - 1/2 when hbar w << kT
    w, T = 1.0, 1e6
    x = HBAR * w / (1.380649e-23 * T)
    assert thermal_occupancy(w, T) == pytest.approx(1 / x - 0.5, rel=1e-12)


@given(st.floats(1e3, 1e12), st.floats(1e-3, 1e3), st.floats(1.01, 3.0))
def test_thermal_occupancy_monotone(w, T, s):
    assert thermal_occupancy(w, T * s) >= thermal_occupancy(w, T)
    assert thermal_occupancy(w * s, T) <= thermal_occupancy(w, T)


def test_drive_amplitude():
    assert drive_amplitude(0.0, 1e15, 1e6) == 0
    w_in, k_ex = TWO_PI * 193e12, TWO_PI * 1e6
    assert abs(drive_amplitude(1e-6, w_in, k_ex)) == pytest.approx(OMEGA_1UW, rel=1e-12)
    one = drive_amplitude(1e-6, w_in, k_ex, 0.7)
    two = drive_amplitude(2e-6, w_in, k_ex, 0.7)
    assert abs(two) / abs(one) == pytest.approx(math.sqrt(2), rel=1e-14)
    assert np.angle(two) == pytest.approx(0.7, rel=1e-14)


def test_zero_point_fluctuation():
    assert zero_point_fluctuation(1.0, HBAR / 2) == pytest.approx(1.0, rel=1e-15)
    assert zero_point_fluctuation(4e-9, 1e6) == pytest.approx(0.5 * zero_point_fluctuation(1e-9, 1e6), rel=1e-15)
    assert zero_point_fluctuation(1e-11, TWO_PI * 78e6) == pytest.approx(XZPF_10NG_78MHZ, rel=1e-12)


def test_physical_params_validation():
    with pytest.raises(ConfigError):
        physical(gamma=-1.0)
    with pytest.raises(ConfigError):
        physical(temperature=-1.0)
    with pytest.raises(ConfigError):
        physical(power=math.nan)
    p = physical(phase=-12.0)
    assert p.kappa == p.kappa_0 + p.kappa_ex


def test_reduced_params_validation():
    with pytest.raises(ConfigError):
        ReducedParams(kappa=0.0, gamma=1e-5, g_eff=0.1)
    with pytest.raises(ConfigError):
        ReducedParams(kappa=0.1, gamma=1e-5, g_eff=-0.1)


def test_fixed_point_without_drive():
    p = physical(power=0.0)
    (fp,) = classical_steady_state(p)
    assert fp.alpha == 0 and fp.beta == 0
    assert fp.detuning_eff == pytest.approx(p.detuning)


def test_fixed_point_without_coupling():
    p = physical(g=0.0)
    (fp,) = classical_steady_state(p)
    expect = abs(p.drive) ** 2 / (p.detuning ** 2 + p.kappa ** 2 / 4)
    assert fp.intensity == pytest.approx(expect, rel=1e-12)
    assert fp.branch_count == 1


def _bistable():
    # red-detuned by 3 linewidths with strong drive: three coexisting branches
    wm = TWO_PI * 1e6
    return PhysicalParams(omega_m=wm, omega_c=1e15, omega_in=1e15 - 3.0 * wm, kappa_0=0.5 * wm,
                          kappa_ex=0.5 * wm, gamma=1e-3 * wm, g=1e-3 * wm, m_eff=1e-12,
                          power=1.6e-6, temperature=0.0)


def test_bistable_branches_against_dense_scan():
    p = _bistable()
    points = classical_steady_state(p)
    assert len(points) == 3
    assert [fp.stable for fp in points] == [True, False, True]
    # sign changes of the intensity cubic on a dense grid (reduced units)
    wm = p.omega_m
    d, k, gm, g = p.detuning / wm, p.kappa / wm, p.gamma / wm, p.g / wm
    eta = 2 * g * g / (1 + gm * gm / 4)
    w2 = abs(p.drive / wm) ** 2
    grid = np.linspace(0, 2 * points[-1].intensity, 400001)
    f = grid * ((d + eta * grid) ** 2 + k * k / 4) - w2
    crossings = grid[np.nonzero(np.diff(np.sign(f)))[0]]
    assert len(crossings) == 3
    for c, fp in zip(crossings, points):
        assert fp.intensity == pytest.approx(c, rel=1e-4)


@given(st.floats(1e-9, 1e-5), st.floats(-3.0, 3.0), st.floats(0.0, 2 * math.pi))
def test_fixed_point_residuals(power, detune, phase):
    wm = TWO_PI * 1e6
    p = PhysicalParams(omega_m=wm, omega_c=1e15, omega_in=1e15 + detune * wm, kappa_0=0.1 * wm,
                       kappa_ex=0.1 * wm, gamma=1e-3 * wm, g=1e-3 * wm, m_eff=1e-12, power=power,
                       phase=phase)
    omega = p.drive / wm
    for fp in classical_steady_state(p):
        a, b = fp.alpha, fp.beta
        dp = p.detuning / wm - (p.g / wm) * 2 * b.real
        assert fp.detuning_eff / wm == pytest.approx(dp, abs=1e-9)
        res_a = (1j * dp - p.kappa / wm / 2) * a - 1j * omega
        res_b = (-1j - p.gamma / wm / 2) * b - 1j * (p.g / wm) * abs(a) ** 2
        assert abs(res_a) < 1e-10 * max(1.0, abs(omega))
        assert abs(res_b) < 1e-10 * max(1.0, abs(omega))
        assert fp.branch_count in (1, 3)


@given(st.floats(0.0, 2 * math.pi))
def test_cooling_observables_independent_of_drive_phase(phase):
    base = to_reduced(physical())
    shifted = to_reduced(physical(phase=phase))
    assert shifted.g_eff == pytest.approx(base.g_eff, rel=1e-12)
    assert shifted.detuning == pytest.approx(base.detuning, rel=1e-12)


def test_cooperativity():
    rp = ReducedParams(kappa=0.05, gamma=1e-5, g_eff=0.01)
    assert cooperativity(rp) == pytest.approx(800.0, rel=1e-12)
    assert cooperativity(ReducedParams(kappa=0.05, gamma=1e-5, g_eff=0.1)) == pytest.approx(80000.0, rel=1e-12)
    assert cooperativity(ReducedParams(kappa=0.05, gamma=1e-5, g_eff=0.0)) == 0.0


def test_stability_check():
    rp = ReducedParams(kappa=0.05, gamma=1e-5, g_eff=0.1, detuning=-1.0)
    assert stability_bound(rp) == pytest.approx(0.25015625, rel=1e-14)
    assert stability_check(rp)
    assert stability_check(ReducedParams(kappa=0.05, gamma=1e-5, g_eff=0.0))
    edge = ReducedParams(kappa=0.05, gamma=1e-5, g_eff=math.sqrt(0.25015625))
    assert edge.g_eff ** 2 == stability_bound(edge) or not stability_check(edge)
    assert not stability_check(ReducedParams(kappa=0.05, gamma=1e-5, g_eff=0.6))
    with pytest.raises(UnsupportedRegime):
        stability_check(ReducedParams(kappa=0.05, gamma=1e-5, g_eff=0.1, detuning=0.5))


@given(st.floats(0.5, 2.0), st.floats(-2.0, -0.2), st.floats(0.05, 3.0))
def test_reduction_matches_direct_si_evaluation(f_mhz, detune, omega):
    """Reduced force spectrum times omega_m / x_zpf^2 equals the SI evaluation."""
    wm = TWO_PI * f_mhz * 1e6
    p = physical(omega_m=wm, omega_in=TWO_PI * 193e12 + detune * wm, temperature=0.3)
    rp = to_reduced(p)
    si = spectra.force_spectrum_si(omega * wm, p)
    reduced = spectra.force_spectrum(omega, rp) * wm / p.x_zpf ** 2
    assert reduced == pytest.approx(si, rel=1e-12)


@given(st.floats(0.1, 10.0))
def test_reduced_params_invariant_under_frequency_scaling(s):
    """Scaling every rate by s (and the power by s^2 to keep |alpha|) leaves the reduced set fixed."""
    p = physical(temperature=0.0)
    scaled = {k: v * s if k in ("omega_m", "omega_c", "omega_in", "kappa_0", "kappa_ex", "gamma", "g") else v
              for k, v in p.__dict__.items()}
    scaled["power"] = p.power * s * s
    a, b = to_reduced(p), to_reduced(PhysicalParams(**scaled))
    for name, value in a.as_dict().items():
        assert getattr(b, name) == pytest.approx(value, rel=1e-7, abs=1e-15)  # omega_in - omega_c cancels ~8 digits
