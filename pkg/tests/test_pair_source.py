"""Tests for four-wave-mixing channel placement and joint spectra.

The pulsed-ridge oracle below autoconvolves a sampled pump amplitude
numerically; the library uses the closed Gaussian form, and the two must
land on the same anti-diagonal width.
"""

import math

import numpy as np
import pytest

from awgsim.awg_optics import make_passband
from awgsim.errors import ValidationError
from awgsim.pair_source import (
    JointSpectralAmplitude,
    PumpSpec,
    build_jsa_quasi_cw,
    build_jsi_pulsed,
    sfwm_channel_pair,
)

NU_P = 192.11e12  # a 1560-nm-ish pump, nothing below depends on the exact value


def pump(**overrides):
    kw = dict(
        center_frequency_hz=NU_P,
        rep_rate_hz=100e6,
        pulse_duration_s=200e-12,
        bandwidth_fwhm_hz=2.2e9,
        pairs_per_gate=0.01,
    )
    kw.update(overrides)
    return PumpSpec(**kw)


def band(center, fwhm=90e9, peak=1.0, span=500e9, res=0.5e9):
    return make_passband(
        center_hz=center, fwhm_hz=fwhm, peak_amplitude=peak,
        span_hz=span, resolution_hz=res,
    )


# -------------------------------------------------------- channel placement


def test_channel_pair_energy_conservation():
    nu_s, nu_i = sfwm_channel_pair(pump(), channel_spacing_hz=200e9, channel_offset=3)
    assert nu_s == pytest.approx(NU_P + 600e9, abs=1.0)
    assert nu_i == pytest.approx(NU_P - 600e9, abs=1.0)
    assert (nu_s + nu_i) == pytest.approx(2 * NU_P, rel=1e-15)
    assert abs(NU_P - nu_s) == pytest.approx(3 * 200e9, rel=1e-12)


def test_channel_pair_midpoint_randomized():
    rng = np.random.default_rng(7)
    for _ in range(50):
        spacing = float(rng.uniform(25e9, 400e9))
        offset = int(rng.integers(1, 12))
        nu_s, nu_i = sfwm_channel_pair(pump(), spacing, offset)
        assert (nu_s + nu_i) / 2 == pytest.approx(NU_P, rel=1e-15)


def test_channel_pair_rejects_wide_pump():
    with pytest.raises(ValidationError):
        sfwm_channel_pair(pump(bandwidth_fwhm_hz=250e9), 200e9, 3)


def test_pump_validators():
    with pytest.raises(ValidationError):
        pump(pairs_per_gate=0.0)
    with pytest.raises(ValidationError):
        pump(pairs_per_gate=0.7)
    with pytest.raises(ValidationError):
        pump(rep_rate_hz=-1.0)
    with pytest.raises(ValidationError):
        pump(leakage_db=3.0)


# ------------------------------------------------------------ quasi-cw JSA


def test_quasi_cw_support_band():
    f = band(NU_P + 600e9)
    g = band(NU_P - 600e9)
    jsa = build_jsa_quasi_cw(f, g, NU_P)
    step = jsa.signal_frequencies[1] - jsa.signal_frequencies[0]
    rows, cols = np.nonzero(np.abs(jsa.amplitude) > 0)
    sums = jsa.signal_frequencies[rows] + jsa.idler_frequencies[cols]
    assert np.all(np.abs(sums - 2 * NU_P) <= step * (1 + 1e-9))


def test_quasi_cw_normalization_and_factorability():
    f = band(NU_P + 600e9)
    g = band(NU_P - 600e9, fwhm=70e9)
    jsa = build_jsa_quasi_cw(f, g, NU_P)
    step = jsa.signal_frequencies[1] - jsa.signal_frequencies[0]
    norm = np.sum(np.abs(jsa.amplitude) ** 2) * step * step
    assert norm == pytest.approx(1.0, abs=1e-9)

    # along the ridge the amplitude must factor as f(nu) * g(2 nu_p - nu):
    # ratios of column sums equal ratios of the analytic product
    col_amp = jsa.amplitude.sum(axis=1)
    nu = jsa.signal_frequencies
    product = np.interp(nu, f.frequencies, np.abs(f.amplitude)) * np.interp(
        2 * NU_P - nu, g.frequencies, np.abs(g.amplitude)
    )
    mask = np.abs(col_amp) > 1e-6 * np.abs(col_amp).max()
    ratio = np.abs(col_amp[mask]) / product[mask]
    assert np.max(np.abs(ratio / ratio.mean() - 1.0)) < 1e-12


def test_quasi_cw_marginal_width():
    # product of two fwhm-90 GHz gaussian intensities has fwhm 90/sqrt(2)
    f = band(NU_P + 600e9)
    g = band(NU_P - 600e9)
    jsa = build_jsa_quasi_cw(f, g, NU_P)
    marginal = np.sum(np.abs(jsa.amplitude) ** 2, axis=1)
    nu = jsa.signal_frequencies
    half = marginal.max() / 2
    above = np.flatnonzero(marginal >= half)
    width = nu[above[-1]] - nu[above[0]]
    assert width == pytest.approx(90e9 / math.sqrt(2.0), rel=0.02)
    assert width < 90e9  # narrower than the single-channel passband scale


def test_quasi_cw_refinement_convergence():
    # second moment of the signal marginal converges under grid refinement
    variances = []
    for res in (0.5e9, 0.25e9):
        f = band(NU_P + 600e9, res=res)
        g = band(NU_P - 600e9, res=res)
        jsa = build_jsa_quasi_cw(f, g, NU_P)
        step = jsa.signal_frequencies[1] - jsa.signal_frequencies[0]
        w = np.sum(np.abs(jsa.amplitude) ** 2, axis=1) * step * step
        nu = jsa.signal_frequencies
        mean = np.sum(w * nu)
        variances.append(np.sum(w * (nu - mean) ** 2))
        assert np.sum(w) == pytest.approx(1.0, abs=1e-9)
    assert variances[0] == pytest.approx(variances[1], rel=1e-3)


def test_quasi_cw_requires_matched_grids():
    f = band(NU_P + 600e9, res=0.5e9)
    g = band(NU_P - 600e9, res=0.4e9)
    with pytest.raises(ValidationError):
        build_jsa_quasi_cw(f, g, NU_P)


def test_jsa_validator_rejects_unnormalized():
    f = band(NU_P + 600e9)
    g = band(NU_P - 600e9)
    jsa = build_jsa_quasi_cw(f, g, NU_P)
    with pytest.raises(ValidationError):
        JointSpectralAmplitude(
            signal_frequencies=jsa.signal_frequencies,
            idler_frequencies=jsa.idler_frequencies,
            amplitude=2.0 * jsa.amplitude,
            pump_frequency_hz=NU_P,
        )


# ------------------------------------------------------------- pulsed JSI


def convolved_sum_profile_fwhm(bandwidth_hz):
    """Numeric oracle: autoconvolve a sampled gaussian pump amplitude and
    measure the intensity fwhm of the result."""
    sigma_i = bandwidth_hz / (2 * math.sqrt(2 * math.log(2)))
    step = 0.01e9
    x = np.arange(-40e9, 40e9 + step, step)
    amp = np.exp(-(x**2) / (4 * sigma_i**2))  # intensity fwhm = bandwidth
    conv = np.convolve(amp, amp, mode="same")
    inten = conv**2
    half = inten.max() / 2
    above = np.flatnonzero(inten >= half)
    return x[above[-1]] - x[above[0]]


def test_pulsed_ridge_width_matches_convolution_oracle():
    f = band(NU_P + 600e9)
    g = band(NU_P - 600e9)
    jsi = build_jsi_pulsed(f, g, pump())
    want = convolved_sum_profile_fwhm(2.2e9)
    assert want == pytest.approx(math.sqrt(2.0) * 2.2e9, rel=0.01)

    # walk the sum-detuning axis through the ridge center
    i0 = int(np.argmin(np.abs(jsi.signal_frequencies - (NU_P + 600e9))))
    k0 = int(np.argmin(np.abs(jsi.idler_frequencies - (NU_P - 600e9))))
    offsets = np.arange(-8, 9)
    profile = np.array(
        [jsi.intensity[i0 + o, k0 + o] for o in offsets], dtype=float
    )
    step = jsi.signal_frequencies[1] - jsi.signal_frequencies[0]
    sum_detune = 2 * offsets * step
    half = profile.max() / 2
    above = np.flatnonzero(profile >= half)
    lo, hi = above[0], above[-1]

    def crossing(i_out, i_in):
        y0, y1 = profile[i_out], profile[i_in]
        return sum_detune[i_out] + (half - y0) / (y1 - y0) * (
            sum_detune[i_in] - sum_detune[i_out]
        )

    width = crossing(hi + 1, hi) - crossing(lo - 1, lo)
    assert width == pytest.approx(want, rel=0.02)


def test_pulsed_jsi_unit_maximum_and_positivity():
    f = band(NU_P + 600e9)
    g = band(NU_P - 600e9)
    jsi = build_jsi_pulsed(f, g, pump())
    assert jsi.intensity.max() == pytest.approx(1.0)
    assert jsi.intensity.min() >= 0.0


def test_pulsed_jsi_rejects_coarse_grid():
    f = band(NU_P + 600e9, res=2e9)
    g = band(NU_P - 600e9, res=2e9)
    with pytest.raises(ValidationError):
        build_jsi_pulsed(f, g, pump())
