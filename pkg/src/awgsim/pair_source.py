"""Photon-pair spectra from four-wave mixing behind the grating channels.

Two pump photons convert into a signal/idler pair whose frequencies sum to
twice the pump frequency. With a quasi-continuous pump the joint amplitude
lives on the single anti-diagonal line nu_s + nu_i = 2 nu_p, filtered by the
two channel passbands; with a pulsed pump the line broadens into a ridge
whose width along the sum axis is set by the pump's two-photon energy
spread (the autoconvolution of its amplitude spectrum).
"""

import math
from dataclasses import dataclass

import numpy as np

from .awg_optics import TransmissionSpectrum
from .errors import ValidationError


@dataclass(frozen=True)
class PumpSpec:
    """Pulsed pump description.

    bandwidth_fwhm_hz is the fwhm of the pump intensity spectrum (assumed
    transform-limited gaussian). pairs_per_gate is the mean pair number one
    source generates per gate; the low-gain treatment here caps it at 0.5.
    leakage_db records how strongly residual pump is rejected downstream,
    and leakage_background_per_gate is the flat extra singles probability
    that rejection still lets through (default none).
    """

    center_frequency_hz: float
    rep_rate_hz: float
    pulse_duration_s: float
    bandwidth_fwhm_hz: float
    pairs_per_gate: float
    leakage_db: float = -35.0
    leakage_background_per_gate: float = 0.0

    def __post_init__(self):
        for name in (
            "center_frequency_hz",
            "rep_rate_hz",
            "pulse_duration_s",
            "bandwidth_fwhm_hz",
        ):
            if not getattr(self, name) > 0.0:
                raise ValidationError(f"{name} must be positive")
        if not 0.0 < self.pairs_per_gate <= 0.5:
            raise ValidationError(
                "pairs_per_gate must lie in (0, 0.5]; the low-gain model breaks down "
                "above that"
            )
        if self.leakage_db > 0.0:
            raise ValidationError("leakage_db must be <= 0")
        if not 0.0 <= self.leakage_background_per_gate < 1.0:
            raise ValidationError("leakage_background_per_gate must lie in [0, 1)")


def sfwm_channel_pair(
    pump: PumpSpec, channel_spacing_hz: float, channel_offset: int
) -> tuple[float, float]:
    """Frequencies of the signal/idler channel pair `channel_offset` channels
    from the pump. Energy conservation pins them symmetrically:
    nu_s = nu_p + m * spacing, nu_i = nu_p - m * spacing."""
    if not channel_spacing_hz > 0:
        raise ValidationError("channel spacing must be positive")
    if not (isinstance(channel_offset, (int, np.integer)) and channel_offset >= 1):
        raise ValidationError("channel_offset must be a positive integer")
    if pump.bandwidth_fwhm_hz >= channel_spacing_hz:
        raise ValidationError(
            "pump bandwidth reaches the neighboring channel; quasi-monochromatic "
            "channel placement is invalid"
        )
    detune = channel_offset * channel_spacing_hz
    return pump.center_frequency_hz + detune, pump.center_frequency_hz - detune


# --------------------------------------------------------------------------


def _check_uniform(freqs, label):
    freqs = np.asarray(freqs, dtype=np.float64)
    if freqs.ndim != 1 or freqs.size < 4:
        raise ValidationError(f"{label} grid must be 1-D with >= 4 samples")
    steps = np.diff(freqs)
    if steps[0] <= 0 or np.any(np.abs(steps - steps[0]) > 1e-6 * abs(steps[0])):
        raise ValidationError(f"{label} grid must be uniform and increasing")
    return freqs, float(freqs[1] - freqs[0])


@dataclass(frozen=True, eq=False)
class JointSpectralAmplitude:
    """Normalized complex pair amplitude on a uniform (signal, idler) grid.

    Both axes must share one grid step so anti-diagonal (energy) structure
    is representable cell by cell. Normalization convention:
    sum |a|^2 * step^2 == 1.
    """

    signal_frequencies: np.ndarray
    idler_frequencies: np.ndarray
    amplitude: np.ndarray
    pump_frequency_hz: float

    def __post_init__(self):
        sig, step_s = _check_uniform(self.signal_frequencies, "signal")
        idl, step_i = _check_uniform(self.idler_frequencies, "idler")
        if abs(step_s - step_i) > 1e-6 * step_s:
            raise ValidationError("signal and idler grids must share one step")
        amp = np.asarray(self.amplitude, dtype=np.complex128)
        if amp.shape != (sig.size, idl.size):
            raise ValidationError("amplitude shape must be (n_signal, n_idler)")
        if not np.all(np.isfinite(amp.view(np.float64))):
            raise ValidationError("amplitude contains non-finite entries")
        norm = float(np.sum(np.abs(amp) ** 2) * step_s * step_i)
        if abs(norm - 1.0) > 1e-9:
            raise ValidationError(f"amplitude norm {norm!r} deviates from 1")
        for arr in (sig, idl, amp):
            arr.setflags(write=False)
        object.__setattr__(self, "signal_frequencies", sig)
        object.__setattr__(self, "idler_frequencies", idl)
        object.__setattr__(self, "amplitude", amp)

    @property
    def grid_step_hz(self) -> float:
        return float(self.signal_frequencies[1] - self.signal_frequencies[0])


def _interp_complex(x, xp, fp):
    return np.interp(x, xp, fp.real) + 1j * np.interp(x, xp, fp.imag)


def build_jsa_quasi_cw(
    signal_spectrum: TransmissionSpectrum,
    idler_spectrum: TransmissionSpectrum,
    pump_frequency_hz: float,
) -> JointSpectralAmplitude:
    """Joint amplitude for a quasi-continuous pump.

    The idler axis is the exact energy mirror of the signal grid, so the
    line nu_s + nu_i = 2 nu_p passes corner to corner through one cell per
    signal column; the amplitude occupies exactly that one-cell band and
    factors as f(nu) * g(2 nu_p - nu) along it.
    """
    sig, step_s = _check_uniform(signal_spectrum.frequencies, "signal")
    _, step_i = _check_uniform(idler_spectrum.frequencies, "idler")
    if abs(step_s - step_i) > 1e-6 * step_s:
        raise ValidationError(
            "signal and idler spectra must be sampled with the same resolution"
        )
    if not pump_frequency_hz > 0:
        raise ValidationError("pump frequency must be positive")

    n = sig.size
    if n * n * 16 > 512 * 1024**2:
        raise ValidationError(
            "joint grid would exceed 512 MB; narrow the spectrum span or coarsen "
            "the resolution"
        )
    mirrored = (2.0 * pump_frequency_hz - sig)[::-1].copy()

    reflected = 2.0 * pump_frequency_hz - sig
    g_vals = _interp_complex(
        reflected, idler_spectrum.frequencies, idler_spectrum.amplitude
    )
    # interp clamps to edge values; outside the idler grid the passband is over
    outside = (reflected < idler_spectrum.frequencies[0]) | (
        reflected > idler_spectrum.frequencies[-1]
    )
    g_vals[outside] = 0.0

    ridge = signal_spectrum.amplitude * g_vals
    total = np.sum(np.abs(ridge) ** 2) * step_s * step_s
    if total <= 0.0:
        raise ValidationError(
            "channel passbands do not overlap the energy ridge; joint amplitude "
            "vanishes"
        )
    ridge = ridge / math.sqrt(total)

    amp = np.zeros((n, n), dtype=np.complex128)
    amp[np.arange(n), n - 1 - np.arange(n)] = ridge
    return JointSpectralAmplitude(
        signal_frequencies=sig,
        idler_frequencies=mirrored,
        amplitude=amp,
        pump_frequency_hz=float(pump_frequency_hz),
    )


# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JointSpectralIntensity:
    """Pulsed-pump joint intensity, normalized to unit maximum."""

    signal_frequencies: np.ndarray
    idler_frequencies: np.ndarray
    intensity: np.ndarray
    pump_frequency_hz: float

    def __post_init__(self):
        sig, _ = _check_uniform(self.signal_frequencies, "signal")
        idl, _ = _check_uniform(self.idler_frequencies, "idler")
        inten = np.asarray(self.intensity, dtype=np.float64)
        if inten.shape != (sig.size, idl.size):
            raise ValidationError("intensity shape must be (n_signal, n_idler)")
        if np.any(inten < 0) or not np.all(np.isfinite(inten)):
            raise ValidationError("intensity must be finite and non-negative")
        if abs(inten.max() - 1.0) > 1e-12:
            raise ValidationError("intensity must be normalized to unit maximum")
        for arr in (sig, idl, inten):
            arr.setflags(write=False)
        object.__setattr__(self, "signal_frequencies", sig)
        object.__setattr__(self, "idler_frequencies", idl)
        object.__setattr__(self, "intensity", inten)


def build_jsi_pulsed(
    signal_spectrum: TransmissionSpectrum,
    idler_spectrum: TransmissionSpectrum,
    pump: PumpSpec,
    span_hz: float | None = None,
    resolution_hz: float | None = None,
) -> JointSpectralIntensity:
    """Joint intensity for a pulsed pump.

    intensity(s, i) = |f(s)|^2 |g(i)|^2 * E(s + i - 2 nu_p) where E is the
    two-photon energy envelope: the pump amplitude autoconvolved with
    itself, i.e. a gaussian whose intensity fwhm is sqrt(2) times the pump
    bandwidth. By default the passband grids are reused; pass span and
    resolution to resample a window around each channel center.

    Parameters
    ----------
    span_hz, resolution_hz : optional
        full width and step of the resampled window (both or neither)
    """
    if (span_hz is None) != (resolution_hz is None):
        raise ValidationError("pass span_hz and resolution_hz together")

    if span_hz is None:
        sig, step_s = _check_uniform(signal_spectrum.frequencies, "signal")
        idl, step_i = _check_uniform(idler_spectrum.frequencies, "idler")
        f2 = np.abs(signal_spectrum.amplitude) ** 2
        g2 = np.abs(idler_spectrum.amplitude) ** 2
    else:
        if not span_hz > 0 or not resolution_hz > 0:
            raise ValidationError("span and resolution must be positive")
        half_n = int(round(span_hz / 2.0 / resolution_hz))
        offs = np.arange(-half_n, half_n + 1, dtype=np.float64) * resolution_hz
        sig = signal_spectrum.center_frequency_hz + offs
        idl = idler_spectrum.center_frequency_hz + offs
        step_s = step_i = float(resolution_hz)
        f2 = np.interp(
            sig, signal_spectrum.frequencies, np.abs(signal_spectrum.amplitude) ** 2,
            left=0.0, right=0.0,
        )
        g2 = np.interp(
            idl, idler_spectrum.frequencies, np.abs(idler_spectrum.amplitude) ** 2,
            left=0.0, right=0.0,
        )

    max_step = max(step_s, step_i)
    if max_step > pump.bandwidth_fwhm_hz / 2.0:
        raise ValidationError(
            f"grid step {max_step:.3g} Hz too coarse to resolve the pump ridge "
            f"(needs <= bandwidth/2 = {pump.bandwidth_fwhm_hz / 2:.3g} Hz)"
        )
    if sig.size * idl.size * 8 > 512 * 1024**2:
        raise ValidationError("joint grid would exceed 512 MB; narrow the window")

    sum_fwhm = math.sqrt(2.0) * pump.bandwidth_fwhm_hz
    detune = sig[:, None] + idl[None, :] - 2.0 * pump.center_frequency_hz
    envelope = np.exp(-math.log(2.0) * (2.0 * detune / sum_fwhm) ** 2)
    inten = f2[:, None] * g2[None, :] * envelope
    peak = inten.max()
    if peak <= 0.0:
        raise ValidationError("joint intensity vanishes; check channel placement")
    return JointSpectralIntensity(
        signal_frequencies=sig,
        idler_frequencies=idl,
        intensity=inten / peak,
        pump_frequency_hz=pump.center_frequency_hz,
    )
