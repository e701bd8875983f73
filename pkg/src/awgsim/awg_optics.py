"""Arrayed-waveguide-grating design arithmetic, port planning and passbands.

The device picture: input and output waveguides sit on equally pitched grids
along the two slab facets, the waveguide array in between adds a fixed path
increment per arm, and the grating focuses each frequency to a spot that
moves linearly along the output facet. Frequencies are handled in Hz, port
positions as integer grid indices relative to the slab centerline, and every
dB figure is non-positive with amplitude = 10^(dB/20).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

C_VACUUM = 299_792_458.0

_INDEX_LO = 1.0
_INDEX_HI = 4.0


@dataclass(frozen=True)
class AwgDesign:
    """Geometry and refractive data of one grating.

    waveguide_pitch_m
        spacing of the waveguide grids on the slab facets
    focal_length_m
        slab focal length
    path_length_increment_m
        length difference between neighboring array arms
    slab_index / array_group_index
        effective slab index and group index of the array arms; both are
        calibration inputs and must lie in (1, 4)
    measured_channel_spacing_hz
        optional measured spacing of a fabricated device; when set it
        overrides the geometric formula everywhere downstream (port
        frequencies, passband validation) while `channel_spacing` keeps
        reporting the formula value
    """

    waveguide_pitch_m: float
    focal_length_m: float
    path_length_increment_m: float
    slab_index: float
    array_group_index: float
    center_wavelength_m: float
    array_count: int
    insertion_loss_db: float
    measured_channel_spacing_hz: float | None = None

    def __post_init__(self):
        for name in (
            "waveguide_pitch_m",
            "focal_length_m",
            "path_length_increment_m",
            "center_wavelength_m",
        ):
            if not getattr(self, name) > 0.0:
                raise ValidationError(f"{name} must be positive")
        for name in ("slab_index", "array_group_index"):
            value = getattr(self, name)
            if not (_INDEX_LO < value < _INDEX_HI):
                raise ValidationError(f"{name} must lie in ({_INDEX_LO}, {_INDEX_HI})")
        if not (isinstance(self.array_count, (int, np.integer)) and self.array_count > 0):
            raise ValidationError("array_count must be a positive integer")
        if self.insertion_loss_db > 0.0:
            raise ValidationError("insertion_loss_db must be <= 0")
        if self.measured_channel_spacing_hz is not None:
            if not self.measured_channel_spacing_hz > 0.0:
                raise ValidationError("measured_channel_spacing_hz must be positive")

    def pump_frequency_hz(self) -> float:
        return C_VACUUM / self.center_wavelength_m

    def effective_channel_spacing_hz(self) -> float:
        """Measured spacing when calibrated, geometric formula otherwise."""
        if self.measured_channel_spacing_hz is not None:
            return self.measured_channel_spacing_hz
        return channel_spacing(self)[1]


def channel_spacing(design: AwgDesign) -> tuple[float, float]:
    """Wavelength and frequency channel spacing of the design.

    Returns (delta_lambda_m, delta_nu_hz). The wavelength spacing follows
    from moving one output-grid pitch along the focal line,

        delta_lambda = n_slab * lambda0 * pitch^2
                       / (n_array_group * focal_length * path_increment)

    and the frequency spacing is the usual c * delta_lambda / lambda0^2.
    """
    d = design
    dl = (
        d.slab_index
        * d.center_wavelength_m
        * d.waveguide_pitch_m**2
        / (d.array_group_index * d.focal_length_m * d.path_length_increment_m)
    )
    dn = C_VACUUM * dl / d.center_wavelength_m**2
    return dl, dn


def spatial_dispersion(design: AwgDesign) -> float:
    """Focal-spot displacement per unit wavelength (m per m).

    Exactly the reciprocal of channel_spacing scaled by the pitch:
    spatial_dispersion * delta_lambda == pitch.
    """
    d = design
    return (
        d.array_group_index
        * d.focal_length_m
        * d.path_length_increment_m
        / (d.slab_index * d.waveguide_pitch_m * d.center_wavelength_m)
    )


def tolerance_propagation(design: AwgDesign, delta_index_rel: float) -> float:
    """First-order relative channel-spacing error for a relative error of the
    array group index. Spacing scales as 1/n, so the sensitivity is -1."""
    if not abs(delta_index_rel) < 0.1:
        raise ValidationError(
            "delta_index_rel outside the first-order regime (|delta| < 0.1)"
        )
    return -float(delta_index_rel)


# --------------------------------------------------------------------------
# port planning


@dataclass(frozen=True)
class PortAssignment:
    """Facet-grid bookkeeping for a set of pair sources sharing one grating.

    All indices count grid lines from the slab centerline. Input port i_j
    focuses the pump at output index -i_j (input/output mirror symmetry),
    and the phase-matched channels sit `channel_offset` grid lines to
    either side of that focus.
    """

    input_ports: tuple[int, ...]
    pump_focus_ports: tuple[int, ...]
    signal_ports: tuple[int, ...]
    idler_ports: tuple[int, ...]
    channel_offset: int

    @property
    def n_sources(self) -> int:
        return len(self.input_ports)


def plan_ports(design: AwgDesign, n_sources: int, channel_offset: int) -> PortAssignment:
    """Place input, pump-focus, signal and idler ports for n sources.

    Inputs occupy consecutive central grid lines. Raises when the signal or
    idler of one source would land on the pump focus of another (offset
    smaller than the source count) or when any port falls off the facet.
    """
    if not (isinstance(n_sources, (int, np.integer)) and n_sources >= 1):
        raise ValidationError("n_sources must be a positive integer")
    if not (isinstance(channel_offset, (int, np.integer)) and channel_offset >= 1):
        raise ValidationError("channel_offset must be a positive integer")

    inputs = tuple(range(-(n_sources // 2), -(n_sources // 2) + n_sources))
    pumps = tuple(-i for i in inputs)
    signals = tuple(p + channel_offset for p in pumps)
    idlers = tuple(p - channel_offset for p in pumps)

    outputs = signals + idlers + pumps
    if len(set(outputs)) != len(outputs):
        raise ValidationError(
            f"port collision: channel_offset={channel_offset} is too small for "
            f"{n_sources} sources (needs offset >= n_sources)"
        )
    capacity = design.array_count // 2
    worst = max(abs(p) for p in outputs + inputs)
    if worst > capacity:
        raise ValidationError(
            f"facet grid overflow: port index {worst} exceeds capacity {capacity} "
            f"for array_count={design.array_count}"
        )
    return PortAssignment(
        input_ports=inputs,
        pump_focus_ports=pumps,
        signal_ports=signals,
        idler_ports=idlers,
        channel_offset=int(channel_offset),
    )


# --------------------------------------------------------------------------
# transmission spectra


@dataclass(frozen=True, eq=False)
class TransmissionSpectrum:
    """Complex amplitude transmission sampled on a uniform frequency grid.

    Constructor enforces the contract the rest of the pipeline leans on:
    magnitude never above 1, the passband fully contained in the grid, and
    the measured intensity 3-dB width within 1 percent of the declared fwhm.
    """

    frequencies: np.ndarray
    amplitude: np.ndarray
    center_frequency_hz: float
    fwhm_hz: float

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=np.float64)
        amp = np.asarray(self.amplitude, dtype=np.complex128)
        if freqs.ndim != 1 or amp.shape != freqs.shape or freqs.size < 8:
            raise ValidationError("spectrum needs matching 1-D grids of >= 8 samples")
        steps = np.diff(freqs)
        if steps[0] <= 0 or np.any(np.abs(steps - steps[0]) > 1e-6 * abs(steps[0])):
            raise ValidationError("frequency grid must be uniform and increasing")
        mag = np.abs(amp)
        if np.any(mag > 1.0 + 1e-12):
            raise ValidationError("transmission amplitude magnitude exceeds 1")
        peak = mag.max()
        if not peak > 0.0:
            raise ValidationError("spectrum is identically zero")
        if max(mag[0], mag[-1]) > 1e-3 * peak:
            raise ValidationError("passband not contained in grid (nonzero edges)")
        measured = _measured_fwhm(freqs, mag**2)
        if not self.fwhm_hz > 0.0:
            raise ValidationError("declared fwhm must be positive")
        if abs(measured - self.fwhm_hz) > 0.01 * self.fwhm_hz:
            raise ValidationError(
                f"measured 3-dB width {measured:.4g} Hz deviates more than 1% "
                f"from declared fwhm {self.fwhm_hz:.4g} Hz"
            )
        freqs.setflags(write=False)
        amp.setflags(write=False)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "amplitude", amp)

    @property
    def grid_step_hz(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])

    def peak_amplitude(self) -> float:
        return float(np.abs(self.amplitude).max())


def _measured_fwhm(freqs, intensity):
    """Half-maximum crossing width by linear interpolation."""
    half = intensity.max() / 2.0
    above = intensity >= half
    idx = np.flatnonzero(above)
    if idx.size == 0:
        return 0.0
    lo, hi = idx[0], idx[-1]

    def crossing(i0, i1):
        y0, y1 = intensity[i0], intensity[i1]
        if y1 == y0:
            return freqs[i0]
        t = (half - y0) / (y1 - y0)
        return freqs[i0] + t * (freqs[i1] - freqs[i0])

    left = crossing(lo - 1, lo) if lo > 0 else freqs[0]
    right = crossing(hi, hi + 1) if hi < intensity.size - 1 else freqs[-1]
    return float(right - left)


@dataclass(frozen=True)
class PassbandModel:
    """Spectral shape of one output channel.

    shape is 'gaussian' or 'flattop' (super-gaussian of the given order in
    intensity). fwhm is the intensity full width. center_offset shifts the
    passband center away from its nominal grid position, modeling port
    placement error. span/resolution control the sampling grid.
    """

    shape: str = "gaussian"
    fwhm_hz: float = 90e9
    flattop_order: int = 3
    center_offset_hz: float = 0.0
    span_channels: float = 3.0
    resolution_hz: float = 0.5e9

    def __post_init__(self):
        if self.shape not in ("gaussian", "flattop"):
            raise ValidationError(f"unknown passband shape {self.shape!r}")
        if not self.fwhm_hz > 0:
            raise ValidationError("passband fwhm must be positive")
        if self.shape == "flattop" and self.flattop_order < 2:
            raise ValidationError("flattop order must be >= 2")
        if not self.resolution_hz > 0 or not self.span_channels > 0:
            raise ValidationError("span and resolution must be positive")


def make_passband(
    center_hz: float,
    fwhm_hz: float,
    peak_amplitude: float = 1.0,
    shape: str = "gaussian",
    flattop_order: int = 3,
    span_hz: float | None = None,
    resolution_hz: float = 0.5e9,
    grid_center_hz: float | None = None,
) -> TransmissionSpectrum:
    """Sample an analytic passband onto a uniform grid.

    The grid is centered on `grid_center_hz` (default: the passband center).
    Passing a separate grid center lets several slightly offset channels
    share one frequency axis, which overlap integrals downstream require.
    """
    if not 0.0 < peak_amplitude <= 1.0:
        raise ValidationError("peak amplitude must lie in (0, 1]")
    if span_hz is None:
        span_hz = 6.0 * fwhm_hz
    if grid_center_hz is None:
        grid_center_hz = center_hz
    half_n = int(round(span_hz / 2.0 / resolution_hz))
    if half_n < 8:
        raise ValidationError("grid too short; widen span or refine resolution")
    offsets = np.arange(-half_n, half_n + 1, dtype=np.float64) * resolution_hz
    freqs = grid_center_hz + offsets
    detune = 2.0 * (freqs - center_hz) / fwhm_hz
    if shape == "gaussian":
        intensity = np.exp(-np.log(2.0) * detune**2)
    elif shape == "flattop":
        intensity = np.exp(-np.log(2.0) * detune ** (2 * flattop_order))
    else:
        raise ValidationError(f"unknown passband shape {shape!r}")
    amp = peak_amplitude * np.sqrt(intensity)
    return TransmissionSpectrum(
        frequencies=freqs,
        amplitude=amp.astype(np.complex128),
        center_frequency_hz=float(center_hz),
        fwhm_hz=float(fwhm_hz),
    )


def port_transmission(
    design: AwgDesign,
    assignment: PortAssignment,
    source_index: int,
    kind: str,
    passband: PassbandModel,
) -> TransmissionSpectrum:
    """Transmission spectrum of the signal or idler channel of one source.

    The center sits `channel_offset` effective channel spacings above
    (signal) or below (idler) the pump frequency, plus the passband's
    center offset error. Peak amplitude encodes the insertion loss.
    """
    if kind not in ("signal", "idler"):
        raise ValidationError("kind must be 'signal' or 'idler'")
    if not 0 <= source_index < assignment.n_sources:
        raise ValidationError(
            f"source_index {source_index} out of range for {assignment.n_sources} sources"
        )
    spacing = design.effective_channel_spacing_hz()
    if passband.fwhm_hz >= spacing:
        raise ValidationError(
            f"passband fwhm {passband.fwhm_hz:.3g} Hz >= channel spacing "
            f"{spacing:.3g} Hz; neighboring channels would merge"
        )
    sign = 1.0 if kind == "signal" else -1.0
    nominal = design.pump_frequency_hz() + sign * assignment.channel_offset * spacing
    # grid anchored at the nominal channel center: spectra of different
    # sources share one axis even when their peaks carry placement errors
    return make_passband(
        center_hz=nominal + passband.center_offset_hz,
        fwhm_hz=passband.fwhm_hz,
        peak_amplitude=10.0 ** (design.insertion_loss_db / 20.0),
        shape=passband.shape,
        flattop_order=passband.flattop_order,
        span_hz=2.0 * passband.span_channels * spacing,
        resolution_hz=passband.resolution_hz,
        grid_center_hz=nominal,
    )


def design_report(design: AwgDesign, assignment: PortAssignment) -> dict:
    """Plain-dict summary used by the CLI design command."""
    dl, dn = channel_spacing(design)
    report = {
        "channel_spacing_m": dl,
        "channel_spacing_hz": dn,
        "effective_channel_spacing_hz": design.effective_channel_spacing_hz(),
        "spacing_is_calibrated": design.measured_channel_spacing_hz is not None,
        "spatial_dispersion_m_per_m": spatial_dispersion(design),
        "pump_frequency_hz": design.pump_frequency_hz(),
        "index_sensitivity_rel": tolerance_propagation(design, 1e-3) / 1e-3,
        "ports": [
            {
                "source": j,
                "input": assignment.input_ports[j],
                "pump_focus": assignment.pump_focus_ports[j],
                "signal": assignment.signal_ports[j],
                "idler": assignment.idler_ports[j],
            }
            for j in range(assignment.n_sources)
        ],
    }
    return report
