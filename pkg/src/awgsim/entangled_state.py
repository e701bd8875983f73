"""Path-entangled two-photon states and their interference observables.

A state here is a normalized superposition of per-source pair amplitudes,
sum_j c_j S_j(nu_s, nu_i), with the generation phases and any brightness
imbalance folded into the coefficients c_j. Projecting both photons onto
one output port of a phase shifter + balanced coupler pair mixes the two
source amplitudes with a relative factor e^{i(phi_s + phi_i)}; the second
coupler input contributes the usual factor i, so the interference term
carries a minus sign and the coincidence fringe dips at zero phase sum.
"""

import math
from dataclasses import dataclass

import numpy as np

from .awg_optics import TransmissionSpectrum
from .errors import ValidationError
from .pair_source import JointSpectralAmplitude, build_jsa_quasi_cw

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class PathState:
    """Normalized N-path pair state: coefficients plus per-source amplitudes.

    Each JointSpectralAmplitude is individually normalized; relative source
    brightness lives in the coefficients, whose squared magnitudes sum to 1.
    """

    coefficients: np.ndarray
    jsas: tuple

    def __post_init__(self):
        coeff = np.asarray(self.coefficients, dtype=np.complex128)
        jsas = tuple(self.jsas)
        if coeff.ndim != 1 or coeff.size < 1:
            raise ValidationError("state needs at least one mode")
        if coeff.size != len(jsas):
            raise ValidationError("one joint amplitude per coefficient required")
        if not all(isinstance(j, JointSpectralAmplitude) for j in jsas):
            raise ValidationError("jsas must be JointSpectralAmplitude instances")
        if not np.all(np.isfinite(coeff.view(np.float64))):
            raise ValidationError("coefficients must be finite")
        norm = float(np.sum(np.abs(coeff) ** 2))
        if abs(norm - 1.0) > 1e-12:
            raise ValidationError(f"coefficient norm {norm!r} deviates from 1")
        coeff.setflags(write=False)
        object.__setattr__(self, "coefficients", coeff)
        object.__setattr__(self, "jsas", jsas)

    @property
    def n_modes(self) -> int:
        return self.coefficients.size

    @property
    def is_product(self) -> bool:
        """True when a single source carries all the weight: no path
        superposition is left to interfere."""
        return int(np.count_nonzero(self.coefficients)) <= 1


def build_state(jsas, phases, amplitudes) -> PathState:
    """Superpose per-source amplitudes with phases e^{-i phi_j} and
    non-negative brightness weights, normalized to unit total weight."""
    jsas = tuple(jsas)
    phases = np.asarray(phases, dtype=np.float64)
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    if not (len(jsas) == phases.size == amplitudes.size):
        raise ValidationError("jsas, phases, and amplitudes must match in length")
    if len(jsas) < 1:
        raise ValidationError("at least one source required")
    if np.any(amplitudes < 0):
        raise ValidationError("amplitudes must be non-negative")
    total = float(np.sum(amplitudes**2))
    if total <= 0.0:
        raise ValidationError("all amplitudes are zero; state cannot be normalized")
    coeff = (amplitudes / math.sqrt(total)) * np.exp(-1j * phases)
    return PathState(coefficients=coeff, jsas=jsas)


@dataclass(frozen=True)
class ProjectionSetting:
    """Interferometer phases for one joint projection.

    phi_s and phi_i are the physical phase-shifter settings, stored reduced
    to [0, 2*pi). The offsets are the constant monitor-to-projection phase
    differences; phi_a and phi_b give the phases the pump-leak monitors see.
    """

    phi_s: float
    phi_i: float
    offset_s: float = 0.0
    offset_i: float = 0.0

    def __post_init__(self):
        for name in ("phi_s", "phi_i"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite")
            object.__setattr__(self, name, value % _TWO_PI)

    @property
    def phi_a(self) -> float:
        return (self.phi_s + self.offset_s) % _TWO_PI

    @property
    def phi_b(self) -> float:
        return (self.phi_i + self.offset_i) % _TWO_PI


def _require_two_shared_modes(state: PathState):
    if state.n_modes != 2:
        raise ValidationError(
            f"projection is defined for 2 paths, state has {state.n_modes}"
        )
    s1, s2 = state.jsas
    if not (
        np.array_equal(s1.signal_frequencies, s2.signal_frequencies)
        and np.array_equal(s1.idler_frequencies, s2.idler_frequencies)
    ):
        raise ValidationError("joint amplitudes must share frequency grids")
    return s1, s2


def coincidence_probability(state: PathState, setting: ProjectionSetting) -> float:
    """Probability of a joint click behind the two couplers' first ports.

    Direct double integral of |e^{i(phi_s+phi_i)} c1 S1 - c2 S2|^2 / 4 over
    the shared grid. For balanced identical sources this is
    (1 - cos(phi_s + phi_i)) / 4, peaking at half the pair rate.
    """
    s1, s2 = _require_two_shared_modes(state)
    step = s1.grid_step_hz
    c1, c2 = state.coefficients
    phase = np.exp(1j * (setting.phi_s + setting.phi_i))
    mixed = phase * c1 * s1.amplitude - c2 * s2.amplitude
    return float(0.25 * np.sum(np.abs(mixed) ** 2) * step * step)


def fringe_coefficients(state: PathState) -> tuple[float, float, float]:
    """Closed form (c0, v, delta_phi) of the coincidence fringe
    c0 * (1 - v cos(phi_s + phi_i + delta_phi)).

    Expanding the projection integral leaves a mean level set by the source
    weights and a cross term K = c1 conj(c2) * overlap(S1, S2); v = 2|K|
    normalized by the mean, delta_phi = arg K.
    """
    s1, s2 = _require_two_shared_modes(state)
    step2 = s1.grid_step_hz ** 2
    c1, c2 = state.coefficients
    w1 = float(np.sum(np.abs(s1.amplitude) ** 2)) * step2
    w2 = float(np.sum(np.abs(s2.amplitude) ** 2)) * step2
    overlap = complex(np.sum(s1.amplitude * np.conj(s2.amplitude))) * step2
    mean = abs(c1) ** 2 * w1 + abs(c2) ** 2 * w2
    cross = c1 * np.conj(c2) * overlap
    c0 = 0.25 * mean
    v = 2.0 * abs(cross) / mean
    delta_phi = math.atan2(cross.imag, cross.real) if abs(cross) > 0 else 0.0
    return c0, v, delta_phi


def fringe_model_parameters(state: PathState, settings) -> tuple[float, float, float]:
    """(C0, V, delta_phi) fitted to noiseless projection evaluations.

    Linear least squares on C0 + B cos(Phi) + C sin(Phi) over the swept sum
    phases Phi. The sweep must cover the fringe circle with no gap larger
    than a quarter period, otherwise the three parameters are too poorly
    constrained and the fit is refused.
    """
    settings = list(settings)
    if len(settings) < 3:
        raise ValidationError("need at least three settings to fit a fringe")
    phi = np.array([(s.phi_s + s.phi_i) % _TWO_PI for s in settings])
    gaps = np.diff(np.sort(phi))
    wrap_gap = _TWO_PI - (phi.max() - phi.min())
    if max(gaps.max(initial=0.0), wrap_gap) > math.pi / 2:
        raise ValidationError(
            "settings leave more than a quarter period of the fringe unsampled; "
            "sweep a full period"
        )
    probs = np.array([coincidence_probability(state, s) for s in settings])
    design = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
    (a, b, c), *_ = np.linalg.lstsq(design, probs, rcond=None)
    if a <= 0.0:
        raise ValidationError("fitted mean level is not positive")
    v = math.hypot(b, c) / a
    delta_phi = math.atan2(c, -b)
    return float(a), float(v), float(delta_phi)


def _reflected_band(spec: TransmissionSpectrum, points: np.ndarray) -> np.ndarray:
    """Complex amplitude of `spec` sampled at `points`, zero outside its grid."""
    re = np.interp(points, spec.frequencies, spec.amplitude.real, left=0.0, right=0.0)
    im = np.interp(points, spec.frequencies, spec.amplitude.imag, left=0.0, right=0.0)
    return re + 1j * im


def visibility_from_spectra(
    f1: TransmissionSpectrum,
    g1: TransmissionSpectrum,
    f2: TransmissionSpectrum,
    g2: TransmissionSpectrum,
    pump_frequency_hz: float,
) -> float:
    """Fringe visibility from channel spectra alone.

    V = 2 int Re[F1 conj(F2)] / int (|F1|^2 + |F2|^2), with
    F_j(nu) = f_j(nu) g_j(2 nu_p - nu), integrated by trapezoid over the
    shared signal grid. The conjugate matters only for complex spectra;
    measured amplitude passbands are real.
    """
    if not np.array_equal(f1.frequencies, f2.frequencies):
        raise ValidationError("signal spectra must share one frequency grid")
    if not np.array_equal(g1.frequencies, g2.frequencies):
        raise ValidationError("idler spectra must share one frequency grid")
    if not pump_frequency_hz > 0:
        raise ValidationError("pump frequency must be positive")
    nu = f1.frequencies
    reflected = 2.0 * pump_frequency_hz - nu
    prod1 = f1.amplitude * _reflected_band(g1, reflected)
    prod2 = f2.amplitude * _reflected_band(g2, reflected)
    den = float(np.trapezoid(np.abs(prod1) ** 2 + np.abs(prod2) ** 2, nu))
    if den <= 0.0 or not math.isfinite(den):
        raise ValidationError(
            "both channel products vanish; visibility is undefined"
        )
    num = 2.0 * float(np.trapezoid((prod1 * np.conj(prod2)).real, nu))
    return num / den


def state_from_spectra(
    signal_spectra,
    idler_spectra,
    pump_frequency_hz: float,
    phases=None,
    balance: str = "spectral",
) -> PathState:
    """Build the path state straight from per-source channel spectra.

    balance 'spectral' weights each source by its pair brightness (the
    integral of |f_j g_j|^2 along the energy ridge), which is what free
    running sources produce; 'equal' forces balanced coefficients, the
    attenuator-trimmed configuration.
    """
    signal_spectra = list(signal_spectra)
    idler_spectra = list(idler_spectra)
    if len(signal_spectra) != len(idler_spectra) or not signal_spectra:
        raise ValidationError("need one signal and one idler spectrum per source")
    if balance not in ("spectral", "equal"):
        raise ValidationError(f"unknown balance mode {balance!r}")
    if phases is None:
        phases = np.zeros(len(signal_spectra))

    jsas = []
    weights = []
    for f, g in zip(signal_spectra, idler_spectra):
        jsas.append(build_jsa_quasi_cw(f, g, pump_frequency_hz))
        reflected = 2.0 * pump_frequency_hz - f.frequencies
        ridge = f.amplitude * _reflected_band(g, reflected)
        weights.append(float(np.sum(np.abs(ridge) ** 2)))
    if balance == "spectral":
        amplitudes = np.sqrt(weights)
    else:
        amplitudes = np.ones(len(jsas))
    return build_state(jsas, phases, amplitudes)
