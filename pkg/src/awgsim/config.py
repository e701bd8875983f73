"""Run configuration: TOML parsing, presets, and domain-object builders.

A config file is TOML with up to eight tables (awg, ports, pump,
detectors, losses, drift, run, analysis) and one optional top-level key
`defaults` naming a preset.  Values the file does not set fall back to
the preset; the "paper" preset carries the published instrument values,
and "reproduce-paper" shortens the run while raising the pair rate so
the full pipeline finishes on a desk machine.  Keys are spelled in
bench units (um, mm, nm, GHz, ps, us, kHz, MHz, degrees); builders
convert to SI once, so the rest of the package never sees unit suffixes.

Unknown sections, unknown keys, and type mismatches are rejected up
front.  Command-line overrides use the same schema via
`section.key=value` strings whose value part is a TOML literal.
"""

import copy
import math

try:
    import tomllib
except ModuleNotFoundError:  # 3.10: stdlib parser arrives in 3.11
    import tomli as tomllib

from .awg_optics import (
    AwgDesign,
    C_VACUUM,
    PassbandModel,
    PortAssignment,
    TransmissionSpectrum,
    plan_ports,
    port_transmission,
)
from .entangled_state import visibility_from_spectra
from .errors import ValidationError
from .experiment_sim import DetectorSpec, DriftModel, LossBudget
from .pair_source import PumpSpec

from dataclasses import dataclass


_FLOAT = "number"
_INT = "integer"
_STR = "string"
_FLOAT_LIST = "list of numbers"

_SCHEMA = {
    "awg": {
        "d_um": _FLOAT,
        "f_mm": _FLOAT,
        "delta_L_um": _FLOAT,
        "n_s": _FLOAT,
        "n_a": _FLOAT,
        "lambda0_nm": _FLOAT,
        "array_count": _INT,
        "insertion_loss_db": _FLOAT,
        "passband_model": _STR,
        "fwhm_ghz": _FLOAT,
        "port_offset_errors_ghz": _FLOAT_LIST,
        "measured_channel_spacing_ghz": _FLOAT,
    },
    "ports": {
        "n_sources": _INT,
        "channel_offset": _INT,
    },
    "pump": {
        "center_nm": _FLOAT,
        "rep_rate_mhz": _FLOAT,
        "pulse_ps": _FLOAT,
        "bandwidth_ghz": _FLOAT,
        "mu_per_source": _FLOAT,
        "leakage_db": _FLOAT,
        "leakage_background_per_gate": _FLOAT,
    },
    "detectors": {
        "efficiency": _FLOAT,
        "gate_width_ns": _FLOAT,
        "dark_count_rate_khz": _FLOAT,
        "dead_time_us": _FLOAT,
        "gate_rate_mhz": _FLOAT,
    },
    "losses": {
        "facet_db": _FLOAT,
        "awg_db": _FLOAT,
        "filters_db": _FLOAT,
        "other_db": _FLOAT,
        "collection_db": _FLOAT,
    },
    "drift": {
        "kind": _STR,
        "step_std_deg": _FLOAT,
        "record_interval_s": _FLOAT,
        "fast_noise_std_deg": _FLOAT,
        "monitor_noise_std": _FLOAT,
    },
    "run": {
        "duration_s": _FLOAT,
        "seed": _INT,
        "visibility_factor": _FLOAT,
        "fringe_offset_deg": _FLOAT,
    },
    "analysis": {
        "slice_phi_a_deg": _FLOAT_LIST,
        "chsh_settings_deg": _FLOAT_LIST,
    },
}

_PAPER = {
    "awg": {
        "d_um": 30.0,
        "f_mm": 1.75,
        "delta_L_um": 63.0,
        "n_s": 1.45,
        "n_a": 1.47,
        "lambda0_nm": 1560.6,
        "array_count": 100,
        "insertion_loss_db": -6.7,
        "passband_model": "gaussian",
        "fwhm_ghz": 90.0,
        # signal_1, idler_1, signal_2, idler_2; this pattern shifts the
        # source-2 spectral product by +10 GHz against source 1, an
        # overlap visibility of 98.3 percent (0 disables nothing; the
        # errors are what keep the default fringe below unity)
        "port_offset_errors_ghz": [0.0, 0.0, 10.0, -10.0],
        # fabricated-device calibration; 0 falls back to the geometric
        # formula, which for these silica-like indices lands in the THz
        "measured_channel_spacing_ghz": 200.0,
    },
    "ports": {
        "n_sources": 2,
        "channel_offset": 3,
    },
    "pump": {
        "center_nm": 1560.6,
        "rep_rate_mhz": 100.0,
        "pulse_ps": 200.0,
        "bandwidth_ghz": 2.2,
        "mu_per_source": 0.01,
        "leakage_db": -35.0,
        "leakage_background_per_gate": 0.0,
    },
    "detectors": {
        "efficiency": 0.21,
        "gate_width_ns": 1.0,
        "dark_count_rate_khz": 2.1,
        "dead_time_us": 10.0,
        "gate_rate_mhz": 100.0,
    },
    "losses": {
        "facet_db": -1.0,
        "awg_db": -6.7,
        "filters_db": -2.8,
        "other_db": -7.0,
        "collection_db": -17.5,
    },
    "drift": {
        "kind": "random-walk",
        "step_std_deg": 2.0,
        "record_interval_s": 0.2,
        "fast_noise_std_deg": 0.0,
        "monitor_noise_std": 0.0,
    },
    "run": {
        "duration_s": 86400.0,
        "seed": 42,
        "visibility_factor": 0.83,
        "fringe_offset_deg": 0.0,
    },
    "analysis": {
        "slice_phi_a_deg": [51.0, 141.0],
        "chsh_settings_deg": [0.0, 90.0, 135.0, 45.0],
    },
}

# the compressed rerun of the headline measurement: six hours of records
# with the pair rate raised to recover the lost statistics, and the
# phases stepped through the analysis grid instead of left to wander so
# every fringe and correlation cell is guaranteed its share of exposure
_REPRODUCE = copy.deepcopy(_PAPER)
_REPRODUCE["run"]["duration_s"] = 21600.0
_REPRODUCE["pump"]["mu_per_source"] = 0.03
_REPRODUCE["drift"]["kind"] = "scan"

_PRESETS = {"paper": _PAPER, "reproduce-paper": _REPRODUCE}

PRESET_NAMES = tuple(sorted(_PRESETS))


def paper_preset() -> dict:
    """Deep copy of the default parameter tree."""
    return copy.deepcopy(_PAPER)


def _coerce(section: str, key: str, value):
    """Check `value` against the schema and normalize numeric types."""
    kind = _SCHEMA[section][key]
    label = f"{section}.{key}"
    if kind == _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{label} must be a {_FLOAT}")
        return float(value)
    if kind == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{label} must be an {_INT}")
        if key == "seed" and not 0 <= value < 2**63:
            raise ValidationError(f"{label} must be a non-negative 63-bit integer")
        return value
    if kind == _STR:
        if not isinstance(value, str):
            raise ValidationError(f"{label} must be a {_STR}")
        return value
    # list of numbers
    if not isinstance(value, list) or any(
        isinstance(x, bool) or not isinstance(x, (int, float)) for x in value
    ):
        raise ValidationError(f"{label} must be a {_FLOAT_LIST}")
    return [float(x) for x in value]


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration, one dict per section.

    The dicts hold schema-checked bench-unit values; treat them as
    read-only.  Builder methods convert to the SI dataclasses the rest
    of the package consumes.
    """

    awg: dict
    ports: dict
    pump: dict
    detectors: dict
    losses: dict
    drift: dict
    run: dict
    analysis: dict

    # ---------------------------------------------------------------- builders

    def design(self) -> AwgDesign:
        a = self.awg
        measured = a["measured_channel_spacing_ghz"] * 1e9
        return AwgDesign(
            waveguide_pitch_m=a["d_um"] / 1e6,
            focal_length_m=a["f_mm"] / 1e3,
            path_length_increment_m=a["delta_L_um"] / 1e6,
            slab_index=a["n_s"],
            array_group_index=a["n_a"],
            center_wavelength_m=a["lambda0_nm"] / 1e9,
            array_count=a["array_count"],
            insertion_loss_db=a["insertion_loss_db"],
            measured_channel_spacing_hz=measured if measured > 0.0 else None,
        )

    def port_assignment(self, design: AwgDesign | None = None) -> PortAssignment:
        if design is None:
            design = self.design()
        return plan_ports(
            design, self.ports["n_sources"], self.ports["channel_offset"]
        )

    def passbands(self) -> list[PassbandModel]:
        """One passband per output channel: signal_1, idler_1, signal_2, ..."""
        offsets = self.awg["port_offset_errors_ghz"]
        expected = 2 * self.ports["n_sources"]
        if len(offsets) != expected:
            raise ValidationError(
                f"awg.port_offset_errors_ghz needs {expected} entries "
                f"(signal and idler per source), got {len(offsets)}"
            )
        return [
            PassbandModel(
                shape=self.awg["passband_model"],
                fwhm_hz=self.awg["fwhm_ghz"] * 1e9,
                center_offset_hz=off * 1e9,
            )
            for off in offsets
        ]

    def channel_spectra(
        self,
        design: AwgDesign | None = None,
        assignment: PortAssignment | None = None,
    ) -> tuple[list[TransmissionSpectrum], list[TransmissionSpectrum]]:
        """Signal and idler transmission spectra for every source."""
        if design is None:
            design = self.design()
        if assignment is None:
            assignment = self.port_assignment(design)
        bands = self.passbands()
        signals = [
            port_transmission(design, assignment, j, "signal", bands[2 * j])
            for j in range(assignment.n_sources)
        ]
        idlers = [
            port_transmission(design, assignment, j, "idler", bands[2 * j + 1])
            for j in range(assignment.n_sources)
        ]
        return signals, idlers

    def spectral_visibility(self) -> float:
        """Channel-overlap fringe visibility of the configured device."""
        if self.ports["n_sources"] != 2:
            raise ValidationError(
                "spectral visibility is defined for exactly two sources"
            )
        design = self.design()
        signals, idlers = self.channel_spectra(design)
        return visibility_from_spectra(
            signals[0], idlers[0], signals[1], idlers[1],
            design.pump_frequency_hz(),
        )

    def pump_spec(self) -> PumpSpec:
        p = self.pump
        return PumpSpec(
            center_frequency_hz=C_VACUUM / (p["center_nm"] / 1e9),
            rep_rate_hz=p["rep_rate_mhz"] * 1e6,
            pulse_duration_s=p["pulse_ps"] / 1e12,
            bandwidth_fwhm_hz=p["bandwidth_ghz"] * 1e9,
            pairs_per_gate=p["mu_per_source"],
            leakage_db=p["leakage_db"],
            leakage_background_per_gate=p["leakage_background_per_gate"],
        )

    def detector_spec(self) -> DetectorSpec:
        d = self.detectors
        return DetectorSpec(
            efficiency=d["efficiency"],
            gate_width_s=d["gate_width_ns"] / 1e9,
            dark_count_rate_hz=d["dark_count_rate_khz"] * 1e3,
            dead_time_s=d["dead_time_us"] / 1e6,
            gate_rate_hz=d["gate_rate_mhz"] * 1e6,
        )

    def loss_budget(self) -> LossBudget:
        ls = self.losses
        return LossBudget(
            facet_db=ls["facet_db"],
            awg_db=ls["awg_db"],
            filters_db=ls["filters_db"],
            other_db=ls["other_db"],
            collection_db=ls["collection_db"],
        )

    def drift_model(self) -> DriftModel:
        d = self.drift
        return DriftModel(
            kind=d["kind"],
            step_std_rad=math.radians(d["step_std_deg"]),
            record_interval_s=d["record_interval_s"],
            fast_noise_std_rad=math.radians(d["fast_noise_std_deg"]),
            monitor_noise_std=d["monitor_noise_std"],
        )

    def record_count(self) -> int:
        return int(round(self.run["duration_s"] / self.drift["record_interval_s"]))


def _merge_section(merged: dict, section: str, table: dict):
    known = _SCHEMA[section]
    for key, value in table.items():
        if key not in known:
            raise ValidationError(
                f"unknown config key {section}.{key} "
                f"(known keys: {', '.join(sorted(known))})"
            )
        merged[section][key] = _coerce(section, key, value)


def parse_config(text: str, overrides=()) -> RunConfig:
    """Parse TOML text, layer it over its preset, then apply overrides.

    `overrides` are `section.key=value` strings (value is a TOML
    literal) applied last, in order.  Raises ValidationError for syntax,
    schema, or type problems.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"could not parse config: {exc}") from exc

    preset_name = data.pop("defaults", "paper")
    if not isinstance(preset_name, str) or preset_name not in _PRESETS:
        raise ValidationError(
            f"unknown preset {preset_name!r}; available: {', '.join(PRESET_NAMES)}"
        )
    merged = copy.deepcopy(_PRESETS[preset_name])

    for key, value in data.items():
        if key in _SCHEMA:
            if not isinstance(value, dict):
                raise ValidationError(f"config section [{key}] must be a table")
            _merge_section(merged, key, value)
        elif isinstance(value, dict):
            raise ValidationError(
                f"unknown config section [{key}] "
                f"(known sections: {', '.join(sorted(_SCHEMA))})"
            )
        else:
            raise ValidationError(f"unknown top-level key {key!r}")

    for item in overrides:
        name, eq, literal = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not eq or not dot or not key:
            raise ValidationError(
                f"override {item!r} must look like section.key=value"
            )
        if section not in _SCHEMA:
            raise ValidationError(f"unknown config section {section!r} in override")
        if key not in _SCHEMA[section]:
            raise ValidationError(f"unknown config key {section}.{key} in override")
        try:
            value = tomllib.loads(f"v = {literal}")["v"]
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(
                f"override {item!r} has no valid value literal: {exc}"
            ) from exc
        merged[section][key] = _coerce(section, key, value)

    return RunConfig(**merged)


def load_config(path: str | None, overrides=()) -> RunConfig:
    """Read `path` (preset defaults when None) and parse it."""
    if path is None:
        return parse_config("", overrides)
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config(handle.read(), overrides)
