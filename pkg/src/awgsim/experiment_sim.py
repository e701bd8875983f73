"""Monte Carlo model of the two-interferometer coincidence experiment.

Two pulsed sources feed a pair of Franson-style interferometers whose
relative phases drift slowly.  The run is chopped into fixed-length
records; within each record the simulator draws detector counts from the
per-gate click probabilities, reads the interferometer monitor taps, and
reconstructs the phase pair the way the bench instrumentation would.

Randomness is organised for replay: every record belongs to a segment,
and each (seed, segment, variable) triple owns an independent generator
seeded through `numpy.random.SeedSequence`.  Segments therefore produce
identical numbers no matter how many neighbours ran before them, and a
short run is bit-for-bit a prefix of a longer one with the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .kernels import choose_phase_branch, deadtime_filter, intersect_count

_TWO_PI = 2.0 * math.pi

# substream labels, one per random variable
_ROLE_STEP_A = 0
_ROLE_STEP_B = 1
_ROLE_MONITOR = 2
_ROLE_COINC = 3
_ROLE_EXTRA_S = 4
_ROLE_EXTRA_I = 5
_ROLE_INIT = 6
_ROLE_GATES = 7

_FINE_BIN_RAD = math.radians(3.0)
_COARSE_BIN_RAD = math.radians(45.0)
_FLAT_HALFWIDTH_RAD = math.radians(22.5)


def axis_bin_centers_rad() -> np.ndarray:
    """Bin centers for one phase axis, radians.

    The partition is 3 degree bins where the monitor calibration is
    steep and a single 45 degree bin around each fringe extremum where
    the tap intensity barely moves.  The scan drift mode steps the
    plates through exactly these angles, and the analysis bins to them.
    """
    fine_low = 24.0 + 3.0 * np.arange(45)
    fine_high = 204.0 + 3.0 * np.arange(45)
    return np.radians(np.concatenate(([0.0], fine_low, [180.0], fine_high)))


def axis_bin_widths_rad() -> np.ndarray:
    """Bin widths matching `axis_bin_centers_rad`."""
    widths = np.full(92, math.radians(3.0))
    widths[0] = math.radians(45.0)
    widths[46] = math.radians(45.0)
    return widths


@dataclass(frozen=True)
class DetectorSpec:
    """Gated single-photon detector parameters."""

    efficiency: float = 0.21
    gate_width_s: float = 1.0e-9
    dark_count_rate_hz: float = 2.1e3
    dead_time_s: float = 10e-6
    gate_rate_hz: float = 100e6

    def __post_init__(self) -> None:
        if not 0.0 < self.efficiency <= 1.0:
            raise ValidationError("detector efficiency must lie in (0, 1]")
        if self.gate_width_s <= 0 or self.gate_rate_hz <= 0:
            raise ValidationError("gate width and gate rate must be positive")
        if self.dark_count_rate_hz < 0:
            raise ValidationError("dark count rate cannot be negative")
        if self.dead_time_s < 0:
            raise ValidationError("dead time cannot be negative")
        if self.dark_probability() >= 1.0:
            raise ValidationError("dark probability per gate must stay below 1")

    def dark_probability(self) -> float:
        """Dark count probability within a single gate."""
        return self.dark_count_rate_hz * self.gate_width_s

    def blank_gates(self) -> int:
        """Number of gates blanked after an accepted click."""
        return int(math.ceil(self.dead_time_s * self.gate_rate_hz))


@dataclass(frozen=True)
class LossBudget:
    """Itemised collection losses between source and detector, in dB.

    `collection_db` may pin the calibrated total; it has to agree with the
    itemised sum to within 0.3 dB and wins when supplied.
    """

    facet_db: float = -1.0
    awg_db: float = -6.7
    filters_db: float = -2.8
    other_db: float = -7.0
    collection_db: float | None = None

    def __post_init__(self) -> None:
        items = (self.facet_db, self.awg_db, self.filters_db, self.other_db)
        if any(v > 0 for v in items):
            raise ValidationError("loss entries are attenuations and must be <= 0 dB")
        if self.collection_db is not None:
            if self.collection_db > 0:
                raise ValidationError("collection_db must be <= 0 dB")
            if abs(self.collection_db - sum(items)) > 0.3:
                raise ValidationError(
                    "collection_db disagrees with the itemised losses by more "
                    "than 0.3 dB"
                )

    def total_db(self) -> float:
        if self.collection_db is not None:
            return self.collection_db
        return self.facet_db + self.awg_db + self.filters_db + self.other_db

    def transmission(self) -> float:
        """Linear power transmission for the whole collection path."""
        return 10.0 ** (self.total_db() / 10.0)


@dataclass(frozen=True)
class DriftModel:
    """Phase trajectory of the two interferometers, one value per record.

    `random-walk` models passive thermal drift: independent Gaussian
    steps accumulate on each phase and the monitor taps recover them.
    `scan` models an actively stepped measurement instead: the phase
    plates are commanded through the analysis grid cell by cell, held
    for the whole record, so the recorded phases are the setpoints and
    nothing is ever discarded.  The step and noise sizes apply to the
    walk only.
    """

    kind: str = "random-walk"
    step_std_rad: float = math.radians(2.0)
    record_interval_s: float = 0.2
    fast_noise_std_rad: float = 0.0
    monitor_noise_std: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("random-walk", "scan"):
            raise ValidationError(f"unsupported drift kind {self.kind!r}")
        if self.step_std_rad < 0 or self.fast_noise_std_rad < 0:
            raise ValidationError("drift noise levels cannot be negative")
        if self.record_interval_s <= 0:
            raise ValidationError("record interval must be positive")
        if self.monitor_noise_std < 0:
            raise ValidationError("monitor noise cannot be negative")


def per_gate_probabilities(
    mu: float,
    losses: LossBudget,
    det: DetectorSpec,
    leakage_background_per_gate: float = 0.0,
) -> tuple[float, float, float, float]:
    """Click probabilities per gate for a bare source-to-detector path.

    Returns (p_single_signal, p_single_idler, p_true_coincidence, p_dark).
    `mu` is the pair emission probability per gate; the coincidence term
    is the correlated part only, accidentals are handled separately.
    """
    if not 0.0 <= mu < 0.5:
        raise ValidationError("pair probability per gate must lie in [0, 0.5)")
    if not 0.0 <= leakage_background_per_gate < 1.0:
        raise ValidationError("leakage background must lie in [0, 1)")
    t = losses.transmission() * det.efficiency
    p_dark = det.dark_probability()
    p_single = mu * t + p_dark + leakage_background_per_gate
    p_true = mu * t * t
    if p_single > 1.0 or p_true > 1.0:
        raise ValidationError("per-gate probability exceeds 1; check parameters")
    return p_single, p_single, p_true, p_dark


def accidental_probability(p_single_1: float, p_single_2: float) -> float:
    """Uncorrelated coincidence probability per gate."""
    for p in (p_single_1, p_single_2):
        if not 0.0 <= p < 1.0:
            raise ValidationError("singles probabilities must lie in [0, 1)")
    return p_single_1 * p_single_2


def retrieve_phase(
    leak_intensity: float,
    previous_phase: float,
    noise_std: float,
    fine_bin_rad: float = _FINE_BIN_RAD,
    coarse_bin_rad: float = _COARSE_BIN_RAD,
    flat_halfwidth_rad: float = _FLAT_HALFWIDTH_RAD,
) -> tuple[float, float, bool]:
    """Convert one monitor-tap intensity into a phase estimate.

    The tap reads I = (1 + cos(phi)) / 2, which pins the phase only up to
    the sign; the branch nearest `previous_phase` is selected.  Returns
    (phase, bin size, flat) where `flat` marks the low-slope region around
    the fringe extrema that only supports a coarse bin.
    """
    if noise_std < 0:
        raise ValidationError("noise_std cannot be negative")
    slack = 5.0 * noise_std
    if not -slack <= leak_intensity <= 1.0 + slack:
        raise ValidationError(
            f"monitor intensity {leak_intensity!r} outside [0, 1] beyond the "
            "noise allowance; recalibrate the tap"
        )
    x = min(max(2.0 * leak_intensity - 1.0, -1.0), 1.0)
    principal = math.acos(x)
    phase = float(
        choose_phase_branch(
            np.array([principal]), np.array([float(previous_phase)])
        )[0]
    ) % _TWO_PI
    flat = abs(math.sin(phase)) < math.sin(flat_halfwidth_rad)
    return phase, (coarse_bin_rad if flat else fine_bin_rad), flat


@dataclass(frozen=True, eq=False)
class RunRecords:
    """Column-oriented store for one simulated run.

    Phases are radians in memory; the CSV form uses degrees.  The
    `true_phi_*` columns hold the underlying walk for diagnostics and
    never leave the process through `to_csv`.

    `drift_kind` remembers which drift model produced the run, so a
    later analysis can tell commanded setpoints from drifting phases
    without being handed the original config.  Files written before the
    stamp existed load with `None` here.
    """

    seed: int
    t_s: np.ndarray
    phi_a: np.ndarray
    phi_b: np.ndarray
    bin_a: np.ndarray
    bin_b: np.ndarray
    singles_1: np.ndarray
    singles_2: np.ndarray
    coincidences: np.ndarray
    accidental_estimate: np.ndarray
    discarded: np.ndarray
    n_gates_per_record: int
    drift_kind: str | None = None
    true_phi_a: np.ndarray = field(default=None, repr=False)
    true_phi_b: np.ndarray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        n = self.t_s.size
        for name in (
            "phi_a", "phi_b", "bin_a", "bin_b", "singles_1", "singles_2",
            "coincidences", "accidental_estimate", "discarded",
        ):
            if getattr(self, name).size != n:
                raise ValidationError(f"column {name} does not match run length")
        if np.any(self.coincidences > np.minimum(self.singles_1, self.singles_2)):
            raise ValidationError("coincidences cannot exceed either singles count")
        if np.any(self.singles_1 < 0) or np.any(self.singles_2 < 0):
            raise ValidationError("counts cannot be negative")

    def __len__(self) -> int:
        return int(self.t_s.size)

    def to_csv(self, path: str | Path) -> None:
        cols = np.column_stack(
            [
                self.t_s,
                np.degrees(self.phi_a),
                np.degrees(self.phi_b),
                np.degrees(self.bin_a),
                np.degrees(self.bin_b),
                self.singles_1,
                self.singles_2,
                self.coincidences,
                self.accidental_estimate,
                self.discarded.astype(np.int64),
            ]
        )
        header = (
            f"# seed={self.seed}\n"
            f"# n_gates_per_record={self.n_gates_per_record}\n"
        )
        if self.drift_kind is not None:
            header += f"# drift_kind={self.drift_kind}\n"
        header += (
            "t_s,phi_a_deg,phi_b_deg,bin_a_deg,bin_b_deg,"
            "singles1,singles2,coinc,acc_est,discarded"
        )
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in cols:
                fields = [repr(float(v)) for v in row[:5]]
                # counts are integers except in expectation mode, where
                # the full float must survive the round trip
                fields += [
                    str(int(v)) if float(v).is_integer() else repr(float(v))
                    for v in row[5:8]
                ]
                fields.append(repr(float(row[8])))
                fields.append(str(int(row[9])))
                fh.write(",".join(fields) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "RunRecords":
        seed = None
        n_gates = 0
        drift_kind = None
        with open(path) as fh:
            lines = fh.read().splitlines()
        body_start = None
        for i, line in enumerate(lines):
            if line.startswith("# seed="):
                seed = int(line.split("=", 1)[1])
            elif line.startswith("# n_gates_per_record="):
                n_gates = int(line.split("=", 1)[1])
            elif line.startswith("# drift_kind="):
                drift_kind = line.split("=", 1)[1].strip()
            elif not line.startswith("#"):
                body_start = i
                break
        if body_start is None:
            raise ValidationError(f"{path}: no data found")
        if seed is None:
            raise ValidationError(f"{path}: missing '# seed=' header")
        header = "t_s,phi_a_deg,phi_b_deg,bin_a_deg,bin_b_deg," \
                 "singles1,singles2,coinc,acc_est,discarded"
        if lines[body_start] != header:
            raise ValidationError(f"{path}: unexpected column header")
        body = lines[body_start + 1:]
        rows = [line for line in body if line.strip()]
        if not rows:
            raise ValidationError(f"{path}: no data rows")
        try:
            data = np.loadtxt(rows, delimiter=",", ndmin=2)
        except ValueError:
            # rescan to report which file lines (1-based) are broken
            bad = []
            for lineno, line in enumerate(body, start=body_start + 2):
                if not line.strip():
                    continue
                parts = line.split(",")
                try:
                    ok = len(parts) == 10 and all(
                        math.isfinite(float(p)) for p in parts
                    )
                except ValueError:
                    ok = False
                if not ok:
                    bad.append(lineno)
            listed = ", ".join(str(n) for n in bad[:20]) if bad else "unknown"
            raise ValidationError(
                f"{path}: malformed rows at line(s) {listed}"
            ) from None
        if data.shape[1] != 10:
            raise ValidationError(f"{path}: expected 10 columns")

        def counts(col: np.ndarray) -> np.ndarray:
            # integral columns come back as int64, expectation-mode
            # columns stay float
            if np.all(col == np.floor(col)):
                return col.astype(np.int64)
            return col

        return cls(
            seed=seed,
            t_s=data[:, 0],
            phi_a=np.radians(data[:, 1]),
            phi_b=np.radians(data[:, 2]),
            bin_a=np.radians(data[:, 3]),
            bin_b=np.radians(data[:, 4]),
            singles_1=counts(data[:, 5]),
            singles_2=counts(data[:, 6]),
            coincidences=counts(data[:, 7]),
            accidental_estimate=data[:, 8],
            discarded=data[:, 9].astype(bool),
            n_gates_per_record=n_gates,
            drift_kind=drift_kind,
        )


def _segment_rng(seed: int, segment: int, role: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, segment, role]))


def _circular_gap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs((a - b + math.pi) % _TWO_PI - math.pi)


def simulate_run(
    fringe_visibility: float,
    fringe_offset_rad: float,
    mu_per_source: float,
    losses: LossBudget,
    det: DetectorSpec,
    drift: DriftModel,
    duration_s: float,
    seed: int,
    visibility_factor: float = 1.0,
    leakage_background_per_gate: float = 0.0,
    segment_records: int = 256,
    shot_noise: bool = True,
) -> RunRecords:
    """Simulate a drifting-phase coincidence run, one record at a time.

    `fringe_visibility` and `fringe_offset_rad` describe the state's ideal
    coincidence fringe P(phi) = (1 - V cos(phi_a + phi_b + offset)) / 4;
    `visibility_factor` multiplies V to model depolarisation and other
    broadband washout.  Counts aggregate whole records with dead time
    folded in as a live-fraction; the gate-resolved engine lives in
    `simulate_gates`.

    With the default random-walk drift, phase estimates come from the
    monitor taps via the same branch logic as `retrieve_phase`, anchored
    on the previous record's phase.  The bench hardware tracks the
    branch continuously within a record; here the previous record's true
    phase stands in for that fast monitor.  With scan drift the phases
    are commanded setpoints on the analysis grid, so the estimates equal
    the truth and no record is discarded.

    `shot_noise=False` replaces every count draw with its expectation,
    leaving float-valued columns.  Useful for calibration runs where the
    pipeline itself is under test and Poisson scatter would only hide a
    bias.
    """
    if not 0.0 <= fringe_visibility <= 1.0:
        raise ValidationError("fringe visibility must lie in [0, 1]")
    if not 0.0 <= visibility_factor <= 1.0:
        raise ValidationError("visibility factor must lie in [0, 1]")
    if not 0.0 <= mu_per_source < 0.25:
        raise ValidationError("mu per source must lie in [0, 0.25)")
    if segment_records < 1:
        raise ValidationError("segment_records must be at least 1")
    n_records = int(round(duration_s / drift.record_interval_s))
    if n_records < 1:
        raise ValidationError("duration must cover at least one record")
    n_gates = int(round(drift.record_interval_s * det.gate_rate_hz))
    if n_gates < 1:
        raise ValidationError("record interval shorter than one detector gate")

    if not 0.0 <= leakage_background_per_gate < 1.0:
        raise ValidationError("leakage background must lie in [0, 1)")
    mu_total = 2.0 * mu_per_source
    # interferometer outputs halve the singles rate before detection
    t = losses.transmission() * det.efficiency
    p_single = mu_total * t / 2 + det.dark_probability() + leakage_background_per_gate
    p_acc = accidental_probability(p_single, p_single)
    blank = det.blank_gates()
    live = 1.0 / (1.0 + p_single * blank)
    v_eff = fringe_visibility * visibility_factor
    pair_scale = mu_total * t * t / 4.0

    scan = drift.kind == "scan"
    if scan:
        grid = axis_bin_centers_rad()
    else:
        init_rng = _segment_rng(seed, 0, _ROLE_INIT)
        phi_a0, phi_b0 = init_rng.uniform(0.0, _TWO_PI, 2)
        start_a, start_b = phi_a0, phi_b0

    n_segments = -(-n_records // segment_records)
    count_dtype = np.int64 if shot_noise else np.float64
    true_a = np.empty(n_records)
    true_b = np.empty(n_records)
    est_a = np.empty(n_records)
    est_b = np.empty(n_records)
    n_coinc = np.empty(n_records, dtype=count_dtype)
    singles_1 = np.empty(n_records, dtype=count_dtype)
    singles_2 = np.empty(n_records, dtype=count_dtype)

    for g in range(n_segments):
        lo = g * segment_records
        m = min(segment_records, n_records - lo)
        if scan:
            # raster over the analysis grid: the second axis advances
            # every record, the first every full sweep of the second
            k = np.arange(lo, lo + m)
            seg_a = grid[(k // grid.size) % grid.size]
            seg_b = grid[k % grid.size]
            est_a[lo:lo + m] = seg_a
            est_b[lo:lo + m] = seg_b
        else:
            steps_a = _segment_rng(seed, g, _ROLE_STEP_A).normal(0, drift.step_std_rad, m)
            steps_b = _segment_rng(seed, g, _ROLE_STEP_B).normal(0, drift.step_std_rad, m)
            seg_a = start_a + np.cumsum(steps_a)
            seg_b = start_b + np.cumsum(steps_b)

            noise = _segment_rng(seed, g, _ROLE_MONITOR).standard_normal((m, 4))
            for truth, start, eps, eta, out in (
                (seg_a, start_a, noise[:, 0], noise[:, 1], est_a),
                (seg_b, start_b, noise[:, 2], noise[:, 3], est_b),
            ):
                intensity = (
                    (1 + np.cos(truth + drift.fast_noise_std_rad * eps)) / 2
                    + drift.monitor_noise_std * eta
                )
                slack = 5.0 * drift.monitor_noise_std
                if np.any(intensity < -slack) or np.any(intensity > 1.0 + slack):
                    raise ValidationError(
                        "monitor intensity left [0, 1] beyond the noise allowance"
                    )
                principal = np.arccos(np.clip(2 * intensity - 1, -1.0, 1.0))
                anchors = np.concatenate(([start], truth[:-1]))
                out[lo:lo + m] = choose_phase_branch(principal, anchors % _TWO_PI) % _TWO_PI

            start_a = seg_a[-1]
            start_b = seg_b[-1]
        true_a[lo:lo + m] = seg_a
        true_b[lo:lo + m] = seg_b

        phi_sum = seg_a + seg_b + fringe_offset_rad
        p_true = pair_scale * (1.0 - v_eff * np.cos(phi_sum))
        p_coinc = (p_true + p_acc) * live * live
        p_extra = np.maximum(p_single * live - p_coinc, 0.0)
        if shot_noise:
            n_c = _segment_rng(seed, g, _ROLE_COINC).binomial(n_gates, p_coinc)
            extra_s = _segment_rng(seed, g, _ROLE_EXTRA_S).binomial(n_gates, p_extra)
            extra_i = _segment_rng(seed, g, _ROLE_EXTRA_I).binomial(n_gates, p_extra)
        else:
            n_c = n_gates * p_coinc
            extra_s = n_gates * p_extra
            extra_i = n_gates * p_extra
        n_coinc[lo:lo + m] = n_c
        singles_1[lo:lo + m] = n_c + extra_s
        singles_2[lo:lo + m] = n_c + extra_i

    flat_a = np.abs(np.sin(est_a)) < math.sin(_FLAT_HALFWIDTH_RAD)
    flat_b = np.abs(np.sin(est_b)) < math.sin(_FLAT_HALFWIDTH_RAD)
    bin_a = np.where(flat_a, _COARSE_BIN_RAD, _FINE_BIN_RAD)
    bin_b = np.where(flat_b, _COARSE_BIN_RAD, _FINE_BIN_RAD)

    # drop records whose estimate moved by more than its own bin before
    # the next readout; commanded scan steps happen between records and
    # do not count
    discarded = np.zeros(n_records, dtype=bool)
    if n_records > 1 and not scan:
        jump_a = _circular_gap(est_a[1:], est_a[:-1])
        jump_b = _circular_gap(est_b[1:], est_b[:-1])
        discarded[:-1] = (jump_a > bin_a[:-1]) | (jump_b > bin_b[:-1])

    return RunRecords(
        seed=seed,
        t_s=np.arange(n_records) * drift.record_interval_s,
        phi_a=est_a,
        phi_b=est_b,
        bin_a=bin_a,
        bin_b=bin_b,
        singles_1=singles_1,
        singles_2=singles_2,
        coincidences=n_coinc,
        accidental_estimate=singles_1 * singles_2 / float(n_gates),
        discarded=discarded,
        n_gates_per_record=n_gates,
        drift_kind=drift.kind,
        true_phi_a=true_a % _TWO_PI,
        true_phi_b=true_b % _TWO_PI,
    )


@dataclass(frozen=True)
class GateTally:
    """Accepted counts from a gate-resolved simulation."""

    n_gates: int
    singles_1: int
    singles_2: int
    coincidences: int


def simulate_gates(
    n_gates: int,
    v_eff: float,
    delta_phi_rad: float,
    phi_a_rad: float,
    phi_b_rad: float,
    mu_total: float,
    losses: LossBudget,
    det: DetectorSpec,
    seed: int,
    leakage_background_per_gate: float = 0.0,
    backend: str | None = None,
) -> GateTally:
    """Gate-by-gate engine with explicit dead-time blanking.

    Holds both phases frozen, draws each emitted pair's fate from the
    joint output-port probabilities, merges in dark and leakage clicks,
    then applies non-paralyzable dead time before counting coincidences.
    Slower than `simulate_run` but free of the aggregated-record
    approximations, which makes it the reference for validating them.
    """
    if n_gates < 1:
        raise ValidationError("need at least one gate")
    if not 0.0 <= mu_total < 0.5:
        raise ValidationError("total pair probability must lie in [0, 0.5)")
    if not 0.0 <= v_eff <= 1.0:
        raise ValidationError("effective visibility must lie in [0, 1]")
    t = losses.transmission() * det.efficiency
    phi_sum = phi_a_rad + phi_b_rad + delta_phi_rad
    p_port = (1.0 - v_eff * math.cos(phi_sum)) / 4.0
    q_both = p_port * t * t
    q_single = t / 2.0
    p_bg = det.dark_probability() + leakage_background_per_gate

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0, _ROLE_GATES]))
    n_pairs = rng.poisson(mu_total * n_gates)
    pair_gates = rng.integers(0, n_gates, n_pairs)
    fate = rng.random(n_pairs)
    both = fate < q_both
    s_only = (fate >= q_both) & (fate < q_single)
    i_only = (fate >= q_single) & (fate < 2 * q_single - q_both)

    clicks = []
    for pair_hits in (pair_gates[both | s_only], pair_gates[both | i_only]):
        n_dark = rng.poisson(p_bg * n_gates)
        dark_hits = rng.integers(0, n_gates, n_dark)
        clicks.append(np.unique(np.concatenate([pair_hits, dark_hits])))

    blank = det.blank_gates()
    accepted_1 = deadtime_filter(clicks[0], blank, backend=backend)
    accepted_2 = deadtime_filter(clicks[1], blank, backend=backend)
    return GateTally(
        n_gates=n_gates,
        singles_1=int(accepted_1.size),
        singles_2=int(accepted_2.size),
        coincidences=int(intersect_count(accepted_1, accepted_2, backend=backend)),
    )
