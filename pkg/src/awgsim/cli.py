"""Batch front end: design checks, spectra export, simulation, analysis.

Subcommands
-----------
design          grating dispersion report and port table
spectra         channel passbands and joint spectral intensity as CSV
simulate        drifting-phase coincidence run -> records CSV
analyze         records CSV -> fringe/CHSH report JSON + phase-map CSV
reproduce-paper simulate + analyze with the desk-scale preset

Every command accepts `--config FILE` (TOML) and repeated
`--set section.key=value` overrides, applied in that order on top of
the preset.  Exit codes: 0 success, 2 validation failure, 3 I/O
failure.  The only environment control is AWGSIM_LOG, which sets the
log level and nothing else.
"""

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    bell_violation,
    bin_records,
    chsh_scan,
    fit_fringe,
    slice_fringe,
    visibility_exceeds_bell_threshold,
)
from .awg_optics import design_report
from .config import RunConfig, load_config, parse_config
from .errors import ValidationError
from .experiment_sim import RunRecords, simulate_run
from .pair_source import build_jsi_pulsed

_LOG = logging.getLogger("awgsim.cli")


def _load(args) -> RunConfig:
    return load_config(args.config, args.overrides)


def _jsonable(obj):
    """Translate report values into strict-JSON-safe builtins."""
    if isinstance(obj, dict):
        return {key: _jsonable(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(value) for value in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


# ------------------------------------------------------------------ design


def cmd_design(args) -> int:
    cfg = _load(args)
    design = cfg.design()
    assignment = cfg.port_assignment(design)
    report = design_report(design, assignment)
    report["seed"] = cfg.run["seed"]

    if args.json:
        print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
        return 0

    dl_pm = report["channel_spacing_m"] * 1e12
    dn_ghz = report["channel_spacing_hz"] / 1e9
    eff_ghz = report["effective_channel_spacing_hz"] / 1e9
    tag = "measured calibration" if report["spacing_is_calibrated"] else "formula"
    print(f"channel spacing (formula): {dl_pm:.3f} pm = {dn_ghz:.2f} GHz")
    print(f"channel spacing (in use):  {eff_ghz:.2f} GHz  [{tag}]")
    print(f"spatial dispersion: {report['spatial_dispersion_m_per_m']:.6g} m per m")
    print(f"pump frequency: {report['pump_frequency_hz'] / 1e12:.4f} THz")
    print(
        "relative spacing error per relative array-index error: "
        f"{report['index_sensitivity_rel']:g}"
    )
    print("ports (grid lines from the slab center):")
    print("  source  input  pump_focus  signal  idler")
    for row in report["ports"]:
        print(
            f"  {row['source'] + 1:>6}  {row['input']:>5}  "
            f"{row['pump_focus']:>10}  {row['signal']:>6}  {row['idler']:>5}"
        )
    return 0


# ----------------------------------------------------------------- spectra


def cmd_spectra(args) -> int:
    cfg = _load(args)
    design = cfg.design()
    assignment = cfg.port_assignment(design)
    signals, idlers = cfg.channel_spectra(design, assignment)
    pump = cfg.pump_spec()
    seed = cfg.run["seed"]
    out_dir = Path(args.out_dir)
    os.makedirs(out_dir, exist_ok=True)

    bands_path = out_dir / "passbands.csv"
    with open(bands_path, "w") as fh:
        fh.write(f"# seed={seed}\n")
        fh.write("source,kind,nu_hz,transmission\n")
        for j in range(assignment.n_sources):
            for kind, spec in (("signal", signals[j]), ("idler", idlers[j])):
                trans = np.abs(spec.amplitude) ** 2
                for nu, t in zip(spec.frequencies, trans):
                    fh.write(f"{j + 1},{kind},{float(nu)!r},{float(t)!r}\n")
    _LOG.info("wrote %s", bands_path)

    for j in range(assignment.n_sources):
        jsi = build_jsi_pulsed(
            signals[j], idlers[j], pump,
            span_hz=args.span_ghz * 1e9,
            resolution_hz=args.resolution_ghz * 1e9,
        )
        grid_s, grid_i = np.meshgrid(
            jsi.signal_frequencies, jsi.idler_frequencies, indexing="ij"
        )
        table = np.column_stack(
            [grid_s.ravel(), grid_i.ravel(), jsi.intensity.ravel()]
        )
        jsi_path = out_dir / f"jsi_source{j + 1}.csv"
        np.savetxt(
            jsi_path, table, fmt="%.10e", delimiter=",",
            header=f"# seed={seed}\nnu_s_hz,nu_i_hz,intensity", comments="",
        )
        _LOG.info("wrote %s", jsi_path)
    print(f"wrote spectra for {assignment.n_sources} sources to {out_dir}")
    return 0


# ---------------------------------------------------------------- simulate


def _simulate_records(cfg: RunConfig, shot_noise: bool = True) -> RunRecords:
    visibility = cfg.spectral_visibility()
    records = simulate_run(
        fringe_visibility=visibility,
        fringe_offset_rad=math.radians(cfg.run["fringe_offset_deg"]),
        mu_per_source=cfg.pump["mu_per_source"],
        losses=cfg.loss_budget(),
        det=cfg.detector_spec(),
        drift=cfg.drift_model(),
        duration_s=cfg.run["duration_s"],
        seed=cfg.run["seed"],
        visibility_factor=cfg.run["visibility_factor"],
        leakage_background_per_gate=cfg.pump["leakage_background_per_gate"],
        shot_noise=shot_noise,
    )
    _LOG.info(
        "simulated %d records at spectral visibility %.4f", len(records), visibility
    )
    return records


def _summary_line(records: RunRecords) -> str:
    total_gates = len(records) * records.n_gates_per_record
    if len(records) > 1:
        interval = float(np.median(np.diff(records.t_s)))
    else:
        interval = 1.0
    seconds = len(records) * interval
    return (
        f"records={len(records)} gates={total_gates} "
        f"singles1_hz={records.singles_1.sum() / seconds:.3f} "
        f"singles2_hz={records.singles_2.sum() / seconds:.3f} "
        f"coinc_hz={records.coincidences.sum() / seconds:.4f}"
    )


def cmd_simulate(args) -> int:
    cfg = _load(args)
    records = _simulate_records(cfg, shot_noise=not args.expected_counts)
    records.to_csv(args.out)
    print(_summary_line(records) + f" out={args.out}")
    return 0


# ----------------------------------------------------------------- analyze


def _fit_entry(fit) -> dict:
    return {
        "c0": fit.c0,
        "v": fit.v,
        "v_sigma": fit.v_sigma,
        "delta_phi_deg": math.degrees(fit.delta_phi_rad),
        "delta_phi_sigma_deg": math.degrees(fit.delta_phi_sigma_rad),
        "n_bins": fit.n_bins,
        "n_iterations": fit.n_iterations,
        "warnings": list(fit.warnings),
    }


def _analyze_records(cfg: RunConfig, records: RunRecords):
    interval = None
    if len(records) < 2:
        interval = cfg.drift_model().record_interval_s
    # scanned runs park each record on a bin center; drifting runs smear
    # across the bin, and the fit corrects for that spread.  The records
    # carry the drift kind that produced them; files without the stamp
    # fall back to whatever the analysis config says.
    kind = records.drift_kind or cfg.drift["kind"]
    spread = "point" if kind == "scan" else "uniform"
    map_ = bin_records(records, record_interval_s=interval, phase_spread=spread)

    fit_raw = fit_fringe(map_, subtract=False)
    fit_sub = fit_fringe(map_, subtract=True)

    slices = []
    for fixed_deg in cfg.analysis["slice_phi_a_deg"]:
        fit = slice_fringe(map_, "a", fixed_deg)
        slices.append(
            {
                "axis": fit.fixed_axis,
                "fixed_deg": fit.fixed_deg,
                "c0": fit.c0,
                "v": fit.v,
                "v_sigma": fit.v_sigma,
                "delta_phi_deg": math.degrees(fit.delta_phi_rad),
                "n_bins": fit.n_bins,
            }
        )

    settings = cfg.analysis["chsh_settings_deg"]
    if len(settings) == 4:
        chsh = chsh_scan(map_, subtract=True, settings_deg=tuple(settings))
    elif len(settings) == 0:
        chsh = chsh_scan(map_, subtract=True)
    else:
        raise ValidationError(
            "analysis.chsh_settings_deg needs exactly four angles, "
            "or an empty list to scan"
        )

    return {
        "seed": records.seed,
        "n_records": len(records),
        "n_discarded": int(records.discarded.sum()),
        "fit": _fit_entry(fit_raw),
        "fit_subtracted": _fit_entry(fit_sub),
        "slices": slices,
        "chsh": {
            "s": chsh.s,
            "s_sigma": chsh.s_sigma,
            "settings_deg": list(chsh.settings_deg),
            "subtracted": True,
        },
        "bell_violation": bell_violation(chsh),
        "visibility_above_bell_threshold":
            visibility_exceeds_bell_threshold(fit_sub.v),
    }, map_


def _print_headline(report: dict):
    raw, sub = report["fit"], report["fit_subtracted"]
    chsh = report["chsh"]
    print(f"V_raw = {raw['v']:.4f} +/- {raw['v_sigma']:.4f}")
    print(f"V_subtracted = {sub['v']:.4f} +/- {sub['v_sigma']:.4f}")
    print(
        f"S = {chsh['s']:.4f} +/- {chsh['s_sigma']:.4f} at settings "
        f"{chsh['settings_deg']} (accidentals subtracted)"
    )
    print(f"bell_violation = {report['bell_violation']}")


def _write_report(report: dict, map_, report_path, map_path):
    with open(report_path, "w") as fh:
        fh.write(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    map_.to_csv(map_path)


def cmd_analyze(args) -> int:
    cfg = _load(args)
    records = RunRecords.from_csv(args.records)
    report, map_ = _analyze_records(cfg, records)
    _write_report(report, map_, args.report, args.map)
    _print_headline(report)
    return 0


# --------------------------------------------------------- reproduce-paper


def cmd_reproduce(args) -> int:
    if args.config is not None:
        cfg = load_config(args.config, args.overrides)
    else:
        cfg = parse_config('defaults = "reproduce-paper"', args.overrides)
    out_dir = Path(args.out_dir)
    os.makedirs(out_dir, exist_ok=True)

    records = _simulate_records(cfg)
    records_path = out_dir / "records.csv"
    records.to_csv(records_path)
    print(_summary_line(records) + f" out={records_path}")

    report, map_ = _analyze_records(cfg, records)
    _write_report(report, map_, out_dir / "report.json", out_dir / "map.csv")
    _print_headline(report)
    print(f"wrote {records_path}, {out_dir / 'report.json'}, {out_dir / 'map.csv'}")
    return 0


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file (preset defaults if absent)")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config key; value is a TOML literal; repeatable",
    )

    parser = argparse.ArgumentParser(
        prog="awgsim",
        description="grating-multiplexed photon-pair source: design, "
        "simulation, and fringe/CHSH analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[common], help="dispersion and port report")
    p.add_argument("--json", action="store_true", help="emit the report as JSON")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("spectra", parents=[common], help="export passbands and JSI")
    p.add_argument("--out-dir", default=".", help="directory for the CSV files")
    p.add_argument("--span-ghz", type=float, default=360.0,
                   help="JSI window width around each channel center")
    p.add_argument("--resolution-ghz", type=float, default=1.0,
                   help="JSI grid step")
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("simulate", parents=[common], help="run the coincidence simulation")
    p.add_argument("--out", default="records.csv", help="records CSV path")
    p.add_argument(
        "--expected-counts", action="store_true",
        help="write expectation values instead of Poisson draws",
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", parents=[common], help="fit fringes and CHSH from records")
    p.add_argument("records", help="records CSV from the simulate command")
    p.add_argument("--report", default="report.json", help="report JSON path")
    p.add_argument("--map", default="map.csv", help="phase-map CSV path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser(
        "reproduce-paper", parents=[common],
        help="desk-scale end-to-end run with the published instrument values",
    )
    p.add_argument("--out-dir", default=".", help="directory for all outputs")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = os.environ.get("AWGSIM_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    run()
