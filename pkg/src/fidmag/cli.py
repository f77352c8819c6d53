"""Command-line interface: batch simulation, reconstruction and estimation.

Subcommands: simulate, reconstruct, estimate, calibrate-ffc, mc, spectra,
physics.  Exit codes: 0 success, 2 configuration/validation error, 3
numeric or estimation failure; errors are emitted as one JSON object on
stderr.  All randomness flows from the scenario base seed; ``mc`` refuses
to run without one.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import dsp, estimation, experiments, fidr, physics
from .errors import FidmagError, ValidationError, exit_code_for
from .scenario import BandSpec, Scenario


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fidmag", description=__doc__.split("\n")[0])
    p.add_argument("--verbose", "-v", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="synthesise one record from a scenario config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, default=None, help="override the scenario base seed")
    sim.add_argument("--trial", type=int, default=0)
    sim.add_argument("--field-out", default=None, help="also write the injected field trace as CSV")

    rec = sub.add_parser("reconstruct", help="record -> unwrapped phase CSV")
    rec.add_argument("--in", dest="infile", required=True)
    rec.add_argument("--band", type=float, default=500.0, help="bandpass width, Hz")
    rec.add_argument("--centre", type=float, default=None, help="bandpass centre, Hz (default: auto)")
    rec.add_argument("--out", required=True)

    est = sub.add_parser("estimate", help="record -> dc field estimate JSON")
    est.add_argument("--in", dest="infile", required=True)
    est.add_argument("--band", type=float, default=500.0)
    est.add_argument("--centre", type=float, default=None)
    est.add_argument("--config", default=None, help="scenario config for estimator options")
    est.add_argument("--out", required=True)
    est.add_argument("--residuals-out", default=None, help="write the residual phase series as CSV")

    ffc = sub.add_parser("calibrate-ffc", help="run the two-shot feed-forward cancellation cycle")
    ffc.add_argument("--config", required=True)
    ffc.add_argument("--out", required=True)
    ffc.add_argument("--spectra-dir", default=None)

    mc = sub.add_parser("mc", help="run a Monte Carlo suite from a scenario config")
    mc.add_argument("--config", required=True)
    mc.add_argument("--out-dir", required=True)
    mc.add_argument("--trials", type=int, default=None)

    spc = sub.add_parser("spectra", help="record -> PSD (and optional spectrogram) CSV")
    spc.add_argument("--in", dest="infile", required=True)
    spc.add_argument("--resolution", type=float, default=10.0)
    spc.add_argument("--out", required=True)
    spc.add_argument("--spectrogram-out", default=None)
    spc.add_argument("--window", type=float, default=0.02, help="spectrogram window, s")
    spc.add_argument("--hop", type=float, default=0.005, help="spectrogram hop, s")

    phy = sub.add_parser("physics", help="tabulate level-structure quantities over a field grid")
    phy.add_argument("--species", default="rb87")
    phy.add_argument("--b-start", type=float, default=0.0)
    phy.add_argument("--b-stop", type=float, default=100e-6)
    phy.add_argument("--points", type=int, default=11)
    phy.add_argument("--dressed", action="store_true")
    phy.add_argument("--rabi-hz", type=float, default=6e3)
    phy.add_argument("--detuning-hz", type=float, default=150e3)
    phy.add_argument("--out", required=True)
    return p


def _load_scenario(path, mc_requires_seed=False) -> Scenario:
    if not Path(path).exists():
        raise ValidationError(f"config file not found: {path}")
    scenario = Scenario.from_toml(path)
    if mc_requires_seed and scenario.base_seed is None:
        raise ValidationError("mc mode requires an explicit base_seed in the scenario config")
    return scenario


def _read_mc_section(path) -> dict:
    from . import _toml

    with open(path, "rb") as fh:
        return _toml.load(fh).get("mc", {})


def _sidecar(path, payload: dict):
    Path(path).write_text(json.dumps(experiments._jsonable(payload), indent=2, sort_keys=True))


def cmd_simulate(args) -> int:
    scenario = _load_scenario(args.config)
    if args.seed is not None:
        scenario = scenario.with_(base_seed=args.seed)
    record, truth, trace = experiments.synthesize_trial_record(scenario, args.trial)
    record.metadata["scenario"] = scenario.to_dict()
    record.metadata["truth"] = truth
    fidr.write_record(record, args.out)
    if args.field_out:
        fidr.write_trace_csv(trace, args.field_out)
    return 0


def cmd_reconstruct(args) -> int:
    record = fidr.read_record(args.infile)
    band = BandSpec(bandwidth=args.band, centre=args.centre)
    spec = experiments.resolve_band(record, band)
    phase, diag = dsp.reconstruct_phase(record, spec)
    t = phase.t
    w = phase.weights if phase.weights is not None else np.ones_like(phase.phi)
    fidr.write_columns_csv(args.out, "t_s,phi_rad,snr_weight", t, phase.phi, w)
    _sidecar(str(args.out) + ".json", {
        "filter": {"low_hz": spec.low_edge, "high_hz": spec.high_edge, "order": spec.prototype_order},
        "enbw_hz": diag["enbw"],
        "edge_guard_samples": diag["guard"],
        "discontinuities": diag["discontinuities"],
        "first_bad_time_s": diag["first_bad_time"],
    })
    return 0


def cmd_estimate(args) -> int:
    record = fidr.read_record(args.infile)
    scenario = _load_scenario(args.config) if args.config else Scenario()
    scenario = scenario.with_(band=BandSpec(bandwidth=args.band, centre=args.centre))
    fit, phase, diag = experiments.estimate_record(record, scenario)
    report = fit.to_dict()
    report["resolved_options"] = {
        "band": {"bandwidth_hz": args.band, "centre_hz": diag["filter"].centre,
                 "low_hz": diag["filter"].low_edge, "high_hz": diag["filter"].high_edge},
        "enbw_hz": diag["enbw"],
        "edge_guard_samples": diag["guard"],
        "estimator": scenario.to_dict()["estimator"],
    }
    Path(args.out).write_text(json.dumps(experiments._jsonable(report), indent=2, sort_keys=True))
    if args.residuals_out:
        fidr.write_columns_csv(args.residuals_out, "t_s,residual_rad", phase.t, fit.residuals)
    return 0


def cmd_calibrate_ffc(args) -> int:
    scenario = _load_scenario(args.config)
    result = experiments.run_ffc_cycle(scenario)
    fit = result["calibration"]
    report = {
        "calibration": {
            "line_frequency_hz": fit.line_frequency,
            "components": [
                {"frequency_hz": c.frequency, "rms_amplitude_t": c.rms_amplitude,
                 "phase_rad": c.phase, "amplitude_sigma_t": c.amplitude_sigma}
                for c in fit.components
            ],
        },
        "delta_b_before_t": result["delta_b_before_t"],
        "delta_b_after_t": result["delta_b_after_t"],
        "suppression_db": result["suppression_db"],
        "per_harmonic": result["per_harmonic"],
        "compensation_clipped": result["compensation_clipped"],
        "resolved_config": scenario.to_dict(),
    }
    Path(args.out).write_text(json.dumps(experiments._jsonable(report), indent=2, sort_keys=True))
    if args.spectra_dir:
        outdir = Path(args.spectra_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        for tag in ("before", "after"):
            spec = result[f"{tag}_spectrum"]
            fidr.write_columns_csv(outdir / f"field_psd_{tag}.csv", "f_hz,s_bb_t2_per_hz",
                                   spec.frequencies, spec.psd)
    return 0


def cmd_mc(args) -> int:
    scenario = _load_scenario(args.config, mc_requires_seed=True)
    mc_cfg = _read_mc_section(args.config)
    mode = mc_cfg.get("mode", "single_shot")
    trials = args.trials
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    if mode == "fringe_hop":
        tau_grid = mc_cfg.get("tau_grid_s")
        if not tau_grid:
            raise ValidationError("fringe_hop mode needs mc.tau_grid_s")
        report = experiments.run_fringe_hop_mc(scenario, tau_grid, trials=trials)
    elif mode == "crlb_sweep":
        grid = mc_cfg.get("snr_grid_db")
        if not grid:
            raise ValidationError("crlb_sweep mode needs mc.snr_grid_db")
        report = experiments.run_crlb_sweep(scenario, grid, trials=trials)
    elif mode == "ffc":
        report = experiments.run_ffc_mc(scenario, trials=trials)
    elif mode == "single_shot":
        report = experiments.run_single_shot_mc(scenario, trials=trials)
    else:
        raise ValidationError(f"unknown mc mode {mode!r}")
    report.to_csv(outdir / f"{report.kind}_trials.csv")
    report.to_json(outdir / f"{report.kind}_report.json")
    return 0


def cmd_spectra(args) -> int:
    record = fidr.read_record(args.infile)
    spec = dsp.power_spectrum(record.fid, record.fs, args.resolution)
    fidr.write_columns_csv(args.out, "f_hz,psd_v2_per_hz", spec.frequencies, spec.psd)
    if args.spectrogram_out:
        t, f, sxx = dsp.spectrogram(record.fid, record.fs, args.window, args.hop)
        with open(args.spectrogram_out, "w") as fh:
            fh.write("t_s,f_hz,psd_v2_per_hz\n")
            for j, tj in enumerate(t):
                for i, fi in enumerate(f):
                    fh.write(f"{tj},{fi},{sxx[i, j]}\n")
    return 0


def cmd_physics(args) -> int:
    species = physics.load_species(args.species)
    dressing = physics.MicrowaveDressing(
        rabi_frequency=2 * math.pi * args.rabi_hz,
        detuning=2 * math.pi * args.detuning_hz,
        enabled=args.dressed,
    )
    grid = np.linspace(args.b_start, args.b_stop, args.points)
    rows = []
    for b in grid:
        b = float(b)
        if b <= 0:
            omega = 0.0
            q = 0.0
            gamma = species.gamma_0
        else:
            omega = physics.larmor_frequency(species, b, dressing)
            q = physics.quadratic_shift(species, b, dressing)
            gamma = physics.running_gamma(species, b, dressing)
        rows.append((b, omega / (2 * math.pi), q / (2 * math.pi), gamma))
    arr = np.asarray(rows)
    fidr.write_columns_csv(args.out, "b_t,larmor_hz,quadratic_hz,gamma_rad_per_s_t",
                           arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
    return 0


_HANDLERS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "estimate": cmd_estimate,
    "calibrate-ffc": cmd_calibrate_ffc,
    "mc": cmd_mc,
    "spectra": cmd_spectra,
    "physics": cmd_physics,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except FidmagError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
        return exit_code_for(exc)
    except OSError as exc:
        print(json.dumps({"error": "OSError", "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
