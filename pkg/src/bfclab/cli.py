"""Command-line front end.

Every subcommand reads the same scenario config, writes CSV artifacts to
``--out`` and prints a short summary. Exit status: 0 on success, 1 for
configuration or input-file problems, 2 for numerical failures.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from .config import apply_overrides, build_scenario, load_config
from .core_model import (cross_correlation, delay_grid,
                         spectral_density, temporal_wavefunction)
from .errors import BfcLabError, ConfigError, InvalidOrdering, NumericalError
from .eventsim import (Channel, SourceParams, generate_pairs, hbt_split, run_seed)
from .franson import (VisibilityTable, fit_recurrence_decay, frequency_pair_visibility,
                      recurrence_table)
from .qkd import (TabulatedHolevoBound, key_rate_report, pair_input_from_stream, report_rows)
from .schmidt import (ideal_jsi, plan_dimensionality, schmidt_from_jsi, schmidt_from_weights)
from .tagger import (coincidence_histogram, estimate_g2, heralded_g2_zero, peak_spacing)


def _resolve(args) -> dict:
    cfg = load_config(args.config)
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"source.seed={args.seed}")
    return apply_overrides(cfg, overrides)


def _out(args, name: str) -> Path:
    return Path(args.out) / name


def cmd_spectrum(args, cfg):
    sc = build_scenario(cfg)
    sp = cfg["spectrum"]
    f = np.linspace(-sp["span_ghz"], sp["span_ghz"], sp["points"]) * 1e9
    dens = spectral_density(sc.comb, 2 * math.pi * f)
    path = io.write_spectrum(_out(args, "spectrum.csv"), f, dens, cfg)
    print(f"wrote {path} ({f.size} points)")


def _tau_step(cfg):
    step = cfg["analysis"]["tau_step_ps"]
    return None if step is None else step * 1e-12


def cmd_wavefunction(args, cfg):
    sc = build_scenario(cfg)
    tr = temporal_wavefunction(sc.comb, delay_grid(sc.comb, _tau_step(cfg)))
    path = io.write_trace(_out(args, "wavefunction.csv"), tr, cfg)
    print(f"wrote {path} ({len(tr)} points)")


def cmd_correlation(args, cfg):
    sc = build_scenario(cfg)
    tj = math.hypot(sc.det_signal.jitter_rms_s, sc.det_idler.jitter_rms_s)
    step = _tau_step(cfg)
    if step is None:
        step = sc.comb.default_tau_step
        if tj > 0:
            step = min(step, tj / 5)
    grid = delay_grid(sc.comb, step, margin_s=6 * tj)
    tr = cross_correlation(sc.comb, sc.det_signal, sc.det_idler, grid)
    path = io.write_trace(_out(args, "correlation.csv"), tr, cfg,
                          {"combined_jitter_s": f"{tj:.12g}"})
    print(f"wrote {path} ({len(tr)} points, combined jitter {tj * 1e12:.3f} ps)")


def cmd_franson(args, cfg):
    sc = build_scenario(cfg)
    a = cfg["analysis"]
    mode = a["franson_mode"]
    if mode not in ("quadrature", "envelope"):
        raise ConfigError(f"analysis.franson_mode must be quadrature or envelope, not {mode!r}")
    table = recurrence_table(sc.comb, a["franson_bins"], background_ratio=a["background_ratio"],
                             mode=mode)
    path = io.write_visibility_table(_out(args, "visibility.csv"), table, cfg)
    print(f"wrote {path}")
    for b, v in zip(table.bins, table.v_subtracted):
        print(f"  bin {b:3d}  V = {100 * v:7.3f} %")
    fit = fit_recurrence_decay(table.v_subtracted, sc.comb.fsr_hz)
    print(f"  fitted linewidth {fit.linewidth_fwhm_hz / 1e9:.4f} GHz")

    N = sc.comb.n_half
    bpf = a["bpf_ghz"] * 1e9
    delay = a["bpf_delay_ps"] * 1e-12
    bins, vs = [], []
    for m in range(-N, N + 1):
        bins.append((m, -m))
        vs.append(frequency_pair_visibility(sc.comb, m, -m, bpf, delay))
    vs = np.asarray(vs)
    ftable = VisibilityTable(bins, vs / (1 + a["background_ratio"]), vs, np.zeros(vs.size))
    path = io.write_visibility_table(_out(args, "frequency_visibility.csv"), ftable, cfg)
    print(f"wrote {path}")


def cmd_schmidt(args, cfg):
    sc = build_scenario(cfg)
    weights = cfg["schmidt"]["weights"]
    if weights is not None:
        result = schmidt_from_weights(np.atleast_1d(weights))
    else:
        jsi = ideal_jsi(sc.comb, cfg["schmidt"]["cross_talk"])
        io.write_jsi(_out(args, "jsi.csv"), jsi, cfg)
        result = schmidt_from_jsi(jsi)
    path = io.write_schmidt(_out(args, "schmidt.csv"), result, cfg)
    print(f"wrote {path}")
    print(f"K = {result.schmidt_number:.4f}  dimension >= {result.dimension_lower_bound}")


def cmd_simulate(args, cfg):
    sc = build_scenario(cfg)
    stream = generate_pairs(sc.comb, sc.source, sc.det_signal, sc.det_idler, sc.link,
                            workers=args.workers)
    if args.hbt:
        stream = hbt_split(stream, cfg["analysis"]["hbt_split"], run_seed(sc.source.seed, 0))
    path = io.write_events(_out(args, "events.csv"), stream, cfg, include_truth=args.truth)
    counts = ", ".join(f"{c.label} {stream.count(c)}" for c in Channel if stream.count(c))
    print(f"wrote {path} ({len(stream)} records: {counts})")


def cmd_analyze(args, cfg):
    if not Path(args.events).is_file():
        raise FileNotFoundError(f"event file not found: {args.events}")
    stream = io.read_events(args.events)
    file_cfg = io.header_config(io.read_csv(args.events)[0])
    if file_cfg is not None and not args.config and not args.set:
        cfg = file_cfg
    sc = build_scenario(cfg)
    a = cfg["analysis"]
    if a["peak_method"] not in ("median", "slope"):
        raise ConfigError(f"analysis.peak_method must be median or slope, not {a['peak_method']!r}")
    summary = [("records", len(stream))]
    idler = Channel.IDLER_B if stream.has_channel(Channel.IDLER_B) else Channel.IDLER_B1
    hist = coincidence_histogram(stream, idler, Channel.SIGNAL_A, a["bin_width_ps"] * 1e-12,
                                 a["span_ns"] * 1e-9)
    io.write_trace(_out(args, "histogram.csv"), hist, cfg)
    summary.append(("coincidences_in_span", int(hist.values.sum())))
    try:
        # the accidental floor is taken far outside the correlation support
        wide = coincidence_histogram(stream, idler, Channel.SIGNAL_A, a["bin_width_ps"] * 1e-12,
                                     a["g2_span_ns"] * 1e-9)
        g2 = estimate_g2(wide, comb=sc.comb)
        io.write_trace(_out(args, "g2.csv"), g2, cfg)
        summary.append(("accidental_level", g2.meta["accidental_level"]))
    except BfcLabError as exc:
        summary.append(("g2", f"unavailable ({exc})"))
    T = sc.comb.round_trip_time
    smooth = a["peak_smooth_ps"] * 1e-12 if a["peak_smooth_ps"] is not None else T / 16
    try:
        sp = peak_spacing(hist, 0.5 * T, (0.5 + a["peak_periods"]) * T, smooth_s=smooth,
                          min_separation_s=0.6 * T, method=a["peak_method"])
        summary.append(("peak_spacing_ps", f"{sp * 1e12:.4f}"))
    except NumericalError as exc:
        summary.append(("peak_spacing_ps", f"unavailable ({exc})"))
    if stream.has_channel(Channel.IDLER_B1) and stream.has_channel(Channel.IDLER_B2):
        g, s = heralded_g2_zero(stream, a["window_ns"] * 1e-9)
        summary += [("heralded_g2", f"{g:.6g}"), ("heralded_g2_sigma", f"{s:.3g}")]
    io.write_table(_out(args, "summary.csv"), "summary", "quantity,value", summary, cfg)
    for k, v in summary:
        print(f"{k}: {v}")


def cmd_qkd(args, cfg):
    sc = build_scenario(cfg)
    q, a = cfg["qkd"], cfg["analysis"]
    d = q["frame_bins"]
    N = sc.comb.n_half
    vis = q["visibility"]
    if vis is None:
        vis = [frequency_pair_visibility(sc.comb, m, -m, a["bpf_ghz"] * 1e9,
                                         a["bpf_delay_ps"] * 1e-12) for m in range(-N, N + 1)]
    elif not isinstance(vis, list):
        vis = [vis] * sc.comb.n_lines
    if len(vis) != sc.comb.n_lines:
        raise ConfigError(f"qkd.visibility needs {sc.comb.n_lines} values, got {len(vis)}")
    bound = None
    if q["holevo_table"] is not None:
        bound = TabulatedHolevoBound(tuple(q["holevo_table"]["visibility"]),
                                     tuple(q["holevo_table"]["bits"]))
    single = sc.comb.replace(n_lines=1)
    weights = sc.comb.line_weights()
    inputs = []
    for i, m in enumerate(range(-N, N + 1)):
        src = SourceParams(sc.source.pair_rate_hz * weights[i], sc.source.duration_s,
                           run_seed(sc.source.seed, i), sc.source.window_s)
        stream = generate_pairs(single, src, sc.det_signal, sc.det_idler, sc.link)
        inputs.append(pair_input_from_stream(stream, (m, -m), min(max(vis[i], 0.0), 1.0),
                                             q["bin_ps"] * 1e-12, d, a["window_ns"] * 1e-9))
    report = key_rate_report(inputs, d, bound)
    path = io.write_key_rates(_out(args, "key_rate.csv"), report_rows(report), cfg)
    print(f"wrote {path}")
    print(f"raw {report.total_raw_bps:.6g} bit/s, secure {report.total_secure_bps:.6g} bit/s")


def cmd_plan(args, cfg):
    p = cfg["plan"]
    try:
        plan = plan_dimensionality(p["b_spdc_ghz"] * 1e9, p["fsr_ghz"] * 1e9,
                                   p["linewidth_ghz"] * 1e9)
    except InvalidOrdering as exc:
        raise ConfigError(f"plan: {exc}") from None
    io.write_table(_out(args, "plan.csv"), "plan", "n_f,n_t,product",
                   [(plan.n_f, plan.n_t, f"{plan.product:.12g}")], cfg)
    print(f"n_t={plan.n_t} n_f={plan.n_f} product={plan.product:.6g}")


COMMANDS = {
    "spectrum": (cmd_spectrum, "spectral density of the comb"),
    "wavefunction": (cmd_wavefunction, "temporal biphoton amplitude"),
    "correlation": (cmd_correlation, "jitter-convolved cross-correlation"),
    "franson": (cmd_franson, "recurrence and frequency-pair visibility tables"),
    "schmidt": (cmd_schmidt, "Schmidt number from weights or the ideal JSI"),
    "simulate": (cmd_simulate, "generate a detection-event stream"),
    "analyze": (cmd_analyze, "histogram, g2 and peak spacing of an event file"),
    "qkd": (cmd_qkd, "per-pair key-rate report"),
    "plan": (cmd_plan, "time-bin and frequency-bin dimensionality planner"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario YAML file (defaults to the nominal scenario)")
    common.add_argument("--out", default=".", help="output directory for CSV artifacts")
    common.add_argument("--seed", type=int, help="override source.seed")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry, e.g. comb.fsr_ghz=14.97")
    parser = argparse.ArgumentParser(prog="bfc-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bfc-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "simulate":
            p.add_argument("--truth", action="store_true", help="include the truth column")
            p.add_argument("--hbt", action="store_true",
                           help="split idlers over an HBT beam splitter")
            p.add_argument("--workers", type=int, default=None)
        if name == "analyze":
            p.add_argument("--events", required=True, help="event CSV written by simulate")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        cfg = _resolve(args)
        build_scenario(cfg)
        func(args, cfg)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
