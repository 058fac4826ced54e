"""Command-line entry point: ``cascade-spe <subcommand> ...``.

Every subcommand prints one ``key=value`` summary line on stdout. Exit codes:

==  =========================================================
0   success
2   bad command line (argparse)
3   malformed input file or configuration
4   analysis error (undefined quantity, invalid parameter)
5   fit finished without converging (outputs still written)
6   report inputs with mixed provenance (override: --force)
1   unexpected internal error
==  =========================================================
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import angular, counting, fileio, fitting, model, report
from .config import ConfigError, RunConfig, load_config, params_from_section, provenance_record
from .simulator import SimConfig, expected_counts, simulate

log = logging.getLogger("cascade_spe")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_INPUT, EXIT_ANALYSIS, EXIT_NOT_CONVERGED, EXIT_PROVENANCE = (
    0, 1, 2, 3, 4, 5, 6)


class CliError(Exception):
    def __init__(self, message, code=EXIT_ANALYSIS):
        super().__init__(message)
        self.code = code


def _summary(command: str, **fields):
    parts = [f"command={command}"]
    for k, v in fields.items():
        if isinstance(v, float):
            v = fileio.fmt(v)
        elif isinstance(v, bool):
            v = str(v).lower()
        parts.append(f"{k}={v}")
    print(" ".join(parts))


def _pick(args, name, section: dict, key=None, default=None):
    """Command-line value if given, else the config value, else ``default``."""
    v = getattr(args, name, None)
    if v is not None:
        return v
    return section.get(key or name, default)


def _params(args, cfg: RunConfig | None, section="params", default="device") -> model.RateParams:
    if getattr(args, "tau_x", None) is not None:
        try:
            return model.RateParams.from_lifetimes(args.tau_x, args.tau_xx, args.qy_x, args.qy_xx)
        except TypeError:
            raise CliError("--tau-x needs --tau-xx, --qy-x and --qy-xx", EXIT_USAGE) from None
    if getattr(args, "preset", None):
        return model.PRESETS[args.preset]
    return params_from_section(cfg.section(section) if cfg else None, default)


def _add_params(p):
    g = p.add_argument_group("emitter parameters (default: device preset)")
    g.add_argument("--preset", choices=sorted(model.PRESETS))
    g.add_argument("--tau-x", type=float, help="exciton lifetime [ns]")
    g.add_argument("--tau-xx", type=float, help="biexciton lifetime [ns]")
    g.add_argument("--qy-x", type=float)
    g.add_argument("--qy-xx", type=float)


def _with_provenance(meta: dict, record: dict) -> dict:
    meta = dict(meta)
    meta["provenance"] = list(meta.get("provenance", [])) + [record]
    return meta


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(args, cfg):
    sec = cfg.section("simulation") if cfg else {}
    seed = _pick(args, "seed", sec)
    if seed is None:
        raise CliError("simulate needs an explicit --seed (or simulation.seed in the config)", EXIT_USAGE)
    p = _params(args, cfg)
    sim = SimConfig(
        rep_rate=model.hz_to_per_ns(_pick(args, "rep_rate_hz", sec, default=4e6)),
        n_pulses=int(_pick(args, "n_pulses", sec, default=1_000_000)),
        seed=int(seed),
        n_emitters=int(_pick(args, "n_emitters", sec, default=1)),
        detection_efficiency=_pick(args, "efficiency", sec, "detection_efficiency", 1.0),
        background_rate=_pick(args, "background_rate", sec, default=0.0),
        irf_sigma=_pick(args, "irf_sigma", sec, "irf_sigma_ns", 0.0),
        hbt_split=_pick(args, "hbt_split", sec, default=0.5))
    s = simulate(p, sim, workers=int(_pick(args, "workers", sec, default=1)))
    settings = {"sim_config": s.metadata["sim_config"], "rate_params": s.metadata["rate_params"]}
    s = s.with_metadata(**_with_provenance({}, provenance_record("simulate", settings, sim.seed, config=cfg)))
    fileio.write_timestamps(args.output, s)
    exp = expected_counts(p, sim)
    _summary("simulate", events=len(s), pulses=sim.n_pulses,
             events_per_pulse=len(s) / sim.n_pulses, expected_per_pulse=exp.total,
             seed=sim.seed, output=args.output)


def cmd_histogram(args, cfg):
    sec = cfg.section("histogram") if cfg else {}
    s = fileio.read_timestamps(args.input)
    bw = _pick(args, "bin_width", sec, "bin_width_ns")
    if bw is None:
        raise CliError("histogram needs --bin-width", EXIT_USAGE)
    h = counting.decay_histogram(s, bw, _pick(args, "channels", sec, default="both"))
    settings = {"bin_width_ns": bw, "channels": h.channel_selection}
    rec = provenance_record("histogram", settings, inputs=[args.input], config=cfg)
    h = counting.DecayHistogram(h.bin_edges, h.counts, h.total_pulses, h.channel_selection, h.rep_rate,
                                _with_provenance({**h.metadata, "provenance": s.metadata.get("provenance", [])}, rec))
    fileio.write_decay_histogram(args.output, h)
    _summary("histogram", bins=len(h.counts), events=int(h.counts.sum()), pulses=h.total_pulses,
             output=args.output)


def cmd_gate(args, cfg):
    sec = cfg.section("gate") if cfg else {}
    s = fileio.read_timestamps(args.input)
    start = _pick(args, "gate_start", sec, "gate_start_ns")
    if start is None:
        raise CliError("gate needs --gate-start", EXIT_USAGE)
    g = counting.time_gate(s, start)
    rec = provenance_record("gate", {"gate_start_ns": start}, inputs=[args.input], config=cfg)
    g = g.with_metadata(provenance=list(g.metadata.get("provenance", [])) + [rec])
    fileio.write_timestamps(args.output, g)
    _summary("gate", kept=len(g), dropped=len(s) - len(g), gate_start_ns=float(g.metadata["gate_start"]),
             output=args.output)


def cmd_g2(args, cfg):
    sec = cfg.section("g2") if cfg else {}
    s = fileio.read_timestamps(args.input)
    bw = _pick(args, "bin_width", sec, "bin_width_ns")
    k = int(_pick(args, "k_side_peaks", sec, default=counting.DEFAULT_SIDE_PEAKS))
    h = counting.coincidence_histogram(s, bw, k)
    res = counting.g2_zero(h)
    fields = {"g2_zero": res.g2_zero, "uncertainty": res.uncertainty,
              "central_area": res.central_area, "mean_side_area": res.mean_side_area}
    try:
        n = counting.estimate_emitter_count(res)
        fields.update(n_estimate=n.n_estimate, n_rounded=n.n_rounded)
    except counting.NotSubPoissonianError as exc:
        log.warning("%s", exc)
        fields.update(n_estimate="nan", n_rounded="none")
    if args.output:
        rec = provenance_record("g2", {"bin_width_ns": bw, "k_side_peaks": k}, inputs=[args.input], config=cfg)
        meta = _with_provenance({**h.metadata, "provenance": s.metadata.get("provenance", [])}, rec)
        h = counting.CorrelationHistogram(h.lag_bin_edges, h.counts, h.rep_rate, k, meta)
        fileio.write_correlation_histogram(args.output, h, {k2: fileio.fmt(v) if isinstance(v, float) else v
                                                           for k2, v in fields.items()})
    _summary("g2", **fields)


def _fit_options(args, sec) -> dict:
    opts = {}
    for name in ("max_iter", "gradient_tol", "step_tol", "initial_damping"):
        v = _pick(args, name, sec)
        if v is not None:
            opts[name] = v
    return opts


def _write_fit(path, res, settings, inputs, cfg, command, extra=None):
    doc = {"parameters": {n: {"value": float(v), "error": float(e)}
                          for n, v, e in zip(res.names, res.parameters, res.errors)},
           "covariance": res.covariance.tolist(), "names": list(res.names),
           "reduced_chi2": res.reduced_chi2, "chi2": res.chi2, "n_iterations": res.n_iterations,
           "converged": res.converged, "gradient_norm": res.gradient_norm,
           "condition_number": res.condition_number, "singular": res.singular,
           "message": res.message, "settings": settings,
           "provenance": [provenance_record(command, settings, inputs=inputs, config=cfg)]}
    doc.update(extra or {})
    Path(path).write_text(fileio.dumps(report._round_floats(doc), indent=2) + "\n")


def cmd_fit_lifetime(args, cfg):
    sec = cfg.section("fit") if cfg else {}
    h = fileio.read_decay_histogram(args.input)
    irf = _pick(args, "irf_sigma", sec, "irf_sigma_ns")
    fixed = tuple(_pick(args, "fix", sec, "fixed", ()) or ())
    t_range = _pick(args, "t_range", sec, "t_range_ns")
    qy_total = _pick(args, "qy_total", sec)
    if qy_total is None:
        qy_total = float(h.counts.sum()) / h.total_pulses / args.efficiency / args.n_emitters
        if not 0 < qy_total <= 1:
            raise CliError(f"photons per pulse per emitter {qy_total:.4g} is outside (0, 1]; "
                           "pass --qy-total or correct --efficiency/--n-emitters")
    res = fitting.fit_lifetime(h, irf_sigma=irf, fixed=fixed, qy_total=qy_total,
                               t_range=None if t_range is None else tuple(t_range), **_fit_options(args, sec))
    settings = {"irf_sigma_ns": irf, "fixed": list(fixed), "qy_total": qy_total,
                "t_range_ns": t_range, **_fit_options(args, sec)}
    tx, txe = res.extras["tau_x"]
    txx, txxe = res.extras["tau_xx"]
    if args.output:
        _write_fit(args.output, res, settings, [args.input], cfg, "fit-lifetime",
                   {"tau_x_ns": {"value": tx, "error": txe}, "tau_xx_ns": {"value": txx, "error": txxe}})
    _summary("fit-lifetime", converged=res.converged, tau_x_ns=tx, tau_x_err=txe, tau_xx_ns=txx,
             tau_xx_err=txxe, qy_x=res.value("qy_x"), qy_xx=res.value("qy_xx"),
             reduced_chi2=res.reduced_chi2, iterations=res.n_iterations)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_fit_saturation(args, cfg):
    sec = cfg.section("fit") if cfg else {}
    inputs = []
    sigma = None
    if args.input:
        points, sigma = fileio.read_saturation_points(args.input)
        inputs.append(args.input)
    else:
        streams = []
        for item in args.stream or []:
            power, sep, path = item.partition("=")
            if not sep:
                raise CliError(f"--stream expects POWER=FILE, got {item!r}", EXIT_USAGE)
            streams.append((float(power), fileio.read_timestamps(path)))
            inputs.append(path)
        if not streams:
            raise CliError("fit-saturation needs a points CSV or --stream POWER=FILE", EXIT_USAGE)
        points = counting.saturation_points(streams, args.efficiency, args.n_emitters)
    res = fitting.fit_saturation(points, sigma=sigma, **_fit_options(args, sec))
    if args.output:
        _write_fit(args.output, res, {"efficiency": args.efficiency, "n_emitters": args.n_emitters},
                   inputs, cfg, "fit-saturation",
                   {"points": [[float(a), float(b)] for a, b in points]})
    _summary("fit-saturation", converged=res.converged, ppp_max=res.value("ppp_max"),
             ppp_max_err=res.error("ppp_max"), p_sat_uw=res.value("p_sat"), p_sat_err=res.error("p_sat"),
             points=len(points))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_angular(args, cfg):
    sec = cfg.section("angular") if cfg else {}
    img = fileio.read_bfp(args.input)
    nb = int(_pick(args, "n_theta_bins", sec, default=90))
    apod = sec.get("apodization", True) if args.apodization is None else args.apodization
    prof = angular.bfp_to_angular(img, nb, apod)
    nas = _pick(args, "na", sec, default=[])
    fields = {"bins": nb, "apodization": "cos_theta" if apod else "none", "na_max": img.na_max}
    for na in nas:
        fields[f"eta_{fileio.fmt(na)}"] = angular.collection_efficiency(prof, na)
    if args.output:
        rec = provenance_record("angular", {"n_theta_bins": nb, "apodization": apod}, inputs=[args.input],
                                config=cfg)
        fileio.write_angular_profile(args.output, prof, [rec])
    _summary("angular", **fields)


def extrapolation_rows(p: model.RateParams, lo_hz: float, hi_hz: float, per_decade: int):
    if not 0 < lo_hz < hi_hz:
        raise CliError("need 0 < rep-rate-min < rep-rate-max", EXIT_USAGE)
    n = max(2, int(round(math.log10(hi_hz / lo_hz) * per_decade)) + 1)
    grid = np.logspace(math.log10(lo_hz), math.log10(hi_hz), n)
    rr = model.hz_to_per_ns(grid)
    rows = np.column_stack([grid, model.photons_per_pulse(p, rr, "X"), model.photons_per_pulse(p, rr, "XX"),
                            model.photon_rate(p, rr, "X"), model.photon_rate(p, rr, "XX")])
    cw = [math.inf, 0.0, 0.0, model.cw_photon_rate(p, "X"), model.cw_photon_rate(p, "XX")]
    return [tuple(r) for r in rows] + [tuple(cw)]


def cmd_extrapolate(args, cfg):
    sec = cfg.section("extrapolate") if cfg else {}
    p = _params(args, cfg)
    lo = _pick(args, "rep_rate_min_hz", sec, default=1e5)
    hi = _pick(args, "rep_rate_max_hz", sec, default=1e10)
    per = int(_pick(args, "points_per_decade", sec, default=10))
    rows = extrapolation_rows(p, lo, hi, per)
    settings = {"rate_params": [p.gamma_x, p.gamma_xx, p.qy_x, p.qy_xx], "min": lo, "max": hi, "per_decade": per}
    header = {"format": "cascade-spe-rate-extrapolation/1",
              "note": "last row is the CW limit (rep_rate_hz=inf)",
              "provenance": fileio.dumps([provenance_record("extrapolate", settings, config=cfg)])}
    fileio.write_csv(args.output, header,
                     ("rep_rate_hz", "ppp_x", "ppp_xx", "photon_rate_x_per_s", "photon_rate_xx_per_s"), rows)
    _summary("extrapolate", rows=len(rows), cw_limit_per_s=rows[-1][3],
             rate_at_gamma_x_per_s=float(model.photon_rate(p, p.gamma_x, "X")), output=args.output)


def cmd_report(args, cfg):
    sec = cfg.section("report") if cfg else {}
    fit_sec = cfg.section("fit") if cfg else {}
    eff = _pick(args, "efficiency", sec, "system_efficiency", 1.0)
    n_em = int(_pick(args, "n_emitters", sec, default=1))
    dev = fileio.read_timestamps(args.device)
    ref = fileio.read_timestamps(args.reference)
    metas = {"device": dev.metadata, "reference": ref.metadata}
    g2_stream = None
    if args.g2_stream:
        g2_stream = fileio.read_timestamps(args.g2_stream)
        metas["g2"] = g2_stream.metadata
    problems = report.check_provenance(metas, force=args.force)

    irf = _pick(args, "irf_sigma", fit_sec, "irf_sigma_ns")
    opts = _fit_options(args, fit_sec)
    f_dev = report.fit_stream(dev, args.bin_width, irf, eff, n_em, **opts)
    f_ref = report.fit_stream(ref, args.reference_bin_width or args.bin_width, irf, eff, 1, **opts)
    g2 = None
    src = g2_stream if g2_stream is not None else dev
    if {"A", "B"} <= set(fileio.stream_channels(src)):
        try:
            g2 = report.g2_from_stream(src, gate_start=args.g2_gate)
        except ValueError as exc:
            log.warning("g2 skipped: %s", exc)

    eta = None
    ed, er = _pick(args, "eta_device", sec), _pick(args, "eta_reference", sec)
    if ed is not None and er is not None:
        eta = (ed, er)
    profiles = None
    inputs = [args.device, args.reference] + ([args.g2_stream] if args.g2_stream else [])
    if args.device_bfp and args.reference_bfp:
        profiles = (angular.bfp_to_angular(fileio.read_bfp(args.device_bfp)),
                    angular.bfp_to_angular(fileio.read_bfp(args.reference_bfp)))
        inputs += [args.device_bfp, args.reference_bfp]
    na_grid = _pick(args, "na", sec, "na_grid", [0.22, 0.5, 0.7, 0.9])
    if profiles is not None:
        top = min(p.na_max for p in profiles)
        na_grid = [na for na in na_grid if na <= top]

    settings = {"bin_width_ns": args.bin_width, "irf_sigma_ns": irf, "efficiency": eff, "n_emitters": n_em,
                "g2_gate_ns": args.g2_gate, **opts}
    prov = [{"input": name, "chain": m.get("provenance", [])} for name, m in metas.items()]
    prov.append(provenance_record("report", settings, inputs=inputs, config=cfg))
    rep = report.build_report(f_dev, f_ref, np.logspace(5, 10, 11), g2=g2, eta=eta, profiles=profiles,
                              na_grid=na_grid, provenance=prov)
    if problems:
        rep.warnings.extend(f"forced despite mixed provenance: {p}" for p in problems)
    Path(args.output).write_text(rep.to_json())
    if args.text:
        Path(args.text).write_text(rep.render_text())
    pf = rep.enhancement["purcell"]
    fields = {"F_X": pf["X"]["value"], "F_X_err": pf["X"]["error"], "F_XX": pf["XX"]["value"],
              "F_XX_err": pf["XX"]["error"],
              "cw_limit_per_s": rep.photon_rate["cw_limit_per_s"]["value"]}
    if rep.g2:
        fields["g2_zero"] = rep.g2["g2_zero"]["value"]
    fields["converged"] = f_dev.converged and f_ref.converged
    _summary("report", **fields, output=args.output)
    return EXIT_OK if fields["converged"] else EXIT_NOT_CONVERGED


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cascade-spe", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="YAML/JSON run configuration (validated against the shipped schema)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo photon stream")
    _add_params(p)
    p.add_argument("--seed", type=int, help="64-bit seed (required unless set in the config)")
    p.add_argument("--rep-rate-hz", type=float, help="laser repetition rate [Hz] (default 4e6)")
    p.add_argument("--n-pulses", type=int)
    p.add_argument("--n-emitters", type=int)
    p.add_argument("--efficiency", type=float, help="detection efficiency")
    p.add_argument("--background-rate", type=float, help="background clicks per period per channel")
    p.add_argument("--irf-sigma", type=float, help="Gaussian timing jitter [ns]")
    p.add_argument("--hbt-split", type=float, help="fraction routed to detector A")
    p.add_argument("--workers", type=int)
    p.add_argument("-o", "--output", required=True, help="timestamp file (.gz to compress)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("histogram", help="decay histogram CSV from a timestamp file")
    p.add_argument("input")
    p.add_argument("--bin-width", type=float, help="[ns], must divide the period")
    p.add_argument("--channels", choices=sorted(counting.CHANNEL_SELECTIONS))
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("gate", help="drop events earlier than a delay")
    p.add_argument("input")
    p.add_argument("--gate-start", type=float, help="[ns]")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gate)

    p = sub.add_parser("g2", help="coincidence histogram and g2(0)")
    p.add_argument("input")
    p.add_argument("--bin-width", type=float, help="[ns], default period/512")
    p.add_argument("--k-side-peaks", type=int)
    p.add_argument("-o", "--output", help="correlation histogram CSV")
    p.set_defaults(func=cmd_g2)

    def fit_opts(p):
        p.add_argument("--max-iter", type=int)
        p.add_argument("--gradient-tol", type=float)
        p.add_argument("--step-tol", type=float)
        p.add_argument("--initial-damping", type=float)

    p = sub.add_parser("fit-lifetime", help="fit the cascade model to a decay histogram")
    p.add_argument("input", help="decay histogram CSV")
    p.add_argument("--irf-sigma", type=float, help="Gaussian IRF width [ns]")
    p.add_argument("--qy-total", type=float, help="conserved QY_X + QY_XX (default: counts/pulse)")
    p.add_argument("--efficiency", type=float, default=1.0, help="system efficiency for the default qy-total")
    p.add_argument("--n-emitters", type=int, default=1)
    p.add_argument("--fix", nargs="+", choices=fitting.FIXABLE)
    p.add_argument("--t-range", type=float, nargs=2, metavar=("START", "STOP"))
    fit_opts(p)
    p.add_argument("-o", "--output", help="fit result JSON")
    p.set_defaults(func=cmd_fit_lifetime)

    p = sub.add_parser("fit-saturation", help="fit ppp_max (1 - exp(-P/p_sat))")
    p.add_argument("input", nargs="?", help="CSV with power_uw,ppp[,sigma] columns")
    p.add_argument("--stream", action="append", metavar="POWER=FILE",
                   help="timestamp file recorded at POWER [uW]; repeatable")
    p.add_argument("--efficiency", type=float, default=1.0)
    p.add_argument("--n-emitters", type=int, default=1)
    fit_opts(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_fit_saturation)

    p = sub.add_parser("angular", help="BFP image to angular profile and collection efficiency")
    p.add_argument("input", help="BFP text matrix or .npz")
    p.add_argument("--n-theta-bins", type=int)
    p.add_argument("--no-apodization", dest="apodization", action="store_false", default=None)
    p.add_argument("--na", type=float, nargs="+", help="apertures at which to report efficiency")
    p.add_argument("-o", "--output", help="profile CSV")
    p.set_defaults(func=cmd_angular)

    p = sub.add_parser("extrapolate", help="photons per pulse and photon rate versus repetition rate")
    _add_params(p)
    p.add_argument("--rep-rate-min-hz", type=float)
    p.add_argument("--rep-rate-max-hz", type=float)
    p.add_argument("--points-per-decade", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_extrapolate)

    p = sub.add_parser("report", help="device versus reference characterization")
    p.add_argument("--device", required=True, help="device timestamp file")
    p.add_argument("--reference", required=True, help="reference (glass) timestamp file")
    p.add_argument("--g2-stream", help="timestamp file for g2(0) (default: the device stream)")
    p.add_argument("--g2-gate", type=float, default=0.0, help="time gate before g2 [ns]")
    p.add_argument("--bin-width", type=float, default=0.05, help="device histogram bin [ns]")
    p.add_argument("--reference-bin-width", type=float, default=0.25, help="reference histogram bin [ns]")
    p.add_argument("--irf-sigma", type=float)
    p.add_argument("--efficiency", type=float, help="system efficiency")
    p.add_argument("--n-emitters", type=int)
    p.add_argument("--eta-device", type=float)
    p.add_argument("--eta-reference", type=float)
    p.add_argument("--device-bfp")
    p.add_argument("--reference-bfp")
    p.add_argument("--na", type=float, nargs="+", help="NA grid for brightness enhancement")
    fit_opts(p)
    p.add_argument("--force", action="store_true", help="accept mixed-provenance inputs")
    p.add_argument("-o", "--output", required=True, help="report JSON")
    p.add_argument("--text", help="also write a text rendering here")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else None
        code = args.func(args, cfg)
        return EXIT_OK if code is None else code
    except CliError as exc:
        print(f"error[{'usage' if exc.code == EXIT_USAGE else 'analysis'}]: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, fileio.FileFormatError) as exc:
        print(f"error[input]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error[input]: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_INPUT
    except report.MixedProvenanceError as exc:
        print(f"error[provenance]: {exc}", file=sys.stderr)
        return EXIT_PROVENANCE
    except ValueError as exc:
        print(f"error[analysis]: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except Exception as exc:  # noqa: BLE001 - last-resort categorisation
        log.debug("internal error", exc_info=True)
        print(f"error[internal]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
