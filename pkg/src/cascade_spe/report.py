"""Device-versus-reference characterization report.

Fits the lifetime histograms of a device stream and a reference (glass)
stream, then derives Purcell and radiative/non-radiative enhancement factors,
photon-rate projections over a repetition-rate grid, brightness enhancement
and, when available, g2(0) with the implied emitter count. Uncertainties of
derived numbers come from the fit covariances by the delta method, treating
the two fits as independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .angular import AngularProfile, collection_efficiency
from .counting import (G2Result, coincidence_histogram, decay_histogram, estimate_emitter_count,
                       g2_zero, time_gate)
from .fileio import dumps, fmt
from .fitting import LifetimeInit, fit_lifetime, fitted_rate_params, guess_lifetime_init
from .lm import FitResult, transform_covariance
from .model import (EnvironmentPair, RateParams, UndefinedEnhancementError, cw_photon_rate,
                    enhancement_factors, hz_to_per_ns, photon_rate, photons_per_pulse,
                    purcell_factors)
from .simulator import PhotonStream

RATE_NAMES = ("gamma_x", "gamma_xx", "qy_x", "qy_xx")


class MixedProvenanceError(ValueError):
    pass


def provenance_signature(metadata: dict) -> tuple:
    """What must agree between inputs combined into one report."""
    prov = metadata.get("provenance") or []
    tool = prov[0].get("tool_version") if prov else None
    return metadata.get("source", "unknown"), tool


def check_provenance(named_metadata: dict[str, dict], force: bool = False) -> list[str]:
    """Raise unless all inputs share source kind and tool version.

    Returns the list of disagreements (empty when consistent); with ``force``
    they are returned instead of raised so they can be recorded.
    """
    sigs = {name: provenance_signature(m) for name, m in named_metadata.items()}
    problems = []
    for label, idx in (("source", 0), ("tool version", 1)):
        values = {name: s[idx] for name, s in sigs.items()}
        if len(set(values.values())) > 1:
            problems.append(f"{label} differs: " + ", ".join(f"{k}={v}" for k, v in sorted(values.items())))
    if problems and not force:
        raise MixedProvenanceError("inputs have mixed provenance (" + "; ".join(problems)
                                   + "); pass --force to combine them anyway")
    return problems


def stream_qy_total(s: PhotonStream, system_efficiency: float = 1.0, n_emitters: int = 1) -> float:
    """Detected photons per pulse per emitter, corrected for system efficiency."""
    qy = len(s) / s.n_pulses / system_efficiency / n_emitters
    if not 0 < qy <= 1:
        raise ValueError(f"photons per pulse per emitter {qy:.4g} is outside (0, 1]; "
                         "check system_efficiency and n_emitters")
    return qy


def fit_stream(s: PhotonStream, bin_width: float, irf_sigma: float | None = None,
               system_efficiency: float = 1.0, n_emitters: int = 1,
               fixed: tuple[str, ...] = (), init: LifetimeInit | None = None, **options) -> FitResult:
    h = decay_histogram(s, bin_width)
    qy_total = stream_qy_total(s, system_efficiency, n_emitters)
    if init is None:
        init = guess_lifetime_init(h, qy_total)
    return fit_lifetime(h, init, irf_sigma=irf_sigma, fixed=fixed, qy_total=qy_total, **options)


def _value_error(v, e) -> dict:
    return {"value": float(v), "error": float(e)}


def _rate_block(res: FitResult) -> dict:
    out = {name: _value_error(res.value(name), res.error(name)) for name in RATE_NAMES}
    tx, txe = res.extras["tau_x"]
    txx, txxe = res.extras["tau_xx"]
    out["tau_x_ns"] = _value_error(tx, txe)
    out["tau_xx_ns"] = _value_error(txx, txxe)
    out["amplitude"] = _value_error(res.value("amplitude"), res.error("amplitude"))
    out["background_per_ns"] = _value_error(res.value("background"), res.error("background"))
    out["fit"] = {"converged": bool(res.converged), "n_iterations": int(res.n_iterations),
                  "reduced_chi2": float(res.reduced_chi2), "message": res.message,
                  "qy_total": float(res.extras.get("qy_total", math.nan))}
    return out


def _rate_cov(res: FitResult) -> np.ndarray:
    idx = [res.names.index(n) for n in RATE_NAMES]
    return res.covariance[np.ix_(idx, idx)]


def _jacobian(f, x0, f0, rel_step=1e-7):
    """Central differences, one-sided where a step leaves the valid domain
    (a yield fitted at 0 or 1); NaN where neither side is valid."""
    cols = []
    for i in range(x0.size):
        h = rel_step * max(abs(x0[i]), 1.0)
        side = {}
        for sign in (1, -1):
            x = x0.copy()
            x[i] += sign * h
            try:
                side[sign] = f(None, x)
            except ValueError:  # includes UndefinedEnhancementError
                pass
        if len(side) == 2:
            cols.append((side[1] - side[-1]) / (2 * h))
        elif side:
            (sign, val), = side.items()
            cols.append(sign * (val - f0) / h)
        else:
            cols.append(np.full_like(f0, np.nan))
    return np.stack(cols, axis=-1)


def _delta(fn, dev: FitResult, ref: FitResult):
    """Value and standard error of ``fn(device RateParams, reference RateParams)``."""
    x0 = np.concatenate([[dev.value(n) for n in RATE_NAMES], [ref.value(n) for n in RATE_NAMES]])
    cov = np.zeros((8, 8))
    cov[:4, :4] = _rate_cov(dev)
    cov[4:, 4:] = _rate_cov(ref)

    def f(_, x):
        return np.atleast_1d(fn(RateParams(*x[:4]), RateParams(*x[4:])))

    value = f(None, x0)
    J = _jacobian(f, x0, value)
    err = np.sqrt(np.clip(np.diag(transform_covariance(cov, J)), 0, None))
    return value, err


@dataclass
class CharacterizationReport:
    device: dict
    reference: dict
    enhancement: dict
    photon_rate: dict
    brightness: dict | None = None
    g2: dict | None = None
    provenance: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"device": self.device, "reference": self.reference,
                "enhancement": self.enhancement, "photon_rate": self.photon_rate,
                "brightness": self.brightness, "g2": self.g2,
                "provenance": self.provenance, "warnings": self.warnings}

    def to_json(self) -> str:
        return dumps(_round_floats(self.to_dict()), indent=2) + "\n"

    def render_text(self) -> str:
        return render_text(self.to_dict())


def _round_floats(obj):
    """Round every float to 9 significant digits for stable JSON output."""
    if isinstance(obj, float):
        return float(fmt(obj)) if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def build_report(device_fit: FitResult, reference_fit: FitResult, rep_rates_hz,
                 g2: G2Result | None = None, eta: tuple[float, float] | None = None,
                 profiles: tuple[AngularProfile, AngularProfile] | None = None, na_grid=(),
                 provenance=()) -> CharacterizationReport:
    dev = fitted_rate_params(device_fit)
    ref = fitted_rate_params(reference_fit)
    env = EnvironmentPair(dev, ref)
    warnings = [f"{label} fit did not converge: {res.message}"
                for label, res in (("device", device_fit), ("reference", reference_fit))
                if not res.converged]

    enh = {}
    F, Fe = _delta(lambda d, r: [d.gamma_x / r.gamma_x, d.gamma_xx / r.gamma_xx], device_fit, reference_fit)
    pf = purcell_factors(env)
    enh["purcell"] = {"X": _value_error(pf["X"], Fe[0]), "XX": _value_error(pf["XX"], Fe[1])}
    for state in ("X", "XX"):
        try:
            rep = enhancement_factors(env)[state]
        except UndefinedEnhancementError as exc:
            enh[state] = {"error": str(exc)}
            warnings.append(str(exc))
            continue

        def factors(d, r, state=state):
            e = enhancement_factors(EnvironmentPair(d, r))[state]
            return [e.radiative, e.nonradiative]

        _, err = _delta(factors, device_fit, reference_fit)
        enh[state] = {"radiative_enhancement": _value_error(rep.radiative, err[0]),
                      "nonradiative_enhancement": _value_error(rep.nonradiative, err[1]),
                      "radiative_rate": float(rep.gamma_r),
                      "nonradiative_rate": float(rep.gamma_nr),
                      "reference_radiative_rate": float(rep.gamma_r_ref),
                      "reference_nonradiative_rate": float(rep.gamma_nr_ref)}

    rows = []
    for hz in np.asarray(rep_rates_hz, dtype=float):
        rate = hz_to_per_ns(hz)
        rows.append({"rep_rate_hz": float(hz),
                     "ppp_x": float(photons_per_pulse(dev, rate, "X")),
                     "ppp_xx": float(photons_per_pulse(dev, rate, "XX")),
                     "photon_rate_x_per_s": float(photon_rate(dev, rate, "X")),
                     "reference_photon_rate_x_per_s": float(photon_rate(ref, rate, "X"))})
    cw, cwe = _delta(lambda d, r: [cw_photon_rate(d)], device_fit, reference_fit)
    pr = {"grid": rows, "cw_limit_per_s": _value_error(cw[0], cwe[0]),
          "reference_cw_limit_per_s": float(cw_photon_rate(ref))}

    bright = None
    if eta is not None or profiles is not None:
        base, base_err = _delta(lambda d, r: [d.qy_x * d.gamma_x / (r.qy_x * r.gamma_x)],
                                device_fit, reference_fit)
        bright = {"rate_ratio": _value_error(base[0], base_err[0])}
        if eta is not None:
            ratio = eta[0] / eta[1]
            bright["eta_device"], bright["eta_reference"] = float(eta[0]), float(eta[1])
            bright["brightness_enhancement"] = _value_error(base[0] * ratio, base_err[0] * ratio)
        if profiles is not None:
            grid = []
            for na in na_grid:
                ed = collection_efficiency(profiles[0], na)
                er = collection_efficiency(profiles[1], na)
                be = base[0] * ed / er if er > 0 else math.nan
                grid.append({"na": float(na), "eta_device": ed, "eta_reference": er,
                             "brightness_enhancement": be,
                             "error": base_err[0] * ed / er if er > 0 else math.nan})
            bright["na_grid"] = grid
            bright["apodization"] = [bool(p.apodization) for p in profiles]

    g2_block = None
    if g2 is not None:
        g2_block = {"g2_zero": _value_error(g2.g2_zero, g2.uncertainty),
                    "central_area": g2.central_area, "mean_side_area": g2.mean_side_area}
        try:
            n = estimate_emitter_count(g2)
            g2_block.update(n_estimate=n.n_estimate, n_rounded=n.n_rounded)
        except ValueError as exc:
            g2_block["n_estimate_error"] = str(exc)

    return CharacterizationReport(_rate_block(device_fit), _rate_block(reference_fit), enh, pr,
                                  bright, g2_block, list(provenance), warnings)


def g2_from_stream(s: PhotonStream, bin_width=None, k_side_peaks: int = 5, gate_start: float = 0.0):
    if gate_start > 0:
        s = time_gate(s, gate_start)
    return g2_zero(coincidence_histogram(s, bin_width, k_side_peaks))


def _ve(block) -> str:
    return f"{fmt(block['value'])} +- {fmt(block['error'])}"


def render_text(d: dict) -> str:
    out = ["Characterization report", "=" * 23, ""]
    for label in ("device", "reference"):
        b = d[label]
        out.append(f"[{label}]")
        for key in ("tau_x_ns", "tau_xx_ns", "qy_x", "qy_xx"):
            out.append(f"  {key:<12} {_ve(b[key])}")
        f = b["fit"]
        out.append(f"  fit: converged={f['converged']} iterations={f['n_iterations']} "
                   f"reduced_chi2={fmt(f['reduced_chi2'])}")
        out.append("")
    e = d["enhancement"]
    out.append("[purcell]")
    out += [f"  F_{s:<3} {_ve(e['purcell'][s])}" for s in ("X", "XX")]
    out.append("")
    out.append("[enhancement]")
    for s in ("X", "XX"):
        if "error" in e[s]:
            out.append(f"  {s}: undefined ({e[s]['error']})")
        else:
            out.append(f"  F^r_{s:<3} {_ve(e[s]['radiative_enhancement'])}")
            out.append(f"  F^nr_{s:<2} {_ve(e[s]['nonradiative_enhancement'])}")
    out.append("")
    pr = d["photon_rate"]
    out.append("[photon rate]")
    out.append(f"  {'rep_rate_hz':>14} {'ppp_x':>14} {'rate_x_per_s':>14}")
    for row in pr["grid"]:
        out.append(f"  {fmt(row['rep_rate_hz']):>14} {fmt(row['ppp_x']):>14} "
                   f"{fmt(row['photon_rate_x_per_s']):>14}")
    out.append(f"  CW limit: {_ve(pr['cw_limit_per_s'])} photons/s")
    out.append("")
    if d.get("brightness"):
        b = d["brightness"]
        out.append("[brightness]")
        out.append(f"  rate ratio QY_X*G_X/(QY_0X*G_0X): {_ve(b['rate_ratio'])}")
        if "brightness_enhancement" in b:
            out.append(f"  BE(eta={fmt(b['eta_device'])}/{fmt(b['eta_reference'])}): "
                       f"{_ve(b['brightness_enhancement'])}")
        for row in b.get("na_grid", []):
            out.append(f"  NA={fmt(row['na'])}: eta={fmt(row['eta_device'])}/{fmt(row['eta_reference'])} "
                       f"BE={fmt(row['brightness_enhancement'])}")
        out.append("")
    if d.get("g2"):
        g = d["g2"]
        out.append("[g2]")
        out.append(f"  g2(0) {_ve(g['g2_zero'])}")
        if "n_estimate" in g:
            out.append(f"  emitters {fmt(g['n_estimate'])} (rounded {g['n_rounded']})")
        out.append("")
    for w in d.get("warnings", []):
        out.append(f"warning: {w}")
    return "\n".join(out).rstrip() + "\n"
