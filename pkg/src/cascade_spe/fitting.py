"""Lifetime-histogram and power-saturation fits on top of :mod:`cascade_spe.lm`.

The lifetime fit compares bin-integrated model counts with the histogram. Rates
and the amplitude are fitted as logarithms and the exciton share of the total
quantum yield as a logit; the background stays linear with a lower bound of 0.
Covariances are mapped back to natural parameters with the delta method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .counting import DecayHistogram
from .lm import FitProblem, FitResult, lm_minimize, transform_covariance
from .model import RateParams, cascade_divdiff, exp_kernel, step_cdf

LIFETIME_NAMES = ("gamma_x", "gamma_xx", "qy_x", "qy_xx", "amplitude", "background")
SATURATION_NAMES = ("ppp_max", "p_sat")
FIXABLE = ("gamma_x", "gamma_xx", "qy_x", "amplitude", "background")
_SHARE_CLIP = 1e-6
# Marquardt's classic starting damping for the nonlinear model fits
NONLINEAR_DAMPING = 1e-3


@dataclass(frozen=True)
class LifetimeInit:
    """Starting point of a lifetime fit; ``amplitude`` in counts, ``background`` in counts/ns."""

    params: RateParams
    amplitude: float
    background: float = 0.0


@dataclass(frozen=True)
class SaturationModel:
    """``ppp(P) = ppp_max * (1 - exp(-P / p_sat))``."""

    ppp_max: float
    p_sat: float

    def __post_init__(self):
        if not (self.ppp_max > 0 and self.p_sat > 0):
            raise ValueError("ppp_max and p_sat must be positive")

    def __call__(self, power):
        return saturation_curve(power, self.ppp_max, self.p_sat)


def saturation_curve(power, ppp_max, p_sat):
    return -ppp_max * np.expm1(-np.asarray(power, dtype=float) / p_sat)


# -- bin-integrated cascade model ------------------------------------------

def bin_counts(edges, natural, irf_sigma: float = 0.0, period: float | None = None,
               jacobian: bool = False):
    """Expected counts per bin for natural parameters ``LIFETIME_NAMES``.

    With an IRF and a ``period``, photons jittered to negative delays are
    wrapped onto the end of the previous period, as the detector would.
    Returns counts, or ``(counts, d counts / d natural)`` of shape ``(n, 6)``.
    """
    gx, gxx, qx, qxx, amp, bg = (float(v) for v in natural)
    edges = np.asarray(edges, dtype=float)
    width = np.diff(edges)
    shifts = [0.0]
    if irf_sigma > 0 and period is not None:
        shifts.append(-period)

    tot = {k: 0.0 for k in ("F", "D", "dF", "dDx", "dDxx")}
    for shift in shifts:
        t = edges + shift
        step = step_cdf(t, irf_sigma)
        e_xx, d_xx = exp_kernel(t, gxx, irf_sigma, order=1)
        e_x, d_x = exp_kernel(t, gx, irf_sigma, order=1)
        if jacobian:
            q, dq_x, dq_xx = cascade_divdiff(t, gx, gxx, irf_sigma, derivatives=True)
        else:
            q = cascade_divdiff(t, gx, gxx, irf_sigma)
        parts = {"F": step - e_xx, "D": step - e_x - gx * q}
        if jacobian:
            parts.update(dF=-d_xx, dDx=-d_x - q - gx * dq_x, dDxx=-gx * dq_xx)
        for k, v in parts.items():
            tot[k] = tot[k] + np.diff(v)

    counts = amp * (qxx * tot["F"] + qx * tot["D"]) + bg * width
    if not jacobian:
        return counts
    J = np.column_stack([
        amp * qx * tot["dDx"],
        amp * (qxx * tot["dF"] + qx * tot["dDxx"]),
        amp * tot["D"],
        amp * tot["F"],
        qxx * tot["F"] + qx * tot["D"],
        width,
    ])
    return counts, J


class _LifetimeParametrization:
    """Map between fit space and the natural parameters.

    Fit space is ``[log gamma_x, log gamma_xx, logit share, log amplitude,
    background]`` with ``qy_x = share * qy_total``.
    """

    def __init__(self, qy_total: float):
        if not 0 < qy_total <= 1:
            raise ValueError("qy_total must lie in (0, 1]")
        self.qy_total = qy_total

    def to_fit(self, init: LifetimeInit) -> np.ndarray:
        p = init.params
        share = np.clip(p.qy_x / self.qy_total, _SHARE_CLIP, 1 - _SHARE_CLIP)
        if init.amplitude <= 0:
            raise ValueError("initial amplitude must be positive")
        return np.array([math.log(p.gamma_x), math.log(p.gamma_xx), logit(share),
                         math.log(init.amplitude), max(init.background, 0.0)])

    def natural(self, u) -> np.ndarray:
        share = expit(u[2])
        # an overflowing trial step yields inf here and is rejected by the fitter
        with np.errstate(over="ignore"):
            g_x, g_xx, amp = np.exp([u[0], u[1], u[3]])
        return np.array([g_x, g_xx, self.qy_total * share, self.qy_total * (1 - share), amp, u[4]])

    def derivative(self, u) -> np.ndarray:
        """``d natural / d u``, shape (6, 5)."""
        nat = self.natural(u)
        share = expit(u[2])
        ds = self.qy_total * share * (1 - share)
        T = np.zeros((6, 5))
        T[0, 0], T[1, 1], T[4, 3], T[5, 4] = nat[0], nat[1], nat[4], 1.0
        T[2, 2], T[3, 2] = ds, -ds
        return T


def lifetime_problem(h: DecayHistogram, init: LifetimeInit, irf_sigma: float | None = None,
                     fixed: tuple[str, ...] = (), qy_total: float | None = None,
                     t_range: tuple[float, float] | None = None) -> tuple[FitProblem, _LifetimeParametrization]:
    """Build the fit-space problem for :func:`fit_lifetime` (exposed for diagnostics)."""
    counts = np.asarray(h.counts, dtype=float)
    if counts.sum() <= 0:
        raise ValueError("histogram has no counts")
    sigma = float(irf_sigma or 0.0)
    period = None if h.rep_rate is None else 1.0 / h.rep_rate
    edges = h.bin_edges
    sel = np.ones(len(counts), bool)
    if t_range is not None:
        sel = (edges[:-1] >= t_range[0]) & (edges[1:] <= t_range[1])
        if not sel.any():
            raise ValueError("t_range selects no bins")
    lo_i, hi_i = np.flatnonzero(sel)[[0, -1]]
    edges = edges[lo_i:hi_i + 2]
    counts = counts[lo_i:hi_i + 1]

    unknown = set(fixed) - set(FIXABLE)
    if unknown:
        raise ValueError(f"cannot fix {sorted(unknown)}; choose from {FIXABLE}")
    par = _LifetimeParametrization(init.params.qy_total if qy_total is None else qy_total)
    u0 = par.to_fit(init)

    def model(_, u):
        return bin_counts(edges, par.natural(u), sigma, period)

    def jac(_, u):
        _, J = bin_counts(edges, par.natural(u), sigma, period, jacobian=True)
        return J @ par.derivative(u)

    problem = FitProblem(
        x=0.5 * (edges[1:] + edges[:-1]), y=counts, model=model, initial=u0,
        weights=1.0 / np.maximum(counts, 1.0), jacobian=jac,
        lower=np.array([-np.inf] * 4 + [0.0]),
        fixed=np.array([name in fixed for name in FIXABLE]),
        names=("log_gamma_x", "log_gamma_xx", "logit_share", "log_amplitude", "background"))
    return problem, par


def fit_lifetime(h: DecayHistogram, init: LifetimeInit | None = None,
                 irf_sigma: float | None = None, fixed: tuple[str, ...] = (),
                 qy_total: float | None = None, t_range: tuple[float, float] | None = None,
                 **options) -> FitResult:
    """Fit the cascade intensity model to a decay histogram.

    The total quantum yield ``qy_x + qy_xx`` is held at ``qy_total`` (default:
    the initial total), since the histogram shape only fixes the amplitude
    times each yield. Counts are weighted by ``1 / max(count, 1)``; these are
    Poisson inverse variances, so by default the covariance is not rescaled
    by the reduced chi-square (which sparse tails drive far below 1). The
    first step is damped (``initial_damping``), because an undamped
    Gauss-Newton step from a rough start can jump onto a plateau where the
    exciton term vanishes.

    ``options`` go to :func:`~cascade_spe.lm.lm_minimize`. The returned
    parameters follow ``LIFETIME_NAMES``; ``result.extras`` carries the
    fit-space result and the lifetimes with their errors.
    """
    if init is None:
        init = guess_lifetime_init(h, qy_total if qy_total is not None else 0.35)
    problem, par = lifetime_problem(h, init, irf_sigma, fixed, qy_total, t_range)
    options.setdefault("absolute_weights", True)
    options.setdefault("initial_damping", NONLINEAR_DAMPING)
    raw = lm_minimize(problem, **options)
    T = par.derivative(raw.parameters)
    nat = par.natural(raw.parameters)
    cov = transform_covariance(raw.covariance, T)
    res = FitResult(nat, cov, raw.reduced_chi2, raw.n_iterations, raw.converged, raw.residuals,
                    LIFETIME_NAMES, chi2=raw.chi2, gradient_norm=raw.gradient_norm,
                    condition_number=raw.condition_number, singular=raw.singular,
                    message=raw.message, extras={"fit_space": raw, "qy_total": par.qy_total})
    err = res.errors
    res.extras["tau_x"] = (1 / nat[0], err[0] / nat[0] ** 2)
    res.extras["tau_xx"] = (1 / nat[1], err[1] / nat[1] ** 2)
    return res


def fitted_rate_params(res: FitResult) -> RateParams:
    v = dict(zip(res.names, res.parameters))
    return RateParams(v["gamma_x"], v["gamma_xx"], v["qy_x"], v["qy_xx"])


def guess_lifetime_init(h: DecayHistogram, qy_total: float) -> LifetimeInit:
    """Moment-based starting point: background from the mean of the late
    bins, exciton rate from the mean delay of the background-subtracted
    counts, biexciton rate six times faster."""
    c = np.asarray(h.counts, dtype=float)
    t = h.bin_centers
    w = h.bin_widths
    # late bins, stopping short of the end where IRF jitter wraps in early photons
    n = len(c)
    late = slice(min(3 * n // 5, n - 1), max(9 * n // 10, 3 * n // 5 + 1))
    bg = float(c[late].sum() / w[late].sum())
    signal = c - bg * w
    total = signal.sum()
    if total <= 0:
        total, signal, bg = c.sum(), c, 0.0
    mean_delay = float((signal * t).sum() / total)
    # refine inside a window of a few mean delays, where the tail noise cannot pull
    for _ in range(2):
        win = t <= t[0] + 8.0 * max(mean_delay, 1e-3)
        s_w = signal[win].sum()
        if s_w <= 0:
            break
        mean_delay = float((signal[win] * t[win]).sum() / s_w)
    gx = 1.0 / max(mean_delay, 1e-3)
    share = 0.7
    params = RateParams(gx, 6.0 * gx, share * qy_total, (1 - share) * qy_total)
    return LifetimeInit(params, amplitude=total / qy_total, background=bg)


# -- saturation -----------------------------------------------------------------

def saturation_problem(points, init: SaturationModel | None = None, sigma=None) -> FitProblem:
    """Build the log-space problem for :func:`fit_saturation` (exposed for diagnostics)."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("need at least 3 (power, ppp) points")
    power, ppp = pts[:, 0], pts[:, 1]
    if np.ptp(power) == 0:
        raise ValueError("all powers are equal; saturation parameters are not identifiable")
    if init is None:
        init = SaturationModel(max(float(ppp.max()), 1e-12), float(np.median(power[power > 0])) if np.any(power > 0) else 1.0)
    weights = None if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2

    def model(x, u):
        with np.errstate(over="ignore"):
            return saturation_curve(x, *np.exp(u))

    def jac(x, u):
        a, ps = math.exp(u[0]), math.exp(u[1])
        e = np.exp(-x / ps)
        return np.column_stack([a * (1 - e), -a * e * x / ps])

    return FitProblem(power, ppp, model, np.log([init.ppp_max, init.p_sat]),
                      weights=weights, jacobian=jac, names=("log_ppp_max", "log_p_sat"))


def fit_saturation(points, init: SaturationModel | None = None, sigma=None, **options) -> FitResult:
    """Fit ``ppp_max * (1 - exp(-P / p_sat))`` to ``[(power, photons per pulse)]``.

    ``sigma`` (per-point standard errors) sets weights ``1 / sigma**2``;
    without it all points weigh the same and the covariance is scaled by the
    reduced chi-square.
    """
    problem = saturation_problem(points, init, sigma)
    options.setdefault("initial_damping", NONLINEAR_DAMPING)
    raw = lm_minimize(problem, **options)
    nat = np.exp(raw.parameters)
    cov = transform_covariance(raw.covariance, np.diag(nat))
    return FitResult(nat, cov, raw.reduced_chi2, raw.n_iterations, raw.converged, raw.residuals,
                     SATURATION_NAMES, chi2=raw.chi2, gradient_norm=raw.gradient_norm,
                     condition_number=raw.condition_number, singular=raw.singular,
                     message=raw.message, extras={"fit_space": raw})
