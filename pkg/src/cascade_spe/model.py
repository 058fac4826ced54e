"""Closed-form photophysics of a pulsed biexciton -> exciton -> ground cascade.

Conventions: rates are in 1/ns, times in ns. Functions that return photon
rates per second convert at the boundary (``NS_PER_S``).

The populations are normalised so that a saturating pulse leaves the emitter
in the biexciton state, N_XX(0) = 1 and N_X(0) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcx

NS_PER_S = 1e9
DEGENERATE_RTOL = 1e-9
# below this relative rate gap the divided difference switches to a midpoint
# Taylor expansion: the quotient loses ~eps/gap digits and its rate partials
# ~eps/gap**2, while the truncated series is good to gap**5 or better
_TAYLOR_RTOL = 1e-2
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

STATES = ("X", "XX")


class UndefinedEnhancementError(ValueError):
    """A device/reference ratio has a zero reference rate in its denominator."""


@dataclass(frozen=True)
class RateParams:
    """Decay rates [1/ns] and quantum yields of one emitter in one environment."""

    gamma_x: float
    gamma_xx: float
    qy_x: float
    qy_xx: float

    def __post_init__(self):
        for name in ("gamma_x", "gamma_xx"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite rate, got {v!r}")
        for name in ("qy_x", "qy_xx"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if self.qy_x + self.qy_xx > 1.0 + 1e-12:
            raise ValueError(
                f"qy_x + qy_xx must not exceed 1, got {self.qy_x + self.qy_xx!r}")

    @classmethod
    def from_lifetimes(cls, tau_x, tau_xx, qy_x, qy_xx):
        """Build from lifetimes in ns."""
        return cls(1.0 / tau_x, 1.0 / tau_xx, qy_x, qy_xx)

    @property
    def tau_x(self) -> float:
        return 1.0 / self.gamma_x

    @property
    def tau_xx(self) -> float:
        return 1.0 / self.gamma_xx

    @property
    def qy_total(self) -> float:
        return self.qy_x + self.qy_xx

    def gamma(self, state: str) -> float:
        return {"X": self.gamma_x, "XX": self.gamma_xx}[_check_state(state)]

    def qy(self, state: str) -> float:
        return {"X": self.qy_x, "XX": self.qy_xx}[_check_state(state)]

    def scaled(self, s: float) -> "RateParams":
        """Same yields with both rates multiplied by ``s``."""
        return RateParams(self.gamma_x * s, self.gamma_xx * s, self.qy_x, self.qy_xx)


@dataclass(frozen=True)
class EnvironmentPair:
    """The same emitter type measured in the device and on the reference substrate."""

    device: RateParams
    reference: RateParams


@dataclass(frozen=True)
class StateEnhancement:
    purcell: float
    radiative: float
    nonradiative: float
    gamma_r: float
    gamma_r_ref: float
    gamma_nr: float
    gamma_nr_ref: float


@dataclass(frozen=True)
class EnhancementReport:
    x: StateEnhancement
    xx: StateEnhancement

    def __getitem__(self, state: str) -> StateEnhancement:
        return {"X": self.x, "XX": self.xx}[_check_state(state)]


def _check_state(state: str) -> str:
    if state not in STATES:
        raise ValueError(f"state must be one of {STATES}, got {state!r}")
    return state


def _times(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise ValueError("time must be non-negative")
    return t


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


def is_degenerate(gamma_x: float, gamma_xx: float, rtol: float = DEGENERATE_RTOL) -> bool:
    return abs(gamma_xx - gamma_x) <= rtol * max(gamma_x, gamma_xx)


# -- populations ------------------------------------------------------------

def population_xx(t, p: RateParams):
    """Biexciton population exp(-gamma_xx t)."""
    tt = _times(t)
    return _out(np.exp(-p.gamma_xx * tt), t)


def population_x(t, p: RateParams):
    """Exciton population fed by the biexciton decay.

    ``gamma_xx / (gamma_xx - gamma_x) * (exp(-gamma_x t) - exp(-gamma_xx t))``,
    evaluated through ``expm1`` so that nearly equal rates do not cancel. For
    rates equal within ``DEGENERATE_RTOL`` the confluent limit
    ``gamma t exp(-gamma t)`` is used.
    """
    tt = _times(t)
    gx, gxx = p.gamma_x, p.gamma_xx
    if is_degenerate(gx, gxx):
        g = 0.5 * (gx + gxx)
        return _out(g * tt * np.exp(-g * tt), t)
    # factor out the slower exponential so expm1 never overflows
    d = abs(gxx - gx)
    val = gxx * np.exp(-min(gx, gxx) * tt) * (-np.expm1(-d * tt)) / d
    return _out(val, t)


def population_x_peak_time(p: RateParams) -> float:
    """Time of the single maximum of :func:`population_x`."""
    gx, gxx = p.gamma_x, p.gamma_xx
    if is_degenerate(gx, gxx):
        return 2.0 / (gx + gxx)
    return math.log(gxx / gx) / (gxx - gx)


# -- exponential kernels, optionally convolved with a Gaussian IRF ----------

def exp_kernel(t, gamma: float, sigma: float = 0.0, order: int = 0) -> list[np.ndarray]:
    """``E(t) = (exp(-gamma s) H(s)) * Gauss(sigma)`` and its gamma-derivatives.

    Returns ``[E, dE/dgamma, ..., d^order E / dgamma^order]``. With
    ``sigma == 0`` the kernel is the plain one-sided exponential.

    The derivatives obey ``E^(n+1) = n sigma^2 E^(n-1) + (gamma sigma^2 - t) E^(n)``
    with ``E' = (gamma sigma^2 - t) E - sigma phi(t/sigma)``.
    """
    t = np.asarray(t, dtype=float)
    if sigma <= 0.0:
        e = np.where(t >= 0, np.exp(-gamma * np.maximum(t, 0.0)), 0.0)
        out = [e]
        for _ in range(order):
            out.append(-t * out[-1])
        return out
    z = (gamma * sigma - t / sigma) / _SQRT2
    with np.errstate(over="ignore", under="ignore"):
        e_pos = 0.5 * np.exp(-0.5 * (t / sigma) ** 2) * erfcx(np.maximum(z, 0.0))
        e_neg = 0.5 * np.exp(-gamma * t + 0.5 * (gamma * sigma) ** 2) * erfc(np.minimum(z, 0.0))
    e = np.where(z >= 0, e_pos, e_neg)
    out = [e]
    if order >= 1:
        a = gamma * sigma**2 - t
        phi = _INV_SQRT_2PI * np.exp(-0.5 * (t / sigma) ** 2)
        out.append(a * e - sigma * phi)
        for n in range(1, order):
            out.append(n * sigma**2 * out[n - 1] + a * out[n])
    return out


def exp_cdf(t, gamma: float, sigma: float = 0.0) -> np.ndarray:
    """CDF of the (IRF-broadened) unit exponential pdf ``gamma exp(-gamma t)``."""
    t = np.asarray(t, dtype=float)
    step = np.where(t >= 0, 1.0, 0.0) if sigma <= 0 else 0.5 * erfc(-t / (sigma * _SQRT2))
    return step - exp_kernel(t, gamma, sigma)[0]


def step_cdf(t, sigma: float = 0.0) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0, 1.0, 0.0) if sigma <= 0 else 0.5 * erfc(-t / (sigma * _SQRT2))


def cascade_divdiff(t, gamma_x: float, gamma_xx: float, sigma: float = 0.0,
                    derivatives: bool = False):
    """``Q = (E_x - E_xx) / (gamma_xx - gamma_x)`` with its two rate partials.

    Q is the building block of the exciton term. Near-degenerate rates use a
    midpoint Taylor expansion (error O(gap^6) for Q, O(gap^5) for the partials).
    Returns ``Q`` or ``(Q, dQ/dgamma_x, dQ/dgamma_xx)``.
    """
    t = np.asarray(t, dtype=float)
    delta = gamma_xx - gamma_x
    gap = abs(delta) / max(gamma_x, gamma_xx)
    if gap < _TAYLOR_RTOL:
        m = 0.5 * (gamma_x + gamma_xx)
        _, e1, e2, e3, e4, e5, e6 = exp_kernel(t, m, sigma, order=6)
        q = -e1 - delta**2 * e3 / 24.0 - delta**4 * e5 / 1920.0
        if not derivatives:
            return q
        # chain rule through the midpoint m and the gap delta
        dq_dm = -e2 - delta**2 * e4 / 24.0 - delta**4 * e6 / 1920.0
        dq_dd = -delta * e3 / 12.0 - delta**3 * e5 / 480.0
        return q, 0.5 * dq_dm - dq_dd, 0.5 * dq_dm + dq_dd
    if sigma <= 0.0:
        ts = np.maximum(t, 0.0)
        slow = np.where(t >= 0, np.exp(-min(gamma_x, gamma_xx) * ts), 0.0)
        q = slow * (-np.expm1(-abs(delta) * ts)) / abs(delta)
        ex = np.where(t >= 0, np.exp(-gamma_x * ts), 0.0)
        if not derivatives:
            return q
        exx = np.where(t >= 0, np.exp(-gamma_xx * np.maximum(t, 0.0)), 0.0)
        d1x, d1xx = -t * ex, -t * exx
    else:
        ex, d1x = exp_kernel(t, gamma_x, sigma, order=1)
        exx, d1xx = exp_kernel(t, gamma_xx, sigma, order=1)
        q = (ex - exx) / delta
        if not derivatives:
            return q
    return q, (d1x + q) / delta, -(d1xx + q) / delta


def intensity_model(t, p: RateParams, amplitude: float = 1.0, background: float = 0.0,
                    irf_sigma: float | None = None):
    """Photon emission intensity after a saturating pulse.

    ``A * [QY_XX G_XX exp(-G_XX t) + QY_X G_X N_X(t)] + C``, the biexciton
    photons plus the cascaded exciton photons, on top of a flat background.
    With ``irf_sigma`` each exponential is replaced by its analytic convolution
    with a Gaussian of that width.
    """
    tt = _times(t)
    if amplitude < 0 or background < 0:
        raise ValueError("amplitude and background must be non-negative")
    sigma = float(irf_sigma or 0.0)
    if sigma < 0:
        raise ValueError("irf_sigma must be non-negative")
    gx, gxx = p.gamma_x, p.gamma_xx
    if sigma == 0.0:
        xx_term = p.qy_xx * gxx * np.exp(-gxx * tt)
        x_term = p.qy_x * gx * population_x(tt, p)
    else:
        xx_term = p.qy_xx * gxx * exp_kernel(tt, gxx, sigma)[0]
        x_term = p.qy_x * gx * gxx * cascade_divdiff(tt, gx, gxx, sigma)
    return _out(amplitude * (xx_term + x_term) + background, t)


# -- enhancement algebra ----------------------------------------------------

def purcell_factors(env: EnvironmentPair) -> dict[str, float]:
    return {s: env.device.gamma(s) / env.reference.gamma(s) for s in STATES}


def radiative_split(p: RateParams) -> dict[str, tuple[float, float]]:
    """``{state: (radiative rate, non-radiative rate)}``; the pair sums to the total rate."""
    out = {}
    for s in STATES:
        g = p.gamma(s)
        g_r = p.qy(s) * g
        out[s] = (g_r, g - g_r)
    return out


def enhancement_factors(env: EnvironmentPair) -> EnhancementReport:
    """Purcell, radiative and non-radiative enhancement per state.

    Each factor is the plain device/reference ratio of the corresponding rate.
    A reference quantum yield of exactly 0 or 1 leaves one ratio undefined and
    raises :class:`UndefinedEnhancementError`.
    """
    dev, ref = radiative_split(env.device), radiative_split(env.reference)
    fp = purcell_factors(env)
    per_state = {}
    for s in STATES:
        (g_r, g_nr), (g_r0, g_nr0) = dev[s], ref[s]
        if g_r0 == 0.0:
            raise UndefinedEnhancementError(
                f"radiative enhancement of {s} undefined: reference radiative rate is 0")
        if g_nr0 == 0.0:
            raise UndefinedEnhancementError(
                f"non-radiative enhancement of {s} undefined: reference non-radiative rate is 0")
        per_state[s] = StateEnhancement(
            purcell=fp[s], radiative=g_r / g_r0, nonradiative=g_nr / g_nr0,
            gamma_r=g_r, gamma_r_ref=g_r0, gamma_nr=g_nr, gamma_nr_ref=g_nr0)
    return EnhancementReport(x=per_state["X"], xx=per_state["XX"])


# -- repetition-rate extrapolation -----------------------------------------

def hz_to_per_ns(rate_hz):
    return np.asarray(rate_hz, dtype=float) / NS_PER_S if np.ndim(rate_hz) else rate_hz / NS_PER_S


def photons_per_pulse(p: RateParams, rep_rate, state: str = "X"):
    """Expected photons from ``state`` emitted within one period ``1/rep_rate``.

    ``rep_rate`` is in 1/ns; ``np.inf`` gives 0.
    """
    rr = np.asarray(rep_rate, dtype=float)
    if np.any(rr <= 0) or np.any(np.isnan(rr)):
        raise ValueError("repetition rate must be positive")
    with np.errstate(divide="ignore"):
        val = p.qy(state) * -np.expm1(-p.gamma(state) / rr)
    return _out(val, rep_rate)


def photon_rate(p: RateParams, rep_rate, state: str = "X"):
    """Photons per second, ``rep_rate * photons_per_pulse`` (rep_rate in 1/ns)."""
    rr = np.asarray(rep_rate, dtype=float)
    ppp = photons_per_pulse(p, rr, state)
    return _out(rr * ppp * NS_PER_S, rep_rate)


def cw_photon_rate(p: RateParams, state: str = "X") -> float:
    """Large-repetition-rate limit of :func:`photon_rate`, photons per second."""
    return p.gamma(state) * p.qy(state) * NS_PER_S


def brightness_enhancement(env: EnvironmentPair, eta_device, eta_reference):
    """Device/reference ratio of collectable exciton photon rate at equal NA."""
    eta_device = np.asarray(eta_device, dtype=float)
    eta_reference = np.asarray(eta_reference, dtype=float)
    if np.any(eta_reference <= 0) or np.any(eta_reference > 1):
        raise UndefinedEnhancementError("eta_reference must lie in (0, 1]")
    if np.any(eta_device < 0) or np.any(eta_device > 1):
        raise ValueError("eta_device must lie in [0, 1]")
    d, r = env.device, env.reference
    if r.qy_x == 0:
        raise UndefinedEnhancementError("reference exciton quantum yield is 0")
    be = (d.qy_x * d.gamma_x * eta_device) / (r.qy_x * r.gamma_x * eta_reference)
    return float(be) if be.ndim == 0 else be


# Averages reported for CdSe/ZnS dots on the nanocone bullseye and on glass.
DEVICE_PARAMS = RateParams.from_lifetimes(1.08, 0.159, qy_x=0.25, qy_xx=0.097)
GLASS_PARAMS = RateParams.from_lifetimes(20.0, 1.7, qy_x=0.28, qy_xx=0.023)
PRESETS = {"device": DEVICE_PARAMS, "glass": GLASS_PARAMS}
