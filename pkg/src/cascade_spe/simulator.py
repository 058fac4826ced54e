"""Monte Carlo photon streams from pulsed, saturated cascade emitters.

Each pulse puts every emitter in the biexciton state. The biexciton decays
after an exponential delay (radiatively with probability ``qy_xx``) and the
exciton stage starts at that instant whatever the biexciton outcome, emitting
with probability ``qy_x``. The next pulse re-excites the emitter, so cascade
steps that would complete after the period are pre-empted and emit nothing.

Detected photons are split between two detectors (Hanbury Brown-Twiss) and
jittered by a Gaussian instrument response. Background clicks are Poissonian
per channel and uniform in the period. No dead time or afterpulsing.

Random draws are addressed by ``(seed, pulse, stream, block)`` through the
Philox counter-based generator:

=========  ===============================  =====================================
block      stream                           four lanes
=========  ===============================  =====================================
0          emitter index                    t_xx, xx radiative, t_x, x radiative
1          emitter index                    xx detect, xx channel, x detect, x channel
2          emitter index                    Box-Muller pairs for xx and x jitter
0          ``BACKGROUND_STREAM + channel``  Poisson count (lane 0)
1 + j//4   ``BACKGROUND_STREAM + channel``  position of background click j (lane j%4)
=========  ===============================  =====================================
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng
from .model import RateParams, cascade_divdiff, step_cdf

CHANNEL_A, CHANNEL_B = 0, 1
CHANNEL_NAMES = ("A", "B")
ORIGIN_X, ORIGIN_XX, ORIGIN_BACKGROUND = 0, 1, 2
ORIGIN_NAMES = ("X", "XX", "background")
BACKGROUND_STREAM = 0xFFFFFF00
CHUNK_PULSES = 1 << 16


@dataclass(frozen=True, kw_only=True)
class SimConfig:
    """Acquisition settings; ``rep_rate`` in 1/ns, ``irf_sigma`` in ns.

    ``background_rate`` is the mean number of background clicks per period in
    each channel.
    """

    rep_rate: float
    n_pulses: int
    seed: int
    n_emitters: int = 1
    detection_efficiency: float = 1.0
    background_rate: float = 0.0
    irf_sigma: float = 0.0
    hbt_split: float = 0.5

    def __post_init__(self):
        if not (self.rep_rate > 0 and math.isfinite(self.rep_rate)):
            raise ValueError("rep_rate must be positive")
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 1:
            raise ValueError("n_pulses must be a positive integer")
        if int(self.n_emitters) != self.n_emitters or self.n_emitters < 1:
            raise ValueError("n_emitters must be a positive integer")
        for name in ("detection_efficiency", "hbt_split"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.background_rate >= 0:
            raise ValueError("background_rate must be non-negative")
        if not self.irf_sigma >= 0:
            raise ValueError("irf_sigma must be non-negative")
        rng.seed_to_key(int(self.seed))

    @property
    def period(self) -> float:
        return 1.0 / self.rep_rate


@dataclass(frozen=True, eq=False)
class PhotonStream:
    """Time-tagged detection events sorted by (pulse_index, delay).

    ``channel`` holds 0 for detector A and 1 for B; ``delay`` is in ns inside
    ``[0, 1/rep_rate)``. ``origin`` is present only for simulated streams.
    """

    channel: np.ndarray
    pulse_index: np.ndarray
    delay: np.ndarray
    rep_rate: float
    n_pulses: int
    origin: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "channel", np.asarray(self.channel, dtype=np.uint8))
        object.__setattr__(self, "pulse_index", np.asarray(self.pulse_index, dtype=np.int64))
        object.__setattr__(self, "delay", np.asarray(self.delay, dtype=np.float64))
        if self.origin is not None:
            object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.uint8))
        n = len(self.channel)
        if len(self.pulse_index) != n or len(self.delay) != n or (
                self.origin is not None and len(self.origin) != n):
            raise ValueError("event columns have different lengths")

    def __len__(self):
        return len(self.delay)

    @property
    def period(self) -> float:
        return 1.0 / self.rep_rate

    @property
    def channels_present(self) -> set[int]:
        return set(np.unique(self.channel).tolist())

    def absolute_time(self) -> np.ndarray:
        return self.pulse_index * self.period + self.delay

    def select(self, mask, **metadata) -> "PhotonStream":
        mask = mask if isinstance(mask, slice) else np.asarray(mask)
        meta = dict(self.metadata)
        meta.update(metadata)
        return PhotonStream(
            self.channel[mask], self.pulse_index[mask], self.delay[mask],
            self.rep_rate, self.n_pulses,
            None if self.origin is None else self.origin[mask], meta)

    def with_metadata(self, **metadata) -> "PhotonStream":
        return self.select(slice(None), **metadata)

    def swap_channels(self) -> "PhotonStream":
        meta = dict(self.metadata)
        if "channels" in meta:
            meta["channels"] = sorted({"A": "B", "B": "A"}[c] for c in meta["channels"])
        return PhotonStream(1 - self.channel, self.pulse_index, self.delay, self.rep_rate,
                            self.n_pulses, self.origin, meta)

    def check(self):
        """Raise ``ValueError`` naming the first event that breaks an invariant."""
        bad = np.flatnonzero((self.delay < 0) | (self.delay >= self.period) | ~np.isfinite(self.delay))
        if bad.size:
            raise ValueError(f"event {bad[0]}: delay {self.delay[bad[0]]!r} outside [0, period)")
        bad = np.flatnonzero(self.channel > 1)
        if bad.size:
            raise ValueError(f"event {bad[0]}: unknown channel {self.channel[bad[0]]}")
        dp = np.diff(self.pulse_index)
        dd = np.diff(self.delay)
        bad = np.flatnonzero((dp < 0) | ((dp == 0) & (dd < 0)))
        if bad.size:
            raise ValueError(f"event {bad[0] + 1}: events out of (pulse_index, delay) order")

    def __eq__(self, other):
        if not isinstance(other, PhotonStream):
            return NotImplemented
        same_origin = (self.origin is None and other.origin is None) or (
            self.origin is not None and other.origin is not None
            and np.array_equal(self.origin, other.origin))
        return (self.rep_rate == other.rep_rate and self.n_pulses == other.n_pulses
                and same_origin
                and np.array_equal(self.channel, other.channel)
                and np.array_equal(self.pulse_index, other.pulse_index)
                and np.array_equal(self.delay, other.delay)
                and self.metadata == other.metadata)

    __hash__ = None


@dataclass(frozen=True)
class ExpectedCounts:
    """Mean detected events per pulse, summed over emitters and channels."""

    x: float
    xx: float
    background: float

    @property
    def total(self) -> float:
        return self.x + self.xx + self.background


def expected_counts(p: RateParams, cfg: SimConfig) -> ExpectedCounts:
    """Closed-form companion of :func:`simulate`.

    Includes pre-emption by the next pulse: an exciton photon counts only if
    the whole cascade finishes within the period. At low repetition rate this
    is ``n_emitters * efficiency * qy``.
    """
    T = cfg.period
    scale = cfg.n_emitters * cfg.detection_efficiency
    xx_done = -math.expm1(-p.gamma_xx * T)
    x_done = float(step_cdf(T) - np.exp(-p.gamma_x * T)
                   - p.gamma_x * cascade_divdiff(T, p.gamma_x, p.gamma_xx))
    return ExpectedCounts(x=scale * p.qy_x * x_done, xx=scale * p.qy_xx * xx_done,
                          background=2.0 * cfg.background_rate)


def _poisson_inverse(u: np.ndarray, lam: float) -> np.ndarray:
    k = np.zeros(u.shape, dtype=np.int64)
    if lam == 0:
        return k
    pmf = math.exp(-lam)
    cdf = np.full(u.shape, pmf)
    n = 0
    active = u > cdf
    while active.any():
        n += 1
        pmf *= lam / n
        k[active] += 1
        cdf = cdf + pmf
        active &= u > cdf
        if pmf == 0.0:
            break
    return k


def _gauss(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def _simulate_chunk(p: RateParams, cfg: SimConfig, start: int, stop: int):
    T = cfg.period
    seed = int(cfg.seed)
    n_em = cfg.n_emitters
    pulses = np.repeat(np.arange(start, stop, dtype=np.int64), n_em)
    emitters = np.tile(np.arange(n_em, dtype=np.int64), stop - start)

    channels, pidx, delays, origins = [], [], [], []
    if p.qy_x > 0 or p.qy_xx > 0:
        u = rng.uniforms(seed, pulses, emitters, 0)
        t_xx = -np.log(u[0]) / p.gamma_xx
        t_x = t_xx - np.log(u[2]) / p.gamma_x
        xx_emit = (u[1] < p.qy_xx) & (t_xx < T)
        x_emit = (u[3] < p.qy_x) & (t_x < T)
        act = np.flatnonzero(xx_emit | x_emit)
        if act.size:
            v = rng.uniforms(seed, pulses[act], emitters[act], 1)
            if cfg.irf_sigma > 0:
                w = rng.uniforms(seed, pulses[act], emitters[act], 2)
                jit_xx = cfg.irf_sigma * _gauss(w[0], w[1])
                jit_x = cfg.irf_sigma * _gauss(w[2], w[3])
            else:
                jit_xx = jit_x = 0.0
            eff, split = cfg.detection_efficiency, cfg.hbt_split
            for emit, t, det, route, jit, code in (
                    (xx_emit[act], t_xx[act], v[0], v[1], jit_xx, ORIGIN_XX),
                    (x_emit[act], t_x[act], v[2], v[3], jit_x, ORIGIN_X)):
                keep = emit & (det < eff)
                channels.append(np.where(route[keep] < split, CHANNEL_A, CHANNEL_B))
                pidx.append(pulses[act][keep])
                delays.append((t + jit)[keep] if np.ndim(jit) else t[keep])
                origins.append(np.full(keep.sum(), code))

    if cfg.background_rate > 0:
        chunk_pulses = np.arange(start, stop, dtype=np.int64)
        for ch in (CHANNEL_A, CHANNEL_B):
            stream = BACKGROUND_STREAM + ch
            k = _poisson_inverse(rng.uniforms(seed, chunk_pulses, stream, 0)[0],
                                 cfg.background_rate)
            total = int(k.sum())
            if not total:
                continue
            rep = np.repeat(chunk_pulses, k)
            j = np.arange(total) - np.repeat(np.cumsum(k) - k, k)
            w = rng.uniforms(seed, rep, stream, 1 + j // 4)
            channels.append(np.full(total, ch))
            pidx.append(rep)
            delays.append(w[j % 4, np.arange(total)] * T)
            origins.append(np.full(total, ORIGIN_BACKGROUND))

    if not delays:
        empty = np.zeros(0)
        return empty.astype(np.uint8), empty.astype(np.int64), empty, empty.astype(np.uint8)
    return (np.concatenate(channels).astype(np.uint8), np.concatenate(pidx),
            np.concatenate(delays).astype(np.float64), np.concatenate(origins).astype(np.uint8))


def _wrap(pulse_index: np.ndarray, delay: np.ndarray, period: float):
    shift = np.floor(delay / period).astype(np.int64)
    delay = delay - shift * period
    pulse_index = pulse_index + shift
    over = delay >= period
    delay = np.where(over, delay - period, delay)
    pulse_index = pulse_index + over
    return pulse_index, np.maximum(delay, 0.0)


def simulate(p: RateParams, cfg: SimConfig, workers: int = 1) -> PhotonStream:
    """Generate a detection-event stream.

    Pulses are processed in fixed chunks; ``workers > 1`` runs chunks in a
    thread pool. Because every draw is addressed by its counter the result
    is identical for any ``workers``.
    """
    bounds = [(s, min(s + CHUNK_PULSES, cfg.n_pulses))
              for s in range(0, cfg.n_pulses, CHUNK_PULSES)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _simulate_chunk(p, cfg, *b), bounds))
    else:
        parts = [_simulate_chunk(p, cfg, *b) for b in bounds]
    channel, pidx, delay, origin = (np.concatenate([part[i] for part in parts])
                                    for i in range(4))
    pidx, delay = _wrap(pidx, delay, cfg.period)
    # canonical order: the result does not depend on how pulses were chunked
    order = np.lexsort((origin, channel, delay, pidx))
    fractions = (cfg.hbt_split, 1.0 - cfg.hbt_split)
    channels = [name for name, f in zip(CHANNEL_NAMES, fractions) if f > 0 or cfg.background_rate > 0]
    meta = {"source": "simulation", "channels": channels,
            "sim_config": asdict(cfg), "rate_params": asdict(p)}
    return PhotonStream(channel[order], pidx[order], delay[order], cfg.rep_rate,
                        cfg.n_pulses, origin[order], meta)
