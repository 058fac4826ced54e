"""Histograms, time gating and pulsed-g2 analysis of photon streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .simulator import CHANNEL_A, CHANNEL_B, PhotonStream

CHANNEL_SELECTIONS = {"A": (CHANNEL_A,), "B": (CHANNEL_B,), "both": (CHANNEL_A, CHANNEL_B)}
DEFAULT_BINS_PER_PERIOD = 512
DEFAULT_SIDE_PEAKS = 5


class NotSubPoissonianError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DecayHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    total_pulses: int
    channel_selection: str = "both"
    rep_rate: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts)
        if len(counts) != len(edges) - 1:
            raise ValueError("need len(counts) == len(bin_edges) - 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def bin_widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)


@dataclass(frozen=True, eq=False)
class CorrelationHistogram:
    """Coincidence counts versus lag ``t_B - t_A`` over ``+-(k + 1/2)`` periods."""

    lag_bin_edges: np.ndarray
    counts: np.ndarray
    rep_rate: float
    n_side_peaks_each_side: int
    metadata: dict = field(default_factory=dict)

    @property
    def period(self) -> float:
        return 1.0 / self.rep_rate

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.lag_bin_edges[1:] + self.lag_bin_edges[:-1])


@dataclass(frozen=True)
class G2Result:
    g2_zero: float
    uncertainty: float
    central_area: float
    mean_side_area: float


@dataclass(frozen=True)
class EmitterCount:
    n_estimate: float
    n_rounded: int


def _bins_per_period(period: float, bin_width: float) -> int:
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    if bin_width >= period:
        raise ValueError(f"bin_width {bin_width} ns must be smaller than the period {period} ns")
    n = round(period / bin_width)
    if abs(n * bin_width - period) > 1e-9 * period:
        raise ValueError(f"bin_width {bin_width} ns does not divide the period {period} ns")
    return n


def _channel_mask(s: PhotonStream, channel_selection: str) -> np.ndarray:
    try:
        chans = CHANNEL_SELECTIONS[channel_selection]
    except KeyError:
        raise ValueError(f"channel_selection must be one of {sorted(CHANNEL_SELECTIONS)}") from None
    return np.isin(s.channel, chans)


def decay_histogram(s: PhotonStream, bin_width: float, channel_selection: str = "both") -> DecayHistogram:
    """Histogram of delays after the pulse, bins covering exactly one period."""
    T = s.period
    n = _bins_per_period(T, bin_width)
    width = T / n
    d = s.delay[_channel_mask(s, channel_selection)]
    idx = np.minimum((d / width).astype(np.int64), n - 1)
    counts = np.bincount(idx, minlength=n).astype(np.int64)
    return DecayHistogram(np.arange(n + 1) * width, counts, s.n_pulses, channel_selection,
                          s.rep_rate, {"gate_start": s.metadata.get("gate_start", 0.0)})


def time_gate(s: PhotonStream, gate_start: float) -> PhotonStream:
    """Keep events with ``delay >= gate_start``."""
    if not 0 <= gate_start < s.period:
        raise ValueError(f"gate_start must lie in [0, {s.period}) ns")
    gate = max(gate_start, s.metadata.get("gate_start", 0.0))
    return s.select(s.delay >= gate_start, gate_start=gate)


def _require_two_channels(s: PhotonStream):
    declared = s.metadata.get("channels")
    if declared is not None:
        ok = {"A", "B"} <= set(declared)
    else:
        # a lone event cannot reveal the detector layout
        ok = len(s) < 2 or s.channels_present == {CHANNEL_A, CHANNEL_B}
    if not ok:
        raise ValueError("coincidence analysis needs a stream recorded on both channels A and B")


def coincidence_histogram(s: PhotonStream, bin_width: float | None = None,
                          k_side_peaks: int = DEFAULT_SIDE_PEAKS,
                          chunk: int = 1 << 16) -> CorrelationHistogram:
    """Start-stop coincidences between every A event and every B event.

    Lags ``t_B - t_A`` are binned on ``[-(k + 1/2) T, (k + 1/2) T)``; ``bin_width``
    defaults to ``T / 512`` and must divide the period.
    """
    if k_side_peaks < 1:
        raise ValueError("need at least one side peak on each side")
    T = s.period
    if bin_width is None:
        bin_width = T / DEFAULT_BINS_PER_PERIOD
    npp = _bins_per_period(T, bin_width)
    _require_two_channels(s)
    width = T / npp
    n_bins = (2 * k_side_peaks + 1) * npp
    half = (k_side_peaks + 0.5) * T
    counts = np.zeros(n_bins, dtype=np.int64)

    a = s.channel == CHANNEL_A
    pa, da = s.pulse_index[a], s.delay[a]
    pb, db = s.pulse_index[~a], s.delay[~a]
    ta, tb = pa * T + da, pb * T + db
    for lo_i in range(0, len(ta), chunk):
        sl = slice(lo_i, lo_i + chunk)
        lo = np.searchsorted(tb, ta[sl] - half, side="left")
        hi = np.searchsorted(tb, ta[sl] + half, side="left")
        n = hi - lo
        if not n.sum():
            continue
        ia = np.repeat(np.arange(len(n)), n) + lo_i
        ib = np.repeat(lo, n) + (np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n))
        # lags from (pulse, delay) differences keep sub-ps precision at long times
        lag = (pb[ib] - pa[ia]) * T + (db[ib] - da[ia])
        inside = (lag >= -half) & (lag < half)
        idx = np.floor((lag[inside] + half) / width).astype(np.int64)
        counts += np.bincount(np.minimum(idx, n_bins - 1), minlength=n_bins)
    edges = (np.arange(n_bins + 1) - n_bins / 2) * width
    return CorrelationHistogram(edges, counts, s.rep_rate, k_side_peaks,
                                {"gate_start": s.metadata.get("gate_start", 0.0)})


def peak_areas(h: CorrelationHistogram) -> tuple[float, np.ndarray]:
    """Central area and the ``2k`` side-peak areas (full-period windows)."""
    T = h.period
    m = np.floor(h.bin_centers / T + 0.5).astype(np.int64)
    k = h.n_side_peaks_each_side
    areas = np.bincount(m + k, weights=h.counts, minlength=2 * k + 1)
    side = np.concatenate([areas[:k], areas[k + 1:]])
    return float(areas[k]), side


def g2_zero(h: CorrelationHistogram) -> G2Result:
    """Central-peak area over the mean side-peak area, Poisson error propagated."""
    if h.n_side_peaks_each_side < 1:
        raise ValueError("need at least one side peak on each side")
    central, side = peak_areas(h)
    side_total = side.sum()
    if side_total <= 0:
        raise ValueError("side peaks are empty; g2(0) is undefined")
    mean_side = side_total / len(side)
    g = central / mean_side
    # zero central counts still carry a one-count Poisson uncertainty
    var = max(central, 1.0) / mean_side**2 + g**2 / side_total
    return G2Result(float(g), math.sqrt(var), float(central), float(mean_side))


def estimate_emitter_count(g: G2Result | float) -> EmitterCount:
    """Number of equally bright emitters, ``N = 1 / (1 - g2(0))``."""
    val = g.g2_zero if isinstance(g, G2Result) else float(g)
    if val >= 1:
        raise NotSubPoissonianError(f"g2(0) = {val:.4g} is not sub-Poissonian")
    n = 1.0 / (1.0 - val)
    return EmitterCount(float(n), max(1, int(math.floor(n + 0.5))))


def saturation_points(streams, system_efficiency: float, n_emitters: int = 1):
    """``[(power, photons per pulse per emitter)]`` from ``[(power, stream)]``."""
    streams = list(streams)
    if not streams:
        raise ValueError("no streams given")
    if not 0 < system_efficiency <= 1:
        raise ValueError("system_efficiency must lie in (0, 1]")
    if n_emitters < 1:
        raise ValueError("n_emitters must be at least 1")
    return [(float(power), len(s) / s.n_pulses / system_efficiency / n_emitters)
            for power, s in streams]
