"""Text file formats: timestamp streams, histograms, curves and BFP images.

Timestamp files are line-oriented text. Header lines start with ``#`` and
hold ``key=value`` pairs; the body has one record per event,
``channel,pulse_index,delay_ns[,origin]``, sorted by pulse then delay::

    # format=cascade-spe-timestamps/1
    # rep_rate_hz=4000000
    # rep_rate_per_ns=0.004
    # n_pulses=1000000
    # channels=A,B
    # columns=channel,pulse_index,delay_ns,origin
    # n_events=347012
    # sha256=<hex digest of the body bytes>
    # meta={"source": "simulation", ...}
    # provenance=[{...}]
    A,0,0.7315228771170917,XX

Delays are written with Python's shortest round-trip ``repr`` so a file reads
back to bit-identical floats. ``n_events`` and ``sha256`` are optional on
input, which lets converted third-party data omit them. Paths ending in
``.gz`` are gzip-compressed with a zero timestamp so equal streams give equal
bytes. Histogram and curve files are CSV with the same ``#`` header and
numbers printed to 9 significant digits.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .angular import AngularProfile, BFPImage
from .counting import CorrelationHistogram, DecayHistogram
from .simulator import CHANNEL_NAMES, ORIGIN_NAMES, PhotonStream

TIMESTAMP_FORMAT = "cascade-spe-timestamps/1"
DECAY_FORMAT = "cascade-spe-decay-histogram/1"
CORRELATION_FORMAT = "cascade-spe-correlation-histogram/1"
BFP_FORMAT = "cascade-spe-bfp/1"
SIG_DIGITS = 9

_CHANNEL_CODE = {name: i for i, name in enumerate(CHANNEL_NAMES)}
_ORIGIN_CODE = {name: i for i, name in enumerate(ORIGIN_NAMES)}


class FileFormatError(ValueError):
    """Malformed input; ``line`` (1-based) and ``record`` (0-based) locate it."""

    def __init__(self, message: str, path=None, line: int | None = None, record: int | None = None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if record is not None:
            where.append(f"record {record}")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")
        self.path, self.line, self.record = path, line, record


def fmt(x) -> str:
    """Locale-independent number with 9 significant digits."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), f".{SIG_DIGITS}g")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent=None) -> str:
    return json.dumps(obj, sort_keys=True, default=_jsonable, indent=indent,
                      separators=(",", ": ") if indent else (",", ":"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz" or raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise FileFormatError(f"corrupt gzip data ({exc})", path) from None
    return raw


def _write_bytes(path, data: bytes):
    path = Path(path)
    if path.suffix == ".gz":
        buf = io.BytesIO()
        with gzip.GzipFile(filename="", mode="wb", fileobj=buf, mtime=0) as gz:
            gz.write(data)
        data = buf.getvalue()
    path.write_bytes(data)


def _split_header(text: str, path):
    """``(header dict, body lines, line number of the first body line)``."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    header = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        content = lines[i][1:].strip()
        if content:
            key, sep, value = content.partition("=")
            if not sep:
                raise FileFormatError(f"header line is not key=value: {lines[i]!r}", path, i + 1)
            header[key.strip()] = value.strip()
        i += 1
    return header, lines[i:], i + 1


def _require(header: dict, key: str, path):
    if key not in header:
        raise FileFormatError(f"header lacks required key {key!r}", path)
    return header[key]


def _header_json(header, key, path, default):
    if key not in header:
        return default
    try:
        return json.loads(header[key])
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"header {key} is not valid JSON ({exc.msg})", path) from None


def _check_format(header, expected, path):
    found = _require(header, "format", path)
    if found != expected:
        raise FileFormatError(f"expected format {expected}, found {found}", path)


def _rep_rate(header, path) -> float:
    scale = 1.0 if "rep_rate_per_ns" in header else 1e-9
    raw = header["rep_rate_per_ns"] if scale == 1.0 else _require(header, "rep_rate_hz", path)
    try:
        value = float(raw) * scale
    except ValueError:
        raise FileFormatError("repetition rate is not a number", path) from None
    if not (value > 0 and math.isfinite(value)):
        raise FileFormatError("repetition rate must be positive", path)
    return value


# -- timestamp streams ---------------------------------------------------------

def stream_channels(s: PhotonStream) -> list[str]:
    declared = s.metadata.get("channels")
    if declared is not None:
        return sorted(declared)
    return [CHANNEL_NAMES[c] for c in sorted(s.channels_present)]


def format_timestamps(s: PhotonStream) -> bytes:
    s.check()
    with_origin = s.origin is not None
    ch = [CHANNEL_NAMES[c] for c in s.channel.tolist()]
    if with_origin:
        org = [ORIGIN_NAMES[o] for o in s.origin.tolist()]
        rows = [f"{c},{p},{d!r},{o}\n" for c, p, d, o in zip(ch, s.pulse_index.tolist(), s.delay.tolist(), org)]
    else:
        rows = [f"{c},{p},{d!r}\n" for c, p, d in zip(ch, s.pulse_index.tolist(), s.delay.tolist())]
    body = "".join(rows).encode("ascii")
    meta = dict(s.metadata)
    provenance = meta.pop("provenance", [])
    columns = "channel,pulse_index,delay_ns" + (",origin" if with_origin else "")
    header = [
        f"format={TIMESTAMP_FORMAT}",
        f"rep_rate_hz={fmt(s.rep_rate * 1e9)}",
        f"rep_rate_per_ns={s.rep_rate!r}",
        f"n_pulses={int(s.n_pulses)}",
        f"channels={','.join(stream_channels(s))}",
        f"columns={columns}",
        f"n_events={len(s)}",
        f"sha256={hashlib.sha256(body).hexdigest()}",
        f"meta={dumps(meta)}",
        f"provenance={dumps(provenance)}",
    ]
    return ("".join(f"# {h}\n" for h in header)).encode("ascii") + body


def write_timestamps(path, s: PhotonStream):
    _write_bytes(path, format_timestamps(s))


def read_timestamps(path) -> PhotonStream:
    raw = _read_bytes(path)
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FileFormatError(f"non-ASCII byte at offset {exc.start}", path) from None
    header, lines, first = _split_header(text, path)
    _check_format(header, TIMESTAMP_FORMAT, path)
    rep_rate = _rep_rate(header, path)
    n_pulses = _require(header, "n_pulses", path)
    try:
        n_pulses = int(n_pulses)
    except ValueError:
        raise FileFormatError("n_pulses is not an integer", path) from None
    columns = _require(header, "columns", path).split(",")
    if columns not in (["channel", "pulse_index", "delay_ns"],
                       ["channel", "pulse_index", "delay_ns", "origin"]):
        raise FileFormatError(f"unsupported columns {','.join(columns)}", path)
    channels = [c for c in header.get("channels", "A,B").split(",") if c]
    if not channels or set(channels) - set(CHANNEL_NAMES):
        raise FileFormatError(f"channels must be a subset of A,B, got {header.get('channels')!r}", path)

    if "sha256" in header:
        body_start = raw.index(b"\n", raw.rfind(b"\n#") + 1) + 1 if raw.startswith(b"#") else 0
        digest = hashlib.sha256(raw[body_start:]).hexdigest()
        if digest != header["sha256"]:
            raise FileFormatError("body checksum mismatch (file truncated or edited)", path)
    if "n_events" in header and int(header["n_events"]) != len(lines):
        raise FileFormatError(f"header announces {header['n_events']} events, body has {len(lines)}",
                              path, first + min(len(lines), int(header["n_events"])))

    n_col = len(columns)
    allowed = {_CHANNEL_CODE[c] for c in channels}
    ch = np.empty(len(lines), np.uint8)
    pidx = np.empty(len(lines), np.int64)
    delay = np.empty(len(lines), np.float64)
    origin = np.empty(len(lines), np.uint8) if n_col == 4 else None
    for i, line in enumerate(lines):
        parts = line.split(",")
        try:
            if len(parts) != n_col:
                raise ValueError(f"expected {n_col} fields, found {len(parts)}")
            code = _CHANNEL_CODE.get(parts[0])
            if code not in allowed:
                raise ValueError(f"channel {parts[0]!r} not among declared channels {channels}")
            ch[i] = code
            pidx[i] = int(parts[1])
            delay[i] = float(parts[2])
            if origin is not None:
                origin[i] = _ORIGIN_CODE[parts[3]]
        except (ValueError, KeyError) as exc:
            raise FileFormatError(str(exc), path, first + i, i) from None

    period = 1.0 / rep_rate
    bad = np.flatnonzero(~((delay >= 0) & (delay < period)))
    if bad.size:
        i = int(bad[0])
        raise FileFormatError(f"delay {delay[i]!r} ns outside [0, {period!r})", path, first + i, i)
    dp, dd = np.diff(pidx), np.diff(delay)
    bad = np.flatnonzero((dp < 0) | ((dp == 0) & (dd < 0)))
    if bad.size:
        i = int(bad[0]) + 1
        what = "pulse_index decreases" if dp[i - 1] < 0 else "delay decreases within a pulse"
        raise FileFormatError(what, path, first + i, i)
    if pidx.size and pidx[0] < 0:
        raise FileFormatError("negative pulse_index", path, first, 0)

    meta = _header_json(header, "meta", path, {})
    provenance = _header_json(header, "provenance", path, [])
    if provenance:
        meta["provenance"] = provenance
    if "meta" not in header and "channels" in header:
        # hand-converted files carry the detector layout only in the header
        meta["channels"] = channels
    return PhotonStream(ch, pidx, delay, rep_rate, n_pulses, origin, meta)


# -- CSV tables ------------------------------------------------------------------

def format_csv(header: dict, columns, rows) -> bytes:
    out = [f"# {k}={v}\n" for k, v in header.items()]
    out.append(",".join(columns) + "\n")
    for row in rows:
        out.append(",".join(fmt(v) for v in row) + "\n")
    return "".join(out).encode("ascii")


def write_csv(path, header: dict, columns, rows):
    _write_bytes(path, format_csv(header, columns, rows))


def read_csv(path, required=()) -> tuple[dict, list[str], np.ndarray]:
    """``(header, column names, float array of shape (rows, columns))``."""
    text = _read_bytes(path).decode("ascii", errors="replace")
    header, lines, first = _split_header(text, path)
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise FileFormatError("missing column header row", path)
    columns = [c.strip() for c in lines[0].split(",")]
    missing = [c for c in required if c not in columns]
    if missing:
        raise FileFormatError(f"missing columns {missing}; found {columns}", path, first)
    data = np.empty((len(lines) - 1, len(columns)))
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != len(columns):
            raise FileFormatError(f"expected {len(columns)} fields, found {len(parts)}", path, first + 1 + i, i)
        try:
            data[i] = [float(p) for p in parts]
        except ValueError:
            raise FileFormatError(f"non-numeric field in {line!r}", path, first + 1 + i, i) from None
    return header, columns, data


def _provenance_header(metadata: dict) -> dict:
    return {"provenance": dumps(metadata.get("provenance", []))}


def write_decay_histogram(path, h: DecayHistogram):
    header = {"format": DECAY_FORMAT, "total_pulses": int(h.total_pulses),
              "channel_selection": h.channel_selection,
              "rep_rate_per_ns": repr(h.rep_rate) if h.rep_rate is not None else "none",
              "gate_start_ns": fmt(h.metadata.get("gate_start", 0.0))}
    header.update(_provenance_header(h.metadata))
    e = h.bin_edges
    write_csv(path, header, ("bin_start_ns", "bin_end_ns", "counts"),
              zip(e[:-1], e[1:], h.counts.astype(np.int64)))


def read_decay_histogram(path) -> DecayHistogram:
    header, columns, data = read_csv(path, ("bin_start_ns", "bin_end_ns", "counts"))
    _check_format(header, DECAY_FORMAT, path)
    if len(data) == 0:
        raise FileFormatError("histogram has no bins", path)
    start, end = data[:, columns.index("bin_start_ns")], data[:, columns.index("bin_end_ns")]
    if np.any(start[1:] != end[:-1]):
        raise FileFormatError("bins are not contiguous", path)
    counts = data[:, columns.index("counts")]
    if np.any(counts < 0) or np.any(counts != np.round(counts)):
        raise FileFormatError("counts must be non-negative integers", path)
    rate = header.get("rep_rate_per_ns", "none")
    meta = {"gate_start": float(header.get("gate_start_ns", 0.0)),
            "provenance": _header_json(header, "provenance", path, [])}
    try:
        return DecayHistogram(np.append(start, end[-1]), counts.astype(np.int64),
                              int(_require(header, "total_pulses", path)),
                              header.get("channel_selection", "both"),
                              None if rate == "none" else float(rate), meta)
    except ValueError as exc:
        raise FileFormatError(str(exc), path) from None


def write_correlation_histogram(path, h: CorrelationHistogram, extra: dict | None = None):
    header = {"format": CORRELATION_FORMAT, "rep_rate_per_ns": repr(h.rep_rate),
              "n_side_peaks_each_side": h.n_side_peaks_each_side,
              "gate_start_ns": fmt(h.metadata.get("gate_start", 0.0))}
    header.update(extra or {})
    header.update(_provenance_header(h.metadata))
    e = h.lag_bin_edges
    write_csv(path, header, ("lag_start_ns", "lag_end_ns", "counts"),
              zip(e[:-1], e[1:], h.counts.astype(np.int64)))


def read_correlation_histogram(path) -> CorrelationHistogram:
    header, columns, data = read_csv(path, ("lag_start_ns", "lag_end_ns", "counts"))
    _check_format(header, CORRELATION_FORMAT, path)
    if len(data) == 0:
        raise FileFormatError("histogram has no bins", path)
    start, end = data[:, columns.index("lag_start_ns")], data[:, columns.index("lag_end_ns")]
    meta = {"gate_start": float(header.get("gate_start_ns", 0.0)),
            "provenance": _header_json(header, "provenance", path, [])}
    return CorrelationHistogram(np.append(start, end[-1]), data[:, columns.index("counts")].astype(np.int64),
                                _rep_rate(header, path),
                                int(_require(header, "n_side_peaks_each_side", path)), meta)


def read_saturation_points(path):
    """``(points, sigma or None)`` from a CSV with ``power_uw,ppp[,sigma]`` columns."""
    _, columns, data = read_csv(path, ("power_uw", "ppp"))
    pts = list(zip(data[:, columns.index("power_uw")], data[:, columns.index("ppp")]))
    sigma = data[:, columns.index("sigma")] if "sigma" in columns else None
    return pts, sigma


def write_angular_profile(path, prof: AngularProfile, provenance=()):
    header = {"format": "cascade-spe-angular-profile/1", "na_max": fmt(prof.na_max),
              "immersion_index": fmt(prof.immersion_index),
              "apodization": "cos_theta" if prof.apodization else "none",
              "provenance": dumps(list(provenance))}
    e = prof.theta_bin_edges
    n_pix = prof.n_pixels if prof.n_pixels is not None else np.zeros(len(prof.intensity), np.int64)
    write_csv(path, header, ("theta_start_deg", "theta_end_deg", "intensity_per_sr", "n_pixels"),
              zip(e[:-1], e[1:], prof.intensity, n_pix))


# -- BFP images ----------------------------------------------------------------------

def read_bfp(path) -> BFPImage:
    """BFP image from a text matrix with a ``#`` header or from an ``.npz`` archive.

    The header (or archive) supplies ``pixel_scale`` (NA per pixel),
    ``center_row``, ``center_col``, ``na_max`` and optionally
    ``immersion_index``; rows are whitespace- or comma-separated.
    """
    path = Path(path)
    keys = ("pixel_scale", "center_row", "center_col", "na_max")
    if path.suffix == ".npz":
        with np.load(path) as z:
            missing = [k for k in ("intensity",) + keys if k not in z]
            if missing:
                raise FileFormatError(f"archive lacks {missing}", path)
            cal = {k: float(z[k]) for k in keys}
            cal["immersion_index"] = float(z["immersion_index"]) if "immersion_index" in z else 1.0
            img = np.array(z["intensity"], dtype=float)
    else:
        text = _read_bytes(path).decode("ascii", errors="replace")
        header, lines, first = _split_header(text, path)
        _check_format(header, BFP_FORMAT, path)
        cal = {k: _require(header, k, path) for k in keys}
        try:
            cal = {k: float(v) for k, v in cal.items()}
            cal["immersion_index"] = float(header.get("immersion_index", 1.0))
        except ValueError:
            raise FileFormatError("calibration values must be numbers", path) from None
        rows = []
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                rows.append([float(v) for v in line.replace(",", " ").split()])
            except ValueError:
                raise FileFormatError("non-numeric pixel value", path, first + i) from None
            if rows and len(rows[-1]) != len(rows[0]):
                raise FileFormatError(f"row has {len(rows[-1])} values, expected {len(rows[0])}", path, first + i)
        if not rows:
            raise FileFormatError("image has no rows", path)
        img = np.array(rows)
    try:
        return BFPImage(img, cal["pixel_scale"], (cal["center_row"], cal["center_col"]),
                        cal["na_max"], cal["immersion_index"])
    except ValueError as exc:
        raise FileFormatError(str(exc), path) from None


def write_bfp(path, img: BFPImage):
    path = Path(path)
    cal = {"pixel_scale": img.pixel_scale, "center_row": img.center[0], "center_col": img.center[1],
           "na_max": img.na_max, "immersion_index": img.immersion_index}
    if path.suffix == ".npz":
        np.savez(path, intensity=img.intensity, **cal)
        return
    head = [f"# format={BFP_FORMAT}\n"] + [f"# {k}={v!r}\n" for k, v in cal.items()]
    body = [" ".join(repr(float(v)) for v in row) + "\n" for row in img.intensity]
    _write_bytes(path, "".join(head + body).encode("ascii"))
