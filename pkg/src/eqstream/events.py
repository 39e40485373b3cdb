"""Event stream data model, validation, temporal-bin tensorization and file codecs.

Events are held column-wise (one numpy array per field) rather than as a list
of tuples; a stream of a few million events stays cheap to slice and sort.

Tensor channel layout is ``channel = 2 * bin + polarity_index`` with
``polarity_index = 0`` for OFF (p = -1) and ``1`` for ON (p = +1).
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError, ValidationError

BINARY_MAGIC = b"EVS1"
BINARY_VERSION = 1
TEXT_HEADER = "t_us,x,y,p"

RECORD_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
assert RECORD_DTYPE.itemsize == 13
_HEADER = struct.Struct("<4sHHHQ")


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise ConfigError(f"sensor geometry must be at least 1x1, got {self.width}x{self.height}")

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def num_pixels(self):
        return self.width * self.height


@dataclass(frozen=True)
class Event:
    t: int
    x: int
    y: int
    p: int


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EventStream:
    """Column-wise event storage: ``t`` (uint64 µs), ``x``, ``y`` (uint16), ``p`` (int8)."""

    geometry: SensorGeometry
    t: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint64))
    x: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint16))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint16))
    p: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int8))

    def __post_init__(self):
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValidationError("event field arrays differ in length")
        object.__setattr__(self, "t", _frozen(self.t, np.uint64))
        object.__setattr__(self, "x", _frozen(self.x, np.uint16))
        object.__setattr__(self, "y", _frozen(self.y, np.uint16))
        object.__setattr__(self, "p", _frozen(self.p, np.int8))

    @classmethod
    def from_events(cls, geometry, events):
        rows = [(e.t, e.x, e.y, e.p) if isinstance(e, Event) else tuple(e) for e in events]
        if not rows:
            return cls(geometry)
        return cls(geometry, *np.array(rows, dtype=np.int64).T)

    @classmethod
    def empty(cls, geometry):
        return cls(geometry)

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        for t, x, y, p in zip(self.t.tolist(), self.x.tolist(), self.y.tolist(), self.p.tolist()):
            yield Event(t, x, y, p)

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.geometry == other.geometry
                and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in "txyp"))

    def records(self) -> np.ndarray:
        rec = np.empty(len(self), dtype=RECORD_DTYPE)
        rec["t"], rec["x"], rec["y"], rec["p"] = self.t, self.x, self.y, self.p
        return rec

    @property
    def duration_us(self):
        if len(self) == 0:
            return 0
        return int(self.t[-1]) - int(self.t[0])

    def sorted(self):
        """Return a copy ordered by (t, y, x, p)."""
        order = np.lexsort((self.p, self.x, self.y, self.t))
        return EventStream(self.geometry, self.t[order], self.x[order], self.y[order], self.p[order])


def merge_streams(geometry, *streams):
    """Concatenate streams and sort by (t, y, x, p); the sort is stable."""
    parts = [s for s in streams if len(s)]
    if not parts:
        return EventStream(geometry)
    cat = EventStream(
        geometry,
        np.concatenate([s.t for s in parts]),
        np.concatenate([s.x for s in parts]),
        np.concatenate([s.y for s in parts]),
        np.concatenate([s.p for s in parts]),
    )
    return cat.sorted()


# ---------------------------------------------------------------------------
# validation


@dataclass
class ViolationCount:
    count: int = 0
    first_index: int | None = None


@dataclass
class ValidationReport:
    out_of_bounds: ViolationCount
    non_monotone: ViolationCount
    invalid_polarity: ViolationCount

    @property
    def ok(self):
        return not (self.out_of_bounds.count or self.non_monotone.count or self.invalid_polarity.count)

    def as_dict(self):
        return {k: {"count": v.count, "first_index": v.first_index}
                for k, v in (("out_of_bounds", self.out_of_bounds),
                             ("non_monotone", self.non_monotone),
                             ("invalid_polarity", self.invalid_polarity))}


def _violations(mask, offset=0):
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return ViolationCount()
    return ViolationCount(int(idx.size), int(idx[0]) + offset)


def validate_stream(stream: EventStream) -> ValidationReport:
    """Count bounds, ordering and polarity violations. Never raises.

    A non-monotone violation is recorded at the index of the event whose
    timestamp is smaller than its predecessor's.
    """
    g = stream.geometry
    oob = (stream.x >= g.width) | (stream.y >= g.height)
    nonmono = stream.t[1:] < stream.t[:-1]
    badp = (stream.p != 1) & (stream.p != -1)
    return ValidationReport(_violations(oob), _violations(nonmono, offset=1), _violations(badp))


# ---------------------------------------------------------------------------
# tensorization


@dataclass(frozen=True)
class TensorizeConfig:
    num_bins: int = 10
    window_us: int = 50_000
    window_start: int = 0

    def __post_init__(self):
        if int(self.num_bins) < 1:
            raise ConfigError(f"num_bins must be >= 1, got {self.num_bins}")
        if int(self.window_us) < 1:
            raise ConfigError(f"window_us must be > 0, got {self.window_us}")

    @property
    def channels(self):
        return 2 * self.num_bins

    def shifted(self, steps):
        return TensorizeConfig(self.num_bins, self.window_us, self.window_start + steps * self.window_us)

    def bin_edges(self):
        """Integer-µs left edges of each bin plus the exclusive window end."""
        k = np.arange(self.num_bins + 1, dtype=np.int64)
        # smallest dt with floor(dt * T / window) >= k
        edges = -((-k * self.window_us) // self.num_bins)
        return self.window_start + edges


@dataclass(frozen=True, eq=False)
class EventTensor:
    values: np.ndarray          # (2T, H, W) float64 counts
    skipped: int                # events outside the window or sensor
    window_start: int
    window_us: int

    @property
    def shape(self):
        return self.values.shape

    @property
    def num_bins(self):
        return self.values.shape[0] // 2


def _bin_index(t, cfg):
    dt = t.astype(np.int64) - np.int64(cfg.window_start)
    return np.minimum(cfg.num_bins - 1, (dt * cfg.num_bins) // cfg.window_us)


def tensorize(stream: EventStream, cfg: TensorizeConfig) -> EventTensor:
    g = stream.geometry
    T = cfg.num_bins
    t = stream.t.astype(np.int64)
    inside = ((t >= cfg.window_start) & (t < cfg.window_start + cfg.window_us)
              & (stream.x < g.width) & (stream.y < g.height)
              & ((stream.p == 1) | (stream.p == -1)))
    b = _bin_index(stream.t[inside], cfg)
    pol = (stream.p[inside] > 0).astype(np.int64)
    chan = 2 * b + pol
    flat = (chan * g.height + stream.y[inside].astype(np.int64)) * g.width + stream.x[inside].astype(np.int64)
    counts = np.bincount(flat, minlength=2 * T * g.height * g.width)
    values = counts.astype(np.float64).reshape(2 * T, g.height, g.width)
    return EventTensor(values, int(len(stream) - np.count_nonzero(inside)), cfg.window_start, cfg.window_us)


def tensorize_reference(stream: EventStream, cfg: TensorizeConfig) -> EventTensor:
    """Per-event loop; the oracle the vectorized path is checked against."""
    g = stream.geometry
    T = cfg.num_bins
    out = np.zeros((2 * T, g.height, g.width))
    skipped = 0
    end = cfg.window_start + cfg.window_us
    for ev in stream:
        if not (cfg.window_start <= ev.t < end) or ev.x >= g.width or ev.y >= g.height or ev.p not in (1, -1):
            skipped += 1
            continue
        b = min(T - 1, ((ev.t - cfg.window_start) * T) // cfg.window_us)
        out[2 * b + (1 if ev.p > 0 else 0), ev.y, ev.x] += 1
    return EventTensor(out, skipped, cfg.window_start, cfg.window_us)


def tensorize_sequence(stream: EventStream, cfg: TensorizeConfig, num_steps: int) -> list[EventTensor]:
    if int(num_steps) < 1:
        raise ConfigError(f"num_steps must be >= 1, got {num_steps}")
    return [tensorize(stream, cfg.shifted(k)) for k in range(num_steps)]


def steps_to_cover(streams, cfg: TensorizeConfig) -> int:
    """Smallest number of consecutive windows from ``cfg.window_start`` covering every event."""
    last = max((int(s.t[-1]) for s in streams if len(s)), default=cfg.window_start)
    return max(1, -(-(last + 1 - cfg.window_start) // cfg.window_us))


# ---------------------------------------------------------------------------
# file formats


def _detect_format(path):
    with open(path, "rb") as fh:
        head = fh.read(4)
    return "binary" if head == BINARY_MAGIC else "text"


def write_events(stream: EventStream, path, format="binary"):
    if format == "binary":
        g = stream.geometry
        if g.width > 0xFFFF or g.height > 0xFFFF:
            raise ValidationError("binary format limits geometry to 65535 pixels per side")
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(BINARY_MAGIC, BINARY_VERSION, g.width, g.height, len(stream)))
            fh.write(stream.records().tobytes())
    elif format == "text":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(TEXT_HEADER + "\n")
            if len(stream):
                cols = np.stack([stream.t.astype(np.int64), stream.x.astype(np.int64),
                                 stream.y.astype(np.int64), stream.p.astype(np.int64)], axis=1)
                buf = io.StringIO()
                np.savetxt(buf, cols, fmt="%d", delimiter=",")
                fh.write(buf.getvalue())
    else:
        raise ConfigError(f"unknown event format {format!r}; expected 'text' or 'binary'")


def _read_binary(path, geometry):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise ParseError("truncated binary event header", 0, unit="byte")
    magic, version, width, height, count = _HEADER.unpack_from(data)
    if magic != BINARY_MAGIC:
        raise ParseError(f"bad magic {magic!r}", 0, unit="byte")
    if version != BINARY_VERSION:
        raise ParseError(f"unsupported binary event version {version}", 4, unit="byte")
    try:
        file_geom = SensorGeometry(width, height)
    except ConfigError as exc:
        raise ParseError(str(exc), 6, unit="byte") from None
    expected = _HEADER.size + count * RECORD_DTYPE.itemsize
    if len(data) != expected:
        raise ParseError(f"binary body holds {len(data) - _HEADER.size} bytes, header declares {count} records",
                         min(len(data), expected), unit="byte")
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=_HEADER.size)
    bad = np.flatnonzero((rec["p"] != 1) & (rec["p"] != -1))
    if bad.size:
        raise ParseError(f"invalid polarity {int(rec['p'][bad[0]])}",
                         _HEADER.size + int(bad[0]) * RECORD_DTYPE.itemsize + 12, unit="byte")
    if geometry is not None and geometry != file_geom:
        raise ValidationError(f"file geometry {width}x{height} does not match expected "
                              f"{geometry.width}x{geometry.height}")
    return EventStream(file_geom, rec["t"], rec["x"], rec["y"], rec["p"])


def _parse_text_line(line, lineno):
    parts = line.strip().split(",")
    if len(parts) != 4:
        raise ParseError(f"expected 4 comma-separated fields, got {len(parts)}", lineno)
    try:
        t, x, y, p = (int(v) for v in parts)
    except ValueError:
        raise ParseError(f"non-integer field in {line.strip()!r}", lineno) from None
    if t < 0 or not (0 <= x <= 0xFFFF) or not (0 <= y <= 0xFFFF):
        raise ParseError(f"field out of range in {line.strip()!r}", lineno)
    if p not in (1, -1):
        raise ParseError(f"polarity must be 1 or -1, got {p}", lineno)
    return t, x, y, p


def _read_text(path, geometry):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != TEXT_HEADER:
        raise ParseError(f"missing header line {TEXT_HEADER!r}", 1)
    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    if body:
        try:
            cols = np.loadtxt(body, dtype=np.int64, delimiter=",", ndmin=2)
            if cols.shape[1] != 4:
                raise ValueError
        except ValueError:
            cols = None
        if cols is not None:
            t, x, y, p = cols.T
            bad = (t < 0) | (x < 0) | (x > 0xFFFF) | (y < 0) | (y > 0xFFFF) | ((p != 1) & (p != -1))
            idx = np.flatnonzero(bad)
            if idx.size:
                _parse_text_line(body[idx[0]], int(idx[0]) + 2)
        else:
            rows = [_parse_text_line(line, i + 2) for i, line in enumerate(body)]
            t, x, y, p = np.array(rows, dtype=np.int64).T
    else:
        t = x = y = p = np.zeros(0, np.int64)
    if geometry is None:
        geometry = SensorGeometry(int(x.max()) + 1 if len(x) else 1, int(y.max()) + 1 if len(y) else 1)
    elif len(x) and (x.max() >= geometry.width or y.max() >= geometry.height):
        raise ValidationError(f"events exceed the declared {geometry.width}x{geometry.height} geometry")
    return EventStream(geometry, t, x, y, p)


def read_events(path, format=None, geometry: SensorGeometry | None = None) -> EventStream:
    """Read an event file. ``format=None`` sniffs the binary magic.

    Text files carry no geometry; pass ``geometry`` or it is inferred from the
    largest coordinates seen.
    """
    if not os.path.exists(path):
        raise ParseError(f"no such event file: {path}")
    fmt = format or _detect_format(path)
    if fmt == "binary":
        return _read_binary(path, geometry)
    if fmt == "text":
        return _read_text(path, geometry)
    raise ConfigError(f"unknown event format {fmt!r}; expected 'text' or 'binary'")
