"""Event streams, spike tensors and the binning rule between them.

Timestamps are integer microseconds from the start of the recording.  Vision
channels are flattened polarity-major, then row-major::

    channel = ((polarity_index * height) + y) * width + x

with polarity index 0 for positive and 1 for negative events.
"""

from __future__ import annotations

import csv
import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from . import _accel
from .errors import InvalidWindowError, LayoutError, ParseError, ValidationError

US_PER_S = 1_000_000


class Polarity(enum.IntEnum):
    POSITIVE = 0
    NEGATIVE = 1


class Modality(enum.IntEnum):
    TACTILE = 0
    VISION = 1


class Geometry(NamedTuple):
    width: int
    height: int
    polarities: int = 2

    @property
    def size(self) -> int:
        return self.width * self.height * self.polarities


class Event(NamedTuple):
    timestamp: int
    channel: int
    polarity: Polarity


def seconds_to_us(seconds: float) -> int:
    return int(round(seconds * US_PER_S))


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True).reshape(-1)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class EventStream:
    """Immutable, time-ordered list of sensor events stored column-wise."""

    timestamps: np.ndarray
    channels: np.ndarray
    polarities: np.ndarray
    channel_count: int
    modality: Modality = Modality.TACTILE
    geometry: Optional[Geometry] = None

    def __post_init__(self):
        ts = _frozen(self.timestamps, np.int64)
        ch = _frozen(self.channels, np.int64)
        pol = _frozen(self.polarities, np.uint8)
        if not (ts.shape == ch.shape == pol.shape):
            raise ValidationError("timestamps, channels and polarities differ in length")
        if self.channel_count <= 0:
            raise ValidationError(f"channel_count must be positive, got {self.channel_count}")
        geometry = self.geometry
        if geometry is not None:
            geometry = Geometry(*map(int, geometry))
            if geometry.size != self.channel_count:
                raise ValidationError(
                    f"geometry {tuple(geometry)} implies {geometry.size} channels, "
                    f"stream declares {self.channel_count}"
                )
        if ts.size:
            if ts.min() < 0:
                raise ValidationError("negative timestamp")
            if np.any(np.diff(ts) < 0):
                raise ValidationError("events are not sorted by timestamp")
            if ch.min() < 0 or ch.max() >= self.channel_count:
                bad = int(np.flatnonzero((ch < 0) | (ch >= self.channel_count))[0])
                raise ValidationError(
                    f"event {bad} has channel {int(ch[bad])} outside [0, {self.channel_count})"
                )
            if pol.max() > 1:
                raise ValidationError("polarity must be 0 (positive) or 1 (negative)")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "polarities", pol)
        object.__setattr__(self, "modality", Modality(self.modality))
        object.__setattr__(self, "geometry", geometry)

    @classmethod
    def from_events(cls, events, channel_count, modality=Modality.TACTILE, geometry=None):
        """Build a stream from ``Event``-like tuples, sorting stably by timestamp."""
        events = list(events)
        ts = np.array([e[0] for e in events], dtype=np.int64)
        order = np.argsort(ts, kind="stable")
        return cls(
            ts[order],
            np.array([e[1] for e in events], dtype=np.int64)[order],
            np.array([int(e[2]) for e in events], dtype=np.uint8)[order],
            channel_count,
            modality,
            geometry,
        )

    @classmethod
    def empty(cls, channel_count, modality=Modality.TACTILE, geometry=None):
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z.astype(np.uint8), channel_count, modality, geometry)

    def __len__(self):
        return int(self.timestamps.size)

    def __iter__(self):
        for t, c, p in zip(self.timestamps, self.channels, self.polarities):
            yield Event(int(t), int(c), Polarity(int(p)))

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.channel_count == other.channel_count
            and self.modality == other.modality
            and self.geometry == other.geometry
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.channels, other.channels)
            and np.array_equal(self.polarities, other.polarities)
        )

    def _replace(self, timestamps, channels, polarities, **kw):
        args = dict(channel_count=self.channel_count, modality=self.modality,
                    geometry=self.geometry)
        args.update(kw)
        return EventStream(timestamps, channels, polarities, **args)

    @property
    def duration_us(self) -> int:
        return int(self.timestamps[-1]) + 1 if len(self) else 0


@dataclass(frozen=True, eq=False)
class SpikeTensor:
    """Binary ``[channel, bin]`` array plus its time resolution."""

    data: np.ndarray
    bin_width: float
    geometry: Optional[Geometry] = field(default=None)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValidationError(f"spike tensor must be 2-D, got shape {data.shape}")
        if data.dtype != np.uint8:
            if np.any((data != 0) & (data != 1)):
                raise ValidationError("spike tensor entries must be 0 or 1")
            data = data.astype(np.uint8)
        if self.bin_width <= 0:
            raise ValidationError("bin_width must be positive")
        data = np.array(data, copy=True)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        if self.geometry is not None:
            object.__setattr__(self, "geometry", Geometry(*self.geometry))

    @classmethod
    def wrap(cls, data: np.ndarray, bin_width: float, geometry=None) -> "SpikeTensor":
        """Adopt a freshly built binary ``uint8`` array without validating or copying it."""
        obj = object.__new__(cls)
        data.flags.writeable = False
        object.__setattr__(obj, "data", data)
        object.__setattr__(obj, "bin_width", bin_width)
        object.__setattr__(obj, "geometry", None if geometry is None else Geometry(*geometry))
        return obj

    @property
    def channel_count(self) -> int:
        return self.data.shape[0]

    @property
    def n_bins(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.n_bins * self.bin_width

    def counts(self, upto=None) -> np.ndarray:
        return self.data[:, :upto].sum(axis=1, dtype=np.int64)

    def __eq__(self, other):
        if not isinstance(other, SpikeTensor):
            return NotImplemented
        return self.bin_width == other.bin_width and np.array_equal(self.data, other.data)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def crop_window(stream: EventStream, t_start: float, t_end: float) -> EventStream:
    """Keep events with ``t_start <= t < t_end`` (seconds) and re-base them to ``t_start``."""
    if not t_start < t_end:
        raise InvalidWindowError(f"empty window [{t_start}, {t_end})")
    lo, hi = seconds_to_us(t_start), seconds_to_us(t_end)
    i0 = np.searchsorted(stream.timestamps, lo, side="left")
    i1 = np.searchsorted(stream.timestamps, hi, side="left")
    sl = slice(i0, i1)
    return stream._replace(stream.timestamps[sl] - lo, stream.channels[sl], stream.polarities[sl])


def vision_channel_index(x: int, y: int, polarity, geometry) -> int:
    width, height, polarities = Geometry(*geometry)
    p = int(polarity)
    if not (0 <= x < width and 0 <= y < height and 0 <= p < polarities):
        raise IndexError(f"pixel ({x}, {y}, p={p}) outside geometry {tuple(geometry)}")
    return (p * height + y) * width + x


def vision_pixel(channel: int, geometry):
    """Inverse of :func:`vision_channel_index`: ``channel -> (x, y, polarity_index)``."""
    width, height, polarities = Geometry(*geometry)
    if not 0 <= channel < width * height * polarities:
        raise IndexError(f"channel {channel} outside geometry {tuple(geometry)}")
    rest, x = divmod(channel, width)
    p, y = divmod(rest, height)
    return x, y, p


def merge_polarity(stream: EventStream) -> EventStream:
    """Fold both polarity planes of a vision stream onto one plane.

    Binning the merged stream with ``s_min=1`` equals OR-ing the two planes'
    binned outputs.
    """
    if stream.geometry is None:
        raise LayoutError("polarity merge needs a vision geometry")
    g = stream.geometry
    plane = g.width * g.height
    merged = Geometry(g.width, g.height, 1)
    return stream._replace(
        stream.timestamps,
        stream.channels % plane,
        np.zeros(len(stream), dtype=np.uint8),
        channel_count=merged.size,
        geometry=merged,
    )


def bin_events(stream: EventStream, bin_width: float, n_bins: int, s_min: int = 1,
               merge_polarities: bool = False) -> SpikeTensor:
    """Bin a stream into a binary spike tensor.

    Bin ``w`` covers ``[w * bin_width, (w + 1) * bin_width)``; it is 1 when the
    channel has at least ``s_min`` events there.  Events at or past
    ``n_bins * bin_width`` are dropped.

    Note that ``s_min=0`` sets *every* bin to 1 (the count is always >= 0),
    which saturates the channel regardless of input.
    """
    if bin_width <= 0 or n_bins <= 0 or s_min < 0:
        raise ValueError("need bin_width > 0, n_bins > 0 and s_min >= 0")
    bin_us = seconds_to_us(bin_width)
    if bin_us <= 0:
        raise ValueError(f"bin_width {bin_width} s is below 1 microsecond")
    if merge_polarities:
        stream = merge_polarity(stream)
    if s_min == 0:
        data = np.ones((stream.channel_count, n_bins), dtype=np.uint8)
    else:
        data = _accel.bin_spikes(stream.timestamps, stream.channels, bin_us, n_bins,
                                 stream.channel_count, s_min)
    return SpikeTensor.wrap(data, bin_us / US_PER_S, stream.geometry)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

MAGIC = b"EVST"
VERSION = 1
_HEADER = struct.Struct("<4sHBBI")
_GEOMETRY = struct.Struct("<III")
RECORD_DTYPE = np.dtype([("t", "<u8"), ("ch", "<u4"), ("p", "u1")])  # packed, 13 bytes


def encode_stream(stream: EventStream) -> bytes:
    has_geometry = stream.geometry is not None
    parts = [_HEADER.pack(MAGIC, VERSION, int(stream.modality), int(has_geometry),
                          stream.channel_count)]
    if has_geometry:
        parts.append(_GEOMETRY.pack(*stream.geometry))
    rec = np.empty(len(stream), dtype=RECORD_DTYPE)
    rec["t"] = stream.timestamps
    rec["ch"] = stream.channels
    rec["p"] = stream.polarities
    parts.append(rec.tobytes())
    return b"".join(parts)


def decode_stream(buf: bytes) -> EventStream:
    if len(buf) < _HEADER.size:
        raise ParseError("truncated header", offset=len(buf))
    magic, version, modality, has_geometry, channel_count = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", offset=4)
    if modality not in (0, 1):
        raise ParseError(f"unknown modality {modality}", offset=6)
    if has_geometry not in (0, 1):
        raise ParseError(f"bad geometry flag {has_geometry}", offset=7)
    pos = _HEADER.size
    geometry = None
    if has_geometry:
        if len(buf) < pos + _GEOMETRY.size:
            raise ParseError("truncated geometry block", offset=len(buf))
        geometry = Geometry(*_GEOMETRY.unpack_from(buf, pos))
        pos += _GEOMETRY.size
    body = len(buf) - pos
    n, extra = divmod(body, RECORD_DTYPE.itemsize)
    if extra:
        raise ParseError("truncated event record", offset=pos + n * RECORD_DTYPE.itemsize)
    rec = np.frombuffer(buf, dtype=RECORD_DTYPE, count=n, offset=pos)
    if n and rec["p"].max() > 1:
        i = int(np.flatnonzero(rec["p"] > 1)[0])
        raise ParseError("polarity byte must be 0 or 1", offset=pos + i * RECORD_DTYPE.itemsize + 12)
    return EventStream(rec["t"].astype(np.int64), rec["ch"].astype(np.int64), rec["p"],
                       channel_count, Modality(modality), geometry)


def write_stream(stream: EventStream, path) -> None:
    Path(path).write_bytes(encode_stream(stream))


def read_stream(path) -> EventStream:
    return decode_stream(Path(path).read_bytes())


_POSITIVE = {"1", "+", "+1", "p", "pos", "positive", "on", "true"}
_NEGATIVE = {"0", "-1", "-", "n", "neg", "negative", "off", "false"}


def _parse_polarity(token, line):
    t = token.strip().lower()
    if t in _POSITIVE:
        return Polarity.POSITIVE
    if t in _NEGATIVE:
        return Polarity.NEGATIVE
    raise ParseError(f"unrecognised polarity {token!r}", offset=line)


def read_csv_events(path, channel_count, modality=Modality.TACTILE, geometry=None) -> EventStream:
    """Import ``timestamp_us,channel,polarity`` rows.

    Polarity accepts ``1``/``+``/``pos`` for positive and ``0``/``-1``/``-``/``neg``
    for negative.  A header row is skipped if its first field is not numeric.
    ``offset`` on parse errors is the 1-based line number.
    """
    events = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and not row[0].strip().lstrip("-").isdigit():
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", offset=lineno)
            try:
                ts, ch = int(row[0]), int(row[1])
            except ValueError:
                raise ParseError(f"non-integer field in {row!r}", offset=lineno) from None
            events.append((ts, ch, _parse_polarity(row[2], lineno)))
    return EventStream.from_events(events, channel_count, modality, geometry)
