"""Samples on disk, stratified splits, synthetic event data and preprocessing."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import StratificationError, ValidationError
from .events import (
    EventStream, Geometry, Modality, US_PER_S, bin_events, crop_window, read_csv_events,
    read_stream, write_stream,
)

TACTILE_CHANNELS = 156
VISION_GEOMETRY = Geometry(200, 250, 2)
TACT_FILE, VIS_FILE, LABEL_FILE, MANIFEST = "tact.evst", "vis.evst", "label.txt", "manifest.csv"
META_KEYS = ("object_id", "level", "recording_id")


@dataclass(eq=False)
class Sample:
    tactile: EventStream
    vision: EventStream
    label: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.label < 0:
            raise ValidationError("label must be non-negative")

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (self.label == other.label and self.metadata == other.metadata
                and self.tactile == other.tactile and self.vision == other.vision)


def write_sample(sample: Sample, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_stream(sample.tactile, d / TACT_FILE)
    write_stream(sample.vision, d / VIS_FILE)
    lines = [str(sample.label)] + [f"{k}={v}" for k, v in sorted(sample.metadata.items())]
    (d / LABEL_FILE).write_text("\n".join(lines) + "\n")
    return d


def _read_label(path):
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValidationError(f"{path}: empty label file")
    try:
        label = int(lines[0])
    except ValueError:
        raise ValidationError(f"{path}: label {lines[0]!r} is not an integer") from None
    meta = {}
    for ln in lines[1:]:
        key, sep, value = ln.partition("=")
        if not sep:
            raise ValidationError(f"{path}: metadata line {ln!r} is not key=value")
        meta[key.strip()] = value.strip()
    return label, meta


def load_sample(path, format: str = "evst", tactile_channels: int = TACTILE_CHANNELS,
                vision_geometry=VISION_GEOMETRY) -> Sample:
    """Load one sample directory.

    ``format="evst"`` reads ``tact.evst``/``vis.evst``; ``format="csv"`` reads
    ``tact.csv``/``vis.csv`` (``timestamp_us,channel,polarity``) with the given
    channel layout.  Validation (sorted timestamps, channel bounds) happens in
    :class:`EventStream`.
    """
    d = Path(path)
    if format == "evst":
        tact, vis = read_stream(d / TACT_FILE), read_stream(d / VIS_FILE)
    elif format == "csv":
        g = Geometry(*vision_geometry)
        tact = read_csv_events(d / "tact.csv", tactile_channels, Modality.TACTILE)
        vis = read_csv_events(d / "vis.csv", g.size, Modality.VISION, g)
    else:
        raise ValueError(f"unknown sample format {format!r}")
    label, meta = _read_label(d / LABEL_FILE)
    return Sample(tact, vis, label, meta)


def write_dataset(samples: Sequence[Sample], root) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / MANIFEST, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("sample", "label") + META_KEYS)
        for i, s in enumerate(samples):
            name = f"sample_{i:04d}"
            write_sample(s, root / name)
            w.writerow([name, s.label] + [s.metadata.get(k, "") for k in META_KEYS])
    return root


def load_dataset(root, format: str = "evst") -> list:
    root = Path(root)
    with open(root / MANIFEST, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [load_sample(root / row["sample"], format) for row in rows]


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

@dataclass
class SplitPlan:
    """Fold index per sample; fold ``k`` is the test set of split ``k``."""

    folds: np.ndarray
    k: int

    def train_test(self, fold: int):
        if not 0 <= fold < self.k:
            raise IndexError(f"fold {fold} outside [0, {self.k})")
        idx = np.arange(self.folds.size)
        return idx[self.folds != fold], idx[self.folds == fold]


def stratified_kfold(labels, k: int = 5, seed: int = 0) -> SplitPlan:
    """Deal each class's shuffled samples round-robin across ``k`` folds.

    The dealing position carries over from one class to the next, so fold
    sizes stay within one of each other as well.
    """
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if np.any(counts < k):
        bad = classes[counts < k].tolist()
        raise StratificationError(f"classes {bad} have fewer than k={k} samples")
    rng = np.random.default_rng(seed)
    folds = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for c in classes:
        members = rng.permutation(np.flatnonzero(labels == c))
        folds[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    return SplitPlan(folds, k)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

@dataclass
class ClassPattern:
    """Per-channel Poisson rates (Hz) for one class.

    Rates apply inside ``window`` (seconds); ``None`` means the whole recording.
    ``onset`` delays the tactile stream, mimicking events that only begin on
    contact.
    """

    tactile_rates: np.ndarray
    vision_rates: Optional[np.ndarray] = None
    window: Optional[tuple] = None
    onset: float = 0.0


@dataclass
class SyntheticSpec:
    patterns: list
    duration: float
    tactile_channels: int = TACTILE_CHANNELS
    vision_geometry: Geometry = VISION_GEOMETRY
    background_rate: float = 0.0

    @property
    def n_classes(self):
        return len(self.patterns)


def poisson_events(rates, t0: float, t1: float, rng: np.random.Generator):
    """Homogeneous Poisson events per channel on ``[t0, t1)``; returns (timestamps_us, channels)."""
    rates = np.asarray(rates, dtype=np.float64)
    if np.any(rates < 0):
        raise ValueError("rates must be non-negative")
    lo, hi = int(round(t0 * US_PER_S)), int(round(t1 * US_PER_S))
    if hi <= lo:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    counts = rng.poisson(rates * (hi - lo) / US_PER_S)
    channels = np.repeat(np.arange(rates.size), counts)
    ts = rng.integers(lo, hi, size=channels.size)
    return ts, channels


def _stream(parts, channel_count, modality, geometry):
    ts = np.concatenate([p[0] for p in parts])
    ch = np.concatenate([p[1] for p in parts])
    order = np.lexsort((ch, ts))
    ts, ch = ts[order], ch[order]
    if geometry is None:
        # tactile channels alternate positive/negative per taxel
        pol = ch % 2
    else:
        pol = ch // (geometry.width * geometry.height)
    return EventStream(ts, ch, pol.astype(np.uint8), channel_count, modality, geometry)


def generate_synthetic(spec: SyntheticSpec, n_samples: int, seed: int = 0) -> list:
    """Class-balanced synthetic samples; sample ``i`` has label ``i % n_classes``."""
    g = Geometry(*spec.vision_geometry)
    seqs = np.random.SeedSequence(seed).spawn(n_samples)
    samples = []
    for i, seq in enumerate(seqs):
        rng = np.random.default_rng(seq)
        label = i % spec.n_classes
        pat = spec.patterns[label]
        w0, w1 = pat.window if pat.window is not None else (0.0, spec.duration)
        tact = [poisson_events(pat.tactile_rates, max(w0, pat.onset), w1, rng)]
        vis = []
        if pat.vision_rates is not None:
            vis.append(poisson_events(pat.vision_rates, w0, w1, rng))
        if spec.background_rate > 0:
            tact.append(poisson_events(np.full(spec.tactile_channels, spec.background_rate),
                                       0.0, spec.duration, rng))
        vis.append((np.zeros(0, np.int64), np.zeros(0, np.int64)))
        samples.append(Sample(
            _stream(tact, spec.tactile_channels, Modality.TACTILE, None),
            _stream(vis, g.size, Modality.VISION, g),
            label,
            {"object_id": f"class{label}", "level": "", "recording_id": str(i)},
        ))
    return samples


def _block_rates(n, active, rate):
    r = np.zeros(n)
    r[list(active)] = rate
    return r


def _vision_block_rates(geometry, x0, y0, size, rate):
    r = np.zeros(geometry.size)
    for p in range(geometry.polarities):
        for y in range(y0, y0 + size):
            base = (p * geometry.height + y) * geometry.width
            r[base + x0: base + x0 + size] = rate
    return r


def preset(name: str) -> SyntheticSpec:
    """Named synthetic dataset definitions used by tests and the CLI.

    ``two-class``: channels 0-9 versus 10-19, 150 ms.  ``slip-toy``: two classes
    with class-specific taxels and pixel blocks, 150 ms.  ``container-toy``:
    20 classes over 8.5 s with tactile onset at 2 s.  ``early-toy``: two
    classes whose discriminative taxels fire only in the first third, over
    shared background activity.
    """
    g = VISION_GEOMETRY
    if name == "two-class":
        return SyntheticSpec([ClassPattern(_block_rates(156, range(0, 10), 200.0)),
                              ClassPattern(_block_rates(156, range(10, 20), 200.0))], 0.15)
    if name == "slip-toy":
        pats = [ClassPattern(_block_rates(156, range(20 * c, 20 * c + 12), 200.0),
                             _vision_block_rates(g, 40 + 80 * c, 100, 16, 100.0))
                for c in range(2)]
        return SyntheticSpec(pats, 0.15, background_rate=5.0)
    if name == "container-toy":
        pats = [ClassPattern(_block_rates(156, range(7 * c, 7 * c + 7), 30.0),
                             _vision_block_rates(g, 8 * (c % 20), 8 * (c // 4), 8, 10.0),
                             onset=2.0)
                for c in range(20)]
        return SyntheticSpec(pats, 8.5, background_rate=1.0)
    if name == "early-toy":
        pats = [ClassPattern(_block_rates(156, range(10 * c, 10 * c + 10), 60.0),
                             window=(0.0, 0.05))
                for c in range(2)]
        return SyntheticSpec(pats, 0.15, background_rate=60.0)
    raise ValueError(f"unknown preset {name!r}")


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Preprocessing:
    """Crop-and-bin settings.  ``slip``/``container`` give the two task setups."""

    t_start: float = 0.0
    bin_width: float = 0.001
    n_bins: int = 150
    s_min_tactile: int = 1
    s_min_vision: int = 1
    merge_vision_polarity: bool = False

    @classmethod
    def container(cls):
        return cls(t_start=2.0, bin_width=0.02, n_bins=325)

    @classmethod
    def slip(cls):
        return cls(t_start=0.0, bin_width=0.001, n_bins=150)

    @property
    def t_end(self):
        return self.t_start + self.n_bins * self.bin_width


def sample_inputs(sample: Sample, prep: Preprocessing, modalities=("tactile", "vision")) -> dict:
    out = {}
    if "tactile" in modalities:
        s = crop_window(sample.tactile, prep.t_start, prep.t_end)
        out["tactile"] = bin_events(s, prep.bin_width, prep.n_bins, prep.s_min_tactile)
    if "vision" in modalities:
        s = crop_window(sample.vision, prep.t_start, prep.t_end)
        out["vision"] = bin_events(s, prep.bin_width, prep.n_bins, prep.s_min_vision,
                                   prep.merge_vision_polarity)
    return out


def prepare(samples, prep: Preprocessing, modalities=("tactile", "vision")) -> list:
    """``[(inputs, label), ...]`` ready for :func:`vtsnn.training.train`."""
    return [(sample_inputs(s, prep, modalities), s.label) for s in samples]
