"""Lift and slip onset annotation from motion-capture pose traces."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ParseError, ValidationError

UNIT_TOL = 1e-6
BASELINE_FRAMES = 120
QUANTILE = 0.98
PERSISTENCE = 12


@dataclass(frozen=True, eq=False)
class PoseTrace:
    """Timestamps (s), positions ``[n, 3]`` (m) and unit quaternions ``[n, 4]`` as (w, x, y, z)."""

    timestamps: np.ndarray
    positions: np.ndarray
    orientations: np.ndarray
    frame_rate: float = 120.0

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=np.float64)
        p = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        q = np.asarray(self.orientations, dtype=np.float64).reshape(-1, 4)
        if not (t.shape[0] == p.shape[0] == q.shape[0]):
            raise ValidationError("timestamps, positions and orientations differ in length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValidationError("timestamps must be strictly increasing")
        bad = np.abs(np.linalg.norm(q, axis=1) - 1.0) > UNIT_TOL
        if np.any(bad):
            raise ValidationError(f"frame {int(np.flatnonzero(bad)[0])}: quaternion is not unit-norm")
        if not self.frame_rate > 0:
            raise ValidationError("frame rate must be positive")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "orientations", q)

    def __len__(self):
        return self.timestamps.size

    def rotation_angles(self) -> np.ndarray:
        """Angle of every frame's orientation relative to the first frame."""
        return quaternion_angle(self.orientations[0], self.orientations)


def _check_unit(q):
    n = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(n - 1.0) > UNIT_TOL):
        raise ValidationError("quaternion is not unit-norm")


def quaternion_angle(q0, qt):
    """Rotation angle between two orientations, ``arccos(2 <q0, qt>^2 - 1)`` in ``[0, pi]``.

    ``qt`` may be a single quaternion or an ``[n, 4]`` array.  The arccos form
    loses about 1e-8 rad near zero, so the same angle is evaluated as
    ``2 atan2(|vec(q0* qt)|, |<q0, qt>|)``.  Flipping the sign of either
    quaternion leaves the result unchanged.
    """
    q0 = np.asarray(q0, dtype=np.float64)
    qt = np.asarray(qt, dtype=np.float64)
    _check_unit(q0)
    _check_unit(qt)
    dot = qt @ q0
    w0, v0 = q0[0], q0[1:]
    wt, vt = qt[..., :1], qt[..., 1:]
    # vector part of conj(q0) * qt
    vec = w0 * vt - wt * v0 - np.cross(v0, vt)
    theta = 2.0 * np.arctan2(np.linalg.norm(vec, axis=-1), np.abs(dot))
    return float(theta) if np.ndim(theta) == 0 else theta


def required_exceedances(baseline_len: int, quantile: float) -> int:
    """Smallest number of baseline frames a value must beat so the fraction exceeds ``quantile``."""
    # 0.98 * 120 = 117.6 -> 118; an exact product still needs one more
    need = math.floor(quantile * baseline_len + 1e-9) + 1
    return min(need, baseline_len + 1)


def exceedance_counts(series, baseline_len: int = BASELINE_FRAMES) -> np.ndarray:
    """For every frame, how many baseline frames lie strictly below it."""
    x = np.asarray(series, dtype=np.float64)
    base = np.sort(x[:baseline_len])
    return np.searchsorted(base, x, side="left")


def detect_onset(series, baseline_len: int = BASELINE_FRAMES, quantile: float = QUANTILE,
                 persistence: int = PERSISTENCE) -> Optional[int]:
    """First frame (0-based, at or after the baseline) that leaves the baseline distribution.

    Frame ``j`` qualifies when more than ``quantile`` of the first
    ``baseline_len`` frames are strictly below ``series[j]`` and the same holds
    for the following ``persistence - 1`` frames (or until the series ends).
    Returns ``None`` when no frame qualifies.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size <= baseline_len:
        raise ValueError(f"series of length {x.size} is not longer than the baseline")
    above = exceedance_counts(x, baseline_len) >= required_exceedances(baseline_len, quantile)
    above[:baseline_len] = False
    run = 0
    # scan backwards: run = length of the qualifying streak starting at j
    runs = np.zeros(x.size, dtype=np.int64)
    for j in range(x.size - 1, baseline_len - 1, -1):
        run = run + 1 if above[j] else 0
        runs[j] = run
    for j in range(baseline_len, x.size):
        if above[j] and runs[j] >= min(persistence, x.size - j):
            return j
    return None


def lift_frame(trace: PoseTrace, **kw) -> Optional[int]:
    return detect_onset(trace.positions[:, 2], **kw)


def slip_frame(trace: PoseTrace, **kw) -> Optional[int]:
    return detect_onset(trace.rotation_angles(), **kw)


def slip_lag(trace: PoseTrace, **kw) -> Optional[float]:
    """Seconds between lift onset and rotation onset, or ``None`` if either is missing."""
    f_lift, f_slip = lift_frame(trace, **kw), slip_frame(trace, **kw)
    if f_lift is None or f_slip is None:
        return None
    return (f_slip - f_lift) / trace.frame_rate


# ---------------------------------------------------------------------------
# synthetic traces and CSV
# ---------------------------------------------------------------------------

def axis_angle_quaternion(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[math.cos(angle / 2)], math.sin(angle / 2) * axis])


def quaternion_multiply(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def synthetic_trace(n_frames: int, lift_at: int, slip_at: int, noise: float = 1e-4,
                    angle_noise: float = 1e-4, step: float = 10.0, frame_rate: float = 120.0,
                    rng: Optional[np.random.Generator] = None) -> PoseTrace:
    """Pose trace with uniform noise and programmed lift and rotation steps.

    Height noise is uniform in ``[-noise, noise]``; from ``lift_at`` on the
    height is raised by ``step * noise``.  Orientation jitter is a random-axis
    rotation of up to ``angle_noise`` rad; from ``slip_at`` on the object is
    additionally rotated by ``step * angle_noise`` about a fixed axis.
    """
    rng = rng or np.random.default_rng()
    t = np.arange(n_frames) / frame_rate
    pos = np.zeros((n_frames, 3))
    pos[:, 2] = 0.1 + rng.uniform(-noise, noise, n_frames)
    pos[lift_at:, 2] += step * noise
    base = axis_angle_quaternion(rng.normal(size=3), rng.uniform(0, math.pi))
    slip_axis = rng.normal(size=3)
    quats = np.empty((n_frames, 4))
    for i in range(n_frames):
        # reference frame carries no jitter so frame angles measure jitter directly
        jitter = 0.0 if i == 0 else rng.uniform(0, angle_noise)
        q = quaternion_multiply(base, axis_angle_quaternion(rng.normal(size=3), jitter))
        if i >= slip_at:
            q = quaternion_multiply(q, axis_angle_quaternion(slip_axis, step * angle_noise))
        quats[i] = q / np.linalg.norm(q)
    return PoseTrace(t, pos, quats, frame_rate)


POSE_COLUMNS = ("timestamp", "px", "py", "pz", "qw", "qx", "qy", "qz")


def read_pose_csv(path, frame_rate: float = 120.0) -> PoseTrace:
    """Read ``timestamp,px,py,pz,qw,qx,qy,qz`` rows (header optional)."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if lineno == 1 and row[0].strip().lower() == "timestamp":
                continue
            if len(row) != 8:
                raise ParseError(f"expected 8 fields, got {len(row)}", offset=lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ParseError(f"non-numeric field in {row!r}", offset=lineno) from None
    a = np.array(rows, dtype=np.float64).reshape(-1, 8)
    return PoseTrace(a[:, 0], a[:, 1:4], a[:, 4:8], frame_rate)


def write_pose_csv(trace: PoseTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(POSE_COLUMNS)
        for t, p, q in zip(trace.timestamps, trace.positions, trace.orientations):
            w.writerow([repr(float(v)) for v in (t, *p, *q)])


def write_annotations(rows, path) -> None:
    """``rows`` are ``(recording_id, f_lift, f_slip, lag_s)``; missing values are left empty."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("recording_id", "f_lift", "f_slip", "lag_s"))
        for rec, f_lift, f_slip, lag in rows:
            w.writerow([rec, "" if f_lift is None else f_lift, "" if f_slip is None else f_slip,
                        "" if lag is None else f"{lag:.6f}"])


def annotate_file(path, frame_rate: float = 120.0, **kw):
    trace = read_pose_csv(path, frame_rate)
    f_lift, f_slip = lift_frame(trace, **kw), slip_frame(trace, **kw)
    lag = None if f_lift is None or f_slip is None else (f_slip - f_lift) / trace.frame_rate
    return Path(path).stem, f_lift, f_slip, lag
