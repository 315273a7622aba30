"""Hot numeric kernels.

Every kernel has a numba implementation and a pure-numpy twin with the same
signature.  Set ``VTSNN_DISABLE_NUMBA=1`` before import to force the numpy
path (useful for debugging and for the comparison benchmark).
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

DISABLED = os.environ.get("VTSNN_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")
HAVE_NUMBA = numba is not None


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------

def bin_counts_numpy(timestamps, channels, bin_us, n_bins, n_channels):
    bins = timestamps // bin_us
    keep = bins < n_bins
    flat = channels[keep].astype(np.int64) * n_bins + bins[keep].astype(np.int64)
    counts = np.bincount(flat, minlength=n_channels * n_bins)
    return counts.reshape(n_channels, n_bins).astype(np.int32)


def bin_spikes_numpy(timestamps, channels, bin_us, n_bins, n_channels, s_min):
    bins = timestamps // bin_us
    keep = bins < n_bins
    flat = channels[keep] * n_bins + bins[keep]
    cells, counts = np.unique(flat, return_counts=True)
    out = np.zeros(n_channels * n_bins, dtype=np.uint8)
    out[cells[counts >= s_min]] = 1
    return out.reshape(n_channels, n_bins)


def causal_conv_numpy(x, kernel):
    n_t = x.shape[1]
    out = np.zeros(x.shape, dtype=np.float64)
    for k in range(min(kernel.shape[0], n_t)):
        if kernel[k] != 0.0:
            out[:, k:] += kernel[k] * x[:, : n_t - k]
    return out


def causal_corr_numpy(g, kernel):
    n_t = g.shape[1]
    out = np.zeros(g.shape, dtype=np.float64)
    for k in range(min(kernel.shape[0], n_t)):
        if kernel[k] != 0.0:
            out[:, : n_t - k] += kernel[k] * g[:, k:]
    return out


def pool_sum_numpy(data, polarities, height, width, kernel, stride, ph, pw):
    n_t = data.shape[1]
    img = data.reshape(polarities, height, width, n_t)
    if kernel == stride:
        cells = img[:, : ph * kernel, : pw * kernel, :].reshape(
            polarities, ph, kernel, pw, kernel, n_t)
        out = cells.sum(axis=(2, 4), dtype=np.int32)
    else:
        out = np.zeros((polarities, ph, pw, n_t), dtype=np.int32)
        for dy in range(kernel):
            for dx in range(kernel):
                out += img[:, dy: dy + stride * (ph - 1) + 1: stride,
                           dx: dx + stride * (pw - 1) + 1: stride, :]
    return out.reshape(polarities * ph * pw, n_t)


def srm_integrate_numpy(drive, refractory, threshold):
    n_out, n_t = drive.shape
    n_k = refractory.shape[0]
    membrane = np.empty((n_out, n_t), dtype=np.float64)
    spikes = np.zeros((n_out, n_t), dtype=np.uint8)
    # pending[:, t] accumulates refractory feedback from spikes already emitted
    pending = np.zeros((n_out, n_t + n_k), dtype=np.float64)
    for t in range(n_t):
        u = drive[:, t] + pending[:, t]
        membrane[:, t] = u
        fired = u >= threshold
        if fired.any():
            spikes[fired, t] = 1
            pending[fired, t : t + n_k] += refractory
    return membrane, spikes


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def bin_counts_numba(timestamps, channels, bin_us, n_bins, n_channels):
        counts = np.zeros((n_channels, n_bins), dtype=np.int32)
        for i in range(timestamps.shape[0]):
            b = timestamps[i] // bin_us
            if b < n_bins:
                counts[channels[i], b] += 1
        return counts

    @numba.njit(cache=True, nogil=True)
    def bin_spikes_numba(timestamps, channels, bin_us, n_bins, n_channels, s_min):
        # saturating uint8 counters; callers route s_min > 255 to bin_counts
        out = np.zeros((n_channels, n_bins), dtype=np.uint8)
        for i in range(timestamps.shape[0]):
            b = timestamps[i] // bin_us
            if b < n_bins:
                c = channels[i]
                if out[c, b] < 255:
                    out[c, b] += 1
        for c in range(n_channels):
            for b in range(n_bins):
                v = out[c, b]
                if v != 0:
                    out[c, b] = 1 if v >= s_min else 0
        return out

    @numba.njit(cache=True, nogil=True)
    def causal_conv_numba(x, kernel):
        n_r, n_t = x.shape
        n_k = kernel.shape[0]
        out = np.zeros((n_r, n_t), dtype=np.float64)
        for r in range(n_r):
            for s in range(n_t):
                v = x[r, s]
                if v == 0.0:
                    continue
                stop = min(n_k, n_t - s)
                for k in range(stop):
                    out[r, s + k] += kernel[k] * v
        return out

    @numba.njit(cache=True, nogil=True)
    def causal_corr_numba(g, kernel):
        n_r, n_t = g.shape
        n_k = kernel.shape[0]
        out = np.zeros((n_r, n_t), dtype=np.float64)
        for r in range(n_r):
            for t in range(n_t):
                v = g[r, t]
                if v == 0.0:
                    continue
                stop = min(n_k, t + 1)
                for k in range(stop):
                    out[r, t - k] += kernel[k] * v
        return out

    @numba.njit(cache=True, nogil=True)
    def pool_sum_numba(data, polarities, height, width, kernel, stride, ph, pw):
        n_t = data.shape[1]
        out = np.zeros((polarities * ph * pw, n_t), dtype=np.int32)
        for p in range(polarities):
            for y in range(height):
                for x in range(width):
                    row = data[(p * height + y) * width + x]
                    for cy in range(max(0, (y - kernel) // stride + 1), min(ph, y // stride + 1)):
                        if y - cy * stride >= kernel:
                            continue
                        for cx in range(max(0, (x - kernel) // stride + 1),
                                        min(pw, x // stride + 1)):
                            if x - cx * stride >= kernel:
                                continue
                            dst = (p * ph + cy) * pw + cx
                            for t in range(n_t):
                                if row[t]:
                                    out[dst, t] += row[t]
        return out

    @numba.njit(cache=True, nogil=True)
    def srm_integrate_numba(drive, refractory, threshold):
        n_out, n_t = drive.shape
        n_k = refractory.shape[0]
        membrane = np.empty((n_out, n_t), dtype=np.float64)
        spikes = np.zeros((n_out, n_t), dtype=np.uint8)
        pending = np.zeros(n_t + n_k, dtype=np.float64)
        for n in range(n_out):
            pending[:] = 0.0
            for t in range(n_t):
                u = drive[n, t] + pending[t]
                membrane[n, t] = u
                if u >= threshold:
                    spikes[n, t] = 1
                    for k in range(n_k):
                        pending[t + k] += refractory[k]
        return membrane, spikes


def _pick(name):
    if HAVE_NUMBA and not DISABLED:
        return globals()[name + "_numba"]
    return globals()[name + "_numpy"]


BACKEND = "numba" if HAVE_NUMBA and not DISABLED else "numpy"


def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


_bin_counts = _pick("bin_counts")
_bin_spikes = _pick("bin_spikes")
_causal_conv = _pick("causal_conv")
_causal_corr = _pick("causal_corr")
_srm_integrate = _pick("srm_integrate")
_pool_sum = _pick("pool_sum")


def bin_counts(timestamps, channels, bin_us, n_bins, n_channels):
    """Per-channel event counts in half-open bins of ``bin_us`` microseconds."""
    ts = np.ascontiguousarray(timestamps, dtype=np.int64)
    ch = np.ascontiguousarray(channels, dtype=np.int64)
    return _bin_counts(ts, ch, np.int64(bin_us), int(n_bins), int(n_channels))


def bin_spikes(timestamps, channels, bin_us, n_bins, n_channels, s_min):
    """Binary ``[channel, bin]`` array: 1 where a bin holds at least ``s_min >= 1`` events."""
    ts = np.ascontiguousarray(timestamps, dtype=np.int64)
    ch = np.ascontiguousarray(channels, dtype=np.int64)
    if s_min > 255:
        return (bin_counts(ts, ch, bin_us, n_bins, n_channels) >= s_min).astype(np.uint8)
    return _bin_spikes(ts, ch, np.int64(bin_us), int(n_bins), int(n_channels), int(s_min))


def causal_conv(x, kernel):
    """Row-wise causal convolution truncated to the input length."""
    return _causal_conv(_as_f64(np.atleast_2d(x)), _as_f64(kernel))


def causal_corr(g, kernel):
    """Adjoint of :func:`causal_conv` (time-reversed correlation)."""
    return _causal_corr(_as_f64(np.atleast_2d(g)), _as_f64(kernel))


def pool_sum(data, geometry, kernel, stride, pooled_height, pooled_width):
    """Spike counts per pooling cell for a ``[channel, step]`` array in vision layout."""
    polarities, height, width = geometry[2], geometry[1], geometry[0]
    return _pool_sum(np.ascontiguousarray(data), int(polarities), int(height), int(width),
                     int(kernel), int(stride), int(pooled_height), int(pooled_width))


def srm_integrate(drive, refractory, threshold):
    """Threshold ``drive`` step by step, feeding back ``refractory`` after each spike.

    The spike emitted at step t contributes ``refractory[k]`` to step t + k, so
    ``refractory[0]`` should be zero for the no-same-step-suppression rule.
    """
    return _srm_integrate(_as_f64(drive), _as_f64(refractory), float(threshold))
