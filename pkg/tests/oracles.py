"""Independent reference computations shared by the unit and acceptance tests."""

import math

import numpy as np

from vtsnn.snn import Branch, DenseLayer, LayerTrace, Network, SrmConfig
from vtsnn.training import LossSpec, SurrogateConfig, backward, loss_and_output_grad


def conv_loop(x, k):
    x = np.atleast_2d(x)
    out = np.zeros(x.shape)
    for r in range(x.shape[0]):
        for t in range(x.shape[1]):
            for j in range(min(len(k), t + 1)):
                out[r, t] += k[j] * x[r, t - j]
    return out


def histogram(stream, bin_width, n_bins, s_min):
    bin_us = round(bin_width * 1e6)
    counts = np.zeros((stream.channel_count, n_bins), dtype=np.int64)
    for e in stream:
        b = e.timestamp // bin_us
        if b < n_bins:
            counts[e.channel, b] += 1
    return (counts >= s_min).astype(np.uint8)


def count_loss(counts, target, true_count, false_count):
    desired = [true_count if n == target else false_count for n in range(len(counts))]
    return 0.5 * sum((float(c) - d) ** 2 for c, d in zip(counts, desired))


# --- single sub-threshold neuron ---------------------------------------------

def linear_membrane(w, x, cfg):
    """u = sum_i w_i (eps * x_i), the refractory-free membrane."""
    return w @ conv_loop(x, cfg.response_kernel.samples)


def central_difference(f, w, h):
    g = np.zeros_like(w)
    for i in np.ndindex(w.shape):
        wp, wm = w.copy(), w.copy()
        wp[i] += h
        wm[i] -= h
        g[i] = (f(wp) - f(wm)) / (2 * h)
    return g


# --- smoothed two-layer network ----------------------------------------------

def escape(u, threshold, scale, k):
    """Smooth spike expectation whose derivative is ``scale * exp(-k |u - threshold|)``."""
    d = u - threshold
    low = (scale / k) * np.exp(k * np.minimum(d, 0.0))
    high = (scale / k) * (2.0 - np.exp(-k * np.maximum(d, 0.0)))
    return np.where(d < 0, low, high)


class SmoothNetwork:
    """Two dense layers with spikes replaced by :func:`escape` and no refractory term."""

    def __init__(self, w1, w2, cfg=None, surrogate=None):
        self.cfg = cfg or SrmConfig()
        self.sur = surrogate or SurrogateConfig()
        self.k = self.sur.sharpness_for(self.cfg.threshold)
        self.net = Network([Branch("in", [DenseLayer(w1, self.cfg)])],
                           [DenseLayer(w2, self.cfg)])

    def forward(self, x, weights=None):
        w1, w2 = weights or self.net.get_weights()
        eps = self.cfg.response_kernel.samples
        phi, a = self.cfg.threshold, self.sur.scale
        u1 = w1 @ conv_loop(x, eps)
        s1 = escape(u1, phi, a, self.k)
        u2 = w2 @ conv_loop(s1, eps)
        s2 = escape(u2, phi, a, self.k)
        return [LayerTrace(u1, s1, x), LayerTrace(u2, s2, s1)]

    def loss(self, x, y, spec, weights=None):
        return loss_and_output_grad(self.forward(x, weights)[-1].spikes, y, spec)[0]

    def analytic(self, x, y, spec):
        traces = self.forward(x)
        _, g = loss_and_output_grad(traces[-1].spikes, y, spec)
        return backward(self.net, traces, g, self.sur)

    def numeric(self, x, y, spec, h=1e-6):
        w1, w2 = self.net.get_weights()
        g1 = central_difference(lambda w: self.loss(x, y, spec, [w, w2]), w1, h)
        g2 = central_difference(lambda w: self.loss(x, y, spec, [w1, w]), w2, h)
        return [g1, g2]


def smooth_sign_agreement(seed, n_in=6, n_hidden=4, n_out=2, n_bins=25):
    rng = np.random.default_rng(seed)
    x = (rng.random((n_in, n_bins)) < 0.3).astype(float)
    net = SmoothNetwork(rng.normal(0.4, 0.6, (n_hidden, n_in)),
                        rng.normal(0.4, 0.6, (n_out, n_hidden)))
    spec = LossSpec(4, 1)
    y = int(rng.integers(n_out))
    a = np.concatenate([g.ravel() for g in net.analytic(x, y, spec)])
    n = np.concatenate([g.ravel() for g in net.numeric(x, y, spec)])
    return a, n


def sign_agree(a, n, floor=1e-9):
    mask = (np.abs(a) > floor) | (np.abs(n) > floor)
    return np.sign(a[mask]) == np.sign(n[mask])


# --- quaternions ---------------------------------------------------------------

def rotation_matrix_angle(q0, qt):
    """Angle of R(q0)^T R(qt) from its trace, via scipy's rotation matrices."""
    from scipy.spatial.transform import Rotation

    def mat(q):
        w, x, y, z = q
        return Rotation.from_quat([x, y, z, w]).as_matrix()

    r = mat(q0).T @ mat(qt)
    c = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    s = np.linalg.norm([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]) / 2.0
    return math.atan2(s, c)


def onset_brute_force(series, baseline_len=120, quantile=0.98, persistence=12):
    """Scan frames one by one, counting exceedances with explicit loops."""
    series = list(series)
    base = series[:baseline_len]

    def exceeds(v):
        return sum(1 for b in base if b < v) / baseline_len > quantile

    for t in range(baseline_len, len(series)):
        end = min(t + persistence, len(series))
        if all(exceeds(series[j]) for j in range(t, end)):
            return t
    return None
