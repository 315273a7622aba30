import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vtsnn.errors import LayoutError, ShapeError
from vtsnn.events import Geometry, SpikeTensor
from vtsnn.snn import (
    Branch, DenseLayer, Kernel, Network, PoolLayer, SrmConfig, concat_spikes, kernel_convolve,
    layer_forward, network_forward, srm_forward, sum_pool_forward,
)

CFG = SrmConfig()


def eps(t, tau=5.0):
    return (t / tau) * math.exp(1 - t / tau) if t >= 0 else 0.0


def step_through(w, input_train, cfg=CFG):
    """Scalar one-neuron simulation straight from the defining sums."""
    T = len(input_train)
    nu = cfg.refractory_kernel.samples
    u, out = [], []
    for t in range(T):
        drive = sum(w * eps(t - k, cfg.tau_response / cfg.sim_step)
                    for k in range(t + 1) if input_train[k])
        refr = sum(nu[t - k] for k in range(t) if out[k] and t - k < len(nu))
        u.append(drive + refr)
        out.append(1 if u[-1] >= cfg.threshold else 0)
    return np.array(u), np.array(out)


def tensor(a, bin_width=1.0, geometry=None):
    return SpikeTensor(np.asarray(a, dtype=np.uint8), bin_width, geometry)


# --- kernels ----------------------------------------------------------------

def test_response_kernel_shape():
    k = CFG.response_kernel.samples
    assert k[0] == 0.0
    assert np.argmax(k) == 5 and k[5] == pytest.approx(1.0)
    assert np.all(k >= 0)
    assert abs(k[-1]) >= 1e-6 and eps(len(k), 5.0) < 1e-6
    assert np.all(np.diff(k[5:]) < 0)


def test_refractory_kernel_non_positive():
    k = CFG.refractory_kernel.samples
    assert np.all(k <= 0)
    assert k.min() == pytest.approx(-2 * CFG.threshold)


def test_for_step_scales_time_constants():
    cfg = SrmConfig.for_step(0.001)
    assert cfg.tau_response == pytest.approx(0.005)
    np.testing.assert_allclose(cfg.response_kernel.samples, CFG.response_kernel.samples)


@pytest.mark.parametrize("field", ["threshold", "tau_response", "tau_refractory", "sim_step"])
def test_config_rejects_non_positive(field):
    with pytest.raises(ValueError):
        SrmConfig(**{field: 0.0})


def test_impulse_returns_kernel():
    k = CFG.response_kernel
    x = np.zeros(150)
    x[0] = 1
    out = kernel_convolve(x, k)
    np.testing.assert_allclose(out[:len(k)], k.samples)
    assert not out[len(k):].any()


def test_zero_signal():
    assert not kernel_convolve(np.zeros(40), CFG.response_kernel).any()


def test_convolution_double_loop(rng):
    x = rng.normal(size=150)
    k = CFG.response_kernel.samples
    want = [sum(k[j] * x[t - j] for j in range(min(len(k), t + 1))) for t in range(150)]
    np.testing.assert_allclose(kernel_convolve(x, Kernel(k)), want, rtol=1e-12, atol=1e-14)


# --- srm_forward --------------------------------------------------------------

def test_zero_input_zero_output():
    tr = srm_forward(DenseLayer(np.ones((3, 4))), tensor(np.zeros((4, 20))))
    assert not tr.membrane.any() and not tr.spikes.any()


def test_sub_threshold_membrane_is_w_eps():
    w = 1.2  # peak w * eps = 1.2 < 1.25
    x = np.zeros((1, 40))
    x[0, 3] = 1
    tr = srm_forward(DenseLayer([[w]]), tensor(x))
    want = [w * eps(t - 3) for t in range(40)]
    want = [v if abs(v) > 0 and t - 3 < len(CFG.response_kernel) else 0.0
            for t, v in enumerate(want)]
    np.testing.assert_allclose(tr.membrane[0], want, atol=1e-12)
    assert not tr.spikes.any()


def test_crossing_spike_and_refractory_step_through():
    w = 3.0
    x = np.zeros((1, 40))
    x[0, 0] = 1
    tr = srm_forward(DenseLayer([[w]]), tensor(x))
    u, o = step_through(w, x[0])
    first = next(t for t in range(40) if w * eps(t) >= CFG.threshold)
    assert np.flatnonzero(tr.spikes[0])[0] == first
    np.testing.assert_allclose(tr.membrane[0], u, atol=1e-12)
    np.testing.assert_array_equal(tr.spikes[0], o)
    assert tr.spikes[0].sum() == 1  # the refractory dip holds the rest below threshold


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 6.0), st.lists(st.booleans(), min_size=30, max_size=30))
def test_scalar_oracle_random_trains(w, train):
    tr = srm_forward(DenseLayer([[w]]), tensor([train]))
    u, o = step_through(w, np.array(train))
    np.testing.assert_allclose(tr.membrane[0], u, atol=1e-9)
    np.testing.assert_array_equal(tr.spikes[0], o)


def test_dense_shapes(rng):
    x = tensor(rng.random((156, 150)) < 0.05)
    tr = srm_forward(DenseLayer(rng.normal(size=(32, 156))), x)
    assert tr.membrane.shape == (32, 150) and tr.spikes.shape == (32, 150)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        srm_forward(DenseLayer(np.zeros((2, 5))), tensor(np.zeros((4, 10))))


def test_weights_must_be_finite():
    with pytest.raises(ValueError):
        DenseLayer([[np.nan]])


def test_threshold_consistency(rng):
    x = tensor(rng.random((20, 100)) < 0.2)
    tr = srm_forward(DenseLayer(rng.normal(0.3, 1, size=(10, 20))), x)
    assert np.array_equal(tr.spikes.astype(bool), tr.membrane >= CFG.threshold)


def test_sub_threshold_linearity(rng):
    x = tensor(rng.random((20, 60)) < 0.2)
    w = rng.normal(0, 0.5, size=(5, 20))
    a = srm_forward(DenseLayer(w), x)
    b = srm_forward(DenseLayer(2 * w), x)
    for n in range(5):
        first = np.flatnonzero(b.spikes[n])
        stop = first[0] if first.size else 60
        np.testing.assert_allclose(b.membrane[n, :stop], 2 * a.membrane[n, :stop], atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 59))
def test_causality_by_truncation(seed, cut):
    r = np.random.default_rng(seed)
    x = r.random((8, 60)) < 0.3
    layer = DenseLayer(r.normal(0.5, 1, size=(4, 8)))
    full = srm_forward(layer, tensor(x))
    part = srm_forward(layer, tensor(x[:, :cut]))
    np.testing.assert_array_equal(full.spikes[:, :cut], part.spikes)
    np.testing.assert_allclose(full.membrane[:, :cut], part.membrane, atol=1e-12)


def test_refractory_monotonicity(rng):
    nu = CFG.refractory_kernel.samples
    o = (rng.random(80) < 0.1).astype(float)
    extra = o.copy()
    extra[10] = 1
    conv = lambda s: np.convolve(s, nu)[:80]
    assert np.all(conv(extra) <= conv(o) + 1e-15)


# --- pooling ------------------------------------------------------------------

def test_pooled_grid_dimensions():
    layer = PoolLayer((200, 250, 2), 4, 4)
    assert layer.pooled_geometry == Geometry(50, 62, 2)
    assert layer.n_out == 6200


def test_single_pixel_triggers_pool():
    g = Geometry(8, 8, 2)
    x = np.zeros((g.size, 20))
    x[(1 * 8 + 5) * 8 + 6, 2] = 1  # negative plane, y=5, x=6 -> cell (1, 1)
    cfg = SrmConfig(threshold=1.0)
    tr = sum_pool_forward(tensor(x, geometry=g), 4, 4, cfg, gain=1.1)
    cell = (1 * 2 + 1) * 2 + 1
    assert tr.spikes[cell].sum() == 1
    assert tr.spikes.sum() == 1
    assert tr.geometry == Geometry(2, 2, 2)


def test_pool_counts_oracle(rng):
    g = Geometry(11, 9, 2)
    x = (rng.random((g.size, 5)) < 0.3).astype(np.uint8)
    layer = PoolLayer(g, 3, 2)
    pg = layer.pooled_geometry
    img = x.reshape(2, 9, 11, 5)
    want = np.zeros((pg.size, 5))
    for p in range(2):
        for py in range(pg.height):
            for px in range(pg.width):
                cell = img[p, py * 2: py * 2 + 3, px * 2: px * 2 + 3].sum(axis=(0, 1))
                want[(p * pg.height + py) * pg.width + px] = cell
    np.testing.assert_array_equal(layer.pool_counts(x), want)


def test_pool_zero_in_zero_out():
    g = Geometry(8, 8, 2)
    tr = sum_pool_forward(tensor(np.zeros((g.size, 10)), geometry=g))
    assert not tr.spikes.any()


def test_pool_needs_geometry():
    with pytest.raises(LayoutError):
        sum_pool_forward(tensor(np.zeros((16, 10))))


# --- network ------------------------------------------------------------------

def _two_branch(rng):
    a = Branch("a", [DenseLayer(rng.normal(0.5, 1, (6, 10))), DenseLayer(rng.normal(0.5, 1, (5, 6)))])
    b = Branch("b", [DenseLayer(rng.normal(0.5, 1, (3, 4)))])
    head = [DenseLayer(rng.normal(0.5, 1, (2, 8)))]
    return Network([a, b], head)


def test_network_concat_and_compose(rng):
    net = _two_branch(rng)
    xa = tensor(rng.random((10, 50)) < 0.3)
    xb = tensor(rng.random((4, 50)) < 0.3)
    traces = network_forward(net, {"a": xa, "b": xb})
    ya = layer_forward(net.branches[0].layers[1],
                       layer_forward(net.branches[0].layers[0], xa).output_spikes)
    yb = layer_forward(net.branches[1].layers[0], xb)
    cat = concat_spikes([ya.output_spikes, yb.output_spikes])
    assert cat.channel_count == 8
    head = layer_forward(net.head[0], cat)
    np.testing.assert_array_equal(traces[-1].spikes, head.spikes)
    assert len(traces) == 4


def test_single_branch_matches_direct(rng):
    layers = [DenseLayer(rng.normal(0.5, 1, (6, 10))), DenseLayer(rng.normal(0.5, 1, (3, 6)))]
    net = Network([Branch("t", layers[:1])], layers[1:])
    x = tensor(rng.random((10, 50)) < 0.3)
    direct = layer_forward(layers[1], layer_forward(layers[0], x).output_spikes)
    np.testing.assert_array_equal(network_forward(net, x)[-1].spikes, direct.spikes)


def test_network_shape_errors(rng):
    with pytest.raises(ShapeError):
        Network([Branch("a", [DenseLayer(np.zeros((3, 4)))])], [DenseLayer(np.zeros((2, 5)))])
    net = _two_branch(rng)
    with pytest.raises(ShapeError):
        network_forward(net, {"a": tensor(np.zeros((10, 5)))})
    with pytest.raises(ShapeError):
        network_forward(net, [tensor(np.zeros((10, 5)))])


def test_weights_round_trip(rng):
    net = _two_branch(rng)
    w = net.get_weights()
    net.set_weights([np.zeros_like(m) for m in w])
    assert all(not layer.weights.any() for layer in net.trainable_layers())
    with pytest.raises(ShapeError):
        net.set_weights(w[:-1])
