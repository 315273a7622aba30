"""Spike Response Model layers and their forward pass.

Membrane potential of output neuron ``n`` at step ``t``::

    u[n, t] = sum_i W[n, i] * (eps * s_i)[t] + (nu * o_n)[t]

where ``*`` is causal convolution, ``eps`` the response kernel and ``nu`` the
(non-positive) refractory kernel.  Only spikes emitted before ``t`` enter the
refractory term, so a single sweep over time suffices.  A neuron spikes when
``u >= threshold``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import _accel
from .errors import LayoutError, ShapeError
from .events import Geometry, SpikeTensor

KERNEL_CUTOFF = 1e-6
DEFAULT_THRESHOLD = 1.25
DEFAULT_TAU_STEPS = 5.0
DEFAULT_POOL_GAIN = 1.1


@dataclass(frozen=True)
class Kernel:
    """Causal kernel sampled at non-negative integer steps."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64).reshape(-1)
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def support_length(self) -> int:
        return self.samples.size

    def __len__(self):
        return self.samples.size


def _alpha_samples(tau_steps: float, scale: float) -> np.ndarray:
    # (k / tau) * exp(1 - k / tau), cut once past the peak and below the cutoff
    out = []
    k = 0
    while True:
        x = k / tau_steps
        v = scale * x * math.exp(1.0 - x)
        if k > tau_steps and abs(v) < KERNEL_CUTOFF:
            break
        out.append(v)
        k += 1
    return np.array(out)


@dataclass(frozen=True)
class SrmConfig:
    """Neuron parameters.  Time constants are in seconds, like ``sim_step``.

    The defaults (threshold 1.25, both time constants equal to five simulation
    steps) are practical choices rather than published values.
    """

    threshold: float = DEFAULT_THRESHOLD
    tau_response: float = DEFAULT_TAU_STEPS
    tau_refractory: float = DEFAULT_TAU_STEPS
    sim_step: float = 1.0

    def __post_init__(self):
        for name in ("threshold", "tau_response", "tau_refractory", "sim_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def for_step(cls, sim_step: float, threshold: float = DEFAULT_THRESHOLD,
                 tau_steps: float = DEFAULT_TAU_STEPS) -> "SrmConfig":
        return cls(threshold, tau_steps * sim_step, tau_steps * sim_step, sim_step)

    @cached_property
    def response_kernel(self) -> Kernel:
        """Unit-peak alpha kernel ``(t/tau) exp(1 - t/tau)``."""
        return Kernel(_alpha_samples(self.tau_response / self.sim_step, 1.0))

    @cached_property
    def refractory_kernel(self) -> Kernel:
        """``-2 * threshold * (t/tau) exp(1 - t/tau)``; zero at t = 0."""
        return Kernel(_alpha_samples(self.tau_refractory / self.sim_step, -2.0 * self.threshold))


def kernel_convolve(signal, kernel: Kernel) -> np.ndarray:
    """Causal convolution truncated to the signal length.

    Accepts a 1-D sequence or a 2-D ``[rows, steps]`` array (row-wise).
    """
    x = np.asarray(signal, dtype=np.float64)
    out = _accel.causal_conv(x, kernel.samples)
    return out[0] if x.ndim == 1 else out


@dataclass(eq=False)
class LayerTrace:
    """Everything one layer's forward pass produced.

    ``inputs`` keeps the layer's input spikes for the backward pass.
    ``spikes`` is normally a ``uint8`` array; the backward pass only reads
    ``spikes`` and ``inputs`` as numbers.
    """

    membrane: np.ndarray
    spikes: np.ndarray
    inputs: np.ndarray
    bin_width: float = 1.0
    geometry: Optional[Geometry] = None

    @property
    def output_spikes(self) -> SpikeTensor:
        if self.spikes.dtype == np.uint8:
            return SpikeTensor.wrap(self.spikes.copy(), self.bin_width, self.geometry)
        return SpikeTensor(self.spikes, self.bin_width, self.geometry)


class DenseLayer:
    """Fully connected SRM layer with a trainable ``[n_out, n_in]`` weight matrix."""

    trainable = True

    def __init__(self, weights, config: Optional[SrmConfig] = None):
        w = np.array(weights, dtype=np.float64)
        if w.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        self.weights = w
        self.config = config or SrmConfig()

    @classmethod
    def zeros(cls, n_in, n_out, config=None):
        return cls(np.zeros((n_out, n_in)), config)

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def output_geometry(self, geometry):
        return None

    def __repr__(self):
        return f"DenseLayer({self.n_in} -> {self.n_out})"


class PoolLayer:
    """Sum pooling over square receptive fields, one SRM neuron per cell.

    Each pooled neuron sees the unweighted spike count of its cell, scaled by
    ``gain``.  Cells that would run past the image edge are dropped, so the
    pooled width is ``(width - kernel) // stride + 1`` (same for height).
    Polarity planes are pooled separately.
    """

    trainable = False

    def __init__(self, geometry, kernel: int = 4, stride: int = 4,
                 gain: float = DEFAULT_POOL_GAIN, config: Optional[SrmConfig] = None):
        self.geometry = Geometry(*geometry)
        if kernel <= 0 or stride <= 0:
            raise ValueError("kernel and stride must be positive")
        if kernel > min(self.geometry.width, self.geometry.height):
            raise LayoutError(f"pool kernel {kernel} larger than image {tuple(self.geometry)}")
        self.kernel = kernel
        self.stride = stride
        self.gain = float(gain)
        self.config = config or SrmConfig()

    @property
    def pooled_geometry(self) -> Geometry:
        g = self.geometry
        return Geometry((g.width - self.kernel) // self.stride + 1,
                        (g.height - self.kernel) // self.stride + 1, g.polarities)

    @property
    def n_in(self) -> int:
        return self.geometry.size

    @property
    def n_out(self) -> int:
        return self.pooled_geometry.size

    def output_geometry(self, geometry):
        return self.pooled_geometry

    def pool_counts(self, data: np.ndarray) -> np.ndarray:
        """Per-cell spike counts, ``[n_out, n_bins]`` in the pooled channel layout."""
        pg = self.pooled_geometry
        counts = _accel.pool_sum(data, self.geometry, self.kernel, self.stride,
                                 pg.height, pg.width)
        return counts.astype(np.float64)

    def __repr__(self):
        return f"PoolLayer({tuple(self.geometry)}, k={self.kernel}, s={self.stride})"


def _check_input(layer, tensor):
    if tensor.channel_count != layer.n_in:
        raise ShapeError(f"{layer!r} expects {layer.n_in} input channels, "
                         f"got {tensor.channel_count}")


def srm_forward(layer: DenseLayer, input: SpikeTensor) -> LayerTrace:
    _check_input(layer, input)
    cfg = layer.config
    eps = cfg.response_kernel.samples
    w = layer.weights
    # filtering is linear, so filter whichever side of W has fewer rows
    if layer.n_out < layer.n_in:
        drive = _accel.causal_conv(w @ input.data, eps)
    else:
        drive = w @ _accel.causal_conv(input.data, eps)
    membrane, spikes = _accel.srm_integrate(drive, cfg.refractory_kernel.samples, cfg.threshold)
    return LayerTrace(membrane, spikes, input.data, input.bin_width)


def dense_spiking_forward(layer: DenseLayer, input: SpikeTensor) -> LayerTrace:
    return srm_forward(layer, input)


def sum_pool_forward(input: SpikeTensor, kernel: int = 4, stride: int = 4,
                     config: Optional[SrmConfig] = None, gain: float = DEFAULT_POOL_GAIN,
                     layer: Optional[PoolLayer] = None) -> LayerTrace:
    if layer is None:
        if input.geometry is None:
            raise LayoutError("sum pooling needs a tensor with vision geometry")
        layer = PoolLayer(input.geometry, kernel, stride, gain, config)
    _check_input(layer, input)
    cfg = layer.config
    counts = layer.pool_counts(input.data)
    response = _accel.causal_conv(counts, cfg.response_kernel.samples)
    membrane, spikes = _accel.srm_integrate(layer.gain * response,
                                            cfg.refractory_kernel.samples, cfg.threshold)
    return LayerTrace(membrane, spikes, input.data, input.bin_width, layer.pooled_geometry)


def layer_forward(layer, input: SpikeTensor) -> LayerTrace:
    if isinstance(layer, PoolLayer):
        return sum_pool_forward(input, layer=layer)
    return srm_forward(layer, input)


@dataclass
class Branch:
    """One modality encoder: a named chain of layers fed by one input tensor."""

    name: str
    layers: list

    @property
    def n_in(self):
        return self.layers[0].n_in

    @property
    def n_out(self):
        return self.layers[-1].n_out


@dataclass
class Network:
    """Encoder branches whose outputs are concatenated (in branch order) into a head."""

    branches: list
    head: list = field(default_factory=list)

    def __post_init__(self):
        for b in self.branches:
            for prev, nxt in zip(b.layers, b.layers[1:]):
                if prev.n_out != nxt.n_in:
                    raise ShapeError(f"branch {b.name!r}: {prev!r} feeds {nxt!r}")
            for layer in b.layers[1:]:
                if isinstance(layer, PoolLayer):
                    raise ShapeError("pool layers are only supported first in a branch")
        width = sum(b.n_out for b in self.branches)
        layers = list(self.head)
        if layers and layers[0].n_in != width:
            raise ShapeError(f"head expects {layers[0].n_in} inputs, branches give {width}")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.n_out != nxt.n_in:
                raise ShapeError(f"head: {prev!r} feeds {nxt!r}")

    @property
    def branch_names(self):
        return [b.name for b in self.branches]

    def layers(self):
        """All layers in forward order (branches first, then head)."""
        out = [layer for b in self.branches for layer in b.layers]
        return out + list(self.head)

    def trainable_layers(self):
        return [layer for layer in self.layers() if layer.trainable]

    @property
    def n_outputs(self):
        return (self.head[-1] if self.head else self.branches[-1].layers[-1]).n_out

    def parameter_count(self):
        return sum(layer.weights.size for layer in self.trainable_layers())

    def get_weights(self):
        return [layer.weights.copy() for layer in self.trainable_layers()]

    def set_weights(self, weights):
        layers = self.trainable_layers()
        if len(weights) != len(layers):
            raise ShapeError(f"expected {len(layers)} weight matrices, got {len(weights)}")
        for layer, w in zip(layers, weights):
            w = np.asarray(w, dtype=np.float64)
            if w.shape != layer.weights.shape:
                raise ShapeError(f"weight shape {w.shape} does not fit {layer!r}")
            layer.weights = w.copy()


def _branch_inputs(network: Network, inputs):
    if isinstance(inputs, SpikeTensor):
        inputs = [inputs]
    if isinstance(inputs, dict):
        missing = set(network.branch_names) - set(inputs)
        if missing:
            raise ShapeError(f"missing inputs for branches {sorted(missing)}")
        return [inputs[name] for name in network.branch_names]
    inputs = list(inputs)
    if len(inputs) != len(network.branches):
        raise ShapeError(f"network has {len(network.branches)} branches, "
                         f"got {len(inputs)} inputs")
    return inputs


def concat_spikes(tensors: Sequence[SpikeTensor]) -> SpikeTensor:
    n_bins = {t.n_bins for t in tensors}
    if len(n_bins) != 1:
        raise ShapeError(f"cannot concatenate tensors with bin counts {sorted(n_bins)}")
    return SpikeTensor.wrap(np.concatenate([t.data for t in tensors], axis=0),
                            tensors[0].bin_width)


def network_forward(network: Network, inputs) -> list:
    """Run every branch, concatenate their output spikes, run the head.

    Returns one trace per layer in :meth:`Network.layers` order; the network's
    output is ``traces[-1].output_spikes``.
    """
    inputs = _branch_inputs(network, inputs)
    traces = []
    outs = []
    for branch, x in zip(network.branches, inputs):
        for layer in branch.layers:
            tr = layer_forward(layer, x)
            traces.append(tr)
            x = tr.output_spikes
        outs.append(x)
    x = outs[0] if len(outs) == 1 else concat_spikes(outs)
    for layer in network.head:
        tr = layer_forward(layer, x)
        traces.append(tr)
        x = tr.output_spikes
    return traces
