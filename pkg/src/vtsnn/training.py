"""Spike-count losses, surrogate-gradient backward pass and the training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _accel
from .errors import ConfigError, DivergenceError, ShapeError
from .evaluate import predict
from .events import SpikeTensor
from .snn import DenseLayer, Network, PoolLayer, network_forward

log = logging.getLogger(__name__)

UNIFORM = "uniform"
QUADRATIC = "quadratic"


@dataclass(frozen=True)
class LossSpec:
    """Desired output spike counts and the temporal weighting ``w(t) = beta t^2 + gamma``.

    ``t`` is in seconds from the start of the window.  When ``beta`` is left as
    ``None`` it defaults to ``-0.9 * gamma / T^2`` for a window of length ``T``,
    which keeps the weight positive over the whole window.  ``placement``
    decides where the desired spikes sit when building the weighted target:
    ``"early"`` fills the first bins, ``"uniform"`` spreads them evenly.
    """

    desired_count_true: int
    desired_count_false: int = 0
    weighting: str = UNIFORM
    beta: Optional[float] = None
    gamma: float = 1.0
    placement: str = "early"

    def __post_init__(self):
        if not self.desired_count_true > self.desired_count_false >= 0:
            raise ConfigError("need desired_count_true > desired_count_false >= 0")
        if self.weighting not in (UNIFORM, QUADRATIC):
            raise ConfigError(f"unknown weighting {self.weighting!r}")
        if self.weighting == QUADRATIC:
            if self.beta is not None and not self.beta < 0:
                raise ConfigError("quadratic weighting needs beta < 0")
            if not self.gamma > 0:
                raise ConfigError("quadratic weighting needs gamma > 0")
        if self.placement not in ("early", "uniform"):
            raise ConfigError(f"unknown target placement {self.placement!r}")

    def desired_counts(self, n_classes: int, target_class: int) -> np.ndarray:
        if not 0 <= target_class < n_classes:
            raise IndexError(f"target class {target_class} outside [0, {n_classes})")
        c = np.full(n_classes, float(self.desired_count_false))
        c[target_class] = self.desired_count_true
        return c

    def omega(self, n_bins: int, bin_width: float) -> np.ndarray:
        """Per-bin weights, clamped at zero from below."""
        if self.weighting == UNIFORM:
            return np.ones(n_bins)
        horizon = n_bins * bin_width
        beta = self.beta if self.beta is not None else -0.9 * self.gamma / horizon ** 2
        t = np.arange(n_bins) * bin_width
        w = np.maximum(beta * t * t + self.gamma, 0.0)
        if np.any(w <= 0):
            raise ConfigError(f"weighting reaches zero inside the window (beta={beta}, "
                              f"gamma={self.gamma}, horizon={horizon} s)")
        return w

    def target_train(self, count: int, n_bins: int) -> np.ndarray:
        """Desired spike train holding ``count`` spikes.

        A count above ``n_bins`` cannot be met by a binary train; the surplus
        wraps around (every bin gets ``count // n_bins``, the remainder is
        placed as usual) so the train always sums to ``count``.
        """
        count = int(count)
        train = np.full(n_bins, float(count // n_bins))
        rest = count % n_bins
        if self.placement == "early":
            train[:rest] += 1.0
        elif rest:
            train[np.floor(np.arange(rest) * n_bins / rest).astype(int)] += 1.0
        return train


def _spikes(output):
    if isinstance(output, SpikeTensor):
        return output.data.astype(np.float64), output.bin_width
    return np.asarray(output, dtype=np.float64), 1.0


def spike_count_loss(output, target_class: int, spec: LossSpec):
    """Half squared error between observed and desired per-neuron spike counts.

    Returns ``(loss, grad)`` with ``grad[n] = observed_n - desired_n``.
    """
    s, _ = _spikes(output)
    residual = s.sum(axis=1) - spec.desired_counts(s.shape[0], target_class)
    return 0.5 * float(residual @ residual), residual


def weighted_spike_count_loss(output, target_class: int, spec: LossSpec, omega=None):
    """Spike-count loss with per-bin weights ``omega``.

    The desired weighted count of each neuron is ``sum_t omega[t] * target[t]``
    for the spike train from :meth:`LossSpec.target_train`.  ``omega`` defaults
    to ``spec.omega(...)``; passing it explicitly overrides the spec's weighting.
    Returns ``(loss, grad)`` with ``grad[n, t] = omega[t] * residual_n``.
    """
    s, bin_width = _spikes(output)
    n_classes, n_bins = s.shape
    if omega is None:
        omega = spec.omega(n_bins, bin_width)
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != (n_bins,):
        raise ShapeError(f"omega has shape {omega.shape}, output has {n_bins} bins")
    desired = spec.desired_counts(n_classes, target_class)
    targets = {c: omega @ spec.target_train(c, n_bins) for c in set(desired.tolist())}
    residual = s @ omega - np.array([targets[c] for c in desired])
    return 0.5 * float(residual @ residual), np.outer(residual, omega)


def loss_and_output_grad(output, target_class, spec: LossSpec):
    """Loss plus its gradient with respect to every output spike ``[n, t]``."""
    if spec.weighting == UNIFORM:
        loss, g = spike_count_loss(output, target_class, spec)
        n_bins = output.n_bins if isinstance(output, SpikeTensor) else np.shape(output)[1]
        return loss, np.repeat(g[:, None], n_bins, axis=1)
    return weighted_spike_count_loss(output, target_class, spec)


# ---------------------------------------------------------------------------
# surrogate gradient and backward pass
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SurrogateConfig:
    """Shape of the spike-derivative stand-in ``scale * exp(-sharpness |u - threshold|)``.

    ``sharpness=None`` means ``10 / threshold`` of whichever layer is evaluated.
    """

    scale: float = 1.0
    sharpness: Optional[float] = None

    def __post_init__(self):
        if not self.scale > 0 or (self.sharpness is not None and not self.sharpness > 0):
            raise ConfigError("surrogate scale and sharpness must be positive")

    def sharpness_for(self, threshold: float) -> float:
        return self.sharpness if self.sharpness is not None else 10.0 / threshold


def surrogate_spike_derivative(membrane, config: SurrogateConfig, threshold: float):
    k = config.sharpness_for(threshold)
    return config.scale * np.exp(-k * np.abs(np.asarray(membrane, dtype=np.float64) - threshold))


def layer_backward(layer: DenseLayer, trace, grad_membrane, need_input_grad=True):
    """Map a membrane-space gradient to weight and input-spike gradients.

    The refractory term is treated as a constant, so ``du[n, t]/dW[n, i]`` is
    the filtered input ``(eps * s_i)[t]``.  Correlating the membrane gradient
    with ``eps`` once gives both results::

        grad_W = corr(g, eps) @ s.T        grad_s = W.T @ corr(g, eps)
    """
    back = _accel.causal_corr(grad_membrane, layer.config.response_kernel.samples)
    grad_w = back @ np.asarray(trace.inputs, dtype=np.float64).T
    if not need_input_grad:
        return grad_w, None
    return grad_w, layer.weights.T @ back


def backward(network: Network, traces, loss_grad, surrogate: Optional[SurrogateConfig] = None):
    """Surrogate-gradient backpropagation through time.

    ``loss_grad`` is ``dL/d(output spike)`` with shape ``[n_outputs, n_bins]``.
    Returns one gradient per trainable layer, in :meth:`Network.trainable_layers`
    order and with the same shapes as the weights.
    """
    surrogate = surrogate or SurrogateConfig()
    layers = network.layers()
    if len(traces) != len(layers):
        raise ShapeError(f"{len(traces)} traces for a network of {len(layers)} layers")
    grad = np.asarray(loss_grad, dtype=np.float64)
    if grad.shape != traces[-1].spikes.shape:
        raise ShapeError(f"loss gradient shape {grad.shape} does not match output "
                         f"{traces[-1].spikes.shape}")
    grads = {}

    def run_chain(chain, chain_traces, grad, need_input):
        for pos in range(len(chain) - 1, -1, -1):
            layer, tr = chain[pos], chain_traces[pos]
            if isinstance(layer, PoolLayer):
                return None
            if tr.membrane.shape != grad.shape:
                raise ShapeError(f"trace of {layer!r} has shape {tr.membrane.shape}")
            delta = grad * surrogate_spike_derivative(tr.membrane, surrogate,
                                                      layer.config.threshold)
            want_input = pos > 0 or need_input
            grads[id(layer)], grad = layer_backward(layer, tr, delta, want_input)
        return grad

    n_branch_layers = sum(len(b.layers) for b in network.branches)
    if network.head:
        grad = run_chain(network.head, traces[n_branch_layers:], grad, True)
        widths = np.cumsum([b.n_out for b in network.branches])[:-1]
        branch_grads = np.split(grad, widths, axis=0)
    else:
        branch_grads = [grad]
    pos = 0
    for branch, g in zip(network.branches, branch_grads):
        n = len(branch.layers)
        run_chain(branch.layers, traces[pos: pos + n], g, False)
        pos += n
    return [grads[id(layer)] for layer in network.trainable_layers()]


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    """Root-mean-square adaptive step rule with an l2 penalty.

    The penalty's gradient ``l2 * w`` is applied as a plain gradient step next
    to the normalised data step, so with no data gradient every weight decays
    by the factor ``1 - lr * l2``.
    """

    learning_rate: float = 1e-3
    l2_coefficient: float = 1e-4
    decay: float = 0.99
    eps: float = 1e-8
    mean_square: list = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate < 0 or self.l2_coefficient < 0:
            raise ConfigError("learning rate and l2 coefficient must be non-negative")
        if not 0 <= self.decay < 1:
            raise ConfigError("decay must be in [0, 1)")

    def step(self, weights, grads):
        if not self.mean_square:
            self.mean_square = [np.zeros_like(w) for w in weights]
        lr, l2 = self.learning_rate, self.l2_coefficient
        for w, g, ms in zip(weights, grads, self.mean_square):
            ms *= self.decay
            ms += (1.0 - self.decay) * g * g
            w -= lr * (g / (np.sqrt(ms) + self.eps) + l2 * w)


def make_target_counts(max_spikes_per_window: int, false_ratio: float = 0.1):
    """Desired (true, false) counts: half the maximum spike count, rounded half-up."""
    if not max_spikes_per_window > 0:
        raise ValueError("max_spikes_per_window must be positive")
    true_count = max(1, math.floor(0.5 * max_spikes_per_window + 0.5))
    false_count = math.floor(false_ratio * true_count + 0.5)
    return true_count, min(false_count, true_count - 1)


def init_weights(network: Network, rng: np.random.Generator, calibration=None,
                 max_rounds: int = 30, growth: float = 1.5):
    """Uniform ``[-a, a]`` init with ``a = 4 / sqrt(fan_in)``, then revive silent layers.

    ``calibration`` is a list of network inputs; while a layer emits no spike on
    any of them, its weights are multiplied by ``growth``.
    """
    for layer in network.trainable_layers():
        a = 4.0 / math.sqrt(layer.n_in)
        layer.weights = rng.uniform(-a, a, size=layer.weights.shape)
    if not calibration:
        return
    layers = network.layers()
    for idx, layer in enumerate(layers):
        if not layer.trainable:
            continue
        for _ in range(max_rounds):
            active = any(network_forward(network, x)[idx].spikes.any() for x in calibration)
            if active:
                break
            layer.weights *= growth


@dataclass
class TrainResult:
    network: Network
    metrics: list

    @property
    def final(self):
        return self.metrics[-1] if self.metrics else None


def evaluate(network: Network, dataset) -> float:
    if not dataset:
        return float("nan")
    hits = sum(predict(network_forward(network, x)[-1].spikes) == y for x, y in dataset)
    return hits / len(dataset)


def train(network: Network, dataset, spec: LossSpec, optimizer: Optional[OptimizerState] = None,
          epochs: int = 500, seed: int = 0, batch_size: int = 8,
          surrogate: Optional[SurrogateConfig] = None, test_set=None, initialize: bool = True,
          on_epoch: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Minibatch training on ``dataset``, a list of ``(inputs, label)`` pairs.

    ``inputs`` is whatever :func:`network_forward` accepts.  Runs are fully
    determined by ``seed``: one stream draws the initial weights, another the
    per-epoch shuffles.  Gradients within a batch are averaged in sample order.
    """
    if not dataset:
        raise ValueError("empty dataset")
    optimizer = optimizer or OptimizerState()
    init_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    if initialize:
        calib = [x for x, _ in dataset[:batch_size]]
        init_weights(network, np.random.default_rng(init_seq), calib)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    layers = network.trainable_layers()
    metrics = []
    for epoch in range(epochs):
        order = shuffle_rng.permutation(len(dataset))
        epoch_loss = 0.0
        for b, start in enumerate(range(0, len(order), batch_size)):
            batch = [dataset[i] for i in order[start: start + batch_size]]
            acc = [np.zeros_like(layer.weights) for layer in layers]
            for x, y in batch:
                traces = network_forward(network, x)
                loss, g_out = loss_and_output_grad(traces[-1].output_spikes, y, spec)
                if not math.isfinite(loss):
                    raise DivergenceError(epoch, b, loss)
                epoch_loss += loss
                for a, g in zip(acc, backward(network, traces, g_out, surrogate)):
                    a += g
            grads = [a / len(batch) for a in acc]
            weights = [layer.weights for layer in layers]
            optimizer.step(weights, grads)
            if not all(np.all(np.isfinite(w)) for w in weights):
                raise DivergenceError(epoch, b, float("nan"))
        row = {
            "epoch": epoch,
            "train_loss": epoch_loss / len(dataset),
            "train_acc": evaluate(network, dataset),
            "test_acc": evaluate(network, test_set) if test_set else float("nan"),
        }
        metrics.append(row)
        log.debug("epoch %d loss %.4f train %.3f test %.3f", epoch, row["train_loss"],
                  row["train_acc"], row["test_acc"])
        if on_epoch is not None:
            on_epoch(row)
    return TrainResult(network, metrics)
