"""Spike-count prediction, early-classification curves and the latency benchmark."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .events import SpikeTensor
from .snn import Network, network_forward

BENCH_SAMPLES = 1000
BENCH_STEPS = 150
REALTIME_DELAY = 0.15


def predict(output, upto: Optional[int] = None) -> int:
    """Class whose output neuron spiked most in bins ``[0, upto)``; ties go to the lowest index."""
    data = output.data if isinstance(output, SpikeTensor) else np.asarray(output)
    if upto is not None and not 0 <= upto <= data.shape[1]:
        raise ValueError(f"upto={upto} outside [0, {data.shape[1]}]")
    return int(np.argmax(data[:, :upto].sum(axis=1)))


def default_cutoffs(n_bins: int, every: int = 10) -> list:
    """Every ``every`` bins, plus the full horizon."""
    cuts = list(range(every, n_bins, every))
    return cuts + [n_bins]


def accuracy_at_cutoffs(network: Network, dataset, cutoffs: Sequence[int],
                        threads: int = 1) -> np.ndarray:
    """Accuracy at each bin cutoff, from one forward pass per sample."""
    cutoffs = list(cutoffs)

    def hits(item):
        x, y = item
        counts = np.cumsum(network_forward(network, x)[-1].spikes, axis=1)
        return [(int(np.argmax(counts[:, c - 1])) if c > 0 else 0) == y for c in cutoffs]

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(hits, dataset))
    else:
        rows = [hits(item) for item in dataset]
    if not rows:
        return np.zeros(len(cutoffs))
    return np.mean(np.array(rows, dtype=np.float64), axis=0)


@dataclass
class AccuracyCurve:
    times: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    per_fold: np.ndarray = field(default=None, repr=False)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("time_s", "mean_acc", "std_acc"))
            for t, m, s in zip(self.times, self.mean, self.std):
                w.writerow([f"{t:.6f}", f"{m:.6f}", f"{s:.6f}"])

    def plot(self, path, label=None) -> None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(self.times, self.mean, label=label)
        ax.fill_between(self.times, self.mean - self.std, self.mean + self.std, alpha=0.25)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("test accuracy")
        ax.set_ylim(0, 1.02)
        if label:
            ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def early_accuracy_curve(folds, bin_width: float, cutoffs: Optional[Sequence[int]] = None,
                         threads: int = 1) -> AccuracyCurve:
    """Accuracy over time, averaged across folds.

    ``folds`` is a sequence of ``(network, test_set)`` pairs; a single pair is
    also accepted.  Cutoffs are bin counts and default to every 10 bins plus
    the horizon.
    """
    if isinstance(folds, tuple) and len(folds) == 2 and isinstance(folds[0], Network):
        folds = [folds]
    folds = list(folds)
    if cutoffs is None:
        x0, _ = folds[0][1][0]
        first = next(iter(x0.values())) if isinstance(x0, dict) else (
            x0 if isinstance(x0, SpikeTensor) else x0[0])
        cutoffs = default_cutoffs(first.n_bins)
    cutoffs = list(cutoffs)
    per_fold = np.array([accuracy_at_cutoffs(net, ds, cutoffs, threads) for net, ds in folds])
    return AccuracyCurve(np.array(cutoffs) * bin_width, per_fold.mean(axis=0),
                         per_fold.std(axis=0), per_fold)


@dataclass
class BenchReport:
    n_samples: int
    n_steps_per_sample: int
    wall_time: float
    mode: str
    sample_times: np.ndarray = field(default=None, repr=False)
    power_w: Optional[float] = None

    @property
    def latency_us(self) -> float:
        """Wall time divided by the number of processed timesteps, in microseconds."""
        return self.wall_time / (self.n_samples * self.n_steps_per_sample) * 1e6

    @property
    def energy_delay_product(self) -> Optional[float]:
        # joules per timestep times seconds per timestep
        if self.power_w is None:
            return None
        latency_s = self.latency_us * 1e-6
        return self.power_w * latency_s * latency_s

    def csv_line(self) -> str:
        return (f"{self.mode},{self.n_samples},{self.n_steps_per_sample},"
                f"{self.wall_time:.6f},{self.latency_us:.3f}")

    def summary(self) -> str:
        text = (f"{self.mode} benchmark: {self.n_samples} samples x {self.n_steps_per_sample} "
                f"steps in {self.wall_time:.3f} s -> {self.latency_us:.1f} us/timestep")
        if self.power_w is not None:
            text += f", EDP {self.energy_delay_product:.3e} J*s"
        return text


BENCH_HEADER = "mode,n_samples,n_steps,wall_time_s,latency_us"


def bench(network: Network, dataset, mode: str = "offline", n_samples: int = BENCH_SAMPLES,
          n_steps: int = BENCH_STEPS, delay: float = REALTIME_DELAY,
          clock: Callable[[], float] = time.perf_counter,
          sleep: Callable[[float], None] = time.sleep, power_w: Optional[float] = None
          ) -> BenchReport:
    """Time ``n_samples`` forward passes with batch size one.

    ``offline`` feeds samples back to back.  ``realtime`` waits ``delay``
    seconds before each forward pass, standing in for the time it takes the
    window's data to arrive; the wait counts towards wall time.  Samples run
    strictly one after another in both modes.
    """
    if mode not in ("offline", "realtime"):
        raise ConfigError(f"unknown bench mode {mode!r}")
    dataset = list(dataset)
    if len(dataset) != n_samples:
        raise ConfigError(f"bench needs {n_samples} samples, got {len(dataset)}")
    for x in dataset:
        tensors = x.values() if isinstance(x, dict) else (
            [x] if isinstance(x, SpikeTensor) else x)
        if any(t.n_bins != n_steps for t in tensors):
            raise ConfigError(f"bench samples must have {n_steps} steps")
    per_sample = np.empty(n_samples)
    t_start = clock()
    prev = t_start
    for i, x in enumerate(dataset):
        if mode == "realtime":
            sleep(delay)
        network_forward(network, x)
        now = clock()
        per_sample[i] = now - prev
        prev = now
    t_end = prev
    return BenchReport(n_samples, n_steps, t_end - t_start, mode, per_sample, power_w)


def repeat_to(dataset, n: int) -> list:
    """Cycle ``dataset`` until it has ``n`` items."""
    dataset = list(dataset)
    if not dataset:
        raise ConfigError("cannot repeat an empty dataset")
    return [dataset[i % len(dataset)] for i in range(n)]
