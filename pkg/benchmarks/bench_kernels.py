"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat N] [--skip-forward]

Kernel timings call both implementations directly on the same inputs.  The
forward-pass timings run a fresh interpreter per backend, since the backend is
fixed at import time by VTSNN_DISABLE_NUMBA.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from vtsnn import _accel

FORWARD_SNIPPET = """
import time, numpy as np
from vtsnn.events import SpikeTensor
from vtsnn.models import {builder}
from vtsnn.training import init_weights
rng = np.random.default_rng(0)
net = {builder}(2)
init_weights(net, rng)
x = {inputs}
from vtsnn.snn import network_forward
network_forward(net, x)
t = time.perf_counter()
for _ in range({n}):
    network_forward(net, x)
print((time.perf_counter() - t) / {n})
"""

TACT = "SpikeTensor.wrap((rng.random((156, 150)) < 0.05).astype(np.uint8), 0.001)"
MM = ("{'tactile': " + TACT + ", 'vision': SpikeTensor.wrap((rng.random((100000, 150)) < 0.002)"
      ".astype(np.uint8), 0.001, (200, 250, 2))}")


def kernel_cases(rng):
    ts = np.sort(rng.integers(0, 6_500_000, 200_000))
    ch = rng.integers(0, 156, ts.size)
    spikes = (rng.random((156, 325)) < 0.05).astype(np.float64)
    eps = np.array([(k / 5) * np.exp(1 - k / 5) for k in range(90)])
    nu = -2.5 * eps
    drive = rng.normal(0.5, 1.0, (256, 325))
    frame = (rng.random((100_000, 150)) < 0.002).astype(np.uint8)
    return [
        ("bin_spikes 200k events -> 156x325", "bin_spikes",
         (ts, ch, np.int64(20_000), 325, 156, 1)),
        ("bin_counts 200k events -> 156x325", "bin_counts", (ts, ch, np.int64(20_000), 325, 156)),
        ("causal_conv 156x325", "causal_conv", (spikes, eps)),
        ("causal_corr 156x325", "causal_corr", (spikes, eps)),
        ("srm_integrate 256x325", "srm_integrate", (drive, nu, 1.25)),
        ("pool_sum 200x250x2 x 150 bins", "pool_sum", (frame, 2, 250, 200, 4, 4, 62, 50)),
    ]


def time_call(fn, args, repeat):
    fn(*args)  # warm-up (compiles the numba version)
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def forward_time(builder, inputs, disable, n):
    env = dict(os.environ, VTSNN_DISABLE_NUMBA="1" if disable else "0")
    code = FORWARD_SNIPPET.format(builder=builder, inputs=inputs, n=n)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-forward", action="store_true")
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for label, name, kargs in kernel_cases(rng):
        slow = time_call(getattr(_accel, name + "_numpy"), kargs, args.repeat)
        fast = time_call(getattr(_accel, name + "_numba"), kargs, args.repeat)
        print(f"{label:40s} {slow * 1e3:10.3f} {fast * 1e3:10.3f} {slow / fast:8.1f}x")
    if args.skip_forward:
        return
    print()
    print(f"{'forward pass (150 bins)':40s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for label, builder, inputs, n in (("tactile network", "build_tactile_snn", TACT, 50),
                                      ("combined network", "build_vtsnn", MM, 10)):
        slow = forward_time(builder, inputs, True, n)
        fast = forward_time(builder, inputs, False, n)
        print(f"{label:40s} {slow * 1e3:10.3f} {fast * 1e3:10.3f} {slow / fast:8.1f}x")


if __name__ == "__main__":
    main()
