"""Plain-text architecture and training configs, and the binary weights file.

Architecture files list layers line by line::

    srm threshold=1.25 tau_response=0.005 tau_refractory=0.005 sim_step=0.001
    branch tactile
    dense 156 32
    dense 32 50
    branch vision
    pool 200x250x2 kernel=4 stride=4 gain=1.1
    dense 6200 32
    dense 32 10
    head
    dense 60 20

Weights files start with ``b"SNNW"``, a ``u16`` version and a ``u32`` matrix
count, then ``(n_out, n_in)`` as ``u32`` pairs, then every matrix as
little-endian float64 in row-major order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, ParseError, ShapeError
from .events import Geometry
from .snn import Branch, DenseLayer, Network, PoolLayer, SrmConfig

# ---------------------------------------------------------------------------
# architecture
# ---------------------------------------------------------------------------


def _kv(tokens, lineno):
    out = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep:
            raise ParseError(f"expected key=value, got {tok!r}", offset=lineno)
        out[key] = value
    return out


def parse_architecture(text: str) -> Network:
    srm = SrmConfig()
    branches, head = [], None
    pending = []  # (target list, kind, args, lineno); layers built once srm is known
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word, *rest = line.split()
        if word == "srm":
            try:
                srm = SrmConfig(**{k: float(v) for k, v in _kv(rest, lineno).items()})
            except TypeError as e:
                raise ParseError(str(e), offset=lineno) from None
        elif word == "branch":
            if len(rest) != 1 or head is not None:
                raise ParseError("'branch NAME' must precede 'head'", offset=lineno)
            branches.append(Branch(rest[0], []))
        elif word == "head":
            head = []
        elif word in ("dense", "pool"):
            target = head if head is not None else (branches[-1].layers if branches else None)
            if target is None:
                raise ParseError(f"{word} layer outside any branch", offset=lineno)
            pending.append((target, word, rest, lineno))
        else:
            raise ParseError(f"unknown directive {word!r}", offset=lineno)
    for target, word, rest, lineno in pending:
        try:
            if word == "dense":
                n_in, n_out = map(int, rest)
                target.append(DenseLayer.zeros(n_in, n_out, srm))
            else:
                geometry = Geometry(*map(int, rest[0].lower().split("x")))
                kw = _kv(rest[1:], lineno)
                target.append(PoolLayer(geometry, int(kw.get("kernel", 4)),
                                        int(kw.get("stride", 4)),
                                        float(kw.get("gain", 1.1)), srm))
        except (ValueError, IndexError) as e:
            raise ParseError(f"bad {word} layer: {e}", offset=lineno) from None
    if not branches or any(not b.layers for b in branches):
        raise ParseError("architecture needs at least one non-empty branch")
    return Network(branches, head or [])


def render_architecture(network: Network) -> str:
    layers = network.layers()
    cfg = layers[0].config
    lines = [f"srm threshold={cfg.threshold!r} tau_response={cfg.tau_response!r} "
             f"tau_refractory={cfg.tau_refractory!r} sim_step={cfg.sim_step!r}"]

    def layer_line(layer):
        if isinstance(layer, PoolLayer):
            g = layer.geometry
            return (f"pool {g.width}x{g.height}x{g.polarities} kernel={layer.kernel} "
                    f"stride={layer.stride} gain={layer.gain!r}")
        return f"dense {layer.n_in} {layer.n_out}"

    for b in network.branches:
        lines.append(f"branch {b.name}")
        lines.extend(layer_line(layer) for layer in b.layers)
    if network.head:
        lines.append("head")
        lines.extend(layer_line(layer) for layer in network.head)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

WEIGHTS_MAGIC = b"SNNW"
WEIGHTS_VERSION = 1
_WHEAD = struct.Struct("<4sHI")


def encode_weights(weights) -> bytes:
    parts = [_WHEAD.pack(WEIGHTS_MAGIC, WEIGHTS_VERSION, len(weights))]
    parts += [struct.pack("<II", *w.shape) for w in weights]
    parts += [np.ascontiguousarray(w, dtype="<f8").tobytes() for w in weights]
    return b"".join(parts)


def decode_weights(buf: bytes) -> list:
    if len(buf) < _WHEAD.size:
        raise ParseError("truncated weights header", offset=len(buf))
    magic, version, n = _WHEAD.unpack_from(buf, 0)
    if magic != WEIGHTS_MAGIC:
        raise ParseError(f"bad magic {magic!r}", offset=0)
    if version != WEIGHTS_VERSION:
        raise ParseError(f"unsupported version {version}", offset=4)
    pos = _WHEAD.size
    if len(buf) < pos + 8 * n:
        raise ParseError("truncated layer table", offset=len(buf))
    dims = [struct.unpack_from("<II", buf, pos + 8 * i) for i in range(n)]
    pos += 8 * n
    expected = pos + 8 * sum(a * b for a, b in dims)
    if len(buf) != expected:
        raise ParseError(f"weights body has {len(buf) - pos} bytes, expected {expected - pos}",
                         offset=min(len(buf), expected))
    out = []
    for rows, cols in dims:
        w = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols)
        out.append(w.astype(np.float64))
        pos += 8 * rows * cols
    return out


def save_weights(network: Network, path) -> None:
    Path(path).write_bytes(encode_weights(network.get_weights()))


def load_weights(network: Network, path) -> Network:
    weights = decode_weights(Path(path).read_bytes())
    try:
        network.set_weights(weights)
    except ShapeError as e:
        raise ShapeError(f"{path}: {e}") from None
    return network


# ---------------------------------------------------------------------------
# training config
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 1e-3
    batch: int = 8
    l2: float = 1e-4
    loss: str = "count"
    beta: Optional[float] = None
    gamma: float = 1.0
    true_count: Optional[int] = None
    false_count: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.loss not in ("count", "weighted"):
            raise ConfigError(f"loss must be 'count' or 'weighted', got {self.loss!r}")
        if self.epochs < 0 or self.batch <= 0:
            raise ConfigError("epochs must be >= 0 and batch > 0")

    def update(self, **overrides):
        """Return a copy with every non-``None`` override applied."""
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return TrainConfig(**values)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self)
                       if getattr(self, f.name) is not None)


_TYPES = {"epochs": int, "batch": int, "true_count": int, "false_count": int, "seed": int,
          "lr": float, "l2": float, "beta": float, "gamma": float, "loss": str}


def parse_train_config(text: str) -> TrainConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep:
            raise ParseError(f"expected 'key = value', got {raw!r}", offset=lineno)
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _TYPES[key](value)
        except ValueError:
            raise ParseError(f"bad value for {key}: {value!r}", offset=lineno) from None
    return TrainConfig(**values)


def read_train_config(path) -> TrainConfig:
    return parse_train_config(Path(path).read_text())
