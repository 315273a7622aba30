"""Tactile, vision and combined visual-tactile network builders."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .events import Geometry
from .snn import DEFAULT_POOL_GAIN, Branch, DenseLayer, Network, PoolLayer, SrmConfig

TACTILE = "tactile"
VISION = "vision"


@dataclass(frozen=True)
class ArchitectureSpec:
    """Layer sizes of the three variants.

    The vision crop is 200 pixels wide by 250 high with two polarity planes.
    """

    tactile_in: int = 156
    tactile_hidden: int = 32
    tactile_out: int = 50
    vision_geometry: Geometry = Geometry(200, 250, 2)
    pool_kernel: int = 4
    pool_stride: int = 4
    pool_gain: float = DEFAULT_POOL_GAIN
    vision_hidden: int = 32
    vision_out: int = 10
    n_classes: int = 20
    srm: SrmConfig = field(default_factory=SrmConfig)

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        object.__setattr__(self, "vision_geometry", Geometry(*self.vision_geometry))


def _dense(n_in, n_out, cfg):
    return DenseLayer.zeros(n_in, n_out, cfg)


def tactile_branch(spec: ArchitectureSpec) -> Branch:
    cfg = spec.srm
    return Branch(TACTILE, [_dense(spec.tactile_in, spec.tactile_hidden, cfg),
                            _dense(spec.tactile_hidden, spec.tactile_out, cfg)])


def vision_branch(spec: ArchitectureSpec) -> Branch:
    cfg = spec.srm
    pool = PoolLayer(spec.vision_geometry, spec.pool_kernel, spec.pool_stride,
                     spec.pool_gain, cfg)
    return Branch(VISION, [pool, _dense(pool.n_out, spec.vision_hidden, cfg),
                           _dense(spec.vision_hidden, spec.vision_out, cfg)])


def _spec(n_classes, config):
    if isinstance(config, ArchitectureSpec):
        return ArchitectureSpec(**{**config.__dict__, "n_classes": n_classes})
    if isinstance(config, SrmConfig):
        return ArchitectureSpec(n_classes=n_classes, srm=config)
    return ArchitectureSpec(n_classes=n_classes)


def build_tactile_snn(n_classes: int, config=None) -> Network:
    spec = _spec(n_classes, config)
    return Network([tactile_branch(spec)], [_dense(spec.tactile_out, n_classes, spec.srm)])


def build_vision_snn(n_classes: int, config=None) -> Network:
    spec = _spec(n_classes, config)
    return Network([vision_branch(spec)], [_dense(spec.vision_out, n_classes, spec.srm)])


def build_vtsnn(n_classes: int, config=None) -> Network:
    spec = _spec(n_classes, config)
    width = spec.tactile_out + spec.vision_out
    return Network([tactile_branch(spec), vision_branch(spec)],
                   [_dense(width, n_classes, spec.srm)])


BUILDERS = {"tact": build_tactile_snn, "vis": build_vision_snn, "mm": build_vtsnn}


def build(name: str, n_classes: int, config: Optional[object] = None) -> Network:
    try:
        return BUILDERS[name](n_classes, config)
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(BUILDERS)}") from None
