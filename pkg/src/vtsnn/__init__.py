"""Event-driven visual-tactile spiking networks: binning, SRM simulation and training."""

from ._accel import BACKEND
from .events import (
    Event, EventStream, Geometry, Modality, Polarity, SpikeTensor, bin_events, crop_window,
    vision_channel_index,
)
from .models import ArchitectureSpec, build, build_tactile_snn, build_vision_snn, build_vtsnn
from .snn import DenseLayer, Network, PoolLayer, SrmConfig, network_forward
from .training import LossSpec, OptimizerState, SurrogateConfig, train

__version__ = "0.1.0"
