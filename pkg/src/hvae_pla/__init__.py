"""Threshold-free physical-layer authentication with a hierarchical VAE, in numpy."""

from .auth import AuthConfig, AuthReport, authenticate_batch, channel_difference, run_protocol
from .channel import Dataset, gen_mobile_dataset, gen_static_dataset
from .hvae import HvaeConfig, HvaeModel, encode_z2, train
from .nn import TrainConfig

__version__ = "0.1.0"
