"""Learned image compression with causal context adjustment.

A reverse-mode autodiff engine on numpy, a channel-sliced autoregressive
hyperprior model trained with an information-gain objective, an exact
range coder and the ``.cca`` container.
"""

from .checkpoint import load_checkpoint, model_checksum, save_checkpoint
from .entropy import build_schedule
from .kernels import BACKEND_NAME
from .network import CCAModel, ModelConfig, profile_config
from .pipeline import compress, decompress

__version__ = "0.1.0"

__all__ = ["BACKEND_NAME", "CCAModel", "ModelConfig", "build_schedule", "compress",
           "decompress", "load_checkpoint", "model_checksum", "profile_config",
           "save_checkpoint"]
