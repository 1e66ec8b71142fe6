"""Dual-path image restoration: a disentangling VAE with orthogonally gated
encoders, a complex-valued invertible multiscale fusion network, and a latent
restorer, trained in three stages."""

from .config import ModelConfig, load_config, full_scale, parse_config
from .data import DegradationSpec, SamplePair, degrade, make_dataset, psnr, ssim
from .errors import (CheckpointError, ConfigError, ContractViolation, D2RError,
                     DegenerateKernel, InitializationOrderError, NumericFault,
                     SingularRetraction)
from .pipeline import RestorationModel, evaluate, load_model, train_stage

__version__ = "0.1.0"

__all__ = [
    "ModelConfig", "load_config", "full_scale", "parse_config",
    "DegradationSpec", "SamplePair", "degrade", "make_dataset", "psnr", "ssim",
    "D2RError", "ContractViolation", "SingularRetraction", "DegenerateKernel",
    "InitializationOrderError", "NumericFault", "CheckpointError", "ConfigError",
    "RestorationModel", "train_stage", "evaluate", "load_model",
    "__version__",
]
