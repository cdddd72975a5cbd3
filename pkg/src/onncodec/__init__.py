"""Joint image denoising and learned compression with generative-neuron layers."""

from .codec import JointCompressionModel, ModelConfig
from .estimator import JointDenoisingCodec, NoiseSynthesizer
from .noise import NoiseParams, test_levels
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "JointCompressionModel",
    "JointDenoisingCodec",
    "ModelConfig",
    "NoiseParams",
    "NoiseSynthesizer",
    "TrainConfig",
    "test_levels",
    "train",
]
