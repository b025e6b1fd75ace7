"""Dynamic latent space models for longitudinal networks."""
from .model import DynamicNetwork, ModelParams, PriorConfig
from .sampler import ChainConfig, GibbsSampler, PosteriorChain, run_chain

__version__ = "0.1.0"

__all__ = [
    "ChainConfig",
    "DynamicNetwork",
    "GibbsSampler",
    "ModelParams",
    "PosteriorChain",
    "PriorConfig",
    "run_chain",
]
