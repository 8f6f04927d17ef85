"""Finite-blocklength laboratory for the rate-distortion-perception tradeoff."""

__version__ = "0.1.0"

from .core import Channel, DistortionSpec, JointPmf, Pmf
from .source_models import Block, SourceModel, block_pmf, entropy_rate, parse_source

__all__ = [
    "Block", "Channel", "DistortionSpec", "JointPmf", "Pmf", "SourceModel",
    "block_pmf", "entropy_rate", "parse_source",
]
