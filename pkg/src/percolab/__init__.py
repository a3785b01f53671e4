"""Mixed short/long-range bond percolation on Z^(k+d): sampling, exact checks, decay constants."""

__version__ = "0.1.0"

from .model import Box, Edge, ModelParams, SplitPoint, bond_probability, coupling, enumerate_edges, l1_norm
from .rng import RngSeed
from .sampler import Estimate

__all__ = ["Box", "Edge", "ModelParams", "SplitPoint", "RngSeed", "Estimate",
           "bond_probability", "coupling", "enumerate_edges", "l1_norm"]
