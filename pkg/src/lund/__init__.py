"""Clustering by unsupervised nonlinear diffusion, with diagnostics for
nearly reducible Markov chains."""

from .density import DensityEstimate, kde
from .diffusion import DiffusionOperator, diffusion_distance, pairwise_diffusion
from .evaluation import score
from .lund_core import LundConfig, LundResult, lund
from .markov_graph import KernelGraph, MarkovChain, build_chain, build_kernel, lazify
from .point_store import NeighborList, PointCloud, knn, pairwise_distances
from .spectral import SpectralDecomposition, eig_markov, eig_sym_laplacian
from .synth_data import DatasetSpec, default_specs, generate

__all__ = [
    "DatasetSpec", "DensityEstimate", "DiffusionOperator", "KernelGraph", "LundConfig",
    "LundResult", "MarkovChain", "NeighborList", "PointCloud", "SpectralDecomposition",
    "build_chain", "build_kernel", "default_specs", "diffusion_distance", "eig_markov",
    "eig_sym_laplacian", "generate", "kde", "knn", "lazify", "lund", "pairwise_diffusion",
    "pairwise_distances", "score",
]
