"""Multi-scale protein graphs: structure and surface layers, entropy-rate
superpixels, and a WLN encoder for affinity and reaction prediction."""

from .encoder import ModelConfig, ModelParams, count_parameters, featurize_ligand, init_params
from .graphs import LigandGraph, MultiScaleGraph, StructureGraph, SuperpixelGraph, SurfaceGraph
from .multiscale import build_multiscale, validate
from .structure import build_structure_graph
from .superpixel import build_superpixel_graph, segment_ers, wasserstein_1d
from .surface import build_surface_graph
from .train import TrainConfig, evaluate_classification, evaluate_regression, train

__version__ = "0.1.0"

__all__ = [
    "LigandGraph", "ModelConfig", "ModelParams", "MultiScaleGraph", "StructureGraph", "SuperpixelGraph",
    "SurfaceGraph", "TrainConfig", "build_multiscale", "build_structure_graph", "build_superpixel_graph",
    "build_surface_graph", "count_parameters", "evaluate_classification", "evaluate_regression",
    "featurize_ligand", "init_params", "segment_ers", "train", "validate", "wasserstein_1d",
]
