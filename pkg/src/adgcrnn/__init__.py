"""Multi-resolution self-attention + dynamic-graph convolutional GRU traffic forecaster."""

from .data import NormStats, RawSeries, ResolutionConfig, WindowSample
from .graph import StaticGraph, load_graph, normalize_adjacency
from .seq2seq import ADGCRNN, ModelConfig, eps_at
from .tensor import Parameter, Tensor
from .training import MetricReport, TrainConfig, evaluate, train

__all__ = [
    "ADGCRNN", "MetricReport", "ModelConfig", "NormStats", "Parameter", "RawSeries",
    "ResolutionConfig", "StaticGraph", "Tensor", "TrainConfig", "WindowSample", "eps_at",
    "evaluate", "load_graph", "normalize_adjacency", "train",
]

__version__ = "0.1.0"
