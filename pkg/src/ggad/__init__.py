"""Generalist graph anomaly detection: train on labeled source graphs, score unseen targets zero-shot."""

from .graph import Graph, from_edges, load_graph, save_graph
from .pipeline import InferConfig, ModelArtifact, TrainConfig, infer, load_artifact, save_artifact, train

__version__ = "0.1.0"

__all__ = ["Graph", "from_edges", "load_graph", "save_graph", "TrainConfig", "InferConfig", "ModelArtifact",
           "train", "infer", "save_artifact", "load_artifact", "__version__"]
