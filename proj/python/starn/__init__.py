"""Spatio-temporal accident severity prediction with graph attention.

Thin wrappers over the native core. Config arguments are dicts with the
same layout as the CLI's JSON run config (see ``default_config()``).
"""

import json

import numpy as np

from . import _starn
from ._starn import ConfigError, DataError, DimensionError, Error, NumericError

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "Error",
    "NumericError",
    "ablation_names",
    "algebraic_connectivity",
    "bench",
    "build_graph",
    "cosine_lr",
    "dbscan",
    "default_config",
    "evaluate",
    "evaluate_probs",
    "focal_loss",
    "gradcheck",
    "predict",
    "synth",
    "train",
]


def _cfg(config):
    return "" if config is None else json.dumps(config)


def default_config():
    return json.loads(_starn.default_config())


def ablation_names():
    return list(_starn.ablation_names())


def synth(data_path, config=None):
    """Write a synthetic accident CSV; returns the generator's ground truth."""
    return json.loads(_starn.synth(str(data_path), _cfg(config)))


def build_graph(data_path, graph_path, config=None):
    """Cluster records into segments, build and save the graph; returns a summary."""
    return json.loads(_starn.build_graph(str(data_path), str(graph_path), _cfg(config)))


def train(data_path, graph_path, checkpoint_path, variant="full", config=None):
    """Train one model variant and save its best checkpoint."""
    return json.loads(_starn.train(str(data_path), str(graph_path), str(checkpoint_path), variant, _cfg(config)))


def evaluate(data_path, graph_path, checkpoint_path, config=None):
    """Metrics of a checkpoint on the test split of the data."""
    return json.loads(_starn.evaluate(str(data_path), str(graph_path), str(checkpoint_path), _cfg(config)))


def predict(input_path, graph_path, checkpoint_path, assign_radius_m=0.0):
    """Class probabilities per record.

    Returns a dict with ``ids``, ``node``, ``probs`` (n x 4), ``predicted``
    and ``unassigned`` (ids too far from every segment).
    """
    ids, node, probs, unassigned = _starn.predict(str(input_path), str(graph_path), str(checkpoint_path),
                                                  float(assign_radius_m))
    probs = np.asarray(probs)
    return {
        "ids": list(ids),
        "node": np.asarray(node, dtype=np.int64),
        "probs": probs,
        "predicted": probs.argmax(axis=1) if len(probs) else np.zeros(0, dtype=np.int64),
        "unassigned": list(unassigned),
    }


def evaluate_probs(y_true, probs):
    """Full metrics report for labels and row-wise class probabilities."""
    y = np.asarray(y_true, dtype=np.int64).tolist()
    return json.loads(_starn.evaluate_probs(y, np.asarray(probs, dtype=np.float64)))


def dbscan(lat, lon, eps_m, min_samples):
    """DBSCAN labels under the haversine metric; -1 marks noise."""
    labels = _starn.dbscan(np.asarray(lat, dtype=np.float64).tolist(), np.asarray(lon, dtype=np.float64).tolist(),
                           float(eps_m), int(min_samples))
    return np.asarray(labels, dtype=np.int64)


def algebraic_connectivity(adjacency):
    """Second-smallest eigenvalue of the normalized Laplacian."""
    return _starn.algebraic_connectivity(np.asarray(adjacency, dtype=np.float64))


def cosine_lr(t_cur, t_max, eta_min=1e-6, eta_max=3e-4):
    return _starn.cosine_lr(float(t_cur), float(t_max), float(eta_min), float(eta_max))


def focal_loss(probs, labels, alpha=None, gamma=2.0):
    probs = np.asarray(probs, dtype=np.float64)
    if alpha is None:
        alpha = np.ones(probs.shape[1])
    return _starn.focal_loss(probs, np.asarray(labels, dtype=np.int64).tolist(),
                             np.asarray(alpha, dtype=np.float64).tolist(), float(gamma))


def gradcheck(corrupt_gradient=False):
    """Finite-difference check of every op and model variant; list of dicts."""
    return list(_starn.gradcheck(bool(corrupt_gradient)))


def bench(sizes=(100, 200, 400, 800), seed=42, repeats=5):
    return json.loads(_starn.bench([int(s) for s in sizes], int(seed), int(repeats)))
