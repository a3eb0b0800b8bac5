"""Hyper-relational query answering: exact execution and a trained encoder."""

import json

from . import _nqe
from ._nqe import (
    DataError,
    FormatError,
    HyperGraph,
    LabelError,
    NumericalError,
    ParseError,
    answer,
    clustered_graph,
    conj,
    disj,
    neg,
    normalize_query,
    random_graph,
    rank_filtered,
)

__all__ = [
    "DataError", "FormatError", "HyperGraph", "LabelError", "NumericalError", "ParseError",
    "answer", "clustered_graph", "conj", "disj", "neg", "normalize_query", "random_graph",
    "rank_filtered", "sample_query", "generate_dataset", "train", "evaluate", "predict",
]


def sample_query(graph, type, split="test", seed=0):
    raw = _nqe.sample_query(graph, type, split, seed)
    return None if raw is None else json.loads(raw)


def generate_dataset(graph, counts, seed, out, threads=1, split="test"):
    return json.loads(_nqe.generate_dataset(graph, counts, seed, str(out), threads, split))


def train(store, data, checkpoint, config_toml="", threads=1):
    return json.loads(_nqe.train(str(store), str(data), config_toml, str(checkpoint), threads))


def evaluate(store, data, checkpoint, split="test"):
    return json.loads(_nqe.evaluate(str(store), str(data), str(checkpoint), split))


def predict(checkpoint, query):
    """Per-variable entity probabilities: {"V1": [...], ..., "V_tar": [...], "entities": [...]}."""
    return json.loads(_nqe.predict(str(checkpoint), query))
