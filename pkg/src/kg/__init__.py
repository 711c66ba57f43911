"""
Knowledge graph package
Core structures and dataset ingestion / task generation
"""

from .core import *
from .data import *

__all__ = [
    "RawTriple",
    "Triple",
    "Vocab",
    "Graph",
    "AdjacencyState",
    "FreqTable",
    "build_vocab",
    "graph_from_triples",
    "to_adjacency",
    "empty_adjacency",
    "relation_frequencies",
    "DatasetBundle",
    "Subgraph",
    "Task",
    "load_tsv",
    "load_dataset",
    "partition_graph",
    "coverage_report",
    "relation_balanced_split",
    "random_split",
    "task_seed",
    "generate_tasks",
    "whole_graph_tasks",
]
