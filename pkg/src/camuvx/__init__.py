"""Causal discovery for additive models with unobserved variables.

The search runs against a test engine: :class:`SampleEngine` answers from
data (additive regression, HSIC, kNN conditional mutual information) and
:class:`OracleEngine` answers exactly from a known graph.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .discovery import DiscoveryResult, SearchConfig, cam_uv, cam_uvx
from .engines import OracleEngine, SampleEngine
from .evaluation import MetricReport, score_adjacency, score_ancestors
from .fixtures import load_fixture
from .graph import CausalGraph, PairClass, Visibility, d_separated, ground_truth_pair_class
from .synth import Dataset, ScmSpec, make_scm_spec, sample_ba_graph, sample_dataset, sample_er_graph_with_hidden

__all__ = [
    "CausalGraph",
    "Dataset",
    "DiscoveryResult",
    "MetricReport",
    "OracleEngine",
    "PairClass",
    "SampleEngine",
    "ScmSpec",
    "SearchConfig",
    "Visibility",
    "__version__",
    "cam_uv",
    "cam_uvx",
    "d_separated",
    "ground_truth_pair_class",
    "load_fixture",
    "make_scm_spec",
    "sample_ba_graph",
    "sample_dataset",
    "sample_er_graph_with_hidden",
    "score_adjacency",
    "score_ancestors",
]
