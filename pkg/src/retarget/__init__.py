"""Retarget neural-network graphs to the operator set of a deployment framework."""

__version__ = "0.1.0"

from .analyzer import AnalyzeOptions, CompatibilityReport, ScenarioAssignment, analyze
from .harness import DiffReport, diff_graphs, diff_split, gen_random_graph
from .interpreter import BenchReport, bench, mac_count, run_graph
from .ir import Graph, Initializer, Node, TensorSpec, parse_model, serialize_model
from .pipeline import ConversionResult, convert
from .profiles import CapabilityProfile, builtin_profile, find_profile, load_profile, supports
from .scenarios import Scenario

__all__ = [
    "AnalyzeOptions", "CompatibilityReport", "ScenarioAssignment", "analyze", "DiffReport",
    "diff_graphs", "diff_split", "gen_random_graph", "BenchReport", "bench", "mac_count",
    "run_graph", "Graph", "Initializer", "Node", "TensorSpec", "parse_model", "serialize_model",
    "ConversionResult", "convert", "CapabilityProfile", "builtin_profile", "find_profile",
    "load_profile", "supports", "Scenario",
]
