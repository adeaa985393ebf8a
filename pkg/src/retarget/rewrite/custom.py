"""Manifests for ops that must be hand-written as custom layers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from ..ir.graph import Graph
from ..ir.shapes import infer_shapes
from ..scenarios import Scenario

if TYPE_CHECKING:
    from ..analyzer import CompatibilityReport

DEFAULT_SOURCE_FRAMEWORK = "baseline"


@dataclass(frozen=True)
class CustomOpManifest:
    """One op type to implement twice: in the source framework and on the target."""

    op_type: str
    occurrences: tuple
    io_signature: dict
    required_in: tuple

    def to_dict(self) -> dict:
        return {"op_type": self.op_type, "occurrences": list(self.occurrences),
                "io_signature": self.io_signature, "required_in": list(self.required_in)}


def _sig(specs, names):
    return [{"name": n, "dtype": specs[n].dtype, "shape": list(specs[n].shape)} for n in names]


def emit_custom_manifest(g: Graph, report: "CompatibilityReport",
                         source_framework: str = DEFAULT_SOURCE_FRAMEWORK) -> list:
    specs = infer_shapes(g)
    grouped: dict = {}
    for a in report.by_scenario(Scenario.S4):
        if a.node_id in g.node_map:
            grouped.setdefault(g.node(a.node_id).op_type, []).append(a.node_id)
    out = []
    for op_type, ids in grouped.items():
        # signature of the first occurrence; later ones may differ in shape only
        first = g.node(ids[0])
        out.append(CustomOpManifest(
            op_type=op_type,
            occurrences=tuple(ids),
            io_signature={"inputs": _sig(specs, first.inputs), "outputs": _sig(specs, first.outputs)},
            required_in=(source_framework, report.profile_name),
        ))
    return out
