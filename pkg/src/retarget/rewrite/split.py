"""Tail split into a deployable prefix and a post-processing graph."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from ..errors import DefuseError, PreconditionError, SplitError
from ..ir.graph import Graph, Node, descendants, toposort
from ..ir.shapes import check_graph, infer_shapes
from ..profiles import CapabilityProfile
from .base import Namer

FUSED_OUTPUT = "fused_output"


@dataclass(frozen=True)
class FusionEntry:
    value_name: str
    shape: tuple
    flat_offset: int
    flat_length: int

    def to_dict(self) -> dict:
        return {"value_name": self.value_name, "shape": list(self.shape),
                "flat_offset": self.flat_offset, "flat_length": self.flat_length}

    @classmethod
    def from_dict(cls, d: dict) -> "FusionEntry":
        return cls(d["value_name"], tuple(d["shape"]), int(d["flat_offset"]),
                   int(d["flat_length"]))


@dataclass(frozen=True)
class SplitArtifacts:
    prefix: Graph
    postprocess: Graph
    fusion_manifest: tuple = ()
    fused_output_name: Optional[str] = None
    cut_tensors: tuple = ()

    def prefix_outputs_to_post_inputs(self, prefix_out: dict) -> dict:
        """Turn the prefix's run results into the postprocess graph's inputs."""
        if self.fused_output_name is not None:
            return defuse(self.fusion_manifest, prefix_out[self.fused_output_name])
        return dict(prefix_out)


def fuse_outputs(g: Graph):
    """Flatten every output and concatenate them into one vector.

    Returns the new graph and the manifest needed to slice the vector apart.
    """
    if not g.outputs:
        raise PreconditionError("graph has no outputs to fuse")
    specs = infer_shapes(g)
    dtypes = {specs[o].dtype for o in g.outputs}
    if len(dtypes) > 1:
        raise PreconditionError(f"cannot fuse outputs of mixed dtypes {sorted(dtypes)}")
    namer = Namer(g)
    fused = FUSED_OUTPUT if FUSED_OUTPUT not in namer.taken else namer.fresh(FUSED_OUTPUT)
    namer.taken.add(fused)
    nodes, flat_names, manifest = [], [], []
    offset = 0
    for o in g.outputs:
        flat = namer.fresh(f"{o}_flat")
        nodes.append(Node(namer.fresh("fuse_flatten"), "Flatten", (o,), (flat,), {"axis": 0}))
        flat_names.append(flat)
        length = specs[o].size
        manifest.append(FusionEntry(o, specs[o].shape, offset, length))
        offset += length
    nodes.append(Node(namer.fresh("fuse_concat"), "Concat", tuple(flat_names), (fused,),
                      {"axis": 0}))
    out = g.replace(nodes=g.nodes + tuple(nodes), outputs=(fused,))
    return check_graph(out), tuple(manifest)


def defuse(manifest: Iterable[FusionEntry], fused) -> dict:
    """Exact inverse of :func:`fuse_outputs` on values."""
    manifest = list(manifest)
    fused = np.asarray(fused)
    total = sum(e.flat_length for e in manifest)
    if fused.ndim > 1 or fused.size != total:
        raise DefuseError(f"fused tensor of shape {list(fused.shape)} does not match the "
                          f"manifest total length {total}")
    out = {}
    for e in manifest:
        if e.flat_length != math.prod(e.shape):
            raise DefuseError(f"manifest entry {e.value_name!r}: length {e.flat_length} "
                              f"!= size of shape {list(e.shape)}")
        if e.flat_offset < 0 or e.flat_offset + e.flat_length > fused.size:
            raise DefuseError(f"manifest entry {e.value_name!r} runs past the fused tensor")
        out[e.value_name] = fused[e.flat_offset:e.flat_offset + e.flat_length].reshape(e.shape)
    return out


def _identity_graph(name: str, specs: list) -> Graph:
    return Graph(name, inputs=specs, outputs=[s.name for s in specs])


def split_tail(g: Graph, seed_nodes: Iterable[str],
               p: Optional[CapabilityProfile] = None) -> SplitArtifacts:
    """Move the descendant closure of ``seed_nodes`` into a post-processing graph.

    Every value the tail reads from outside (skip connections included)
    becomes a prefix output; under a single-output profile those outputs are
    fused into one vector.
    """
    seeds = list(dict.fromkeys(seed_nodes))
    for s in seeds:
        if s not in g.node_map:
            raise SplitError(f"seed not found: {s!r}")
    specs = infer_shapes(g)
    suffix = descendants(g, seeds)
    if g.nodes and len(suffix) == len(g.nodes):
        raise SplitError("closure covers all nodes; nothing would remain deployable "
                         "(consider a custom op instead)")

    if not suffix:
        prefix = g
        post = _identity_graph(f"{g.name}.post", [specs[o] for o in g.outputs])
        cut = tuple(g.outputs)
    else:
        produced_in_suffix = {o for nid in suffix for o in g.node(nid).outputs}
        cut_list = []
        for n in toposort(g):
            if n.id in suffix:
                cut_list += [v for v in n.inputs
                             if v not in produced_in_suffix and v not in g.initializer_map]
        cut_list += [o for o in g.outputs if o not in produced_in_suffix]
        cut = tuple(dict.fromkeys(cut_list))

        pre_nodes = [n for n in g.nodes if n.id not in suffix]
        post_nodes = [n for n in g.nodes if n.id in suffix]
        pre_used = {v for n in pre_nodes for v in n.inputs} | set(cut)
        post_used = {v for n in post_nodes for v in n.inputs}
        prefix = Graph(g.name, g.inputs, cut,
                       [i for i in g.initializers if i.name in pre_used], pre_nodes)
        post = Graph(f"{g.name}.post", [specs[v] for v in cut], g.outputs,
                     [i for i in g.initializers if i.name in post_used and i.name not in cut],
                     post_nodes)
        check_graph(prefix)
        check_graph(post)

    if p is not None and p.single_output_only and len(prefix.outputs) > 1:
        fused, manifest = fuse_outputs(prefix)
        return SplitArtifacts(fused, post, manifest, fused.outputs[0], cut)
    return SplitArtifacts(prefix, post, (), None, cut)
