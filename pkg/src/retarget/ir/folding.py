"""Constant detection with folding through the reference interpreter."""

from __future__ import annotations

from typing import Optional, Tuple

from .graph import Graph, Initializer, is_custom_op


def _constant_cone(g: Graph, value: str):
    """Nodes computing ``value`` from initializers alone, or None if it depends on an input."""
    cone = {}
    stack = [value]
    while stack:
        v = stack.pop()
        if v in g.initializer_map:
            continue
        node = g.producers.get(v)
        if node is None or is_custom_op(node.op_type):
            return None
        if node.id not in cone:
            cone[node.id] = node
            stack.extend(node.inputs)
    return cone


def is_constant(g: Graph, value: str) -> Tuple[bool, Optional[Initializer]]:
    """Whether ``value`` is fixed at build time, with its folded contents when it is."""
    if value in g.initializer_map:
        return True, g.initializer_map[value]
    cone = _constant_cone(g, value)
    if cone is None:
        return False, None
    from ..interpreter import run_graph

    used = {v for n in cone.values() for v in n.inputs}
    sub = Graph(
        f"{g.name}.fold",
        inputs=(),
        outputs=(value,),
        initializers=tuple(i for i in g.initializers if i.name in used),
        nodes=tuple(n for n in g.nodes if n.id in cone),
    )
    folded = run_graph(sub, {})[value]
    return True, Initializer.from_array(value, folded)
