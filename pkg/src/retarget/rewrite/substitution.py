"""Semantics-preserving substitutions: no retraining, outputs identical."""

from __future__ import annotations

from ..ir.folding import is_constant
from ..ir.graph import Graph, Initializer, Node
from ..ir.shapes import infer_shapes
from ..scenarios import Scenario
from .base import Namer, Replacement, RewriteRule


class SubConstToAdd(RewriteRule):
    """``Sub(x, c)`` with constant ``c`` becomes ``Add(x, -c)``."""

    rule_id = "sub_const_to_add"
    scenario = Scenario.S1
    description = "Subtract of a constant -> Add of the negated constant"

    def match(self, g, node):
        if node.op_type != "Sub":
            return None
        const, folded = is_constant(g, node.inputs[1])
        if not const or folded.spec.dtype != "float32":
            return None
        return {"const": folded}

    def emits(self, g, node, bindings):
        return {"Add"}

    def build(self, g, node, bindings, namer: Namer):
        c = bindings["const"]
        neg = Initializer.from_array(namer.fresh(node.inputs[1]), -c.data)
        add = Node(namer.fresh(node.id), "Add", (node.inputs[0], neg.name), node.outputs)
        return Replacement(nodes=[add], initializers=[neg])


class SubToAddNeg(RewriteRule):
    """``Sub(x, y)`` becomes ``Add(x, Neg(y))`` for arbitrary ``y``."""

    rule_id = "sub_to_add_neg"
    scenario = Scenario.S1
    extension = True
    description = "Subtract -> Add of a negated operand"

    def match(self, g, node):
        return {} if node.op_type == "Sub" else None

    def emits(self, g, node, bindings):
        return {"Add", "Neg"}

    def build(self, g, node, bindings, namer):
        negated = namer.fresh(node.inputs[1])
        neg = Node(namer.fresh(node.id), "Neg", (node.inputs[1],), (negated,))
        add = Node(namer.fresh(node.id), "Add", (node.inputs[0], negated), node.outputs)
        return Replacement(nodes=[neg, add])


class _Bypass(RewriteRule):
    """Remove an identity node, pointing its consumers at its input.

    When the removed output is also a graph output its name must survive, so
    an identity Reshape is emitted in its place instead.
    """

    scenario = Scenario.S1
    extension = True

    def emits(self, g, node, bindings):
        return {"Reshape"} if node.outputs[0] in g.outputs else set()

    def build(self, g, node, bindings, namer):
        src, out = node.inputs[0], node.outputs[0]
        if out in g.outputs:
            shape = infer_shapes(g)[out].shape
            keep = Node(namer.fresh(node.id), "Reshape", (src,), (out,), {"shape": shape})
            return Replacement(nodes=[keep])
        return Replacement(rewire={out: src})


class DropoutDrop(_Bypass):
    rule_id = "dropout_drop"
    description = "Dropout is the identity at inference; remove it"

    def match(self, g, node):
        return {} if node.op_type == "Dropout" else None


class CastNoopDrop(_Bypass):
    rule_id = "cast_noop_drop"
    description = "Cast to the dtype the value already has; remove it"

    def match(self, g: Graph, node: Node):
        if node.op_type != "Cast":
            return None
        src = infer_shapes(g)[node.inputs[0]]
        return {} if src.dtype == node.attr("to") else None
