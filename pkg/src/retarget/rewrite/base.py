"""Rule protocol and the generic node-replacement driver."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from ..errors import RewriteError, RuleMismatchError
from ..ir.graph import Graph, Initializer, Node
from ..ir.shapes import infer_shapes
from ..scenarios import Scenario

_RW_SUFFIX = re.compile(r"__rw(\d+)$")


class Namer:
    """Hands out fresh ``<base>__rw<k>`` names; k keeps rising across applications."""

    def __init__(self, g: Graph, limit: int = 1_000_000):
        self.taken = set(g.value_names()) | set(g.node_map)
        found = [int(m.group(1)) for n in self.taken if (m := _RW_SUFFIX.search(n))]
        self.counter = max(found, default=-1) + 1
        self.limit = limit

    def fresh(self, base: str) -> str:
        base = _RW_SUFFIX.sub("", base)
        for _ in range(self.limit):
            name = f"{base}__rw{self.counter}"
            self.counter += 1
            if name not in self.taken:
                self.taken.add(name)
                return name
        raise RewriteError(f"could not find a fresh name for {base!r}")


@dataclass
class Replacement:
    nodes: list = field(default_factory=list)
    initializers: list = field(default_factory=list)
    # consumers of key are redirected to value (used by node-removal rules)
    rewire: dict = field(default_factory=dict)


class RewriteRule:
    """A local rewrite: ``match`` binds, ``emits`` lists new op types, ``build`` replaces."""

    rule_id: str = ""
    scenario: Scenario = Scenario.S1
    retraining_required: bool = False
    extension: bool = False
    description: str = ""

    def match(self, g: Graph, node: Node) -> Optional[dict]:
        raise NotImplementedError

    def emits(self, g: Graph, node: Node, bindings: dict) -> set:
        raise NotImplementedError

    def build(self, g: Graph, node: Node, bindings: dict, namer: Namer) -> Replacement:
        raise NotImplementedError

    def metadata(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "scenario": self.scenario.value,
            "retraining_required": self.retraining_required,
            "extension": self.extension,
            "description": self.description,
        }

    def __repr__(self):
        return f"<{type(self).__name__} {self.rule_id}>"


@dataclass(frozen=True)
class RewriteResult:
    graph: Graph
    rule_id: str
    node_id: str
    scenario: Scenario
    retraining_required: bool
    new_node_ids: tuple = ()


def _prune(nodes: list, inits: list, outputs: tuple, node_ids: set, values: set):
    """Drop candidate nodes/initializers that no longer feed anything."""
    producers = {o: n.id for n in nodes for o in n.outputs}
    changed = True
    while changed:
        changed = False
        used = {v for n in nodes for v in n.inputs} | set(outputs)
        for n in list(nodes):
            if n.id in node_ids and not any(o in used for o in n.outputs):
                nodes.remove(n)
                values.update(n.inputs)
                node_ids.update(producers[v] for v in n.inputs if v in producers)
                changed = True
    used = {v for n in nodes for v in n.inputs} | set(outputs)
    inits[:] = [i for i in inits if i.name in used or i.name not in values]


def replace_node(g: Graph, node: Node, rep: Replacement) -> Graph:
    nodes = []
    for n in g.nodes:
        if n.id == node.id:
            nodes.extend(rep.nodes)
        elif rep.rewire and any(v in rep.rewire for v in n.inputs):
            nodes.append(n.replace(inputs=[rep.rewire.get(v, v) for v in n.inputs]))
        else:
            nodes.append(n)
    inits = list(g.initializers) + list(rep.initializers)
    producer_ids = {g.producers[v].id for v in node.inputs if v in g.producers}
    _prune(nodes, inits, g.outputs, producer_ids, set(node.inputs))
    return g.replace(nodes=nodes, initializers=inits)


def apply_rule(g: Graph, node_id: str, rule: RewriteRule) -> RewriteResult:
    """Replace one node via ``rule``; ``g`` itself is left untouched."""
    node = g.node(node_id)
    bindings = rule.match(g, node)
    if bindings is None:
        raise RuleMismatchError(f"rule {rule.rule_id!r} does not match node {node_id!r}")
    before = infer_shapes(g)
    rep = rule.build(g, node, bindings, Namer(g))
    new = replace_node(g, node, rep)
    after = infer_shapes(new)
    for o in node.outputs:
        if o in after and after[o] != before[o]:
            raise RewriteError(
                f"rule {rule.rule_id!r} changed {o!r} from {before[o]} to {after[o]}")
    return RewriteResult(new, rule.rule_id, node_id, rule.scenario, rule.retraining_required,
                         tuple(n.id for n in rep.nodes))
