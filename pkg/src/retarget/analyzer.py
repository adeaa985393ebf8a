"""Compatibility analysis: which nodes a target rejects and how each can be fixed."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from .ir.graph import Graph, Node, descendants, toposort
from .ir.shapes import infer_shapes
from .profiles import CapabilityProfile, supports
from .rewrite.registry import RuleRegistry, default_rules
from .scenarios import Scenario

ALL_NODES = "*"


@dataclass(frozen=True)
class AnalyzeOptions:
    """``prefer`` maps a node id (or ``"*"`` for every node) to a forced scenario."""

    tail_fraction: float = 0.25
    prefer: Mapping[str, Scenario] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.tail_fraction <= 1.0:
            raise ValueError("tail_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class ScenarioAssignment:
    node_id: str
    op_type: str
    scenario: Scenario
    rule_id: Optional[str]
    rationale: str

    def __post_init__(self):
        needs_rule = self.scenario in (Scenario.S1, Scenario.S2)
        if needs_rule != (self.rule_id is not None):
            raise ValueError(f"{self.scenario.value} assignment for {self.node_id!r} "
                             f"{'needs' if needs_rule else 'must not carry'} a rule_id")

    def to_dict(self) -> dict:
        return {"node_id": self.node_id, "op_type": self.op_type,
                "scenario": self.scenario.value, "rule_id": self.rule_id,
                "rationale": self.rationale}


@dataclass(frozen=True)
class CompatibilityReport:
    profile_name: str
    unsupported: tuple = ()
    structural_violations: tuple = ()

    @property
    def deployable_as_is(self) -> bool:
        return not self.unsupported and not self.structural_violations

    def by_scenario(self, scenario: Scenario) -> list:
        return [a for a in self.unsupported if a.scenario == scenario]

    def to_dict(self) -> dict:
        return {
            "profile_name": self.profile_name,
            "unsupported": [a.to_dict() for a in self.unsupported],
            "structural_violations": list(self.structural_violations),
            "deployable_as_is": self.deployable_as_is,
        }

    def format_table(self) -> str:
        lines = [f"profile: {self.profile_name}",
                 f"deployable as-is: {'yes' if self.deployable_as_is else 'no'}"]
        if self.unsupported:
            rows = [("node", "op", "scenario", "rule", "rationale")]
            rows += [(a.node_id, a.op_type, a.scenario.value, a.rule_id or "-", a.rationale)
                     for a in self.unsupported]
            widths = [max(len(r[i]) for r in rows) for i in range(4)]
            for r in rows:
                lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)) + "  " + r[4])
        for v in self.structural_violations:
            lines.append(f"violation: {v}")
        return "\n".join(lines)


def _first_rule(g: Graph, node: Node, p: CapabilityProfile, rules, scenario: Scenario):
    for rule in rules.for_scenario(scenario):
        bindings = rule.match(g, node)
        if bindings is None:
            continue
        missing = rule.emits(g, node, bindings) - p.supported_ops
        if not missing:
            return rule
    return None


def _structural_violations(g: Graph, p: CapabilityProfile) -> list:
    out = []
    if p.single_output_only and len(g.outputs) > 1:
        out.append(f"graph has {len(g.outputs)} outputs but {p.name} accepts a single output")
    if p.max_input_pixels is not None:
        for spec in g.inputs:
            if len(spec.shape) == 4:
                pixels = spec.shape[2] * spec.shape[3]
                if pixels > p.max_input_pixels:
                    out.append(f"input {spec.name!r} has {spec.shape[2]}x{spec.shape[3]} = "
                               f"{pixels} pixels, above the {p.max_input_pixels} cap")
    return out


def tail_eligible(g: Graph, node_id: str, tail_fraction: float) -> bool:
    closure = descendants(g, [node_id])
    if len(closure) >= len(g.nodes) or len(closure) > tail_fraction * len(g.nodes):
        return False
    return not any(v in g.input_map for nid in closure for v in g.node(nid).inputs)


def analyze(g: Graph, p: CapabilityProfile, rules: Optional[RuleRegistry] = None,
            opts: Optional[AnalyzeOptions] = None) -> CompatibilityReport:
    """Assign one scenario to every node ``p`` does not support.

    Default priority is S1 > S3 > S2 > S4. A node lying downstream of a node
    already sent to post-processing joins that tail instead of being rewritten.
    """
    rules = default_rules() if rules is None else rules
    opts = opts or AnalyzeOptions()
    infer_shapes(g)
    in_tail: dict = {}
    assignments = []
    for node in toposort(g):
        if supports(p, node):
            continue
        s1 = _first_rule(g, node, p, rules, Scenario.S1)
        s2 = _first_rule(g, node, p, rules, Scenario.S2)
        eligible = tail_eligible(g, node.id, opts.tail_fraction)
        pref = opts.prefer.get(node.id, opts.prefer.get(ALL_NODES))
        pick = None
        note = ""
        if pref is not None:
            pref = Scenario(pref)
            if pref == Scenario.S1 and s1:
                pick = (Scenario.S1, s1, f"preferred: {s1.description}")
            elif pref == Scenario.S2 and s2:
                pick = (Scenario.S2, s2, f"preferred: {s2.description}")
            elif pref == Scenario.S3:
                why = "" if eligible else " (not tail-eligible by the size rule)"
                pick = (Scenario.S3, None, f"preferred: moved to post-processing{why}")
            elif pref == Scenario.S4:
                pick = (Scenario.S4, None, "preferred: implement as custom op in both frameworks")
            else:
                note = f"preferred {pref.name} not applicable; "
        if pick is None:
            if node.id in in_tail:
                also = " (an S1 rule also matches; policy keeps the tail intact)" if s1 else ""
                pick = (Scenario.S3, None,
                        f"downstream of {in_tail[node.id]!r}, already in the post-processing "
                        f"tail{also}")
            elif s1:
                pick = (Scenario.S1, s1, s1.description)
            elif eligible:
                pick = (Scenario.S3, None, "among the trailing nodes; run as post-processing")
            elif s2:
                pick = (Scenario.S2, s2, s2.description)
            else:
                pick = (Scenario.S4, None, "no applicable rule and not in the tail; "
                                           "implement as custom op in both frameworks")
        scenario, rule, rationale = pick
        if scenario == Scenario.S3:
            for nid in descendants(g, [node.id]):
                in_tail.setdefault(nid, node.id)
        assignments.append(ScenarioAssignment(node.id, node.op_type, scenario,
                                              rule.rule_id if rule else None, note + rationale))
    return CompatibilityReport(p.name, tuple(assignments), tuple(_structural_violations(g, p)))
