"""End-to-end conversion: analyze, rewrite, split, and report what is left."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .analyzer import AnalyzeOptions, CompatibilityReport, analyze
from .errors import PreconditionError, SplitError
from .ir.graph import Graph
from .ir.shapes import check_graph
from .profiles import CapabilityProfile
from .rewrite.base import apply_rule
from .rewrite.custom import DEFAULT_SOURCE_FRAMEWORK, emit_custom_manifest
from .rewrite.registry import RuleRegistry, default_rules
from .rewrite.split import SplitArtifacts, split_tail
from .scenarios import Scenario


@dataclass(frozen=True)
class AppliedRule:
    node_id: str
    rule_id: str
    scenario: Scenario
    retraining_required: bool

    def to_dict(self) -> dict:
        return {"node_id": self.node_id, "rule_id": self.rule_id,
                "scenario": self.scenario.value, "retraining_required": self.retraining_required}


@dataclass(frozen=True)
class ConversionResult:
    original: Graph
    graph: Graph
    split: Optional[SplitArtifacts]
    applied: tuple
    custom_manifests: tuple
    report: CompatibilityReport
    residual: CompatibilityReport
    split_seeds: tuple = field(default=())

    @property
    def prefix(self) -> Graph:
        return self.split.prefix if self.split else self.graph

    @property
    def retraining_required(self) -> bool:
        return any(a.retraining_required for a in self.applied)

    def manifest_dict(self) -> dict:
        return {
            "profile": self.report.profile_name,
            "applied_rules": [a.to_dict() for a in self.applied],
            "retraining_required": self.retraining_required,
            "split_seeds": list(self.split_seeds),
            "cut_tensors": list(self.split.cut_tensors) if self.split else [],
            "fused_output": self.split.fused_output_name if self.split else None,
            "fusion_manifest": [e.to_dict() for e in self.split.fusion_manifest]
            if self.split else [],
            "custom_ops": [m.to_dict() for m in self.custom_manifests],
            "report": self.report.to_dict(),
            "residual": self.residual.to_dict(),
        }


def convert(g: Graph, p: CapabilityProfile, rules: Optional[RuleRegistry] = None,
            opts: Optional[AnalyzeOptions] = None,
            source_framework: str = DEFAULT_SOURCE_FRAMEWORK) -> ConversionResult:
    rules = default_rules() if rules is None else rules
    opts = opts or AnalyzeOptions()
    report = analyze(g, p, rules, opts)

    current = g
    applied = []
    for scenario in (Scenario.S1, Scenario.S2):
        for a in report.by_scenario(scenario):
            rule = rules.get(a.rule_id)
            res = apply_rule(current, a.node_id, rule)
            current = check_graph(res.graph)
            applied.append(AppliedRule(a.node_id, rule.rule_id, scenario, rule.retraining_required))

    seeds = tuple(a.node_id for a in report.by_scenario(Scenario.S3))
    split = None
    if seeds or (p.single_output_only and len(current.outputs) > 1):
        try:
            split = split_tail(current, seeds, p)
        except SplitError as exc:
            raise SplitError(f"{exc}; nodes {list(seeds)} are candidates for "
                             f"{Scenario.S4.value} instead") from None
        except PreconditionError:
            # outputs cannot be fused (mixed dtypes); the residual report will
            # carry the single-output violation instead
            split = split_tail(current, seeds)

    manifests = emit_custom_manifest(g, report, source_framework)
    final = split.prefix if split else current
    keep_s4 = {a.node_id: Scenario.S4 for a in report.by_scenario(Scenario.S4)}
    residual = analyze(final, p, rules, AnalyzeOptions(opts.tail_fraction, keep_s4))
    return ConversionResult(g, current, split, tuple(applied), tuple(manifests), report,
                            residual, seeds)
