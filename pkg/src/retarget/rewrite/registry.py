"""Ordered collection of rewrite rules; earlier rules win when several match."""

from __future__ import annotations

from typing import Iterable, Iterator, Optional

from ..scenarios import Scenario
from .base import RewriteRule
from .deconv import CONVTRANSPOSE_EXACT, CONVTRANSPOSE_STRUCTURAL
from .substitution import CastNoopDrop, DropoutDrop, SubConstToAdd, SubToAddNeg


class RuleRegistry:
    def __init__(self, rules: Iterable[RewriteRule] = ()):
        self.rules = tuple(rules)
        ids = [r.rule_id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate rule ids in {ids}")

    def __iter__(self) -> Iterator[RewriteRule]:
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)

    def get(self, rule_id: str) -> RewriteRule:
        for r in self.rules:
            if r.rule_id == rule_id:
                return r
        raise KeyError(f"no rule {rule_id!r}")

    def for_scenario(self, scenario: Scenario) -> list:
        return [r for r in self.rules if r.scenario == scenario]

    def without(self, *rule_ids: str) -> "RuleRegistry":
        return RuleRegistry(r for r in self.rules if r.rule_id not in rule_ids)


def default_rules(deconv_mode: Optional[str] = None) -> RuleRegistry:
    """Shipped rules. ``deconv_mode`` pins the ConvTranspose rewrite to one mode."""
    deconv = {
        None: [CONVTRANSPOSE_EXACT, CONVTRANSPOSE_STRUCTURAL],
        "exact_nonoverlap": [CONVTRANSPOSE_EXACT],
        "structural": [CONVTRANSPOSE_STRUCTURAL],
    }[deconv_mode]
    return RuleRegistry([SubConstToAdd(), SubToAddNeg(), DropoutDrop(), CastNoopDrop(), *deconv])
