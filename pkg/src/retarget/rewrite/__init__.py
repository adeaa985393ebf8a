"""Graph transformations for each conversion scenario."""

from .base import Namer, Replacement, RewriteResult, RewriteRule, apply_rule
from .custom import CustomOpManifest, emit_custom_manifest
from .deconv import MODES, rewrite_convtranspose
from .registry import RuleRegistry, default_rules
from .split import FusionEntry, SplitArtifacts, defuse, fuse_outputs, split_tail

__all__ = [
    "Namer", "Replacement", "RewriteResult", "RewriteRule", "apply_rule", "CustomOpManifest",
    "emit_custom_manifest", "MODES", "rewrite_convtranspose", "RuleRegistry", "default_rules",
    "FusionEntry", "SplitArtifacts", "defuse", "fuse_outputs", "split_tail",
]
