"""ConvTranspose2D replacements built from Conv2D plus Reshape/Transpose/Reshape.

With stride equal to kernel size and zero padding every input pixel emits
its own disjoint k x k block, so a 1x1 convolution producing ``Cout*s*s``
channels followed by a depth-to-space rearrangement is exactly equivalent.
Any other parameterisation gets a shape-compatible structure with zeroed
weights that has to be retrained.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import PreconditionError
from ..ir.folding import is_constant
from ..ir.graph import Graph, Initializer, Node
from ..ir.shapes import infer_shapes
from ..scenarios import Scenario
from .base import Namer, Replacement, RewriteResult, RewriteRule, apply_rule

MODES = ("exact_nonoverlap", "structural")


def _block_rearrange(node: Node, src: str, n: int, cout: int, block: tuple, grid: tuple,
                     namer: Namer) -> list:
    """Reshape -> Transpose -> Reshape turning [N, Cout*bh*bw, H, W] into [N, Cout, H*bh, W*bw]."""
    (bh, bw), (h, w) = block, grid
    split, moved = namer.fresh(node.outputs[0]), namer.fresh(node.outputs[0])
    return [
        Node(namer.fresh(node.id), "Reshape", (src,), (split,),
             {"shape": (n, cout, bh, bw, h, w)}),
        Node(namer.fresh(node.id), "Transpose", (split,), (moved,),
             {"perm": (0, 1, 4, 2, 5, 3)}),
        Node(namer.fresh(node.id), "Reshape", (moved,), node.outputs,
             {"shape": (n, cout, h * bh, w * bw)}),
    ]


class ConvTransposeExact(RewriteRule):
    rule_id = "convtranspose_exact"
    scenario = Scenario.S2
    retraining_required = False
    description = ("Non-overlapping ConvTranspose2D (stride == kernel, pad 0) -> 1x1 Conv2D "
                   "+ depth-to-space; weights transferred exactly")

    @staticmethod
    def precondition(g: Graph, node: Node):
        """Reason the exact rewrite is impossible, or None."""
        if node.op_type != "ConvTranspose2D":
            return f"node {node.id!r} is {node.op_type}, not ConvTranspose2D"
        kh, kw = infer_shapes(g)[node.inputs[1]].shape[2:]
        s, p = node.attr("stride"), node.attr("padding")
        if not (kh == kw == s and p == 0):
            return (f"exact mode needs stride == kernel size and padding 0; node {node.id!r} "
                    f"has kernel {kh}x{kw}, stride {s}, padding {p}")
        for v in node.inputs[1:]:
            if not is_constant(g, v)[0]:
                return f"exact mode needs constant weights; {v!r} is computed at run time"
        return None

    def match(self, g, node):
        if self.precondition(g, node) is not None:
            return None
        consts = [is_constant(g, v)[1].data for v in node.inputs[1:]]
        return {"weight": consts[0], "bias": consts[1] if len(consts) > 1 else None}

    def emits(self, g, node, bindings):
        s = node.attr("stride")
        return {"Conv2D"} if s == 1 else {"Conv2D", "Reshape", "Transpose"}

    def build(self, g, node, bindings, namer):
        w, b = bindings["weight"], bindings["bias"]
        cin, cout, s, _ = w.shape
        n, _, h, wd = infer_shapes(g)[node.inputs[0]].shape
        # channel (o, a, b) -> o*s*s + a*s + b, matching the depth-to-space split below
        w1 = w.transpose(1, 2, 3, 0).reshape(cout * s * s, cin, 1, 1)
        inits = [Initializer.from_array(namer.fresh(node.inputs[1]), w1)]
        if b is not None:
            inits.append(Initializer.from_array(namer.fresh(node.inputs[2]), np.repeat(b, s * s)))
        if s == 1:
            conv = Node(namer.fresh(node.id), "Conv2D", (node.inputs[0],) + tuple(
                i.name for i in inits), node.outputs, {"stride": 1, "padding": 0})
            return Replacement(nodes=[conv], initializers=inits)
        mid = namer.fresh(node.outputs[0])
        conv = Node(namer.fresh(node.id), "Conv2D",
                    (node.inputs[0],) + tuple(i.name for i in inits), (mid,),
                    {"stride": 1, "padding": 0})
        tail = _block_rearrange(node, mid, n, cout, (s, s), (h, wd), namer)
        return Replacement(nodes=[conv] + tail, initializers=inits)


def _block_factor(size: int, stride: int, kernel: int) -> int:
    """Divisor of ``size`` no larger than max(stride, kernel), closest to the stride."""
    divisors = [r for r in range(1, max(stride, kernel) + 1) if size % r == 0]
    return min(divisors, key=lambda r: (abs(r - stride), -r))


class ConvTransposeStructural(RewriteRule):
    rule_id = "convtranspose_structural"
    scenario = Scenario.S2
    retraining_required = True
    description = ("ConvTranspose2D -> Conv2D + Reshape/Transpose/Reshape with zero-initialised "
                   "weights; output shape preserved, retraining required")

    def match(self, g, node):
        return {} if node.op_type == "ConvTranspose2D" else None

    def emits(self, g, node, bindings):
        return {"Conv2D", "Reshape", "Transpose"}

    def build(self, g, node, bindings, namer):
        specs = infer_shapes(g)
        n, cin, h, wd = specs[node.inputs[0]].shape
        _, cout, ho, wo = specs[node.outputs[0]].shape
        k = specs[node.inputs[1]].shape[2]
        s = node.attr("stride")
        bh, bw = _block_factor(ho, s, k), _block_factor(wo, s, k)
        th, tw = ho // bh, wo // bw
        # stride-1 conv must map (h, wd) -> (th, tw): out = in + 2p - k + 1
        reach = math.ceil(k / s) | 1
        pad = max(0, math.ceil((th - h) / 2), math.ceil((tw - wd) / 2), (reach - 1) // 2)
        kh, kw = h + 2 * pad + 1 - th, wd + 2 * pad + 1 - tw
        channels = cout * bh * bw
        inits = [Initializer.from_array(namer.fresh(node.inputs[1]),
                                        np.zeros((channels, cin, kh, kw), np.float32))]
        if len(node.inputs) > 2:
            inits.append(Initializer.from_array(namer.fresh(node.inputs[2]),
                                                np.zeros(channels, np.float32)))
        mid = namer.fresh(node.outputs[0])
        conv = Node(namer.fresh(node.id), "Conv2D",
                    (node.inputs[0],) + tuple(i.name for i in inits), (mid,),
                    {"stride": 1, "padding": pad})
        tail = _block_rearrange(node, mid, n, cout, (bh, bw), (th, tw), namer)
        return Replacement(nodes=[conv] + tail, initializers=inits)


CONVTRANSPOSE_EXACT = ConvTransposeExact()
CONVTRANSPOSE_STRUCTURAL = ConvTransposeStructural()


def rewrite_convtranspose(g: Graph, node_id: str, mode: str) -> RewriteResult:
    """Replace a ConvTranspose2D node using ``mode`` ("exact_nonoverlap" or "structural")."""
    if mode not in MODES:
        raise PreconditionError(f"unknown mode {mode!r}; expected one of {MODES}")
    node = g.node(node_id)
    if node.op_type != "ConvTranspose2D":
        raise PreconditionError(f"node {node_id!r} is {node.op_type}, not ConvTranspose2D")
    if mode == "exact_nonoverlap":
        reason = ConvTransposeExact.precondition(g, node)
        if reason:
            raise PreconditionError(reason)
        return apply_rule(g, node_id, CONVTRANSPOSE_EXACT)
    return apply_rule(g, node_id, CONVTRANSPOSE_STRUCTURAL)
