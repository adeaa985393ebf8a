"""Static shape and dtype inference for the op vocabulary."""

from __future__ import annotations

import math

from ..errors import ShapeInferenceError
from .graph import Graph, Node, TensorSpec, is_custom_op, toposort

CASTABLE = ("float32", "int64")


def broadcast_shape(a: tuple, b: tuple):
    """Result shape of an elementwise binary op, or None when not allowed.

    Only three cases are accepted: equal shapes, one side holding a single
    element, or a ``[C, 1, 1]`` operand against ``[N, C, H, W]``.
    """
    a, b = tuple(a), tuple(b)
    if a == b:
        return a
    for big, small in ((a, b), (b, a)):
        if math.prod(small) == 1 and len(small) <= len(big):
            return big
        if len(big) == 4 and len(small) == 3 and small == (big[1], 1, 1):
            return big
    return None


def normalize_axis(axis: int, rank: int, node: Node, *, inclusive=False) -> int:
    hi = rank + 1 if inclusive else rank
    ax = axis + hi if axis < 0 else axis
    if not 0 <= ax < max(hi, 1):
        raise ShapeInferenceError(f"axis {axis} out of range for rank {rank}", node.id)
    return ax


def resolve_reshape(shape: tuple, target: tuple, node: Node) -> tuple:
    target = list(target)
    size = math.prod(shape)
    if target.count(-1) > 1:
        raise ShapeInferenceError("reshape target has more than one -1", node.id)
    if any(d == 0 or d < -1 for d in target):
        raise ShapeInferenceError(f"invalid reshape target {target}", node.id)
    if -1 in target:
        known = math.prod(d for d in target if d != -1)
        if size % known:
            raise ShapeInferenceError(
                f"cannot reshape {list(shape)} ({size} elements) to {target}", node.id)
        target[target.index(-1)] = size // known
    if math.prod(target) != size:
        raise ShapeInferenceError(
            f"cannot reshape {list(shape)} ({size} elements) to {target} "
            f"({math.prod(target)} elements)", node.id)
    return tuple(target)


def resolve_perm(node: Node, rank: int) -> tuple:
    perm = node.attr("perm")
    if perm is None:
        return tuple(reversed(range(rank)))
    if sorted(perm) != list(range(rank)):
        raise ShapeInferenceError(f"perm {list(perm)} is not a permutation of rank {rank}", node.id)
    return tuple(perm)


def resolve_slice(node: Node, shape: tuple) -> list:
    """Per-axis ``(axis, start, stop)`` triples, clamped to the input extent."""
    starts, ends = node.attr("starts"), node.attr("ends")
    axes = node.attr("axes")
    if axes is None:
        axes = tuple(range(len(starts)))
    if not len(starts) == len(ends) == len(axes):
        raise ShapeInferenceError("starts, ends and axes differ in length", node.id)
    norm = [normalize_axis(a, len(shape), node) for a in axes]
    if len(set(norm)) != len(norm):
        raise ShapeInferenceError("repeated slice axis", node.id)
    out = []
    for ax, s, e in zip(norm, starts, ends):
        dim = shape[ax]
        s = s + dim if s < 0 else s
        e = e + dim if e < 0 else e
        s, e = min(max(s, 0), dim), min(max(e, 0), dim)
        if e <= s:
            raise ShapeInferenceError(f"empty slice on axis {ax}", node.id)
        out.append((ax, s, e))
    return out


def conv_out(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def convtranspose_out(size, k, stride, pad):
    return (size - 1) * stride - 2 * pad + k


def _require_float(node: Node, *specs: TensorSpec):
    for s in specs:
        if s.dtype != "float32":
            raise ShapeInferenceError(
                f"{node.op_type} needs float32 operands, {s.name!r} is {s.dtype}", node.id)


def _conv_params(node: Node):
    stride, pad = node.attr("stride"), node.attr("padding")
    if stride < 1 or pad < 0:
        raise ShapeInferenceError(f"invalid stride {stride} / padding {pad}", node.id)
    return stride, pad


def infer_node(node: Node, ins: list) -> list:
    op = node.op_type
    if is_custom_op(op):
        dtype = node.attrs.get("dtype", ins[0].dtype if ins else None)
        shape = node.attrs.get("shape", ins[0].shape if ins else None)
        if dtype is None or shape is None:
            raise ShapeInferenceError("custom op without inputs needs 'shape' and 'dtype' attrs",
                                      node.id)
        return [(dtype, tuple(shape))] * len(node.outputs)

    x = ins[0]
    if op in ("Add", "Sub", "Mul"):
        _require_float(node, *ins)
        shape = broadcast_shape(ins[0].shape, ins[1].shape)
        if shape is None:
            raise ShapeInferenceError(
                f"{op} operands {list(ins[0].shape)} and {list(ins[1].shape)} "
                "are not broadcast-compatible", node.id)
        return [("float32", shape)]
    if op in ("Neg", "Relu"):
        _require_float(node, x)
        return [("float32", x.shape)]
    if op == "Softmax":
        _require_float(node, x)
        if not x.shape:
            raise ShapeInferenceError("Softmax needs rank >= 1", node.id)
        normalize_axis(node.attr("axis"), len(x.shape), node)
        return [("float32", x.shape)]
    if op == "Reshape":
        return [(x.dtype, resolve_reshape(x.shape, node.attr("shape"), node))]
    if op == "Transpose":
        perm = resolve_perm(node, len(x.shape))
        return [(x.dtype, tuple(x.shape[p] for p in perm))]
    if op == "Concat":
        rank = len(x.shape)
        if rank == 0:
            raise ShapeInferenceError("Concat needs rank >= 1", node.id)
        ax = normalize_axis(node.attr("axis"), rank, node)
        total = 0
        for s in ins:
            if s.dtype != x.dtype or len(s.shape) != rank or any(
                    s.shape[i] != x.shape[i] for i in range(rank) if i != ax):
                raise ShapeInferenceError(
                    f"Concat operand {s.name!r} {s.dtype}{list(s.shape)} incompatible with "
                    f"{x.dtype}{list(x.shape)} on axis {ax}", node.id)
            total += s.shape[ax]
        return [(x.dtype, x.shape[:ax] + (total,) + x.shape[ax + 1:])]
    if op == "Slice":
        shape = list(x.shape)
        for ax, s, e in resolve_slice(node, x.shape):
            shape[ax] = e - s
        return [(x.dtype, tuple(shape))]
    if op == "Flatten":
        ax = normalize_axis(node.attr("axis"), len(x.shape), node, inclusive=True)
        return [(x.dtype, x.shape[:ax] + (math.prod(x.shape[ax:]),))]
    if op in ("Conv2D", "ConvTranspose2D"):
        w = ins[1]
        _require_float(node, *ins)
        if len(x.shape) != 4 or len(w.shape) != 4:
            raise ShapeInferenceError(
                f"{op} needs rank-4 input and weight, got {list(x.shape)} and {list(w.shape)}",
                node.id)
        stride, pad = _conv_params(node)
        n, c, h, wd = x.shape
        if op == "Conv2D":
            cout, cin, kh, kw = w.shape
            out_hw = (conv_out(h, kh, stride, pad), conv_out(wd, kw, stride, pad))
        else:
            cin, cout, kh, kw = w.shape
            out_hw = (convtranspose_out(h, kh, stride, pad), convtranspose_out(wd, kw, stride, pad))
        if cin != c:
            raise ShapeInferenceError(
                f"{op} input has {c} channels but weight expects {cin}", node.id)
        if len(ins) == 3 and ins[2].shape != (cout,):
            raise ShapeInferenceError(
                f"{op} bias shape {list(ins[2].shape)} != [{cout}]", node.id)
        if min(out_hw) < 1:
            raise ShapeInferenceError(f"{op} output spatial size {list(out_hw)} is empty", node.id)
        return [("float32", (n, cout) + out_hw)]
    if op == "DepthToSpace":
        b = node.attr("blocksize")
        if len(x.shape) != 4 or b < 1 or x.shape[1] % (b * b):
            raise ShapeInferenceError(
                f"DepthToSpace blocksize {b} incompatible with {list(x.shape)}", node.id)
        n, c, h, wd = x.shape
        return [(x.dtype, (n, c // (b * b), h * b, wd * b))]
    if op == "Dropout":
        return [(x.dtype, x.shape)]
    if op == "Cast":
        to = node.attr("to")
        if to not in CASTABLE or x.dtype not in CASTABLE:
            raise ShapeInferenceError(f"Cast supports only {CASTABLE}, got {x.dtype}->{to}",
                                      node.id)
        return [(to, x.shape)]
    raise ShapeInferenceError(f"no shape rule for {op}", node.id)


def infer_shapes(g: Graph) -> dict:
    """Map every value name in ``g`` to its concrete TensorSpec."""
    cached = g.__dict__.get("_shape_cache")
    if cached is None:
        specs = {s.name: s for s in g.inputs}
        specs.update((i.name, i.spec) for i in g.initializers)
        for node in toposort(g):
            results = infer_node(node, [specs[v] for v in node.inputs])
            for name, (dtype, shape) in zip(node.outputs, results):
                specs[name] = TensorSpec(name, dtype, shape)
        cached = specs
        g.__dict__["_shape_cache"] = cached
    return dict(cached)


def check_graph(g: Graph) -> Graph:
    """Full validation: structure (done at construction) plus shape inference."""
    infer_shapes(g)
    return g
