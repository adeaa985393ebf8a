"""Reference numeric executor: the ground truth every rewrite is checked against.

Kernels favour clarity over speed. Convolutions accumulate in float64 and
store float32, which keeps 1e-6 comparisons meaningful at test scale.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import InputMismatchError, InterpreterError
from .ir.graph import NUMPY_DTYPES, Graph, Node, is_custom_op, toposort
from .ir.shapes import infer_shapes, resolve_perm, resolve_reshape, resolve_slice

Kernel = Callable[[Node, list], list]


def _conv2d(x, w, b, stride, pad):
    x = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    w = w.astype(np.float64)
    n, _, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ho, wo = (h - kh) // stride + 1, (wd - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for i in range(kh):
        for j in range(kw):
            window = x[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]
            out += np.einsum("nchw,oc->nohw", window, w[:, :, i, j])
    if b is not None:
        out += b.astype(np.float64)[None, :, None, None]
    return out


def _conv_transpose2d(x, w, b, stride, pad):
    # gather form: zero-dilate the input, then a stride-1 correlation with the
    # flipped, channel-swapped kernel
    n, c, h, wd = x.shape
    _, cout, kh, kw = w.shape
    dil = np.zeros((n, c, (h - 1) * stride + 1, (wd - 1) * stride + 1))
    dil[:, :, ::stride, ::stride] = x
    qh, qw = kh - 1 - pad, kw - 1 - pad
    dil = np.pad(dil, ((0, 0), (0, 0), (max(qh, 0),) * 2, (max(qw, 0),) * 2))
    if qh < 0:
        dil = dil[:, :, -qh:qh, :]
    if qw < 0:
        dil = dil[:, :, :, -qw:qw]
    flipped = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return _conv2d(dil, flipped, b, 1, 0)


def _softmax(x, axis):
    x = x.astype(np.float64)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _depth_to_space(x, b):
    n, c, h, w = x.shape
    y = x.reshape(n, c // (b * b), b, b, h, w).transpose(0, 1, 4, 2, 5, 3)
    return y.reshape(n, c // (b * b), h * b, w * b)


def _eval_node(node: Node, args: list):
    op = node.op_type
    x = args[0] if args else None
    if op == "Add":
        return np.add(args[0], args[1])
    if op == "Sub":
        return np.subtract(args[0], args[1])
    if op == "Mul":
        return np.multiply(args[0], args[1])
    if op == "Neg":
        return np.negative(x)
    if op == "Relu":
        return np.maximum(x, np.float32(0))
    if op == "Softmax":
        return _softmax(x, node.attr("axis"))
    if op == "Reshape":
        return x.reshape(resolve_reshape(x.shape, node.attr("shape"), node))
    if op == "Transpose":
        return np.transpose(x, resolve_perm(node, x.ndim))
    if op == "Concat":
        return np.concatenate(args, axis=node.attr("axis"))
    if op == "Slice":
        index = [slice(None)] * x.ndim
        for ax, s, e in resolve_slice(node, x.shape):
            index[ax] = slice(s, e)
        return x[tuple(index)]
    if op == "Flatten":
        ax = node.attr("axis")
        ax = ax + x.ndim + 1 if ax < 0 else ax
        return x.reshape(x.shape[:ax] + (-1,))
    if op == "Conv2D":
        return _conv2d(x, args[1], args[2] if len(args) > 2 else None,
                       node.attr("stride"), node.attr("padding"))
    if op == "ConvTranspose2D":
        return _conv_transpose2d(x, args[1], args[2] if len(args) > 2 else None,
                                 node.attr("stride"), node.attr("padding"))
    if op == "DepthToSpace":
        return _depth_to_space(x, node.attr("blocksize"))
    if op == "Dropout":
        return x
    if op == "Cast":
        to = node.attr("to")
        if to == "int64" and x.dtype != np.int64:
            return np.trunc(x).astype(np.int64)
        return x.astype(NUMPY_DTYPES[to])
    raise InterpreterError(f"node {node.id!r}: no kernel for op {op!r}")


def _coerce_inputs(g: Graph, inputs: Mapping) -> dict:
    given, wanted = set(inputs), {s.name for s in g.inputs}
    if given != wanted:
        missing, extra = sorted(wanted - given), sorted(given - wanted)
        raise InputMismatchError(f"input mismatch: missing {missing}, unexpected {extra}")
    out = {}
    for spec in g.inputs:
        arr = np.asarray(inputs[spec.name])
        target = np.dtype(NUMPY_DTYPES[spec.dtype])
        if arr.dtype != target:
            if not np.can_cast(arr.dtype, target, casting="same_kind"):
                raise InputMismatchError(
                    f"input {spec.name!r}: dtype {arr.dtype} incompatible with {spec.dtype}")
            arr = arr.astype(target)
        if arr.shape != spec.shape:
            raise InputMismatchError(
                f"input {spec.name!r}: shape {list(arr.shape)} != declared {list(spec.shape)}")
        out[spec.name] = arr
    return out


@dataclass
class _RunStats:
    peak_bytes: int = 0


def _execute(g: Graph, inputs: Mapping, custom_kernels: Optional[Mapping[str, Kernel]],
             stats: Optional[_RunStats] = None) -> dict:
    specs = infer_shapes(g)
    order = toposort(g)
    env = _coerce_inputs(g, inputs)
    env.update((i.name, i.data) for i in g.initializers)

    last_use = {}
    for idx, node in enumerate(order):
        for v in node.inputs:
            last_use[v] = idx
    keep = set(g.outputs)
    live = sum(a.nbytes for a in env.values())
    peak = live

    def release(names, idx):
        nonlocal live
        for v in names:
            if v not in keep and last_use.get(v, -1) <= idx and v in env:
                live -= env.pop(v).nbytes

    release(list(env), -1)
    for idx, node in enumerate(order):
        args = [env[v] for v in node.inputs]
        if is_custom_op(node.op_type):
            kernel = (custom_kernels or {}).get(node.op_type)
            if kernel is None:
                raise InterpreterError(f"node {node.id!r}: no kernel registered for "
                                       f"{node.op_type!r}")
            results = list(kernel(node, args))
        else:
            results = [_eval_node(node, args)]
        if len(results) != len(node.outputs):
            raise InterpreterError(f"node {node.id!r} produced {len(results)} values")
        for name, value in zip(node.outputs, results):
            spec = specs[name]
            value = np.asarray(value).astype(NUMPY_DTYPES[spec.dtype], copy=False)
            if value.shape != spec.shape:
                raise InterpreterError(
                    f"internal error: node {node.id!r} produced {list(value.shape)} for "
                    f"{name!r}, inferred {list(spec.shape)}")
            env[name] = value
            live += value.nbytes
        peak = max(peak, live)
        release(list(node.inputs) + list(node.outputs), idx)
    if stats is not None:
        stats.peak_bytes = peak
    return {o: env[o] for o in g.outputs}


def run_graph(g: Graph, inputs: Mapping, custom_kernels: Optional[Mapping[str, Kernel]] = None
              ) -> dict:
    """Evaluate ``g`` and return its declared outputs by name."""
    return _execute(g, inputs, custom_kernels)


def mac_count(g: Graph) -> int:
    """Analytic multiply-accumulate count of the convolution nodes in ``g``."""
    specs = infer_shapes(g)
    total = 0
    for node in g.nodes:
        if node.op_type == "Conv2D":
            n, cout, ho, wo = specs[node.outputs[0]].shape
            _, cin, kh, kw = specs[node.inputs[1]].shape
            total += n * cout * ho * wo * cin * kh * kw
        elif node.op_type == "ConvTranspose2D":
            n, cin, h, w = specs[node.inputs[0]].shape
            _, cout, kh, kw = specs[node.inputs[1]].shape
            total += n * cin * h * w * cout * kh * kw
    return total


@dataclass
class BenchReport:
    repetitions: int
    wall_latency_ms: list = field(default_factory=list)
    throughput_inferences_per_s: float = 0.0
    multiply_accumulate_count: int = 0
    peak_live_tensor_bytes: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def bench(g: Graph, inputs: Mapping, repetitions: int = 10,
          custom_kernels: Optional[Mapping[str, Kernel]] = None) -> BenchReport:
    """Time ``repetitions`` runs of ``g`` and collect latency, throughput and memory."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    stats = _RunStats()
    latencies = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        _execute(g, inputs, custom_kernels, stats)
        latencies.append((time.perf_counter() - t0) * 1e3)
    total_s = sum(latencies) / 1e3
    return BenchReport(
        repetitions=repetitions,
        wall_latency_ms=latencies,
        # guard against a zero-resolution clock on trivial graphs
        throughput_inferences_per_s=repetitions / max(total_s, 1e-9),
        multiply_accumulate_count=mac_count(g),
        peak_live_tensor_bytes=stats.peak_bytes,
    )
