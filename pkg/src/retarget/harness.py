"""Equivalence checking and seeded random graph/input generation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import GraphValidationError, SignatureMismatchError
from .interpreter import run_graph
from .ir.graph import OP_VOCABULARY, Graph, Initializer, Node, TensorSpec
from .ir.shapes import infer_node, infer_shapes
from .rewrite.split import SplitArtifacts

DEFAULT_TOLERANCE = 1e-6
DEFAULT_TRIALS = 20


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream per (seed, trial) so trials can run in any order."""
    return np.random.default_rng([seed, trial])


def random_inputs(g: Graph, rng: np.random.Generator) -> dict:
    out = {}
    for spec in g.inputs:
        if spec.dtype == "float32":
            out[spec.name] = rng.uniform(-1.0, 1.0, spec.shape).astype(np.float32)
        elif spec.dtype == "int64":
            out[spec.name] = rng.integers(-3, 4, spec.shape, dtype=np.int64)
        else:
            out[spec.name] = rng.integers(0, 2, spec.shape).astype(bool)
    return out


@dataclass(frozen=True)
class OutputDiff:
    name: str
    shape_a: tuple
    shape_b: tuple
    max_abs_diff: float

    def to_dict(self) -> dict:
        return {"name": self.name, "shape_a": list(self.shape_a), "shape_b": list(self.shape_b),
                "max_abs_diff": self.max_abs_diff}


@dataclass(frozen=True)
class DiffReport:
    outputs: tuple
    tolerance: float
    seeds: tuple = ()

    @property
    def passed(self) -> bool:
        return all(o.shape_a == o.shape_b and o.max_abs_diff <= self.tolerance
                   for o in self.outputs)

    @property
    def max_abs_diff(self) -> float:
        return max((o.max_abs_diff for o in self.outputs), default=0.0)

    def to_dict(self) -> dict:
        return {"pass": self.passed, "tolerance": self.tolerance,
                "trials": len(self.seeds), "seeds": [list(s) for s in self.seeds],
                "outputs": [o.to_dict() for o in self.outputs]}

    def format_table(self) -> str:
        rows = [("output", "shape a", "shape b", "max |a-b|")]
        rows += [(o.name, str(list(o.shape_a)), str(list(o.shape_b)), f"{o.max_abs_diff:.3g}")
                 for o in self.outputs]
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"{verdict} at tolerance {self.tolerance:g} over {len(self.seeds)} trials")
        return "\n".join(lines)


def _max_abs(a: np.ndarray, b: np.ndarray) -> float:
    a, b = a.astype(np.float64), b.astype(np.float64)
    d = np.abs(a - b)
    d[np.isnan(a) & np.isnan(b)] = 0.0
    d[np.isnan(d)] = np.inf
    return float(d.max()) if d.size else 0.0


def _compare(names, shapes_a, shapes_b, trials, run_a, run_b, inputs_for, seed, tol):
    worst = {n: 0.0 for n in names}
    comparable = [n for n in names if shapes_a[n] == shapes_b[n]]
    seeds = []
    for t in range(trials):
        seeds.append((seed, t))
        if not comparable:
            continue
        inputs = inputs_for(trial_rng(seed, t))
        out_a, out_b = run_a(inputs), run_b(inputs)
        for n in comparable:
            worst[n] = max(worst[n], _max_abs(out_a[n], out_b[n]))
    diffs = tuple(OutputDiff(n, shapes_a[n], shapes_b[n],
                             worst[n] if n in comparable else math.inf) for n in names)
    return DiffReport(diffs, tol, tuple(seeds))


def _input_signature(g: Graph) -> list:
    return sorted((s.name, s.dtype, s.shape) for s in g.inputs)


def diff_graphs(a: Graph, b: Graph, trials: int = DEFAULT_TRIALS,
                tolerance: float = DEFAULT_TOLERANCE, seed: int = 0,
                custom_kernels: Optional[Mapping] = None) -> DiffReport:
    """Run both graphs on the same seeded random inputs and report worst-case differences."""
    if _input_signature(a) != _input_signature(b):
        raise SignatureMismatchError(
            f"input signatures differ: {_input_signature(a)} vs {_input_signature(b)}")
    if sorted(a.outputs) != sorted(b.outputs):
        raise SignatureMismatchError(f"outputs differ: {list(a.outputs)} vs {list(b.outputs)}")
    sa, sb = infer_shapes(a), infer_shapes(b)
    return _compare(
        a.outputs, {n: sa[n].shape for n in a.outputs}, {n: sb[n].shape for n in a.outputs},
        trials,
        lambda x: run_graph(a, x, custom_kernels),
        lambda x: run_graph(b, x, custom_kernels),
        lambda rng: random_inputs(a, rng), seed, tolerance)


def run_split(s: SplitArtifacts, inputs: Mapping, custom_kernels=None) -> dict:
    """prefix -> (defuse) -> postprocess."""
    pre = run_graph(s.prefix, inputs, custom_kernels)
    return run_graph(s.postprocess, s.prefix_outputs_to_post_inputs(pre), custom_kernels)


def diff_split(original: Graph, s: SplitArtifacts, trials: int = DEFAULT_TRIALS,
               tolerance: float = DEFAULT_TOLERANCE, seed: int = 0,
               custom_kernels: Optional[Mapping] = None) -> DiffReport:
    """Check that the split pipeline reproduces ``original`` on random inputs."""
    if _input_signature(original) != _input_signature(s.prefix):
        raise SignatureMismatchError("prefix inputs differ from the original graph's inputs")
    if sorted(original.outputs) != sorted(s.postprocess.outputs):
        raise SignatureMismatchError("postprocess outputs differ from the original outputs")
    so, sp = infer_shapes(original), infer_shapes(s.postprocess)
    return _compare(
        original.outputs, {n: so[n].shape for n in original.outputs},
        {n: sp[n].shape for n in original.outputs}, trials,
        lambda x: run_graph(original, x, custom_kernels),
        lambda x: run_split(s, x, custom_kernels),
        lambda rng: random_inputs(original, rng), seed, tolerance)


# ---------------------------------------------------------------- generator

@dataclass
class _Builder:
    rng: np.random.Generator
    max_elements: int
    pool: list = field(default_factory=list)
    inits: list = field(default_factory=list)
    count: int = 0

    def pick(self, pred=lambda s: True) -> Optional[TensorSpec]:
        cands = [s for s in self.pool if pred(s)]
        if not cands:
            return None
        weights = np.arange(1, len(cands) + 1, dtype=float)
        return cands[self.rng.choice(len(cands), p=weights / weights.sum())]

    def const(self, shape, scale=1.0) -> str:
        name = f"c{len(self.inits):03d}"
        data = (self.rng.uniform(-1.0, 1.0, shape) * scale).astype(np.float32)
        self.inits.append(Initializer.from_array(name, data))
        return name

    def ints(self, lo, hi):
        return int(self.rng.integers(lo, hi + 1))


def _is_float(s):
    return s.dtype == "float32"


def _binary(b: _Builder, op):
    a = b.pick(_is_float)
    r = b.rng.random()
    if r < 0.35:
        other = b.const(a.shape)
    elif r < 0.5:
        other = b.const((1,))
    elif r < 0.6 and len(a.shape) == 4:
        other = b.const((a.shape[1], 1, 1))
    else:
        peer = b.pick(lambda s: _is_float(s) and s.shape == a.shape)
        other = peer.name if peer else b.const(a.shape)
    ins = (a.name, other) if b.rng.random() < 0.8 else (other, a.name)
    return ins, {}


def _reshape_target(b: _Builder, shape):
    n = math.prod(shape)
    divisors = [d for d in range(1, n + 1) if n % d == 0]
    choice = b.ints(0, 3)
    if choice == 0:
        tgt = [n]
    elif choice == 1:
        d = divisors[b.ints(0, len(divisors) - 1)]
        tgt = [d, n // d]
    elif choice == 2:
        tgt = list(b.rng.permutation(list(shape))) if shape else [1]
    else:
        tgt = [1] + list(shape)
    if len(tgt) > 1 and b.rng.random() < 0.3:
        tgt[b.ints(0, len(tgt) - 1)] = -1
    return tuple(int(t) for t in tgt)


def _propose(b: _Builder, op: str):
    """Inputs and attrs for one node of type ``op``; None when nothing fits."""
    rank4_float = lambda s: _is_float(s) and len(s.shape) == 4  # noqa: E731
    if op in ("Add", "Sub", "Mul"):
        return _binary(b, op)
    if op in ("Neg", "Relu"):
        return (b.pick(_is_float).name,), {}
    if op == "Softmax":
        x = b.pick(lambda s: _is_float(s) and s.shape)
        if x is None:
            return None
        r = len(x.shape)
        return (x.name,), {"axis": b.ints(-r, r - 1)}
    if op == "Reshape":
        x = b.pick()
        return (x.name,), {"shape": _reshape_target(b, x.shape)}
    if op == "Transpose":
        x = b.pick(lambda s: len(s.shape) >= 2)
        if x is None:
            return None
        if b.rng.random() < 0.2:
            return (x.name,), {}
        return (x.name,), {"perm": tuple(int(p) for p in b.rng.permutation(len(x.shape)))}
    if op == "Concat":
        x = b.pick(lambda s: s.shape)
        if x is None:
            return None
        ax = b.ints(0, len(x.shape) - 1)
        if _is_float(x) and b.rng.random() < 0.7:
            shape = list(x.shape)
            shape[ax] = b.ints(1, 3)
            return (x.name, b.const(shape)), {"axis": ax - len(x.shape) * b.ints(0, 1)}
        return (x.name, x.name), {"axis": ax}
    if op == "Slice":
        x = b.pick(lambda s: any(d >= 2 for d in s.shape))
        if x is None:
            return None
        axes = [i for i, d in enumerate(x.shape) if d >= 2]
        axes = sorted(b.rng.choice(axes, size=min(len(axes), b.ints(1, 2)), replace=False))
        starts, ends = [], []
        for ax in axes:
            d = x.shape[ax]
            s = b.ints(0, d - 1)
            e = b.ints(s + 1, d)
            starts.append(s - d if b.rng.random() < 0.2 else s)
            ends.append(e if e < d or b.rng.random() < 0.5 else 2 ** 31)
        return (x.name,), {"starts": tuple(starts), "ends": tuple(ends),
                           "axes": tuple(int(a) for a in axes)}
    if op == "Flatten":
        x = b.pick()
        return (x.name,), {"axis": b.ints(0, len(x.shape))}
    if op == "Conv2D":
        x = b.pick(rank4_float)
        if x is None:
            return None
        _, cin, h, w = x.shape
        pad, stride = b.ints(0, 1), b.ints(1, 2)
        k = b.ints(1, min(3, h + 2 * pad, w + 2 * pad))
        cout = int(b.rng.choice([1, 2, 4]))
        ins = (x.name, b.const((cout, cin, k, k), 1.0 / math.sqrt(cin * k * k)))
        if b.rng.random() < 0.5:
            ins += (b.const((cout,)),)
        return ins, {"stride": stride, "padding": pad}
    if op == "ConvTranspose2D":
        x = b.pick(rank4_float)
        if x is None:
            return None
        cin = x.shape[1]
        k, stride = b.ints(1, 3), b.ints(1, 2)
        pad = b.ints(0, (k - 1) // 2)
        cout = int(b.rng.choice([1, 2, 4]))
        ins = (x.name, b.const((cin, cout, k, k), 1.0 / math.sqrt(cin * k * k)))
        if b.rng.random() < 0.5:
            ins += (b.const((cout,)),)
        return ins, {"stride": stride, "padding": pad}
    if op == "DepthToSpace":
        x = b.pick(lambda s: len(s.shape) == 4 and s.shape[1] % 4 == 0)
        if x is not None:
            return (x.name,), {"blocksize": 2}
        x = b.pick(lambda s: len(s.shape) == 4)
        return None if x is None else ((x.name,), {"blocksize": 1})
    if op == "Dropout":
        return (b.pick().name,), {"ratio": float(b.rng.choice([0.1, 0.5]))}
    if op == "Cast":
        x = b.pick(lambda s: s.dtype in ("float32", "int64"))
        return (x.name,), {"to": str(b.rng.choice(["float32", "int64"]))}
    raise ValueError(f"generator cannot build {op!r}")


def gen_random_graph(seed: int, n_nodes: int = 5, ops: Optional[Sequence[str]] = None,
                     max_elements: int = 256) -> Graph:
    """Seeded random valid graph drawn from ``ops`` (default: the whole vocabulary)."""
    ops = list(OP_VOCABULARY if ops is None else ops)
    unknown = set(ops) - set(OP_VOCABULARY)
    if unknown:
        raise ValueError(f"unknown ops {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    b = _Builder(rng, max_elements)
    x = TensorSpec("x", "float32", (1, b.ints(1, 4), b.ints(3, 6), b.ints(3, 6)))
    inputs = [x]
    if rng.random() < 0.3:
        inputs.append(TensorSpec("y", "float32", x.shape))
    b.pool.extend(inputs)

    nodes = []
    attempts = 0
    while len(nodes) < n_nodes and ops:
        attempts += 1
        if attempts > 50 * (n_nodes + 1):
            break
        op = ops[rng.integers(len(ops))]
        n_inits = len(b.inits)
        proposal = _propose(b, op)
        if proposal is None:
            continue
        ins, attrs = proposal
        idx = len(nodes)
        node = Node(f"n{idx:03d}", op, ins, (f"v{idx:03d}",), attrs)
        known = {s.name: s for s in b.pool} | {i.name: i.spec for i in b.inits}
        try:
            (dtype, shape), = infer_node(node, [known[v] for v in ins])
        except GraphValidationError:
            del b.inits[n_inits:]
            continue
        if math.prod(shape) > max_elements:
            del b.inits[n_inits:]
            continue
        nodes.append(node)
        b.pool.append(TensorSpec(node.outputs[0], dtype, shape))

    consumed = {v for n in nodes for v in n.inputs}
    outputs = [n.outputs[0] for n in nodes if n.outputs[0] not in consumed] or [x.name]
    return Graph(f"random_{seed}", inputs, outputs, b.inits, nodes)
