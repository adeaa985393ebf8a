"""Immutable computation-graph data model and structural validation."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Optional

import numpy as np

from ..errors import GraphValidationError

DTYPES = ("float32", "int64", "bool")
NUMPY_DTYPES = {"float32": np.float32, "int64": np.int64, "bool": np.bool_}

CUSTOM_PREFIX = "Custom:"

_REQUIRED = object()


@dataclass(frozen=True)
class AttrSpec:
    kind: str  # "int" | "float" | "ints" | "str"
    default: Any = _REQUIRED

    @property
    def required(self) -> bool:
        return self.default is _REQUIRED


@dataclass(frozen=True)
class OpSchema:
    min_inputs: int
    max_inputs: Optional[int]
    num_outputs: int = 1
    attrs: Mapping[str, AttrSpec] = field(default_factory=dict)


_BINARY = OpSchema(2, 2)
_UNARY = OpSchema(1, 1)

OP_SCHEMAS: Mapping[str, OpSchema] = MappingProxyType({
    "Add": _BINARY,
    "Sub": _BINARY,
    "Mul": _BINARY,
    "Neg": _UNARY,
    "Relu": _UNARY,
    "Softmax": OpSchema(1, 1, attrs={"axis": AttrSpec("int", -1)}),
    "Reshape": OpSchema(1, 1, attrs={"shape": AttrSpec("ints")}),
    "Transpose": OpSchema(1, 1, attrs={"perm": AttrSpec("ints", None)}),
    "Concat": OpSchema(1, None, attrs={"axis": AttrSpec("int")}),
    "Slice": OpSchema(1, 1, attrs={
        "starts": AttrSpec("ints"),
        "ends": AttrSpec("ints"),
        "axes": AttrSpec("ints", None),
    }),
    "Flatten": OpSchema(1, 1, attrs={"axis": AttrSpec("int", 0)}),
    "Conv2D": OpSchema(2, 3, attrs={
        "stride": AttrSpec("int", 1),
        "padding": AttrSpec("int", 0),
    }),
    "ConvTranspose2D": OpSchema(2, 3, attrs={
        "stride": AttrSpec("int", 1),
        "padding": AttrSpec("int", 0),
    }),
    "DepthToSpace": OpSchema(1, 1, attrs={"blocksize": AttrSpec("int")}),
    "Dropout": OpSchema(1, 1, attrs={"ratio": AttrSpec("float", 0.5)}),
    "Cast": OpSchema(1, 1, attrs={"to": AttrSpec("str")}),
})

OP_VOCABULARY = tuple(sorted(OP_SCHEMAS))


def is_custom_op(op_type: str) -> bool:
    return op_type.startswith(CUSTOM_PREFIX) and len(op_type) > len(CUSTOM_PREFIX)


def is_known_op(op_type: str) -> bool:
    return op_type in OP_SCHEMAS or is_custom_op(op_type)


def _freeze_attr(value):
    if isinstance(value, (bool, np.bool_)):
        raise TypeError("boolean attributes are not supported")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, str):
        return value
    if isinstance(value, (list, tuple)):
        return tuple(_freeze_attr(v) for v in value)
    raise TypeError(f"unsupported attribute value {value!r}")


@dataclass(frozen=True)
class TensorSpec:
    name: str
    dtype: str
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def nbytes(self) -> int:
        return self.size * np.dtype(NUMPY_DTYPES[self.dtype]).itemsize

    def renamed(self, name: str) -> "TensorSpec":
        return TensorSpec(name, self.dtype, self.shape)


@dataclass(frozen=True, eq=False)
class Initializer:
    """A named constant. ``data`` is stored as a read-only array of ``spec.shape``."""

    spec: TensorSpec
    data: np.ndarray

    def __post_init__(self):
        if self.spec.dtype not in NUMPY_DTYPES:
            raise GraphValidationError(
                f"initializer {self.spec.name!r} has unknown dtype {self.spec.dtype!r}")
        arr = np.asarray(self.data)
        if arr.size != self.spec.size:
            raise GraphValidationError(
                f"initializer {self.spec.name!r} has {arr.size} values, "
                f"shape {list(self.spec.shape)} needs {self.spec.size}")
        arr = np.array(arr, dtype=NUMPY_DTYPES[self.spec.dtype]).reshape(self.spec.shape)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def name(self) -> str:
        return self.spec.name

    @classmethod
    def from_array(cls, name: str, array) -> "Initializer":
        arr = np.asarray(array)
        dtype = {np.dtype(v): k for k, v in NUMPY_DTYPES.items()}.get(arr.dtype)
        if dtype is None:
            raise GraphValidationError(f"initializer {name!r}: unsupported dtype {arr.dtype}")
        return cls(TensorSpec(name, dtype, arr.shape), arr)

    def __eq__(self, other):
        if not isinstance(other, Initializer):
            return NotImplemented
        return self.spec == other.spec and self.data.tobytes() == other.data.tobytes()

    __hash__ = None


@dataclass(frozen=True)
class Node:
    id: str
    op_type: str
    inputs: tuple
    outputs: tuple
    attrs: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        try:
            frozen = {str(k): _freeze_attr(v) for k, v in dict(self.attrs).items()}
        except TypeError as exc:
            raise GraphValidationError(str(exc), self.id) from None
        object.__setattr__(self, "attrs", MappingProxyType(frozen))

    def attr(self, name: str):
        """Attribute value, falling back to the schema default."""
        if name in self.attrs:
            return self.attrs[name]
        schema = OP_SCHEMAS.get(self.op_type)
        if schema is None or name not in schema.attrs or schema.attrs[name].required:
            raise KeyError(f"node {self.id!r} has no attribute {name!r}")
        return schema.attrs[name].default

    def replace(self, **changes) -> "Node":
        fields = dict(id=self.id, op_type=self.op_type, inputs=self.inputs,
                      outputs=self.outputs, attrs=dict(self.attrs))
        fields.update(changes)
        return Node(**fields)


@dataclass(frozen=True)
class Graph:
    """Directed acyclic computation graph, validated on construction."""

    name: str
    inputs: tuple
    outputs: tuple
    initializers: tuple = ()
    nodes: tuple = ()

    def __post_init__(self):
        for attr in ("inputs", "outputs", "initializers", "nodes"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        validate_structure(self)

    # cached_property writes straight into __dict__, so it works on frozen instances
    @cached_property
    def producers(self) -> Mapping[str, Node]:
        return MappingProxyType({o: n for n in self.nodes for o in n.outputs})

    @cached_property
    def consumers(self) -> Mapping[str, tuple]:
        out: dict = {}
        for n in self.nodes:
            for v in dict.fromkeys(n.inputs):
                out.setdefault(v, []).append(n)
        return MappingProxyType({k: tuple(v) for k, v in out.items()})

    @cached_property
    def node_map(self) -> Mapping[str, Node]:
        return MappingProxyType({n.id: n for n in self.nodes})

    @cached_property
    def initializer_map(self) -> Mapping[str, Initializer]:
        return MappingProxyType({i.name: i for i in self.initializers})

    @cached_property
    def input_map(self) -> Mapping[str, TensorSpec]:
        return MappingProxyType({s.name: s for s in self.inputs})

    @cached_property
    def _topo_order(self) -> tuple:
        order, leftover = _kahn(self.nodes, self.producers)
        assert not leftover
        return order

    def node(self, node_id: str) -> Node:
        try:
            return self.node_map[node_id]
        except KeyError:
            raise KeyError(f"graph {self.name!r} has no node {node_id!r}") from None

    def value_names(self) -> list:
        names = [s.name for s in self.inputs] + [i.name for i in self.initializers]
        names += [o for n in self.nodes for o in n.outputs]
        return names

    def replace(self, **changes) -> "Graph":
        fields = dict(name=self.name, inputs=self.inputs, outputs=self.outputs,
                      initializers=self.initializers, nodes=self.nodes)
        fields.update(changes)
        return Graph(**fields)


def _kahn(nodes: Iterable[Node], producers: Mapping[str, Node]):
    nodes = list(nodes)
    indeg = {}
    succ: dict = {n.id: set() for n in nodes}
    for n in nodes:
        preds = {producers[v].id for v in n.inputs if v in producers}
        indeg[n.id] = len(preds)
        for p in preds:
            succ[p].add(n.id)
    by_id = {n.id: n for n in nodes}
    ready = [nid for nid, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(by_id[nid])
        for s in succ[nid]:
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(ready, s)
    leftover = sorted(nid for nid, d in indeg.items() if d > 0)
    return tuple(order), leftover


def toposort(g: Graph) -> list:
    """Nodes ordered producers-first; ties broken by ascending node id."""
    return list(g._topo_order)


def _check_spec(spec: TensorSpec, what: str):
    if not isinstance(spec.name, str) or not spec.name:
        raise GraphValidationError(f"{what} has an empty name")
    if spec.dtype not in DTYPES:
        raise GraphValidationError(f"{what} {spec.name!r} has unknown dtype {spec.dtype!r}")
    if any(d < 1 for d in spec.shape):
        raise GraphValidationError(
            f"{what} {spec.name!r} has non-positive dimension in {list(spec.shape)}")


def _check_attrs(n: Node):
    if is_custom_op(n.op_type):
        return
    schema = OP_SCHEMAS[n.op_type]
    for key, val in n.attrs.items():
        spec = schema.attrs.get(key)
        if spec is None:
            raise GraphValidationError(f"unknown attribute {key!r} for {n.op_type}", n.id)
        ok = {
            "int": isinstance(val, int),
            "float": isinstance(val, (int, float)),
            "str": isinstance(val, str),
            "ints": isinstance(val, tuple) and all(isinstance(v, int) for v in val),
        }[spec.kind]
        if not ok:
            raise GraphValidationError(
                f"attribute {key!r} of {n.op_type} must be {spec.kind}, got {val!r}", n.id)
    for key, spec in schema.attrs.items():
        if spec.required and key not in n.attrs:
            raise GraphValidationError(f"{n.op_type} requires attribute {key!r}", n.id)


def validate_structure(g: Graph) -> None:
    """Raise GraphValidationError unless ``g`` satisfies every structural invariant."""
    if not isinstance(g.name, str):
        raise GraphValidationError("graph name must be a string")
    producer: dict = {}

    def claim(name, who, node_id=None):
        if not isinstance(name, str) or not name:
            raise GraphValidationError(f"empty value name produced by {who}", node_id)
        if name in producer:
            raise GraphValidationError(
                f"duplicate producer for value {name!r} ({producer[name]} and {who})", node_id)
        producer[name] = who

    for spec in g.inputs:
        _check_spec(spec, "graph input")
        claim(spec.name, "graph input")
    for init in g.initializers:
        _check_spec(init.spec, "initializer")
        claim(init.name, "initializer")

    seen_ids = set()
    for n in g.nodes:
        if not isinstance(n.id, str) or not n.id:
            raise GraphValidationError("node with empty id")
        if n.id in seen_ids:
            raise GraphValidationError("duplicate node id", n.id)
        seen_ids.add(n.id)
        if not is_known_op(n.op_type):
            raise GraphValidationError(f"unknown op type {n.op_type!r}", n.id)
        if not is_custom_op(n.op_type):
            schema = OP_SCHEMAS[n.op_type]
            k = len(n.inputs)
            if k < schema.min_inputs or (schema.max_inputs is not None and k > schema.max_inputs):
                raise GraphValidationError(f"{n.op_type} got {k} inputs", n.id)
            if len(n.outputs) != schema.num_outputs:
                raise GraphValidationError(
                    f"{n.op_type} must have {schema.num_outputs} output(s)", n.id)
        elif not n.outputs:
            raise GraphValidationError("custom op must have at least one output", n.id)
        _check_attrs(n)
        for o in n.outputs:
            claim(o, f"node {n.id!r}", n.id)

    for n in g.nodes:
        for v in n.inputs:
            if v not in producer:
                raise GraphValidationError(f"dangling input {v!r}", n.id)

    if len(set(g.outputs)) != len(g.outputs):
        raise GraphValidationError("graph outputs contain duplicates")
    for o in g.outputs:
        if o not in producer:
            raise GraphValidationError(f"graph output {o!r} is never produced")

    node_producers = {o: n for n in g.nodes for o in n.outputs}
    _, leftover = _kahn(g.nodes, node_producers)
    if leftover:
        raise GraphValidationError("cycle", leftover[0])


def descendants(g: Graph, seeds: Iterable[str]) -> set:
    """Ids of the seed nodes plus every node transitively consuming their outputs."""
    closure = set()
    stack = list(seeds)
    while stack:
        nid = stack.pop()
        if nid in closure:
            continue
        closure.add(nid)
        for o in g.node(nid).outputs:
            stack.extend(c.id for c in g.consumers.get(o, ()))
    return closure
