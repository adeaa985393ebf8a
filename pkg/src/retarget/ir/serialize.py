"""Canonical text interchange for graphs (``.nng.json``) and tensors (``.tensors.json``)."""

from __future__ import annotations

import json
from typing import Mapping

import numpy as np

from ..errors import GraphValidationError, ModelSyntaxError
from .graph import (
    DTYPES,
    NUMPY_DTYPES,
    OP_SCHEMAS,
    Graph,
    Initializer,
    Node,
    TensorSpec,
)

FORMAT_VERSION = 1
MODEL_SUFFIX = ".nng.json"
TENSORS_SUFFIX = ".tensors.json"

_MODEL_KEYS = {"format_version", "name", "inputs", "outputs", "initializers", "nodes"}
_SPEC_KEYS = {"name", "dtype", "shape"}
_NODE_KEYS = {"id", "op", "inputs", "outputs", "attrs"}


def _encode_float32(x: np.float32) -> float:
    # shortest float32 digits, unless the double-rounding path would change the bits
    short = float(str(x))
    if np.float32(short).tobytes() == x.tobytes():
        return short
    return float(x)


def encode_array(arr: np.ndarray) -> list:
    """Flat row-major JSON list that decodes back to the identical array."""
    flat = np.asarray(arr).reshape(-1)
    if flat.dtype == np.float32:
        return [_encode_float32(v) for v in flat]
    if flat.dtype == np.bool_:
        return [bool(v) for v in flat]
    return [int(v) for v in flat]


def decode_array(data, dtype: str, shape, where: str) -> np.ndarray:
    if dtype not in DTYPES:
        raise ModelSyntaxError(f"{where}: unknown dtype {dtype!r}")
    if not isinstance(data, list):
        raise ModelSyntaxError(f"{where}: 'data' must be a flat array")
    for v in data:
        if dtype == "bool" and not isinstance(v, bool):
            raise ModelSyntaxError(f"{where}: bool data must be true/false")
        if dtype == "int64" and (isinstance(v, bool) or not isinstance(v, int)):
            raise ModelSyntaxError(f"{where}: int64 data must be integers")
        if dtype == "float32" and (isinstance(v, bool) or not isinstance(v, (int, float))):
            raise ModelSyntaxError(f"{where}: float32 data must be numbers")
    arr = np.array(data, dtype=NUMPY_DTYPES[dtype])
    size = int(np.prod(shape, dtype=np.int64))
    if arr.size != size:
        raise GraphValidationError(f"{where}: {arr.size} values do not fill shape {list(shape)}")
    return arr.reshape(shape)


def _spec_to_json(spec: TensorSpec) -> dict:
    return {"name": spec.name, "dtype": spec.dtype, "shape": list(spec.shape)}


def _attr_to_json(v):
    return list(v) if isinstance(v, tuple) else v


def _expect(obj, keys: set, where: str, optional=()):
    if not isinstance(obj, dict):
        raise ModelSyntaxError(f"{where}: expected an object")
    missing = keys - set(obj) - set(optional)
    extra = set(obj) - keys
    if missing:
        raise ModelSyntaxError(f"{where}: missing field(s) {sorted(missing)}")
    if extra:
        raise ModelSyntaxError(f"{where}: unknown field(s) {sorted(extra)}")


def _spec_from_json(obj, where: str) -> TensorSpec:
    _expect(obj, _SPEC_KEYS, where)
    shape = obj["shape"]
    if not isinstance(shape, list) or not all(
            isinstance(d, int) and not isinstance(d, bool) for d in shape):
        raise ModelSyntaxError(f"{where}: shape must be an integer array")
    if not isinstance(obj["name"], str):
        raise ModelSyntaxError(f"{where}: name must be a string")
    return TensorSpec(obj["name"], obj["dtype"], tuple(shape))


def _str_list(obj, where: str) -> tuple:
    if not isinstance(obj, list) or not all(isinstance(v, str) for v in obj):
        raise ModelSyntaxError(f"{where}: expected an array of strings")
    return tuple(obj)


def _node_from_json(obj, idx: int) -> Node:
    where = f"nodes[{idx}]"
    _expect(obj, _NODE_KEYS, where, optional=("attrs",))
    if not isinstance(obj["id"], str) or not isinstance(obj["op"], str):
        raise ModelSyntaxError(f"{where}: id and op must be strings")
    attrs = obj.get("attrs", {})
    if not isinstance(attrs, dict):
        raise ModelSyntaxError(f"{where}: attrs must be an object")
    schema = OP_SCHEMAS.get(obj["op"])
    fixed = {}
    for k, v in attrs.items():
        if isinstance(v, list):
            if not all(isinstance(i, int) and not isinstance(i, bool) for i in v):
                raise GraphValidationError(f"attribute {k!r}: lists must hold integers", obj["id"])
            v = tuple(v)
        elif isinstance(v, bool) or v is None or isinstance(v, dict):
            raise GraphValidationError(f"attribute {k!r} has unsupported value {v!r}", obj["id"])
        if schema and k in schema.attrs and schema.attrs[k].kind == "float" and isinstance(v, int):
            v = float(v)
        fixed[k] = v
    return Node(obj["id"], obj["op"], _str_list(obj["inputs"], f"{where}.inputs"),
                _str_list(obj["outputs"], f"{where}.outputs"), fixed)


def parse_model(text) -> Graph:
    """Decode ``.nng.json`` text (str or bytes) into a validated Graph."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelSyntaxError(f"model is not UTF-8: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelSyntaxError(f"malformed model text: {exc}") from None
    _expect(obj, _MODEL_KEYS, "model")
    version = obj["format_version"]
    if version != FORMAT_VERSION or isinstance(version, bool):
        raise ModelSyntaxError(f"unsupported format_version {version!r}")
    if not isinstance(obj["name"], str):
        raise ModelSyntaxError("model: name must be a string")
    for key in ("inputs", "initializers", "nodes"):
        if not isinstance(obj[key], list):
            raise ModelSyntaxError(f"model: {key} must be an array")

    inputs = [_spec_from_json(s, f"inputs[{i}]") for i, s in enumerate(obj["inputs"])]
    inits = []
    for i, raw in enumerate(obj["initializers"]):
        where = f"initializers[{i}]"
        _expect(raw, _SPEC_KEYS | {"data"}, where)
        spec = _spec_from_json({k: raw[k] for k in _SPEC_KEYS}, where)
        inits.append(Initializer(spec, decode_array(raw["data"], spec.dtype, spec.shape, where)))
    nodes = [_node_from_json(n, i) for i, n in enumerate(obj["nodes"])]
    return Graph(obj["name"], inputs, _str_list(obj["outputs"], "outputs"), inits, nodes)


def model_to_dict(g: Graph) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "name": g.name,
        "inputs": [_spec_to_json(s) for s in g.inputs],
        "outputs": list(g.outputs),
        "initializers": [
            dict(_spec_to_json(i.spec), data=encode_array(i.data)) for i in g.initializers
        ],
        "nodes": [
            {
                "id": n.id,
                "op": n.op_type,
                "inputs": list(n.inputs),
                "outputs": list(n.outputs),
                "attrs": {k: _attr_to_json(v) for k, v in n.attrs.items()},
            }
            for n in g.nodes
        ],
    }


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def serialize_model(g: Graph) -> str:
    """Canonical text: sorted keys, shortest exact float formatting."""
    return dumps(model_to_dict(g))


def load_tensors(text) -> dict:
    """Decode a ``.tensors.json`` mapping into name -> ndarray."""
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelSyntaxError(f"malformed tensors file: {exc}") from None
    if not isinstance(obj, dict):
        raise ModelSyntaxError("tensors file must hold an object")
    out = {}
    for name, raw in obj.items():
        _expect(raw, {"dtype", "shape", "data"}, f"tensor {name!r}")
        shape = raw["shape"]
        if not isinstance(shape, list) or not all(isinstance(d, int) for d in shape):
            raise ModelSyntaxError(f"tensor {name!r}: shape must be an integer array")
        out[name] = decode_array(raw["data"], raw["dtype"], tuple(shape), f"tensor {name!r}")
    return out


def tensors_to_dict(tensors: Mapping[str, np.ndarray]) -> dict:
    rev = {np.dtype(v): k for k, v in NUMPY_DTYPES.items()}
    out = {}
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        out[name] = {"dtype": rev[arr.dtype], "shape": list(arr.shape), "data": encode_array(arr)}
    return out


def dump_tensors(tensors: Mapping[str, np.ndarray]) -> str:
    return dumps(tensors_to_dict(tensors))
