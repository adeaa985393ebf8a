"""Graph data model, interchange format, ordering and shape inference."""

from .folding import is_constant
from .graph import (
    CUSTOM_PREFIX,
    DTYPES,
    OP_SCHEMAS,
    OP_VOCABULARY,
    Graph,
    Initializer,
    Node,
    TensorSpec,
    descendants,
    is_custom_op,
    is_known_op,
    toposort,
    validate_structure,
)
from .serialize import (
    MODEL_SUFFIX,
    TENSORS_SUFFIX,
    dump_tensors,
    load_tensors,
    parse_model,
    serialize_model,
)
from .shapes import broadcast_shape, check_graph, infer_shapes

__all__ = [
    "CUSTOM_PREFIX", "DTYPES", "OP_SCHEMAS", "OP_VOCABULARY", "Graph", "Initializer", "Node",
    "TensorSpec", "descendants", "is_custom_op", "is_known_op", "toposort", "validate_structure",
    "MODEL_SUFFIX", "TENSORS_SUFFIX", "dump_tensors", "load_tensors", "parse_model",
    "serialize_model", "broadcast_shape", "check_graph", "infer_shapes", "is_constant",
]
