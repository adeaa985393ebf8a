"""Reference models mirroring the conversion examples, plus a writer for their files.

``python -m retarget.fixtures DIR`` writes every fixture as ``DIR/<name>.nng.json``.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np

from .ir.graph import Graph, Initializer, Node, TensorSpec
from .ir.serialize import MODEL_SUFFIX, serialize_model


class _Net:
    """Tiny sequential-ish graph builder with deterministic weights."""

    def __init__(self, name, seed):
        self.name = name
        self.rng = np.random.default_rng(seed)
        self.inputs, self.inits, self.nodes = [], [], []

    def input(self, name, shape):
        self.inputs.append(TensorSpec(name, "float32", shape))
        return name

    def const(self, name, shape, scale=1.0, data=None):
        if data is None:
            data = self.rng.uniform(-1.0, 1.0, shape) * scale
        self.inits.append(Initializer.from_array(name, np.asarray(data, np.float32).reshape(shape)))
        return name

    def op(self, node_id, op_type, inputs, attrs=None, out=None):
        out = out or node_id
        self.nodes.append(Node(node_id, op_type, inputs, (out,), attrs or {}))
        return out

    def conv(self, node_id, x, cin, cout, k=3, stride=1, padding=1, bias=True):
        ins = [x, self.const(f"{node_id}.w", (cout, cin, k, k), 1.0 / math.sqrt(cin * k * k))]
        if bias:
            ins.append(self.const(f"{node_id}.b", (cout,), 0.1))
        return self.op(node_id, "Conv2D", ins, {"stride": stride, "padding": padding})

    def graph(self, outputs):
        return Graph(self.name, self.inputs, outputs, self.inits, self.nodes)


def sub_const() -> Graph:
    """Conv2D -> Sub(per-channel constant) -> Relu."""
    net = _Net("sub_const", 2)
    x = net.input("input", (1, 3, 8, 8))
    c = net.conv("conv", x, 3, 4)
    s = net.op("sub", "Sub", [c, net.const("mean", (4, 1, 1), 0.5)])
    net.op("relu", "Relu", [s], out="output")
    return net.graph(["output"])


def deconv_stack(kernel: int = 3, stride: int = 2, padding: int = 0, channels: int = 4,
                spatial: int = 4, out_channels: int = 2, bias: bool = True) -> Graph:
    """Conv2D -> Relu -> ConvTranspose2D -> Relu."""
    net = _Net(f"deconv_k{kernel}_s{stride}", 3)
    x = net.input("input", (1, channels, spatial, spatial))
    h = net.op("relu0", "Relu", [net.conv("conv", x, channels, channels)])
    ins = [h, net.const("deconv.w", (channels, out_channels, kernel, kernel),
                        1.0 / math.sqrt(channels * kernel * kernel))]
    if bias:
        ins.append(net.const("deconv.b", (out_channels,), 0.1))
    d = net.op("deconv", "ConvTranspose2D", ins, {"stride": stride, "padding": padding})
    net.op("relu1", "Relu", [d], out="output")
    return net.graph(["output"])


def softmax_tail() -> Graph:
    """Conv backbone ending in Softmax -> Sub -> Mul, Mul also reading a skip value."""
    net = _Net("softmax_tail", 4)
    x = net.input("input", (1, 3, 8, 8))
    h = net.op("relu1", "Relu", [net.conv("conv1", x, 3, 4)])
    skip = net.op("relu2", "Relu", [net.conv("conv2", h, 4, 4)], out="skip")
    h = net.op("relu3", "Relu", [net.conv("conv3", skip, 4, 4)])
    h = net.op("add4", "Add", [net.conv("conv4", h, 4, 4), skip])
    h = net.op("relu4", "Relu", [h])
    logits = net.conv("logits", h, 4, 4)
    p = net.op("softmax", "Softmax", [logits], {"axis": 1})
    p = net.op("sub", "Sub", [p, net.const("prior", (4, 1, 1), 0.25)])
    net.op("mul", "Mul", [p, skip], out="output")
    return net.graph(["output"])


def composite() -> Graph:
    """Subtract-with-constant, a non-overlapping deconvolution and a Softmax tail in one model."""
    net = _Net("composite", 5)
    x = net.input("input", (1, 3, 8, 8))
    h = net.conv("conv1", x, 3, 4)
    h = net.op("sub1", "Sub", [h, net.const("mean", (4, 1, 1), 0.5)])
    skip = net.op("relu1", "Relu", [h], out="skip")
    d = net.op("deconv", "ConvTranspose2D",
               [skip, net.const("deconv.w", (4, 4, 2, 2), 0.5), net.const("deconv.b", (4,), 0.1)],
               {"stride": 2, "padding": 0})
    h = net.op("relu2", "Relu", [d])
    h = net.op("relu3", "Relu", [net.conv("conv2", h, 4, 4, stride=2)])
    h = net.op("add", "Add", [net.conv("conv3", h, 4, 4), skip])
    h = net.op("relu4", "Relu", [h])
    logits = net.conv("logits", h, 4, 4)
    p = net.op("softmax", "Softmax", [logits], {"axis": 1})
    p = net.op("sub2", "Sub", [p, net.const("prior", (4, 1, 1), 0.25)])
    net.op("mul", "Mul", [p, skip], out="output")
    return net.graph(["output"])


def conv_single() -> Graph:
    """One 3x3 convolution on a [1, 1, 4, 4] input."""
    net = _Net("conv_single", 6)
    x = net.input("input", (1, 1, 4, 4))
    net.op("conv", "Conv2D", [x, net.const("w", (1, 1, 3, 3))], {"stride": 1, "padding": 0},
           out="output")
    return net.graph(["output"])


def cast_dropout() -> Graph:
    """Conv net carrying a float32->float32 Cast and an inference Dropout."""
    net = _Net("cast_dropout", 7)
    x = net.input("input", (1, 3, 8, 8))
    h = net.op("cast", "Cast", [net.conv("conv1", x, 3, 4)], {"to": "float32"})
    h = net.op("relu", "Relu", [h])
    h = net.op("dropout", "Dropout", [h], {"ratio": 0.5})
    net.conv("conv2", h, 4, 2)
    net.nodes[-1] = net.nodes[-1].replace(outputs=("output",))
    return net.graph(["output"])


def custom_warp() -> Graph:
    """Two ``Custom:warp`` layers early in a conv stack; no rule can replace them."""
    net = _Net("custom_warp", 8)
    x = net.input("input", (1, 3, 8, 8))
    h = net.op("warp1", "Custom:warp", [x])
    h = net.op("relu1", "Relu", [net.conv("conv1", h, 3, 4)])
    h = net.op("warp2", "Custom:warp", [h])
    for i in range(2, 6):
        h = net.op(f"relu{i}", "Relu", [net.conv(f"conv{i}", h, 4, 4)])
    net.nodes[-1] = net.nodes[-1].replace(outputs=("output",))
    return net.graph(["output"])


def identity() -> Graph:
    return Graph("identity", [TensorSpec("x", "float32", (2,))], ["x"])


FIXTURES = {
    "sub_const": sub_const,
    "deconv_overlap": deconv_stack,
    "deconv_nonoverlap": lambda: deconv_stack(kernel=2, stride=2),
    "softmax_tail": softmax_tail,
    "composite": composite,
    "conv_single": conv_single,
    "cast_dropout": cast_dropout,
    "custom_warp": custom_warp,
    "identity": identity,
}


def write_all(directory) -> list:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, build in FIXTURES.items():
        path = directory / f"{name}{MODEL_SUFFIX}"
        path.write_text(serialize_model(build()), encoding="utf-8")
        written.append(path)
    return written


if __name__ == "__main__":
    for p in write_all(sys.argv[1] if len(sys.argv) > 1 else "."):
        print(p)
