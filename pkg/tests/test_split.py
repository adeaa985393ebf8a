import json
from dataclasses import replace

import numpy as np
import pytest

from retarget.errors import DefuseError, PreconditionError, SplitError
from retarget.harness import diff_split, run_split
from retarget.interpreter import run_graph
from retarget.ir import Graph, Node, TensorSpec, infer_shapes
from retarget.rewrite import FusionEntry, SplitArtifacts, defuse, fuse_outputs, split_tail


def test_softmax_tail_cut_includes_skip(load):
    g = load("softmax_tail")
    s = split_tail(g, ["softmax"])
    assert s.cut_tensors == ("logits", "skip")
    assert [n.id for n in s.postprocess.nodes] == ["softmax", "sub", "mul"]
    assert s.prefix.outputs == ("logits", "skip")
    assert {sp.name for sp in s.postprocess.inputs} == {"logits", "skip"}
    assert "prior" in s.postprocess.initializer_map
    assert "prior" not in s.prefix.initializer_map
    assert diff_split(g, s).max_abs_diff == 0.0


def test_softmax_tail_single_output_fusion(load, tnn):
    g = load("softmax_tail")
    s = split_tail(g, ["softmax"], tnn)
    assert s.prefix.outputs == ("fused_output",)
    assert [e.value_name for e in s.fusion_manifest] == ["logits", "skip"]
    assert s.fusion_manifest[1].flat_offset == 256
    assert diff_split(g, s).passed


def test_manifest_round_trips_bit_exactly(load, tnn):
    s = split_tail(load("softmax_tail"), ["softmax"], tnn)
    text = json.dumps([e.to_dict() for e in s.fusion_manifest], sort_keys=True)
    back = tuple(FusionEntry.from_dict(d) for d in json.loads(text))
    assert back == s.fusion_manifest
    assert json.dumps([e.to_dict() for e in back], sort_keys=True) == text


def test_fuse_then_defuse_is_exact():
    g = Graph("g", [TensorSpec("x", "float32", (2, 3))], ["a", "b"], [],
              [Node("a", "Relu", ["x"], ["a"]), Node("b", "Neg", ["x"], ["b"])])
    fused, manifest = fuse_outputs(g)
    x = np.random.default_rng(0).uniform(-1, 1, (2, 3)).astype(np.float32)
    direct = run_graph(g, {"x": x})
    back = defuse(manifest, run_graph(fused, {"x": x})["fused_output"])
    assert all(back[k].tobytes() == direct[k].tobytes() for k in direct)
    assert infer_shapes(fused)["fused_output"].shape == (12,)


def test_fuse_rejects_mixed_dtypes():
    g = Graph("g", [TensorSpec("x", "float32", (2,))], ["x", "c"], [],
              [Node("c", "Cast", ["x"], ["c"], {"to": "int64"})])
    with pytest.raises(PreconditionError, match="mixed dtypes"):
        fuse_outputs(g)


def test_corrupted_manifest_is_caught(load, tnn):
    g = load("softmax_tail")
    s = split_tail(g, ["softmax"], tnn)
    first, second = s.fusion_manifest
    shifted = replace(s, fusion_manifest=(first, replace(second, flat_offset=first.flat_offset)))
    assert not diff_split(g, shifted, trials=2).passed
    too_long = replace(s, fusion_manifest=(first, replace(second, flat_offset=300)))
    with pytest.raises(DefuseError):
        diff_split(g, too_long, trials=1)


def test_defuse_checks_lengths():
    with pytest.raises(DefuseError, match="does not match"):
        defuse([FusionEntry("a", (2,), 0, 2)], np.zeros(3))
    with pytest.raises(DefuseError, match="size of shape"):
        defuse([FusionEntry("a", (2,), 0, 3)], np.zeros(3))


def test_empty_split_is_identity(load):
    g = load("sub_const")
    s = split_tail(g, [])
    assert s.prefix is g
    assert s.postprocess.nodes == ()
    assert diff_split(g, s).max_abs_diff == 0.0


def test_closure_covering_everything_fails():
    g = Graph("g", [TensorSpec("x", "float32", (2,))], ["y"], [],
              [Node("s", "Softmax", ["x"], ["y"])])
    with pytest.raises(SplitError, match="closure covers all nodes"):
        split_tail(g, ["s"])


def test_unknown_seed():
    g = Graph("g", [TensorSpec("x", "float32", (2,))], ["y"], [],
              [Node("s", "Relu", ["x"], ["y"])])
    with pytest.raises(SplitError, match="seed not found"):
        split_tail(g, ["nope"])


def test_passthrough_output_survives_split():
    nodes = [Node("a", "Relu", ["x"], ["a"]), Node("b", "Softmax", ["a"], ["b"])]
    g = Graph("g", [TensorSpec("x", "float32", (1, 4))], ["a", "b"], [], nodes)
    s = split_tail(g, ["b"])
    assert s.cut_tensors == ("a",)
    x = {"x": np.linspace(-1, 1, 4, dtype=np.float32).reshape(1, 4)}
    out = run_split(s, x)
    assert set(out) == {"a", "b"}
    assert diff_split(g, s).max_abs_diff == 0.0


def test_split_artifacts_are_valid_graphs(load, tnn):
    s = split_tail(load("softmax_tail"), ["softmax"], tnn)
    assert isinstance(s, SplitArtifacts)
    infer_shapes(s.prefix)
    infer_shapes(s.postprocess)
