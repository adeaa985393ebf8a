import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retarget.analyzer import AnalyzeOptions
from retarget.errors import SplitError
from retarget.harness import diff_graphs, diff_split, gen_random_graph
from retarget.ir import Graph, Node, TensorSpec
from retarget.pipeline import convert
from retarget.profiles import builtin_profile
from retarget.rewrite import default_rules
from retarget.scenarios import Scenario


def test_composite_under_mobile_strict(load, mobile):
    g = load("composite")
    res = convert(g, mobile)
    assert [(a.node_id, a.rule_id) for a in res.applied] == [
        ("sub1", "sub_const_to_add"), ("deconv", "convtranspose_exact")]
    assert res.split_seeds == ("softmax", "sub2")
    assert res.residual.deployable_as_is
    assert not res.retraining_required
    assert diff_split(g, res.split).passed
    assert all(n.op_type in mobile.supported_ops for n in res.prefix.nodes)


def test_composite_under_tnn_is_untouched(load, tnn):
    # tnn supports every op here, so nothing is rewritten or split
    res = convert(load("composite"), tnn)
    assert res.applied == () and res.split is None


def test_structural_mode_flags_retraining(load, mobile):
    g = load("deconv_overlap")
    res = convert(g, mobile, default_rules("structural"))
    assert res.retraining_required
    assert res.residual.deployable_as_is


def test_cast_dropout_cleared_exactly(load, tnn):
    g = load("cast_dropout")
    res = convert(g, tnn)
    assert res.residual.deployable_as_is
    assert diff_graphs(g, res.graph).max_abs_diff == 0.0


def test_custom_ops_remain_with_manifest(load, mobile):
    g = load("custom_warp")
    res = convert(g, mobile, source_framework="torch")
    assert not res.residual.deployable_as_is
    assert {a.scenario for a in res.residual.unsupported} == {Scenario.S4}
    (m,) = res.custom_manifests
    assert m.op_type == "Custom:warp" and m.occurrences == ("warp1", "warp2")
    assert m.required_in == ("torch", "mobile-strict")
    assert m.io_signature["inputs"][0]["shape"] == [1, 3, 8, 8]


def test_single_output_profile_gets_fused_prefix(tnn):
    g = Graph("g", [TensorSpec("x", "float32", (2,))], ["a", "b"], [],
              [Node("a", "Relu", ["x"], ["a"]), Node("b", "Neg", ["x"], ["b"])])
    res = convert(g, tnn)
    assert res.prefix.outputs == ("fused_output",)
    assert res.residual.deployable_as_is
    assert diff_split(g, res.split).max_abs_diff == 0.0


def test_forced_tail_over_everything_suggests_custom_op(mobile):
    g = Graph("g", [TensorSpec("x", "float32", (2,))], ["y"], [],
              [Node("s", "Softmax", ["x"], ["y"])])
    with pytest.raises(SplitError, match="closure covers all nodes.*S4"):
        convert(g, mobile, opts=AnalyzeOptions(prefer={"s": Scenario.S3}))


def test_manifest_is_serializable(load, mobile):
    d = convert(load("composite"), mobile).manifest_dict()
    assert json.loads(json.dumps(d)) == d
    assert d["cut_tensors"] == ["logits", "skip"]


def test_original_is_not_mutated(load, mobile):
    g = load("composite")
    text = repr(g.nodes)
    convert(g, mobile)
    assert repr(g.nodes) == text


def test_unfusable_outputs_leave_a_violation(tnn):
    g = Graph("g", [TensorSpec("x", "float32", (2,))], ["a", "c"], [],
              [Node("a", "Relu", ["x"], ["a"]), Node("c", "Cast", ["x"], ["c"], {"to": "int64"})])
    res = convert(g, tnn, default_rules().without("cast_noop_drop"),
                  AnalyzeOptions(prefer={"c": Scenario.S4}))
    assert res.split is not None and res.split.fused_output_name is None
    assert any("single output" in v for v in res.residual.structural_violations)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(["mobile-strict", "tnn"]))
def test_conversion_is_sound_on_random_graphs(seed, profile_name):
    g = gen_random_graph(seed, 8)
    p = builtin_profile(profile_name)
    res = convert(g, p)
    if res.residual.by_scenario(Scenario.S4) or res.retraining_required:
        return
    rep = diff_split(g, res.split) if res.split else diff_graphs(g, res.graph)
    assert rep.passed, rep.format_table()
    assert all(n.op_type in p.supported_ops for n in res.prefix.nodes)
