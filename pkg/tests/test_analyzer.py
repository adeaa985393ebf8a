import numpy as np
import pytest

from retarget.analyzer import AnalyzeOptions, ScenarioAssignment, analyze, tail_eligible
from retarget.ir import Graph, Initializer, Node, TensorSpec
from retarget.profiles import CapabilityProfile
from retarget.rewrite import default_rules
from retarget.scenarios import Scenario


def assignments(report):
    return {a.node_id: (a.scenario, a.rule_id) for a in report.unsupported}


def test_sub_const_sub_is_substituted(load, mobile):
    r = analyze(load("sub_const"), mobile)
    assert assignments(r) == {"sub": (Scenario.S1, "sub_const_to_add")}
    assert not r.deployable_as_is


def test_fully_supported_is_deployable(load, full):
    r = analyze(load("composite"), full)
    assert r.deployable_as_is and r.unsupported == ()


def test_deconv_nonoverlap_vs_structural(load, mobile):
    exact = analyze(load("deconv_nonoverlap"), mobile)
    assert assignments(exact) == {"deconv": (Scenario.S2, "convtranspose_exact")}
    overlap = analyze(load("deconv_overlap"), mobile)
    assert assignments(overlap) == {"deconv": (Scenario.S2, "convtranspose_structural")}


def test_softmax_tail_goes_to_post_processing(load, mobile):
    r = analyze(load("softmax_tail"), mobile)
    got = assignments(r)
    assert got == {"softmax": (Scenario.S3, None), "sub": (Scenario.S3, None)}
    sub = next(a for a in r.unsupported if a.node_id == "sub")
    assert "softmax" in sub.rationale


def test_cast_dropout_against_tnn(load, tnn):
    r = analyze(load("cast_dropout"), tnn)
    assert assignments(r) == {"cast": (Scenario.S1, "cast_noop_drop"),
                              "dropout": (Scenario.S1, "dropout_drop")}


def test_custom_ops_fall_to_s4(load, mobile):
    r = analyze(load("custom_warp"), mobile)
    assert assignments(r) == {"warp1": (Scenario.S4, None), "warp2": (Scenario.S4, None)}


def test_prefer_overrides_priority(load, mobile):
    g = load("sub_const")
    r = analyze(g, mobile, opts=AnalyzeOptions(prefer={"sub": Scenario.S4}))
    assert assignments(r) == {"sub": (Scenario.S4, None)}
    r = analyze(g, mobile, opts=AnalyzeOptions(prefer={"*": Scenario.S3}))
    assert assignments(r)["sub"] == (Scenario.S3, None)


def test_inapplicable_preference_falls_back(load, mobile):
    r = analyze(load("sub_const"), mobile, opts=AnalyzeOptions(prefer={"sub": Scenario.S2}))
    a = r.unsupported[0]
    assert a.scenario == Scenario.S1 and "not applicable" in a.rationale


def test_tail_fraction_controls_split(load, mobile):
    g = load("softmax_tail")
    assert tail_eligible(g, "softmax", 0.25)
    assert not tail_eligible(g, "softmax", 0.1)
    r = analyze(g, mobile, opts=AnalyzeOptions(tail_fraction=0.1))
    # Sub falls back to its S1 rule, Softmax has nowhere to go
    assert assignments(r) == {"softmax": (Scenario.S4, None),
                              "sub": (Scenario.S1, "sub_const_to_add")}


def test_node_reading_graph_input_is_not_tail():
    g = Graph("g", [TensorSpec("x", "float32", (1, 4))], ["y"], [],
              [Node("s", "Softmax", ["x"], ["y"])])
    assert not tail_eligible(g, "s", 1.0)


def test_sub_without_constant_needs_extension_rule(mobile):
    g = Graph("g", [TensorSpec("x", "float32", (1, 4)), TensorSpec("z", "float32", (1, 4))],
              ["y"], [], [Node("s", "Sub", ["x", "z"], ["y"])])
    assert assignments(analyze(g, mobile)) == {"s": (Scenario.S1, "sub_to_add_neg")}
    r = analyze(g, mobile, default_rules().without("sub_to_add_neg"))
    assert assignments(r) == {"s": (Scenario.S4, None)}


def test_rule_needs_target_support_for_emitted_ops():
    p = CapabilityProfile("tiny", "", [], ["Conv2D", "Relu"])
    c = Initializer.from_array("c", np.ones((1, 4), np.float32))
    g = Graph("g", [TensorSpec("x", "float32", (1, 4))], ["y"], [c],
              [Node("s", "Sub", ["x", "c"], ["y"])])
    assert assignments(analyze(g, p)) == {"s": (Scenario.S4, None)}


def test_structural_violations():
    p = CapabilityProfile("one", "", [], ["Relu"], single_output_only=True, max_input_pixels=9)
    g = Graph("g", [TensorSpec("x", "float32", (1, 1, 4, 4))], ["a", "b"], [],
              [Node("a", "Relu", ["x"], ["a"]), Node("b", "Relu", ["a"], ["b"])])
    r = analyze(g, p)
    assert r.unsupported == () and len(r.structural_violations) == 2
    assert not r.deployable_as_is


def test_report_serialization(load, mobile):
    r = analyze(load("composite"), mobile)
    d = r.to_dict()
    assert list(d) == ["profile_name", "unsupported", "structural_violations", "deployable_as_is"]
    assert [u["node_id"] for u in d["unsupported"]] == ["sub1", "deconv", "softmax", "sub2"]
    table = r.format_table()
    assert "S2_retrain_rewrite" in table and "convtranspose_exact" in table


def test_assignment_rule_invariant():
    with pytest.raises(ValueError):
        ScenarioAssignment("n", "Sub", Scenario.S1, None, "")
    with pytest.raises(ValueError):
        ScenarioAssignment("n", "Sub", Scenario.S3, "sub_const_to_add", "")
