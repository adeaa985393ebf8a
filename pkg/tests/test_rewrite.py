import numpy as np
import pytest

from oracles import conv_transpose2d_scatter
from retarget.errors import PreconditionError, RuleMismatchError
from retarget.fixtures import deconv_stack
from retarget.harness import diff_graphs
from retarget.interpreter import run_graph
from retarget.ir import Graph, Initializer, Node, TensorSpec, check_graph, infer_shapes
from retarget.rewrite import Namer, apply_rule, default_rules, rewrite_convtranspose
from retarget.scenarios import Scenario

RULES = default_rules()


def ops(g):
    return [n.op_type for n in g.nodes]


# ---------------------------------------------------------------- S1

def test_sub_const_to_add(load):
    g = load("sub_const")
    res = apply_rule(g, "sub", RULES.get("sub_const_to_add"))
    assert "Sub" not in ops(res.graph)
    assert res.scenario == Scenario.S1 and not res.retraining_required
    neg = res.graph.initializer_map["mean__rw0"].data
    assert np.array_equal(neg, -g.initializer_map["mean"].data)
    # the original constant is no longer referenced, so it is pruned
    assert "mean" not in res.graph.initializer_map
    assert diff_graphs(g, res.graph).max_abs_diff == 0.0


def test_sub_of_folded_constant():
    c = Initializer.from_array("c", np.array([2.0], np.float32))
    nodes = [Node("n", "Neg", ["c"], ["nc"]), Node("s", "Sub", ["x", "nc"], ["y"])]
    g = Graph("g", [TensorSpec("x", "float32", (3,))], ["y"], [c], nodes)
    res = apply_rule(g, "s", RULES.get("sub_const_to_add"))
    assert ops(res.graph) == ["Add"]
    assert diff_graphs(g, res.graph).max_abs_diff == 0.0


def test_sub_to_add_neg():
    g = Graph("g", [TensorSpec("x", "float32", (3,)), TensorSpec("z", "float32", (3,))], ["y"],
              [], [Node("s", "Sub", ["x", "z"], ["y"])])
    with pytest.raises(RuleMismatchError):
        apply_rule(g, "s", RULES.get("sub_const_to_add"))
    res = apply_rule(g, "s", RULES.get("sub_to_add_neg"))
    assert sorted(ops(res.graph)) == ["Add", "Neg"]
    assert diff_graphs(g, res.graph).max_abs_diff == 0.0


def test_drop_rules_rewire_consumers(load):
    g = load("cast_dropout")
    g1 = apply_rule(g, "cast", RULES.get("cast_noop_drop")).graph
    g2 = apply_rule(g1, "dropout", RULES.get("dropout_drop")).graph
    assert ops(g2) == ["Conv2D", "Relu", "Conv2D"]
    assert diff_graphs(g, g2).max_abs_diff == 0.0


def test_drop_keeps_graph_output_name():
    g = Graph("g", [TensorSpec("x", "float32", (2, 3))], ["y"], [],
              [Node("r", "Relu", ["x"], ["h"]), Node("d", "Dropout", ["h"], ["y"])])
    res = apply_rule(g, "d", RULES.get("dropout_drop"))
    assert ops(res.graph) == ["Relu", "Reshape"]
    assert res.graph.outputs == ("y",)
    assert diff_graphs(g, res.graph).max_abs_diff == 0.0


def test_cast_to_other_dtype_is_not_dropped():
    g = Graph("g", [TensorSpec("x", "float32", (2,))], ["y"], [],
              [Node("c", "Cast", ["x"], ["y"], {"to": "int64"})])
    with pytest.raises(RuleMismatchError):
        apply_rule(g, "c", RULES.get("cast_noop_drop"))


def test_input_graph_untouched(load):
    g = load("sub_const")
    before = [n for n in g.nodes]
    apply_rule(g, "sub", RULES.get("sub_const_to_add"))
    assert list(g.nodes) == before


def test_namer_continues_numbering():
    g = Graph("g", [TensorSpec("x__rw4", "float32", (2,))], ["x__rw4"])
    namer = Namer(g)
    assert namer.fresh("x") == "x__rw5"
    assert namer.fresh("conv") == "conv__rw6"


def test_repeated_rewrites_keep_names_unique(load):
    g = load("sub_const")
    g = apply_rule(g, "sub", RULES.get("sub_const_to_add")).graph
    names = g.value_names()
    assert len(names) == len(set(names))


# ---------------------------------------------------------------- S2 exact

def deconv_graph(k, s, cin, cout, spatial, bias=True, seed=0):
    rng = np.random.default_rng(seed)
    inits = [Initializer.from_array("w", rng.uniform(-1, 1, (cin, cout, k, k)).astype(np.float32))]
    if bias:
        inits.append(Initializer.from_array("b", rng.uniform(-1, 1, cout).astype(np.float32)))
    node = Node("deconv", "ConvTranspose2D", ["x"] + [i.name for i in inits], ["y"],
                {"stride": s, "padding": 0})
    return Graph("d", [TensorSpec("x", "float32", (1, cin, spatial, spatial))], ["y"], inits,
                 [node])


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("bias", [True, False])
def test_exact_rewrite_matches_scatter_oracle(k, bias):
    g = deconv_graph(k, k, 3, 2, 5, bias)
    res = rewrite_convtranspose(g, "deconv", "exact_nonoverlap")
    assert not res.retraining_required
    assert "ConvTranspose2D" not in ops(res.graph)
    x = np.random.default_rng(9).uniform(-1, 1, (1, 3, 5, 5)).astype(np.float32)
    w = g.initializer_map["w"].data
    b = g.initializer_map["b"].data if bias else None
    got = run_graph(res.graph, {"x": x})["y"]
    assert np.abs(got - conv_transpose2d_scatter(x, w, b, k, 0)).max() <= 1e-6


def test_exact_rewrite_shape_example():
    g = deconv_graph(2, 2, 4, 3, 5)
    res = rewrite_convtranspose(g, "deconv", "exact_nonoverlap")
    specs = infer_shapes(res.graph)
    assert ops(res.graph) == ["Conv2D", "Reshape", "Transpose", "Reshape"]
    conv = res.graph.nodes[0]
    assert specs[conv.outputs[0]].shape == (1, 12, 5, 5)
    assert specs["y"].shape == (1, 3, 10, 10)


def test_exact_rejects_overlap():
    g = deconv_graph(3, 2, 2, 2, 4)
    with pytest.raises(PreconditionError, match="stride == kernel"):
        rewrite_convtranspose(g, "deconv", "exact_nonoverlap")


def test_exact_rejects_runtime_weights():
    g = Graph("g", [TensorSpec("x", "float32", (1, 2, 3, 3)),
                    TensorSpec("w", "float32", (2, 2, 2, 2))], ["y"], [],
              [Node("d", "ConvTranspose2D", ["x", "w"], ["y"], {"stride": 2})])
    with pytest.raises(PreconditionError, match="constant weights"):
        rewrite_convtranspose(g, "d", "exact_nonoverlap")


def test_unknown_mode_and_wrong_node(load):
    g = deconv_graph(2, 2, 2, 2, 4)
    with pytest.raises(PreconditionError, match="unknown mode"):
        rewrite_convtranspose(g, "deconv", "magic")
    with pytest.raises(PreconditionError, match="not ConvTranspose2D"):
        rewrite_convtranspose(load("sub_const"), "sub", "structural")


# ---------------------------------------------------------------- S2 structural

@pytest.mark.parametrize("k,s,spatial", [(3, 2, 4), (3, 2, 5), (4, 2, 6), (3, 1, 4), (5, 3, 3)])
def test_structural_preserves_shape(k, s, spatial):
    g = deconv_graph(k, s, 2, 3, spatial)
    res = rewrite_convtranspose(g, "deconv", "structural")
    assert res.retraining_required
    check_graph(res.graph)
    assert infer_shapes(res.graph)["y"] == infer_shapes(g)["y"]
    assert ops(res.graph) == ["Conv2D", "Reshape", "Transpose", "Reshape"]
    assert res.graph.nodes[0].attr("stride") == 1


def test_structural_on_overlap_fixture():
    g = deconv_stack()
    res = rewrite_convtranspose(g, "deconv", "structural")
    assert ops(res.graph) == ["Conv2D", "Relu", "Conv2D", "Reshape", "Transpose", "Reshape", "Relu"]
    assert infer_shapes(res.graph)["output"] == infer_shapes(g)["output"]
    assert all(not i.data.any() for i in res.graph.initializers if "__rw" in i.name)
