import json

import numpy as np
import pytest

from retarget.cli import main
from retarget.ir import (Graph, Node, TensorSpec, dump_tensors, load_tensors, parse_model,
                         serialize_model)


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_sub_const(capsys, data_dir):
    code, out, _ = run_cli(capsys, "analyze", data_dir / "sub_const.nng.json",
                           "--profile", "mobile-strict")
    assert code == 1
    assert "S1_substitute" in out and "sub_const_to_add" in out


def test_analyze_supported_and_json(capsys, data_dir, tmp_path):
    report = tmp_path / "r.json"
    code, out, _ = run_cli(capsys, "analyze", data_dir / "composite.nng.json", "--profile",
                           "full", "--json", "--out", report)
    assert code == 0
    assert json.loads(out)["deployable_as_is"] is True
    assert json.loads(report.read_text()) == json.loads(out)


def test_analyze_missing_file(capsys, tmp_path):
    code, _, err = run_cli(capsys, "analyze", tmp_path / "nope.nng.json", "--profile", "tnn")
    assert code == 2 and "error" in err


def test_analyze_bad_model(capsys, tmp_path):
    bad = tmp_path / "bad.nng.json"
    bad.write_text("{")
    assert run_cli(capsys, "analyze", bad, "--profile", "tnn")[0] == 2


def test_analyze_prefer(capsys, data_dir):
    code, out, _ = run_cli(capsys, "analyze", data_dir / "sub_const.nng.json", "--profile",
                           "mobile-strict", "--prefer", "sub=S4", "--json")
    assert json.loads(out)["unsupported"][0]["scenario"] == "S4_custom_op"
    code, _, err = run_cli(capsys, "analyze", data_dir / "sub_const.nng.json", "--profile",
                           "mobile-strict", "--prefer", "sub=S9")
    assert code == 2 and "unknown scenario" in err


def test_convert_composite_verify(capsys, data_dir, tmp_path):
    src = data_dir / "composite.nng.json"
    before = src.read_bytes()
    code, out, _ = run_cli(capsys, "convert", src, "--profile", "mobile-strict", "--verify",
                           "--out-dir", tmp_path)
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "composite.manifest.json", "composite.post.nng.json", "composite.prefix.nng.json"]
    manifest = json.loads((tmp_path / "composite.manifest.json").read_text())
    assert manifest["verify"]["status"] == "pass"
    prefix = parse_model((tmp_path / "composite.prefix.nng.json").read_bytes())
    assert {n.op_type for n in prefix.nodes} <= {"Conv2D", "Add", "Relu", "Reshape", "Transpose"}
    assert src.read_bytes() == before


def test_convert_custom_only(capsys, data_dir, tmp_path):
    code, out, _ = run_cli(capsys, "convert", data_dir / "custom_warp.nng.json", "--profile",
                           "mobile-strict", "--out-dir", tmp_path, "--verify", "--json")
    assert code == 1
    payload = json.loads(out)
    assert payload["custom_ops"][0]["op_type"] == "Custom:warp"
    assert payload["verify"]["status"] == "skipped"


def test_convert_exact_on_overlapping_deconv(capsys, data_dir, tmp_path):
    code, _, err = run_cli(capsys, "convert", data_dir / "deconv_overlap.nng.json", "--profile",
                           "mobile-strict", "--mode", "exact", "--out-dir", tmp_path)
    assert code == 2 and "stride == kernel" in err
    assert not list(tmp_path.iterdir())


def test_convert_structural(capsys, data_dir, tmp_path):
    code, out, _ = run_cli(capsys, "convert", data_dir / "deconv_overlap.nng.json", "--profile",
                           "mobile-strict", "--mode", "structural", "--verify", "--json",
                           "--out-dir", tmp_path)
    payload = json.loads(out)
    assert code == 0 and payload["retraining_required"]
    assert payload["verify"] == {"status": "pass", "mode": "shapes_only"}


def test_convert_forced_tail_everywhere(capsys, tmp_path):
    g = Graph("only_softmax", [TensorSpec("x", "float32", (1, 4))], ["y"], [],
              [Node("s", "Softmax", ["x"], ["y"])])
    model = tmp_path / "m.nng.json"
    model.write_text(serialize_model(g))
    code, _, err = run_cli(capsys, "convert", model, "--profile", "mobile-strict",
                           "--prefer", "S3", "--out-dir", tmp_path / "out")
    assert code == 1 and "closure covers all nodes" in err


def test_run_identity(capsys, data_dir, tmp_path):
    x = np.array([1.5, -2.25], np.float32)
    inp, out = tmp_path / "in.tensors.json", tmp_path / "out.tensors.json"
    inp.write_text(dump_tensors({"x": x}))
    code, _, _ = run_cli(capsys, "run", data_dir / "identity.nng.json", "--inputs", inp,
                         "--out", out)
    assert code == 0
    assert load_tensors(out.read_text())["x"].tobytes() == x.tobytes()


def test_run_bench(capsys, data_dir):
    code, out, _ = run_cli(capsys, "run", data_dir / "conv_single.nng.json", "--bench", 10,
                           "--json")
    bench = json.loads(out)["bench"]
    assert code == 0
    assert len(bench["wall_latency_ms"]) == 10
    assert bench["throughput_inferences_per_s"] > 0
    assert bench["multiply_accumulate_count"] == 36


def test_run_wrong_inputs(capsys, data_dir, tmp_path):
    inp = tmp_path / "in.tensors.json"
    inp.write_text(dump_tensors({"x": np.zeros(3, np.float32)}))
    assert run_cli(capsys, "run", data_dir / "identity.nng.json", "--inputs", inp)[0] == 2


def test_diff_commands(capsys, data_dir, tmp_path):
    same = data_dir / "sub_const.nng.json"
    assert run_cli(capsys, "diff", same, same)[0] == 0
    run_cli(capsys, "convert", same, "--profile", "mobile-strict", "--out-dir", tmp_path)
    assert run_cli(capsys, "diff", same, tmp_path / "sub_const.prefix.nng.json")[0] == 0

    doc = json.loads(same.read_text())
    for init in doc["initializers"]:
        if init["name"] == "mean":
            init["data"] = [v + 1.0 for v in init["data"]]
    perturbed = tmp_path / "perturbed.nng.json"
    perturbed.write_text(json.dumps(doc))
    code, out, _ = run_cli(capsys, "diff", same, perturbed, "--json", "--trials", 3)
    assert code == 1 and json.loads(out)["pass"] is False
    assert run_cli(capsys, "diff", same, data_dir / "conv_single.nng.json")[0] == 2


def test_diff_is_deterministic(capsys, data_dir):
    a = data_dir / "softmax_tail.nng.json"
    outs = [run_cli(capsys, "diff", a, a, "--json", "--seed", 5)[1] for _ in range(2)]
    assert outs[0] == outs[1]


def test_profiles(capsys):
    code, out, _ = run_cli(capsys, "profiles", "list")
    assert code == 0 and {"tnn", "mobile-strict", "full"} <= set(out.split())
    code, out, _ = run_cli(capsys, "profiles", "show", "tnn", "--json")
    ops = json.loads(out)["supported_ops"]
    assert "Cast" not in ops and "Dropout" not in ops and "Conv2D" in ops
    assert run_cli(capsys, "profiles", "show", "nosuch")[0] == 2


def test_usage_errors(capsys, data_dir):
    with pytest.raises(SystemExit) as info:
        main(["analyze"])
    assert info.value.code == 2
    assert run_cli(capsys, "run", data_dir / "conv_single.nng.json", "--bench", 0)[0] == 2
