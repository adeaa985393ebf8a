"""``retarget`` command-line front end.

Exit codes: 0 success, 1 incompatible model or failed diff, 2 usage or I/O
error, 3 internal error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analyzer import ALL_NODES, AnalyzeOptions, analyze
from .errors import (GraphValidationError, InputMismatchError, ModelSyntaxError, PreconditionError,
                     ProfileError, RetargetError, SignatureMismatchError, SplitError)
from .harness import DEFAULT_TOLERANCE, DEFAULT_TRIALS, diff_graphs, diff_split, random_inputs, \
    trial_rng
from .interpreter import bench, run_graph
from .ir.graph import Graph
from .ir.serialize import MODEL_SUFFIX, dump_tensors, dumps, load_tensors, parse_model, \
    serialize_model, tensors_to_dict
from .ir.shapes import infer_shapes
from .pipeline import convert
from .profiles import available_profiles, find_profile
from .rewrite.custom import DEFAULT_SOURCE_FRAMEWORK
from .rewrite.deconv import ConvTransposeExact
from .rewrite.registry import default_rules
from .scenarios import Scenario

EXIT_OK, EXIT_INCOMPATIBLE, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3
MODES = {"exact": "exact_nonoverlap", "structural": "structural"}

_USAGE_ERRORS = (OSError, ModelSyntaxError, GraphValidationError, ProfileError, PreconditionError,
                 SignatureMismatchError, InputMismatchError)


class UsageError(Exception):
    """Bad flag value detected after argument parsing."""


def _load_model(path) -> Graph:
    return parse_model(Path(path).read_bytes())


def _stem(path: Path) -> str:
    name = path.name
    return name[:-len(MODEL_SUFFIX)] if name.endswith(MODEL_SUFFIX) else path.stem


def _emit(args, payload: dict, text: str):
    print(dumps(payload) if args.json else text, end="" if args.json else "\n")


def _parse_prefer(items) -> dict:
    prefer = {}
    for item in items or ():
        node, _, scen = item.rpartition("=")
        try:
            prefer[node or ALL_NODES] = Scenario.parse(scen)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return prefer


def _options(args) -> AnalyzeOptions:
    try:
        return AnalyzeOptions(args.tail_fraction, _parse_prefer(args.prefer))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_analyze(args) -> int:
    g = _load_model(args.model)
    report = analyze(g, find_profile(args.profile), opts=_options(args))
    if args.out:
        Path(args.out).write_text(dumps(report.to_dict()), encoding="utf-8")
    _emit(args, report.to_dict(), report.format_table())
    return EXIT_OK if report.deployable_as_is else EXIT_INCOMPATIBLE


def _check_exact_mode(result, mode):
    if mode != "exact_nonoverlap":
        return
    g = result.original
    for a in result.report.by_scenario(Scenario.S4):
        if a.op_type == "ConvTranspose2D":
            reason = ConvTransposeExact.precondition(g, g.node(a.node_id))
            raise PreconditionError(reason or f"node {a.node_id!r} cannot be rewritten exactly")


def _verify(result, args) -> dict:
    if result.residual.by_scenario(Scenario.S4):
        return {"status": "skipped", "reason": "custom ops have no reference kernel"}
    if result.retraining_required:
        # new weights are placeholders, so only the interface can be checked
        final = result.split.postprocess if result.split else result.graph
        before, after = infer_shapes(result.original), infer_shapes(final)
        same = all(before[o].shape == after[o].shape for o in result.original.outputs)
        return {"status": "pass" if same else "fail", "mode": "shapes_only"}
    if result.split is not None:
        rep = diff_split(result.original, result.split, args.trials, args.tol, args.seed)
    else:
        rep = diff_graphs(result.original, result.graph, args.trials, args.tol, args.seed)
    return {"status": "pass" if rep.passed else "fail", "mode": "numeric", "diff": rep.to_dict()}


def cmd_convert(args) -> int:
    src = Path(args.model)
    g = _load_model(src)
    profile = find_profile(args.profile)
    mode = MODES[args.mode] if args.mode else None
    try:
        result = convert(g, profile, default_rules(mode), _options(args), args.source_framework)
    except SplitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    _check_exact_mode(result, mode)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = _stem(src)
    written = [out_dir / f"{stem}.prefix{MODEL_SUFFIX}"]
    written[0].write_text(serialize_model(result.prefix), encoding="utf-8")
    if result.split is not None:
        written.append(out_dir / f"{stem}.post{MODEL_SUFFIX}")
        written[-1].write_text(serialize_model(result.split.postprocess), encoding="utf-8")

    manifest = result.manifest_dict()
    manifest["source_model"] = str(src)
    if args.verify:
        manifest["verify"] = _verify(result, args)
    written.append(out_dir / f"{stem}.manifest.json")
    written[-1].write_text(dumps(manifest), encoding="utf-8")

    ok = result.residual.deployable_as_is and manifest.get("verify", {}).get("status") != "fail"
    lines = [result.report.format_table(), ""]
    lines += [f"applied {a.rule_id} to {a.node_id}" for a in result.applied]
    if result.split is not None:
        lines.append(f"split tail at {list(result.split_seeds)}; "
                     f"cut tensors {list(result.split.cut_tensors)}")
    for m in result.custom_manifests:
        lines.append(f"custom op {m.op_type} needed at {list(m.occurrences)}")
    if result.retraining_required:
        lines.append("warning: retraining required before deployment")
    if "verify" in manifest:
        lines.append(f"verify: {manifest['verify']['status']}")
    lines += [f"wrote {p}" for p in written]
    lines.append("converted" if ok else "not deployable")
    payload = dict(manifest, written=[str(p) for p in written], ok=ok)
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK if ok else EXIT_INCOMPATIBLE


def _format_outputs(outputs: dict) -> str:
    rows = []
    for name, arr in outputs.items():
        head = np.array2string(arr.reshape(-1)[:6], precision=6, separator=", ")
        rows.append(f"{name}  {arr.dtype}{list(arr.shape)}  {head}")
    return "\n".join(rows)


def cmd_run(args) -> int:
    g = _load_model(args.model)
    if args.inputs:
        inputs = load_tensors(Path(args.inputs).read_bytes())
    else:
        inputs = random_inputs(g, trial_rng(args.seed, 0))
    outputs = run_graph(g, inputs)
    if args.out:
        Path(args.out).write_text(dump_tensors(outputs), encoding="utf-8")
    report = bench(g, inputs, args.bench) if args.bench else None
    text = _format_outputs(outputs)
    if report is not None:
        lat = report.wall_latency_ms
        text += (f"\nbench: {report.repetitions} runs, median {np.median(lat):.3f} ms, "
                 f"throughput {report.throughput_inferences_per_s:.1f}/s, "
                 f"MACs {report.multiply_accumulate_count}, "
                 f"peak live bytes {report.peak_live_tensor_bytes}")
    payload = {"outputs": tensors_to_dict(outputs),
               "bench": report.to_dict() if report else None}
    _emit(args, payload, text)
    return EXIT_OK


def cmd_diff(args) -> int:
    a, b = _load_model(args.model_a), _load_model(args.model_b)
    report = diff_graphs(a, b, args.trials, args.tol, args.seed)
    _emit(args, report.to_dict(), report.format_table())
    return EXIT_OK if report.passed else EXIT_INCOMPATIBLE


def cmd_profiles(args) -> int:
    if args.action == "list":
        names = available_profiles()
        _emit(args, {"profiles": names}, "\n".join(names))
        return EXIT_OK
    if not args.name:
        raise UsageError("profiles show needs a NAME")
    p = find_profile(args.name)
    d = p.to_dict()
    text = "\n".join(f"{k}: {', '.join(v) if isinstance(v, list) else v}" for k, v in d.items())
    _emit(args, d, text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retarget",
        description="Check a model against a deployment target and rewrite what it rejects.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--json", action="store_true", help="machine-readable output")

    def planning(p):
        p.add_argument("--profile", required=True, help="built-in profile name or file path")
        p.add_argument("--tail-fraction", type=float, default=0.25,
                       help="largest share of nodes a post-processing tail may hold")
        p.add_argument("--prefer", action="append", metavar="[NODE=]SCENARIO",
                       help="force a scenario (S1..S4) for one node, or all nodes without NODE=")

    def trials(p):
        p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
        p.add_argument("--tol", type=float, default=DEFAULT_TOLERANCE)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("analyze", help="report unsupported nodes and how to fix them")
    p.add_argument("model")
    planning(p)
    p.add_argument("--out", help="also write the report as JSON to this file")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("convert", help="rewrite and split a model for a target profile")
    p.add_argument("model")
    planning(p)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--mode", choices=sorted(MODES),
                   help="pin the ConvTranspose2D rewrite (default: exact when possible)")
    p.add_argument("--verify", action="store_true", help="check the result against the original")
    p.add_argument("--source-framework", default=DEFAULT_SOURCE_FRAMEWORK)
    trials(p)
    common(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("run", help="execute a model with the reference interpreter")
    p.add_argument("model")
    p.add_argument("--inputs", help="tensors file; random seeded inputs when omitted")
    p.add_argument("--out", help="write outputs to this tensors file")
    p.add_argument("--bench", type=int, metavar="N", help="also time N repetitions")
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("diff", help="compare two models on random inputs")
    p.add_argument("model_a")
    p.add_argument("model_b")
    trials(p)
    common(p)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("profiles", help="list or show capability profiles")
    p.add_argument("action", choices=("list", "show"))
    p.add_argument("name", nargs="?")
    common(p)
    p.set_defaults(func=cmd_profiles)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "bench", None) is not None and args.bench < 1:
        print("error: --bench must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "trials", 1) < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, *_USAGE_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RetargetError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
