"""Command-line entry point.

Subcommands: quantize, pack, gemm, layout, bench, sensitivity, verify.
Every artifact-writing run also writes exactly one `<output>.manifest.json`
recording the command, config, input digests, and timing.  Outputs are
staged to temp files and renamed, so failures never leave partial files.

Exit codes: 0 ok, 1 verification failure, 2 usage error, 3 format error.
Set BITSERIAL_OUT_DIR to redirect relative output paths.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__, bench, fileio, verify
from .bitplane import decompose
from .engine import GemmConfig, execute_tiled, int_matmul_reference
from .errors import BitserialError, FormatError, PolicyMissError
from .memsim import chunked_layout_pattern, golden_reports, naive_layout_pattern, simulate
from .packing import PackConfig, activation_pack_config, pack, weight_pack_config
from .quantize import DEFAULT_POLICY, BitPolicy, QuantTensor, activation_bits, quantize
from .schema import validate_json
from .sensitivity import LayerDump, assign_policy, rank_layers

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_FORMAT = 3


def _out_path(path: str) -> str:
    base = os.environ.get("BITSERIAL_OUT_DIR")
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def _write_json(path: str, doc) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".json-")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(doc, fh, indent=2, allow_nan=False)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _write_manifest(primary_out: str, command: str, config: dict, inputs: list[str],
                    outputs: list[str], wall_ns: int, stats: dict | None = None) -> None:
    doc = {
        "command": command,
        "config": config,
        "inputs": {p: fileio.file_digest(p) for p in inputs},
        "outputs": outputs,
        "wall_ns": wall_ns,
        "tool_version": __version__,
        "created_at": time.time(),
    }
    if stats:
        doc["stats"] = stats
    validate_json(doc, "manifest")
    _write_json(primary_out + ".manifest.json", doc)


def _load_policy(path: str | None) -> BitPolicy:
    if path is None:
        return DEFAULT_POLICY
    with open(path) as fh:
        table = json.load(fh)
    if not isinstance(table, dict):
        raise FormatError(f"{path}: policy must be a JSON object mapping layer kind to bits")
    return BitPolicy(weight_bits=6, activation_bits_by_layer=table)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_quantize(args) -> int:
    t0 = time.perf_counter_ns()
    data = fileio.read_float(args.input)
    bits = args.bits
    if args.layer_kind is not None:
        bits = activation_bits(args.layer_kind, _load_policy(args.policy))
    q = quantize(data, bits, args.group, fp16_scales=args.fp16_scales)
    out = _out_path(args.out)
    fileio.write_quant(out, q, scale_dtype="<f2" if args.fp16_scales else "<f8")
    _write_manifest(
        out, "quantize",
        {"bits": bits, "group": args.group, "layer_kind": args.layer_kind,
         "fp16_scales": args.fp16_scales},
        [args.input], [out], time.perf_counter_ns() - t0,
    )
    print(f"quantized {args.input} -> {out} ({bits} bits, group {args.group})")
    return EXIT_OK


def cmd_pack(args) -> int:
    t0 = time.perf_counter_ns()
    q = fileio.read_quant(args.input)
    if args.operand == "weight":
        cfg = weight_pack_config(args.word_bits)
    else:
        cfg = activation_pack_config(q.shape[0], args.word_bits)
    packed = pack(decompose(q), cfg)
    out = _out_path(args.out)
    fileio.write_packed(out, packed)
    if args.check:
        from .bitplane import recompose
        from .packing import unpack
        back = recompose(unpack(fileio.read_packed(out), cfg))
        if not np.array_equal(back, q.values.astype(np.int64)):
            print("pack round-trip mismatch", file=sys.stderr)
            return EXIT_VERIFY
    _write_manifest(
        out, "pack",
        {"operand": args.operand, "word_bits": args.word_bits,
         "chunk": [cfg.chunk_m, cfg.chunk_k]},
        [args.input], [out], time.perf_counter_ns() - t0,
    )
    print(f"packed {args.input} -> {out} (chunk {cfg.chunk_m}x{cfg.chunk_k}, {args.word_bits}-bit words)")
    return EXIT_OK


def _quant_operand(path: str, bits: int, group: int) -> QuantTensor:
    loaded = fileio.read(path)
    if isinstance(loaded, QuantTensor):
        return loaded
    if isinstance(loaded, np.ndarray):
        return quantize(loaded, bits, group)
    raise FormatError(f"{path}: gemm operands must be float (kind 0) or quant (kind 1) tensors")


def cmd_gemm(args) -> int:
    t0 = time.perf_counter_ns()
    wq = _quant_operand(args.weights, args.w_bits, args.group)
    a_bits = args.a_bits
    if args.layer_kind is not None:
        a_bits = activation_bits(args.layer_kind, _load_policy(None))
    xq = _quant_operand(args.acts, a_bits, args.group)
    if wq.shape[1] != xq.shape[1]:
        raise FormatError(
            f"K mismatch between weights {args.weights} (K={wq.shape[1]}) "
            f"and activations {args.acts} (K={xq.shape[1]})"
        )
    if wq.group_size != xq.group_size:
        raise FormatError(
            f"group mismatch between weights {args.weights} (group={wq.group_size}) "
            f"and activations {args.acts} (group={xq.group_size})"
        )
    m, k = xq.shape
    n = wq.shape[0]
    wp = pack(decompose(wq), weight_pack_config())
    xp = pack(decompose(xq), activation_pack_config(m))
    cm, cn, ck = xp.config.chunk_m, wp.config.chunk_m, xp.config.chunk_k
    cfg = GemmConfig(
        m=m, n=n, k=k, weight_bits=wq.bits, activation_bits=xq.bits,
        group_size=wq.group_size,
        bm=max(min(args.bm, -(-m // cm) * cm), cm),
        bn=max(min(args.bn, -(-n // cn) * cn), cn),
        bk=max(min(args.bk, -(-k // ck) * ck), ck),
        pipeline_stages=args.stages, worker_count=args.workers,
    )
    result = execute_tiled(wp, xp, wq.scales, xq.scales, cfg)
    if args.oracle:
        ref = int_matmul_reference(wq, xq, cfg)
        if not np.array_equal(result.data, ref.data):
            print("oracle mismatch: fused output differs from integer reference", file=sys.stderr)
            return EXIT_VERIFY
        print("oracle check: fused output bit-identical to integer reference")
    out = _out_path(args.out)
    fileio.write_float(out, result.data)
    wall = time.perf_counter_ns() - t0
    _write_manifest(
        out, "gemm",
        {"shape": [m, n, k], "p": wq.bits, "q": xq.bits, "group": wq.group_size,
         "stages": args.stages, "workers": args.workers,
         "tile": [cfg.bm, cfg.bn, cfg.bk], "oracle": args.oracle},
        [args.weights, args.acts], [out], wall,
        stats={"bmma_passes": result.bmma_passes, "wall_ns": wall},
    )
    print(
        f"gemm ({m},{k})x({k},{n}) W{wq.bits}A{xq.bits} -> {out} "
        f"[{result.bmma_passes} bmma passes, {wall / 1e6:.1f} ms]"
    )
    return EXIT_OK


def _pattern_from_spec(spec: dict):
    validate_json(spec, "layout_spec")
    bits = spec["bits"]
    rows, cols = spec["dims"]
    if spec["kind"] == "naive":
        return naive_layout_pattern(bits, rows, cols)
    chunk_m, chunk_k = spec.get("chunk", [min(rows, 8), 128])
    cfg = PackConfig(chunk_m=chunk_m, chunk_k=chunk_k, mma_k=chunk_k)
    return chunked_layout_pattern(cfg, bits, rows, cols)


def cmd_layout(args) -> int:
    if args.golden:
        entries = golden_reports()
        doc = {"golden": entries, "ok": all(e["ok"] for e in entries)}
        print(json.dumps(doc, indent=2))
        return EXIT_OK if doc["ok"] else EXIT_VERIFY
    if args.spec is None:
        print("layout: one of --spec or --golden is required", file=sys.stderr)
        return EXIT_USAGE
    raw = sys.stdin.read() if args.spec == "-" else open(args.spec).read()
    try:
        spec = json.loads(raw)
    except json.JSONDecodeError as e:
        raise FormatError(f"layout spec is not valid JSON: {e}") from None
    report = simulate(_pattern_from_spec(spec)).to_dict()
    validate_json(report, "layout_report")
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        out = _out_path(args.out)
        _write_json(out, report)
        _write_manifest(out, "layout", {"spec": spec}, [], [out], 0)
    return EXIT_OK


def cmd_bench(args) -> int:
    t0 = time.perf_counter_ns()
    if args.suite == "llama-shapes":
        doc = bench.run_llama_suite(
            scale=args.scale, repeat=args.repeat, stages=args.stages, workers=args.workers
        )
    else:
        doc = bench.run_sweep(repeat=args.repeat, stages=args.stages, workers=args.workers)
    validate_json(doc, "bench_report")
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        for r in doc["results"]:
            m, n, k = r["shape"]
            print(
                f"{r['name']:>18}  ({m},{k})x({k},{n})  W{r['p']}A{r['q']}  "
                f"tile {tuple(r['tile'])}  {r['wall_ns'] / 1e6:9.2f} ms  "
                f"{r['effective_GOPS']:7.3f} GOPS"
            )
        if "best" in doc:
            b = doc["best"]
            print(f"best tile: {tuple(b['tile'])} at {b['effective_GOPS']:.3f} GOPS")
    if args.out:
        out = _out_path(args.out)
        _write_json(out, doc)
        _write_manifest(out, "bench", {"suite": args.suite, "scale": args.scale,
                                       "repeat": args.repeat}, [], [out],
                        time.perf_counter_ns() - t0)
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    t0 = time.perf_counter_ns()
    with open(args.manifest) as fh:
        try:
            entries = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(f"{args.manifest}: not valid JSON: {e}") from None
    validate_json(entries, "sensitivity_manifest")
    base = os.path.dirname(os.path.abspath(args.manifest))
    dumps = []
    inputs = [args.manifest]
    for entry in entries:
        wpath = os.path.join(base, entry["weight_file"])
        apath = os.path.join(base, entry["act_file"])
        inputs += [wpath, apath]
        dumps.append(
            LayerDump(
                layer_name=entry["layer_name"],
                layer_kind=entry["kind"],
                weight=fileio.read_float(wpath),
                activations=fileio.read_float(apath),
            )
        )
    report = rank_layers(dumps, args.w_bits, args.a_bits, args.group, workers=args.workers)
    doc = report.to_dict()
    for layer in doc["layers"]:
        # +inf SQNR sentinel is serialized as null to stay RFC-compliant.
        for key in ("sqnr_db", "outlier_score"):
            if layer[key] == float("inf"):
                layer[key] = None
    validate_json(doc, "sensitivity_report")
    out = _out_path(args.out)
    _write_json(out, doc)
    outputs = [out]
    if args.policy_out:
        policy = assign_policy(report, high_bits=8, budget_k=args.budget)
        ppath = _out_path(args.policy_out)
        _write_json(ppath, dict(policy.activation_bits_by_layer))
        outputs.append(ppath)
    _write_manifest(
        out, "sensitivity",
        {"w_bits": args.w_bits, "a_bits": args.a_bits, "group": args.group,
         "budget": args.budget},
        inputs, outputs, time.perf_counter_ns() - t0,
    )
    print(f"ranked {len(dumps)} layers; most sensitive: {report.ranking[0]} -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = verify.run_all(full=args.full)
    width = max(len(name) for name, _, _ in checks)
    failed = 0
    for name, ok, detail in checks:
        status = "PASS" if ok else "FAIL"
        print(f"{status}  {name:<{width}}  {detail}")
        failed += 0 if ok else 1
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bitserial",
        description="Bit-serial quantized GEMM engine and analysis toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="group-quantize a float tensor file")
    p.add_argument("input", help="FLXQ float tensor (kind 0)")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--bits", type=int, default=6, choices=range(2, 9))
    p.add_argument("--group", type=int, default=128)
    p.add_argument("--layer-kind", default=None,
                   help="resolve bits from the layer policy instead of --bits")
    p.add_argument("--policy", default=None, help="JSON file mapping layer kind to bits")
    p.add_argument("--fp16-scales", action="store_true",
                   help="store scales at half precision (fidelity mode)")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("pack", help="decompose a quant tensor into packed bit planes")
    p.add_argument("input", help="FLXQ quant tensor (kind 1)")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--operand", choices=("weight", "activation"), default="activation")
    p.add_argument("--word-bits", type=int, choices=(32, 64), default=64)
    p.add_argument("--check", action="store_true", help="verify the pack round-trips")
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("gemm", help="bit-serial GEMM of weight and activation tensors")
    p.add_argument("weights", help="FLXQ float or quant tensor [N, K]")
    p.add_argument("acts", help="FLXQ float or quant tensor [M, K]")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--stages", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--bm", type=int, default=8)
    p.add_argument("--bn", type=int, default=64)
    p.add_argument("--bk", type=int, default=512)
    p.add_argument("--w-bits", type=int, default=6, help="used when weights are float")
    p.add_argument("--a-bits", type=int, default=6, help="used when activations are float")
    p.add_argument("--group", type=int, default=128, help="used when operands are float")
    p.add_argument("--layer-kind", default=None, help="resolve --a-bits from the default policy")
    p.add_argument("--oracle", action="store_true",
                   help="also run the integer reference and require bit-identical output")
    p.set_defaults(func=cmd_gemm)

    p = sub.add_parser("layout", help="simulate a memory layout's transactions and conflicts")
    p.add_argument("--spec", default=None, help="JSON layout spec file, or - for stdin")
    p.add_argument("--golden", action="store_true",
                   help="check the three canonical utilization figures")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_layout)

    p = sub.add_parser("bench", help="benchmark GEMM shapes or sweep tile parameters")
    p.add_argument("--suite", choices=("llama-shapes", "sweep"), required=True)
    p.add_argument("--json", action="store_true")
    p.add_argument("-o", "--out", default=None)
    p.add_argument("--scale", type=int, default=8,
                   help="divide large production dims by this factor")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--stages", type=int, default=2)
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sensitivity", help="rank layers by quantization sensitivity")
    p.add_argument("manifest", help="JSON manifest of layer dumps")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--w-bits", type=int, default=6)
    p.add_argument("--a-bits", type=int, default=6)
    p.add_argument("--group", type=int, default=128)
    p.add_argument("--budget", type=int, default=1, help="layers promoted to 8-bit activations")
    p.add_argument("--policy-out", default=None, help="also write the assigned policy JSON")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("verify", help="run the built-in verification suites")
    p.add_argument("--full", action="store_true",
                   help="add the exhaustive (p, q) in 2..8 precision sweep")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as e:
        print(f"format error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except PolicyMissError as e:
        print(f"policy error: {e.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except BitserialError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
