"""Command-line front end.

Subcommands: quantize, optimize, run, verify, bench, inspect.  All
machine-readable output is JSON on stdout; diagnostics go to stderr.

Exit codes: 0 success; 1 a check failed (bound violation, regression);
2 usage, I/O, or format errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bench import build_report, model_gflops_per_token
from .gemvpass import run_gemv_pass
from .loopir.textio import ParseError, parse_program, print_program
from .loopir.validate import validate
from .quantizer import QuantConfig
from .runtime.checkpoint import (
    CheckpointError,
    FLOAT_MAGIC,
    QUANT_MAGIC,
    quantize_checkpoint,
    read_float_checkpoint,
    read_quantized_checkpoint,
)
from .runtime.config import param_count, tensor_shapes
from .runtime.engine import Engine, sniff_magic, verify_bounds

_USAGE_ERROR = 2
_CHECK_FAILED = 1


def _emit(obj: dict, compact: bool = False) -> None:
    if compact:
        print(json.dumps(obj))
    else:
        print(json.dumps(obj, indent=2))


def _fail(message: str, code: int = _USAGE_ERROR) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _parse_prompt(text: str) -> list:
    if not text.strip():
        return []
    return [int(t) for t in text.replace(",", " ").split()]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_quantize(args) -> int:
    try:
        report = quantize_checkpoint(
            args.input,
            args.output,
            QuantConfig(bit_width=args.bits, allow_parallel=not args.no_parallel),
        )
    except (OSError, CheckpointError, ValueError) as exc:
        return _fail(str(exc))
    _emit(report)
    return 0


def cmd_optimize(args) -> int:
    try:
        with open(args.input) as f:
            text = f.read()
        program = parse_program(text)
    except OSError as exc:
        return _fail(str(exc))
    except ParseError as exc:
        return _fail(f"{args.input}: {exc}")

    diagnostics = validate(program)
    if diagnostics:
        for d in diagnostics:
            print(f"error: {args.input}: {d}", file=sys.stderr)
        return _USAGE_ERROR

    result = run_gemv_pass(program)
    try:
        with open(args.output, "w") as f:
            f.write(print_program(result.program))
    except OSError as exc:
        return _fail(str(exc))

    report = result.report()
    report["input"] = args.input
    report["output"] = args.output
    if args.report:
        with open(args.report, "w") as f:
            json.dump(report, f, indent=2)
    _emit(report)
    return 0


def _make_engine(args) -> Engine:
    return Engine(
        args.checkpoint,
        mode=args.mode,
        bit_width=args.bits,
        bound_threshold=args.bound_threshold,
        seed=args.seed,
    )


def cmd_run(args) -> int:
    try:
        engine = _make_engine(args)
    except (OSError, CheckpointError, ValueError) as exc:
        return _fail(str(exc))

    def on_token(pos: int, token: int, ms: float) -> None:
        if args.telemetry:
            _emit(
                {"event": "token", "pos": pos, "token": token, "ms": round(ms, 3)},
                compact=True,
            )

    try:
        result = engine.generate(
            _parse_prompt(args.prompt),
            steps=args.steps,
            temperature=args.temperature,
            on_token=on_token,
        )
    except ValueError as exc:
        return _fail(str(exc))

    summary = {
        "event": "summary",
        "mode": args.mode,
        "checkpoint": args.checkpoint,
        "prompt_tokens": result.prompt_tokens,
        "generated_tokens": result.generated_tokens,
        "tokens_per_second": round(result.tokens_per_second, 3),
        "stats": engine.stats.to_json(),
    }
    _emit(summary, compact=args.telemetry)
    return 0


def cmd_verify(args) -> int:
    if sniff_magic(args.checkpoint) != FLOAT_MAGIC:
        return _fail(
            "verify needs a float checkpoint: it quantizes in memory and "
            "compares both weight paths on identical inputs"
        )
    try:
        report = verify_bounds(
            args.checkpoint,
            bit_width=args.bits,
            prompt_tokens=_parse_prompt(args.prompt),
            steps=args.steps,
            seed=args.seed,
        )
    except (OSError, CheckpointError, ValueError) as exc:
        return _fail(str(exc))
    _emit(report)
    return 0 if report["ok"] else _CHECK_FAILED


def cmd_bench(args) -> int:
    try:
        engine = _make_engine(args)
    except (OSError, CheckpointError, ValueError) as exc:
        return _fail(str(exc))

    if args.gflops_per_token is not None:
        gflops = args.gflops_per_token
    else:
        gflops = model_gflops_per_token(engine.config)
    if args.assume_tokens_per_second is not None:
        tok_s = args.assume_tokens_per_second
    else:
        try:
            result = engine.generate(
                _parse_prompt(args.prompt), steps=args.steps,
                temperature=args.temperature,
            )
        except ValueError as exc:
            return _fail(str(exc))
        tok_s = result.tokens_per_second

    try:
        report = build_report(tok_s, gflops, watts=args.watts)
    except ValueError as exc:
        return _fail(str(exc))
    out = report.to_json()
    out.update({"mode": args.mode, "checkpoint": args.checkpoint, "steps": args.steps})
    _emit(out)
    return 0


def _inspect_checkpoint(path: str, magic: bytes) -> dict:
    import os

    if magic == FLOAT_MAGIC:
        config, tensors = read_float_checkpoint(path)
        kind = "float"
        tensor_rows = [
            {"name": name, "shape": list(shape), "dtype": "float32"}
            for name, shape in tensor_shapes(config)
        ]
    else:
        config, tensors = read_quantized_checkpoint(path)
        kind = "quantized"
        tensor_rows = []
        for name, shape in tensor_shapes(config):
            t = tensors[name]
            if len(shape) == 1:
                tensor_rows.append(
                    {"name": name, "shape": list(shape), "dtype": "float32"}
                )
            else:
                tensor_rows.append(
                    {
                        "name": name,
                        "shape": list(shape),
                        "bit_width": t.codebook.bit_width,
                        "epsilon": t.epsilon,
                    }
                )
    return {
        "path": path,
        "kind": kind,
        "bytes": os.path.getsize(path),
        "config": {
            "dim": config.dim,
            "hidden_dim": config.hidden_dim,
            "n_layers": config.n_layers,
            "n_heads": config.n_heads,
            "n_kv_heads": config.n_kv_heads,
            "vocab_size": config.vocab_size,
            "max_seq_len": config.max_seq_len,
        },
        "parameters": param_count(config),
        "tensors": tensor_rows,
    }


def _inspect_program(path: str) -> dict:
    with open(path) as f:
        program = parse_program(f.read())
    diagnostics = validate(program)
    census = run_gemv_pass(program).report()
    return {
        "path": path,
        "kind": "program",
        "buffers": len(program.buffers),
        "params": list(program.params),
        "functions": [fn.name for fn in program.functions],
        "diagnostics": diagnostics,
        "gemv_census": census,
    }


def cmd_inspect(args) -> int:
    try:
        magic = sniff_magic(args.path)
    except OSError as exc:
        return _fail(str(exc))
    try:
        if magic in (FLOAT_MAGIC, QUANT_MAGIC):
            _emit(_inspect_checkpoint(args.path, magic))
        else:
            _emit(_inspect_program(args.path))
    except (OSError, CheckpointError) as exc:
        return _fail(str(exc))
    except ParseError as exc:
        return _fail(f"{args.path}: not a checkpoint and not a loop program: {exc}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_engine_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("checkpoint", help="path to a float or quantized checkpoint")
    p.add_argument(
        "--mode",
        choices=("naive", "optimized", "quantized"),
        default="optimized",
        help="naive: interpret the loop nests; optimized: run the GEMV pass; "
        "quantized: also quantize float weights in memory",
    )
    p.add_argument("--bits", type=int, default=3, help="codebook index width")
    p.add_argument("--steps", type=int, default=16, help="tokens to generate")
    p.add_argument("--prompt", default="1", help="space-separated token ids")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--bound-threshold",
        type=float,
        default=None,
        help="per-call output-error budget; quantized calls whose bound "
        "exceeds it fall back to the retained float weights",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quantloop",
        description="Codebook weight quantization with certified output-error "
        "bounds, plus a loop-IR pass that turns GEMV nests into kernel calls.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="quantize a float checkpoint")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--bits", type=int, default=3)
    p.add_argument("--no-parallel", action="store_true")
    p.set_defaults(fn=cmd_quantize)

    p = sub.add_parser("optimize", help="run the GEMV pass over a loop program")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--report", help="also write the per-nest report to this path")
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("run", help="generate tokens from a checkpoint")
    _add_engine_args(p)
    p.add_argument(
        "--telemetry",
        action="store_true",
        help="emit one JSON line per generated token",
    )
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser(
        "verify",
        help="dual-path check: quantized vs float gemv on identical inputs",
    )
    p.add_argument("checkpoint")
    p.add_argument("--bits", type=int, default=3)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--prompt", default="1 2 3")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("bench", help="throughput and efficiency report")
    _add_engine_args(p)
    p.add_argument("--watts", type=float, default=None)
    p.add_argument(
        "--assume-tokens-per-second",
        type=float,
        default=None,
        help="skip timing and derive the report from this rate",
    )
    p.add_argument(
        "--gflops-per-token",
        type=float,
        default=None,
        help="override the per-token GFLOP count derived from the model config",
    )
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("inspect", help="describe a checkpoint or loop program")
    p.add_argument("path")
    p.set_defaults(fn=cmd_inspect)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
