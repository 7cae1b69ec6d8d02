#!/usr/bin/env python3
"""Exercise the whole quantize-compile-run pipeline on the toy model.

Builds a float checkpoint, quantizes it, dumps the synthesized forward
program before and after the GEMV pass, decodes with every engine mode,
and finishes with a dual-path bound verification.
"""

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from quantloop.gemvpass import run_gemv_pass
from quantloop.loopir import print_program
from quantloop.quantizer import QuantConfig
from quantloop.runtime import (
    TOY_CONFIG,
    Engine,
    make_toy_checkpoint,
    quantize_checkpoint,
    synthesize_forward_program,
    verify_bounds,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="pipeline_out")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--bits", type=int, default=3)
    parser.add_argument("--steps", type=int, default=32)
    parser.add_argument("--prompt", default="1 2 3")
    args = parser.parse_args()

    os.makedirs(args.workdir, exist_ok=True)
    ditf = os.path.join(args.workdir, "toy.ditf")
    ditq = os.path.join(args.workdir, "toy.ditq")
    prompt = [int(t) for t in args.prompt.split()]

    print(f"[1/5] writing float checkpoint {ditf}")
    make_toy_checkpoint(ditf, seed=args.seed)

    print(f"[2/5] quantizing to {ditq} at {args.bits} bits")
    report = quantize_checkpoint(ditf, ditq, QuantConfig(bit_width=args.bits))
    print(f"      size ratio {report['size_ratio']:.4f}, "
          f"max epsilon {report['max_epsilon']:.5f}")

    print("[3/5] dumping forward program before/after the GEMV pass")
    program = synthesize_forward_program(TOY_CONFIG)
    result = run_gemv_pass(program)
    before = os.path.join(args.workdir, "forward.dir")
    after = os.path.join(args.workdir, "forward_opt.dir")
    with open(before, "w") as f:
        f.write(print_program(program))
    with open(after, "w") as f:
        f.write(print_program(result.program))
    rep = result.report()
    print(f"      {rep['matched']} nests matched, {rep['skipped']} skipped")

    print(f"[4/5] decoding {args.steps} tokens in each mode")
    rows = []
    for path, mode in ((ditf, "naive"), (ditf, "optimized"), (ditq, "optimized")):
        engine = Engine(path, mode=mode, bit_width=args.bits)
        out = engine.generate(prompt, steps=args.steps)
        rows.append((os.path.basename(path), mode, out))
        print(f"      {os.path.basename(path):>9} {mode:>9}: "
              f"{out.tokens_per_second:8.1f} tok/s  tokens {out.generated_tokens[:8]}...")
    assert rows[0][2].generated_tokens == rows[1][2].generated_tokens, (
        "naive and optimized decodes diverged"
    )

    print("[5/5] dual-path bound verification")
    verdict = verify_bounds(ditf, bit_width=args.bits, prompt_tokens=prompt, steps=8)
    print(json.dumps(verdict, indent=2))
    return 0 if verdict["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
