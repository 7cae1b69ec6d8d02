"""Emit the transformer forward pass as a loop-IR program.

Matrix-vector products are written out as explicit depth-2 loop nests (the
shape the GEMV pass is built to find); everything that has no loop-level
structure worth optimizing — embedding lookup, rmsnorm, rope, attention,
silu — is emitted as an intrinsic call.  Residual adds and the gated-MLP
elementwise product are depth-1 loops, which the pass must leave alone.

Synthesis is deterministic: names are drawn from a monotone counter, so the
same config always produces byte-identical text.
"""

from __future__ import annotations

from ..loopir.nodes import (
    AccumInit,
    AccumUpdate,
    AffineExpr,
    BinOp,
    BufferDecl,
    Function,
    IntrinsicCall,
    Load,
    Loop,
    LoopProgram,
    Store,
)
from .config import ModelConfig, tensor_shapes

__all__ = ["synthesize_forward_program", "gemv_nest_count"]


def gemv_nest_count(config: ModelConfig) -> int:
    """Matmuls per token: 7 per layer (wq wk wv wo w1 w3 w2) + classifier."""
    return 7 * config.n_layers + 1


class _Namer:
    def __init__(self) -> None:
        self.n = 0

    def fresh(self, *prefixes: str) -> tuple:
        self.n += 1
        return tuple(f"{p}{self.n}" for p in prefixes)


def _iv(name: str) -> AffineExpr:
    return AffineExpr.of(name)


def _c(value: int) -> AffineExpr:
    return AffineExpr.const(value)


def _gemv_nest(namer: _Namer, matrix: str, vector: str, output: str, m: int, n: int) -> Loop:
    i, k, a, t, s = namer.fresh("i", "k", "a", "t", "s")
    inner = Loop(
        iv=k,
        lower=_c(0),
        upper=_c(n),
        body=(
            Load(dest=a, buffer=matrix, index=(_iv(i), _iv(k))),
            Load(dest=t, buffer=vector, index=(_iv(k),)),
            AccumUpdate(name=s, a=a, b=t),
        ),
    )
    return Loop(
        iv=i,
        lower=_c(0),
        upper=_c(m),
        body=(
            AccumInit(name=s, value=0.0),
            inner,
            Store(buffer=output, index=(_iv(i),), value=s),
        ),
    )


def _elementwise(namer: _Namer, op: str, left: str, right: str, output: str, n: int) -> Loop:
    d, a, b, r = namer.fresh("d", "a", "b", "r")
    return Loop(
        iv=d,
        lower=_c(0),
        upper=_c(n),
        body=(
            Load(dest=a, buffer=left, index=(_iv(d),)),
            Load(dest=b, buffer=right, index=(_iv(d),)),
            BinOp(dest=r, op=op, a=a, b=b),
            Store(buffer=output, index=(_iv(d),), value=r),
        ),
    )


def synthesize_forward_program(config: ModelConfig) -> LoopProgram:
    """One-token decode step as a loop program.

    Weight buffers use the checkpoint tensor names; params `token` and `pos`
    select the input.  Activations (x, xb, q, hb, ... and the per-layer
    caches) are scratch the engine allocates.
    """
    d, h, kv, v = config.dim, config.hidden_dim, config.kv_dim, config.vocab_size

    buffers = []
    for name, shape in tensor_shapes(config):
        buffers.append(
            BufferDecl(name=name, extents=tuple(shape), quantized=len(shape) == 2)
        )
    for name, extents in [
        ("x", (d,)),
        ("xb", (d,)),
        ("xb2", (d,)),
        ("q", (d,)),
        ("k", (kv,)),
        ("v", (kv,)),
        ("att", (d,)),
        ("hb", (h,)),
        ("hb2", (h,)),
        ("logits", (v,)),
    ]:
        buffers.append(BufferDecl(name=name, extents=extents))
    for i in range(config.n_layers):
        buffers.append(BufferDecl(name=f"k_cache{i}", extents=(config.max_seq_len, kv)))
        buffers.append(BufferDecl(name=f"v_cache{i}", extents=(config.max_seq_len, kv)))

    namer = _Namer()
    body: list = [IntrinsicCall(name="embed", args=("x", "tok_emb", "token"))]
    for i in range(config.n_layers):
        body.append(IntrinsicCall(name="rmsnorm", args=("xb", "x", f"l{i}_att_norm")))
        body.append(_gemv_nest(namer, f"l{i}_wq", "xb", "q", d, d))
        body.append(_gemv_nest(namer, f"l{i}_wk", "xb", "k", kv, d))
        body.append(_gemv_nest(namer, f"l{i}_wv", "xb", "v", kv, d))
        body.append(
            IntrinsicCall(name="rope", args=("q", "k", "pos", config.head_size, kv))
        )
        body.append(
            IntrinsicCall(
                name="attention",
                args=(
                    "att",
                    "q",
                    "k",
                    "v",
                    f"k_cache{i}",
                    f"v_cache{i}",
                    "pos",
                    config.n_heads,
                    config.n_kv_heads,
                    config.head_size,
                ),
            )
        )
        body.append(_gemv_nest(namer, f"l{i}_wo", "att", "xb2", d, d))
        body.append(_elementwise(namer, "add", "x", "xb2", "x", d))
        body.append(IntrinsicCall(name="rmsnorm", args=("xb", "x", f"l{i}_ffn_norm")))
        body.append(_gemv_nest(namer, f"l{i}_w1", "xb", "hb", h, d))
        body.append(_gemv_nest(namer, f"l{i}_w3", "xb", "hb2", h, d))
        body.append(IntrinsicCall(name="silu", args=("hb",)))
        body.append(_elementwise(namer, "mul", "hb", "hb2", "hb", h))
        body.append(_gemv_nest(namer, f"l{i}_w2", "hb", "xb2", d, h))
        body.append(_elementwise(namer, "add", "x", "xb2", "x", d))

    body.append(IntrinsicCall(name="rmsnorm", args=("xb", "x", "final_norm")))
    body.append(_gemv_nest(namer, "classifier", "xb", "logits", v, d))

    return LoopProgram(
        buffers=tuple(buffers),
        params=("token", "pos"),
        functions=(Function(name="step", body=tuple(body)),),
    )
