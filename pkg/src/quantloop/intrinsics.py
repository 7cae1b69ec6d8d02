"""Fixed math for the opaque intrinsics used by synthesized programs.

Every handler mutates its output buffer(s) in place and works in float32.
The registry maps intrinsic names to handlers; the interpreter resolves
buffer arguments to their environment values before calling, so handlers
see numpy arrays (or a :class:`QuantizedMatrix` for quantized operands).

Signatures (buffers first, then scalars):

* ``gemv(layout, trans, m, n, alpha, A, lda, x, incx, beta, y, incy)`` —
  BLAS-shaped; dispatches to the sketch kernel when A is quantized, to the
  optimized dense kernel otherwise.
* ``rmsnorm(dst, src, weight)`` — ``dst = src * weight / rms(src)`` with
  ``rms(src) = sqrt(mean(src^2) + 1e-5)``.
* ``softmax(v)`` — in place, max-subtracted.
* ``silu(v)`` — in place ``v * sigmoid(v)``.
* ``rope(q, k, pos, head_size, kv_dim)`` — rotary position embedding:
  consecutive pairs ``(2i, 2i+1)`` rotate by ``pos * 10000^-(d/head_size)``
  where ``d = 2i mod head_size``; ``k`` only holds ``kv_dim`` entries and is
  rotated over those.
* ``attention(out, q, k_cur, v_cur, k_cache, v_cache, pos, n_heads,
  n_kv_heads, head_size)`` — appends the current key/value rows to the
  caches at ``pos`` and computes causal scaled dot-product attention over
  positions ``0..pos``; with fewer KV heads than query heads, each group of
  ``n_heads // n_kv_heads`` query heads shares one KV head.
* ``embed(dst, table, token)`` — copies row ``token`` of the embedding
  table (decoding just that row when the table is quantized).
* ``argmax(dst, src)`` — writes the index of the first maximum to
  ``dst[0]`` as a float.
"""

from __future__ import annotations

import math

import numpy as np

from .bitcodec import unpack_slice
from .kernels import GemvParams, Layout, Trans, gemv_opt, gemv_sketch
from .quantizer import QuantizedMatrix

__all__ = [
    "RMSNORM_EPS",
    "ROPE_THETA",
    "default_registry",
    "gemv_handler",
]

RMSNORM_EPS = 1e-5
ROPE_THETA = 10000.0


def gemv_handler(layout, trans, m, n, alpha, a, lda, x, incx, beta, y, incy) -> None:
    p = GemvParams(
        layout=Layout(layout),
        trans=Trans(trans),
        m=int(m),
        n=int(n),
        alpha=float(alpha),
        beta=float(beta),
        lda=int(lda),
        incx=int(incx),
        incy=int(incy),
    )
    if isinstance(a, QuantizedMatrix):
        gemv_sketch(a, x, y, p)
    else:
        gemv_opt(a.reshape(-1), x, y, p)


def rmsnorm_handler(dst, src, weight) -> None:
    ss = float(np.dot(src, src)) / src.shape[0] + RMSNORM_EPS
    inv = np.float32(1.0 / math.sqrt(ss))
    dst[...] = (src * inv) * weight


def softmax_inplace(v: np.ndarray) -> None:
    m = v.max()
    np.subtract(v, m, out=v)
    np.exp(v, out=v)
    v /= v.sum()


def silu_handler(v) -> None:
    v *= 1.0 / (1.0 + np.exp(-v))


def rope_handler(q, k, pos, head_size, kv_dim) -> None:
    head_size = int(head_size)
    kv_dim = int(kv_dim)
    idx = np.arange(0, q.shape[0], 2)
    angles = int(pos) * (ROPE_THETA ** (-((idx % head_size) / head_size)))
    cos = np.cos(angles).astype(np.float32)
    sin = np.sin(angles).astype(np.float32)

    q0 = q[idx].copy()
    q1 = q[idx + 1].copy()
    q[idx] = q0 * cos - q1 * sin
    q[idx + 1] = q0 * sin + q1 * cos

    kidx = idx[idx < kv_dim]
    kcos = cos[: kidx.size]
    ksin = sin[: kidx.size]
    k0 = k[kidx].copy()
    k1 = k[kidx + 1].copy()
    k[kidx] = k0 * kcos - k1 * ksin
    k[kidx + 1] = k0 * ksin + k1 * kcos


def attention_handler(
    out, q, k_cur, v_cur, k_cache, v_cache, pos, n_heads, n_kv_heads, head_size
) -> None:
    pos = int(pos)
    n_heads = int(n_heads)
    n_kv_heads = int(n_kv_heads)
    head_size = int(head_size)
    k_cache[pos, :] = k_cur
    v_cache[pos, :] = v_cur
    keys = k_cache[: pos + 1]
    vals = v_cache[: pos + 1]
    kv_mul = n_heads // n_kv_heads
    scale = np.float32(1.0 / math.sqrt(head_size))
    for h in range(n_heads):
        lo = h * head_size
        hi = lo + head_size
        kv = (h // kv_mul) * head_size
        scores = (keys[:, kv : kv + head_size] @ q[lo:hi]) * scale
        softmax_inplace(scores)
        out[lo:hi] = scores @ vals[:, kv : kv + head_size]


def embed_handler(dst, table, token) -> None:
    token = int(token)
    if isinstance(table, QuantizedMatrix):
        if not 0 <= token < table.rows:
            raise IndexError(f"token {token} out of vocabulary range {table.rows}")
        codes = unpack_slice(table.indices, token * table.cols, table.cols)
        dst[...] = table.codebook.centroids[codes]
    else:
        if not 0 <= token < table.shape[0]:
            raise IndexError(f"token {token} out of vocabulary range {table.shape[0]}")
        dst[...] = table[token]


def argmax_handler(dst, src) -> None:
    dst[0] = float(np.argmax(src))


def default_registry() -> dict:
    """A fresh name->handler mapping (callers may override entries)."""
    return {
        "gemv": gemv_handler,
        "rmsnorm": rmsnorm_handler,
        "softmax": lambda v: softmax_inplace(v),
        "silu": silu_handler,
        "rope": rope_handler,
        "attention": attention_handler,
        "embed": embed_handler,
        "argmax": argmax_handler,
    }
