"""Independently written reference implementations used to pin expected
values.  Everything here favors obviousness over speed: bit twiddling is
done one bit at a time on Python ints, GEMV one scalar at a time with
explicit float32 casts, clustering by brute force where feasible — so a bug
in the package cannot hide in a shared helper.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


# -- bit packing -------------------------------------------------------------


def pack_bits_reference(codes, bit_width: int) -> bytes:
    """Pack one bit at a time, LSB-first within and across codes."""
    n_payload = (len(codes) * bit_width + 7) // 8
    out = bytearray(n_payload + 1)  # + guard byte
    bitpos = 0
    for code in codes:
        code = int(code)
        assert 0 <= code < (1 << bit_width)
        for b in range(bit_width):
            if (code >> b) & 1:
                out[bitpos >> 3] |= 1 << (bitpos & 7)
            bitpos += 1
    return bytes(out)


def unpack_bits_reference(data: bytes, count: int, bit_width: int):
    out = []
    bitpos = 0
    for _ in range(count):
        v = 0
        for b in range(bit_width):
            v |= ((data[bitpos >> 3] >> (bitpos & 7)) & 1) << b
            bitpos += 1
        out.append(v)
    return out


# -- GEMV --------------------------------------------------------------------


def gemv_reference(a_flat, x, y, layout, trans, m, n, alpha, beta, lda,
                   incx=1, incy=1):
    """Scalar float32 GEMV, one multiply and one add at a time.

    `layout` is "RM"/"CM", `trans` is "NT"/"T"; returns a new y array.
    """
    f = np.float32
    a_flat = np.asarray(a_flat, dtype=np.float32).reshape(-1)
    x = np.asarray(x, dtype=np.float32)
    y = np.array(y, dtype=np.float32, copy=True)

    def elem(i, k):  # logical A[i, k], i < m, k < n
        if layout == "RM":
            return a_flat[i * lda + k]
        return a_flat[k * lda + i]

    out_len = m if trans == "NT" else n
    in_len = n if trans == "NT" else m
    for i in range(out_len):
        s = f(0.0)
        for k in range(in_len):
            aik = elem(i, k) if trans == "NT" else elem(k, i)
            s = f(s + f(aik * x[k * incx]))
        y[i * incy] = f(f(f(alpha) * s) + f(f(beta) * y[i * incy]))
    return y


# -- clustering --------------------------------------------------------------


def best_assignment_bruteforce(weights, n_clusters: int):
    """Exhaustive search over all assignments; returns (L1 cost, assignment).

    Centroids are the means of each cluster (the L1-optimal choice for this
    fixed-assignment subproblem is the median, but the package's refinement
    uses means, so the oracle scores mean-centroids).  Only usable for tiny
    inputs.
    """
    weights = [float(w) for w in weights]
    best = (math.inf, None)
    for assign in itertools.product(range(n_clusters), repeat=len(weights)):
        groups = {}
        for w, a in zip(weights, assign):
            groups.setdefault(a, []).append(w)
        cents = {a: sum(g) / len(g) for a, g in groups.items()}
        cost = sum(abs(w - cents[a]) for w, a in zip(weights, assign))
        if cost < best[0] - 1e-15:
            best = (cost, assign)
    return best


def epsilon_reference(weights, centroids, assignments) -> float:
    return max(
        abs(float(w) - float(centroids[a])) for w, a in zip(weights, assignments)
    )
