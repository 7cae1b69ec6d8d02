"""Reference interpreter for loop programs.

``interpret(p, env)`` executes a function over an environment that binds
buffer names to float32 numpy arrays (or quantized matrices), and param
names to ints.  Buffers are updated in place and the same mapping is
returned.  Every array subscript is bounds-checked; an out-of-range access
raises :class:`TrapError` naming the buffer and the offending index.

For speed the program is compiled once into nested Python closures
(:class:`Prepared`); repeated runs over fresh environments reuse the
compiled form.  Scalar arithmetic runs in Python floats (double precision)
and every store rounds to float32, so loop-nest results match a float32
kernel up to summation rounding while staying exactly reproducible.

Intrinsic calls dispatch through a registry mapping the intrinsic name to a
Python handler; the default registry lives in :mod:`quantloop.intrinsics`.
Buffer arguments reach handlers as their bound environment values, so a
``gemv`` over a quantized buffer receives the :class:`QuantizedMatrix`
itself and can pick the sketch kernel.  Loads from a quantized buffer in an
ordinary loop nest see its dense reconstruction, materialized per run.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from ..quantizer import QuantizedMatrix, dequantize
from .nodes import (
    AccumInit,
    AccumUpdate,
    AffineExpr,
    BinOp,
    BufferDecl,
    IntrinsicCall,
    Load,
    Loop,
    LoopProgram,
    NonAffineExpr,
    Operand,
    Stmt,
    Store,
)

__all__ = ["Prepared", "TrapError", "interpret"]


class TrapError(RuntimeError):
    """Out-of-bounds buffer access, reported with buffer name and index."""

    def __init__(self, buffer: str, index: tuple, extents: tuple) -> None:
        super().__init__(
            f"out-of-bounds access to buffer {buffer!r} at index "
            f"{tuple(index)} (extents {tuple(extents)})"
        )
        self.buffer = buffer
        self.index = tuple(index)
        self.extents = tuple(extents)


class Prepared:
    """A program compiled to closures, reusable across environments."""

    def __init__(
        self,
        program: LoopProgram,
        function: str | None = None,
        intrinsics: Mapping[str, Callable] | None = None,
    ) -> None:
        if intrinsics is None:
            from ..intrinsics import default_registry

            intrinsics = default_registry()
        self.program = program
        self.function = program.function(function)
        self._intrinsics = dict(intrinsics)
        self._params = set(program.params)
        self._dense_slots: dict[str, int] = {}
        self._raw_slots: dict[str, int] = {}
        self._body = [self._compile_stmt(s) for s in self.function.body]

    # -- compilation -------------------------------------------------------

    def _dense_slot(self, name: str) -> int:
        return self._dense_slots.setdefault(name, len(self._dense_slots))

    def _raw_slot(self, name: str) -> int:
        return self._raw_slots.setdefault(name, len(self._raw_slots))

    def _compile_affine(self, expr) -> Callable[[dict], int]:
        if isinstance(expr, NonAffineExpr):
            raise ValueError(
                f"non-affine subscript {expr.text!r} cannot be interpreted"
            )
        assert isinstance(expr, AffineExpr)
        off = expr.offset
        terms = expr.terms
        if not terms:
            return lambda frame: off
        if len(terms) == 1:
            iv, coeff = terms[0]
            if isinstance(coeff, int):
                if coeff == 1 and off == 0:
                    return lambda frame: frame[iv]
                return lambda frame: frame[iv] * coeff + off
            return lambda frame: frame[iv] * frame[coeff] + off

        def many(frame: dict) -> int:
            total = off
            for iv, coeff in terms:
                c = coeff if isinstance(coeff, int) else frame[coeff]
                total += frame[iv] * c
            return total

        return many

    def _compile_address(self, decl: BufferDecl, index) -> Callable[[dict], int]:
        name = decl.name
        if len(index) == 2:
            if len(decl.extents) != 2:
                raise ValueError(
                    f"buffer {name!r} declared with {len(decl.extents)} extents "
                    f"but accessed with 2 subscripts"
                )
            f0 = self._compile_affine(index[0])
            f1 = self._compile_affine(index[1])
            e0, e1 = decl.extents

            def addr2(frame: dict) -> int:
                i0 = f0(frame)
                i1 = f1(frame)
                if 0 <= i0 < e0 and 0 <= i1 < e1:
                    return i0 * e1 + i1
                raise TrapError(name, (i0, i1), (e0, e1))

            return addr2

        f0 = self._compile_affine(index[0])
        size = decl.size

        def addr1(frame: dict) -> int:
            i0 = f0(frame)
            if 0 <= i0 < size:
                return i0
            raise TrapError(name, (i0,), (size,))

        return addr1

    def _compile_operand(self, op: Operand) -> Callable[[dict], float]:
        if isinstance(op, str):
            return lambda frame: frame[op]
        value = float(op)
        return lambda frame: value

    def _compile_stmt(self, s: Stmt) -> Callable:
        if isinstance(s, Loop):
            return self._compile_loop(s)
        if isinstance(s, Load):
            decl = self.program.buffer(s.buffer)
            slot = self._dense_slot(s.buffer)
            addr = self._compile_address(decl, s.index)
            dest = s.dest

            def run_load(frame, dense, raw):
                frame[dest] = dense[slot].item(addr(frame))

            return run_load
        if isinstance(s, Store):
            decl = self.program.buffer(s.buffer)
            slot = self._dense_slot(s.buffer)
            addr = self._compile_address(decl, s.index)
            val = self._compile_operand(s.value)

            def run_store(frame, dense, raw):
                dense[slot][addr(frame)] = val(frame)

            return run_store
        if isinstance(s, BinOp):
            a = self._compile_operand(s.a)
            b = self._compile_operand(s.b)
            dest = s.dest
            if s.op == "mul":

                def run_mul(frame, dense, raw):
                    frame[dest] = a(frame) * b(frame)

                return run_mul
            if s.op == "add":

                def run_add(frame, dense, raw):
                    frame[dest] = a(frame) + b(frame)

                return run_add
            c = self._compile_operand(s.c)

            def run_fma(frame, dense, raw):
                frame[dest] = a(frame) * b(frame) + c(frame)

            return run_fma
        if isinstance(s, AccumInit):
            name = s.name
            value = float(s.value)

            def run_init(frame, dense, raw):
                frame[name] = value

            return run_init
        if isinstance(s, AccumUpdate):
            name = s.name
            a = self._compile_operand(s.a)
            b = self._compile_operand(s.b)

            def run_update(frame, dense, raw):
                frame[name] = frame[name] + a(frame) * b(frame)

            return run_update
        if isinstance(s, IntrinsicCall):
            return self._compile_call(s)
        raise TypeError(f"cannot compile statement of type {type(s).__name__}")

    def _compile_loop(self, s: Loop) -> Callable:
        body = [self._compile_stmt(b) for b in s.body]
        iv = s.iv
        lower, upper = s.lower, s.upper
        const_range = None
        if isinstance(lower, AffineExpr) and isinstance(upper, AffineExpr):
            if lower.is_const and upper.is_const:
                const_range = range(lower.offset, upper.offset)
        lo_f = self._compile_affine(lower)
        hi_f = self._compile_affine(upper)

        if len(body) == 3 and const_range is not None:
            rng, (b0, b1, b2) = const_range, body

            def run_loop3(frame, dense, raw):
                for v in rng:
                    frame[iv] = v
                    b0(frame, dense, raw)
                    b1(frame, dense, raw)
                    b2(frame, dense, raw)

            return run_loop3

        if const_range is not None:
            rng = const_range

            def run_loop_const(frame, dense, raw):
                for v in rng:
                    frame[iv] = v
                    for fn in body:
                        fn(frame, dense, raw)

            return run_loop_const

        def run_loop(frame, dense, raw):
            for v in range(lo_f(frame), hi_f(frame)):
                frame[iv] = v
                for fn in body:
                    fn(frame, dense, raw)

        return run_loop

    def _compile_call(self, s: IntrinsicCall) -> Callable:
        try:
            handler = self._intrinsics[s.name]
        except KeyError:
            raise ValueError(f"no handler registered for intrinsic {s.name!r}") from None
        buffer_names = {d.name for d in self.program.buffers}
        plan: list[tuple[str, object]] = []
        for pos, arg in enumerate(s.args):
            if isinstance(arg, str):
                if s.name == "gemv" and pos < 2:
                    plan.append(("lit", arg))  # storage-mode token
                elif arg in buffer_names:
                    plan.append(("raw", self._raw_slot(arg)))
                elif arg in self._params:
                    plan.append(("frame", arg))
                else:
                    plan.append(("lit", arg))
            else:
                plan.append(("lit", arg))
        plan_t = tuple(plan)

        def run_call(frame, dense, raw):
            args = []
            for kind, payload in plan_t:
                if kind == "raw":
                    args.append(raw[payload])
                elif kind == "frame":
                    args.append(frame[payload])
                else:
                    args.append(payload)
            handler(*args)

        return run_call

    # -- execution ----------------------------------------------------------

    def _dense_view(self, name: str, value) -> np.ndarray:
        decl = self.program.buffer(name)
        if isinstance(value, QuantizedMatrix):
            if tuple(decl.extents) != (value.rows, value.cols):
                raise ValueError(
                    f"buffer {name!r} declared {decl.extents} but quantized "
                    f"matrix is {value.rows}x{value.cols}"
                )
            return dequantize(value).reshape(-1)
        arr = np.asarray(value)
        if arr.dtype != np.float32:
            raise ValueError(f"buffer {name!r} must be float32, got {arr.dtype}")
        if tuple(arr.shape) != tuple(decl.extents):
            raise ValueError(
                f"buffer {name!r} declared {tuple(decl.extents)} but bound "
                f"array has shape {tuple(arr.shape)}"
            )
        if not arr.flags.c_contiguous:
            raise ValueError(f"buffer {name!r} must be C-contiguous")
        return arr.reshape(-1)

    def _raw_value(self, name: str, value):
        decl = self.program.buffer(name)
        if isinstance(value, QuantizedMatrix):
            if tuple(decl.extents) != (value.rows, value.cols):
                raise ValueError(
                    f"buffer {name!r} declared {decl.extents} but quantized "
                    f"matrix is {value.rows}x{value.cols}"
                )
            return value
        arr = np.asarray(value)
        if arr.dtype != np.float32:
            raise ValueError(f"buffer {name!r} must be float32, got {arr.dtype}")
        if tuple(arr.shape) != tuple(decl.extents):
            raise ValueError(
                f"buffer {name!r} declared {tuple(decl.extents)} but bound "
                f"array has shape {tuple(arr.shape)}"
            )
        return arr

    def run(self, env: dict) -> dict:
        """Execute over `env`, mutating bound buffers in place."""
        frame: dict = {}
        for param in self._params:
            if param not in env:
                raise ValueError(f"param {param!r} is not bound in the environment")
            frame[param] = int(env[param])

        dense = [None] * len(self._dense_slots)
        for name, slot in self._dense_slots.items():
            if name not in env:
                raise ValueError(f"buffer {name!r} is not bound in the environment")
            dense[slot] = self._dense_view(name, env[name])
        raw = [None] * len(self._raw_slots)
        for name, slot in self._raw_slots.items():
            if name not in env:
                raise ValueError(f"buffer {name!r} is not bound in the environment")
            raw[slot] = self._raw_value(name, env[name])

        for fn in self._body:
            fn(frame, dense, raw)
        return env


def interpret(
    program: LoopProgram,
    env: dict,
    function: str | None = None,
    intrinsics: Mapping[str, Callable] | None = None,
) -> dict:
    """Execute `program` over `env`; see the module docstring for semantics."""
    return Prepared(program, function=function, intrinsics=intrinsics).run(env)
