"""Structural matchers for the GEMV loop idiom.

The canonical idiom is a depth-2 counted nest::

    for i in 0..M {            # output loop
      acc s = 0.0
      for k in 0..N {          # reduction loop
        load a = A[...]        # 2-D access over (i, k)
        load t = x[k]          # 1-D access over k
        update s += a * t
      }
      store y[i] = s           # or alpha*s, or beta*y[i] + alpha*s
    }

Matching is built from small composable predicates over operands and their
defining statements; alternatives are expressed with :func:`one_of` rather
than hand-rolled conditional ladders, so each recognized shape (the four
2-D access forms, the three stored-result forms, scaled-or-bare factors)
reads as a disjunction of cases.  Matchers track which statements each
match consumed; a nest only becomes a candidate when *every* statement in
it is accounted for, which is what makes the pass conservative about extra
side effects.

Failures carry one of five reason codes (:class:`SkipReason`): nests
shallower than two loops, subscripts outside the recognized affine shapes,
leftover statements / interfering accesses (including operand aliasing),
2-D accesses whose storage order cannot be inferred, and strided or offset
vector accesses, which are recognized but deliberately not rewritten.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

from ..loopir.nodes import (
    AccumInit,
    AccumUpdate,
    AffineExpr,
    BinOp,
    BufferDecl,
    Load,
    Loop,
    NonAffineExpr,
    Operand,
    Stmt,
    Store,
)

__all__ = [
    "AccessPattern",
    "GemvCandidate",
    "MatchFailure",
    "SkipReason",
    "match_array_access",
    "match_gemv_reduction",
    "match_nest",
    "match_store_of_vector",
    "one_of",
]


class SkipReason(str, enum.Enum):
    NOT_DEEP_ENOUGH = "not-deep-enough"
    NON_AFFINE = "non-affine"
    EXTRA_SIDE_EFFECT = "extra-side-effect"
    LAYOUT_UNKNOWN = "layout-unknown"
    STRIDED = "strided"


class MatchFailure(Exception):
    """A nest does not fit the idiom; says why."""

    def __init__(self, reason: SkipReason, detail: str) -> None:
        super().__init__(f"{reason.value}: {detail}")
        self.reason = reason
        self.detail = detail


# ---------------------------------------------------------------------------
# 2-D access forms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AccessPattern:
    """A recognized 2-D access: row iv, column iv, storage order, leading dim."""

    layout: str  # "RM" | "CM"
    lda: Union[int, str]


def one_of(*matchers: Callable) -> Callable:
    """First matcher that returns a non-None result wins."""

    def try_each(*args):
        for m in matchers:
            result = m(*args)
            if result is not None:
                return result
        return None

    return try_each


def _unit_term(expr) -> Optional[str]:
    """The iv of a bare single-iv subscript (coefficient 1, offset 0)."""
    if not isinstance(expr, AffineExpr):
        return None
    if len(expr.terms) == 1 and expr.offset == 0:
        iv, coeff = expr.terms[0]
        if coeff == 1:
            return iv
    return None


def _two_index(index, iv_row, iv_col, extents) -> Optional[AccessPattern]:
    if len(index) != 2 or len(extents) != 2:
        return None
    if _unit_term(index[0]) == iv_row and _unit_term(index[1]) == iv_col:
        return AccessPattern(layout="RM", lda=extents[1])
    return None


def _two_index_swapped(index, iv_row, iv_col, extents) -> Optional[AccessPattern]:
    if len(index) != 2 or len(extents) != 2:
        return None
    if _unit_term(index[0]) == iv_col and _unit_term(index[1]) == iv_row:
        return AccessPattern(layout="CM", lda=extents[1])
    return None


def _flat_affine(index, iv_row, iv_col, extents) -> Optional[AccessPattern]:
    if len(index) != 1:
        return None
    e = index[0]
    if not isinstance(e, AffineExpr) or e.offset != 0:
        return None
    coeffs = dict(e.terms)
    if set(coeffs) != {iv_row, iv_col}:
        return None
    if coeffs[iv_col] == 1:
        return AccessPattern(layout="RM", lda=coeffs[iv_row])
    return None


def _flat_affine_swapped(index, iv_row, iv_col, extents) -> Optional[AccessPattern]:
    if len(index) != 1:
        return None
    e = index[0]
    if not isinstance(e, AffineExpr) or e.offset != 0:
        return None
    coeffs = dict(e.terms)
    if set(coeffs) != {iv_row, iv_col}:
        return None
    if coeffs[iv_row] == 1:
        return AccessPattern(layout="CM", lda=coeffs[iv_col])
    return None


_ACCESS_FORMS = one_of(_two_index, _two_index_swapped, _flat_affine, _flat_affine_swapped)


def match_array_access(index, iv_row: str, iv_col: str, extents: tuple) -> AccessPattern:
    """Recognize a 2-D access over ``(iv_row, iv_col)`` and infer its layout.

    Accepted forms: two subscripts ``[iv_row, iv_col]`` (row-major, leading
    dimension taken from the declared extents) or ``[iv_col, iv_row]``
    (column-major), and single flat subscripts ``iv_row*ld + iv_col``
    (row-major) or ``iv_col*ld + iv_row`` (column-major), where ``ld`` is an
    integer or a param name.

    Raises:
        MatchFailure: ``non-affine`` when the subscript leaves the affine
            fragment or doesn't range over exactly these two ivs;
            ``layout-unknown`` when it is affine over both ivs but neither
            storage order can be inferred (e.g. both coefficients non-unit,
            or a nonzero base offset).
    """
    for e in index:
        if isinstance(e, NonAffineExpr):
            raise MatchFailure(
                SkipReason.NON_AFFINE, f"non-affine subscript {e.text!r}"
            )
    found = _ACCESS_FORMS(index, iv_row, iv_col, extents)
    if found is not None:
        return found

    ivs = set()
    for e in index:
        ivs.update(e.ivs())
    if ivs != {iv_row, iv_col}:
        raise MatchFailure(
            SkipReason.NON_AFFINE,
            f"matrix subscript ranges over {sorted(ivs)} instead of "
            f"({iv_row}, {iv_col})",
        )
    raise MatchFailure(
        SkipReason.LAYOUT_UNKNOWN,
        "affine over both loop variables but neither row-major "
        "(i*ld + k) nor column-major (k*ld + i) form applies",
    )


# ---------------------------------------------------------------------------
# Operand/value matchers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Ctx:
    """Definition map for the scalars of one nest."""

    defs: dict


@dataclass(frozen=True)
class _State:
    bindings: tuple = ()
    consumed: frozenset = frozenset()

    def bind(self, **kv) -> "_State":
        return replace(self, bindings=self.bindings + tuple(kv.items()))

    def consume(self, *stmts) -> "_State":
        return replace(self, consumed=self.consumed | {id(s) for s in stmts})

    def get(self, key, default=None):
        # Most recent binding wins; sequential matches rebind the same keys.
        for k, v in reversed(self.bindings):
            if k == key:
                return v
        return default


def _m_name(expected: str) -> Callable:
    def m(op: Operand, ctx: _Ctx, st: _State) -> Optional[_State]:
        return st if op == expected else None

    return m


def _m_const(key: str) -> Callable:
    def m(op: Operand, ctx: _Ctx, st: _State) -> Optional[_State]:
        return st.bind(**{key: float(op)}) if isinstance(op, float) else None

    return m


def _m_mul(left: Callable, right: Callable) -> Callable:
    """Commutative product of two matched operands."""

    def m(op: Operand, ctx: _Ctx, st: _State) -> Optional[_State]:
        if not isinstance(op, str):
            return None
        d = ctx.defs.get(op)
        if not isinstance(d, BinOp) or d.op != "mul":
            return None
        for a, b in ((d.a, d.b), (d.b, d.a)):
            st_a = left(a, ctx, st.consume(d))
            if st_a is None:
                continue
            st_b = right(b, ctx, st_a)
            if st_b is not None:
                return st_b
        return None

    return m


def _with_binding(inner: Callable, key: str, value) -> Callable:
    def m(op: Operand, ctx: _Ctx, st: _State) -> Optional[_State]:
        r = inner(op, ctx, st)
        return None if r is None else r.bind(**{key: value})

    return m


def _m_scaled(inner: Callable, key: str) -> Callable:
    """``const * inner`` (either order) or bare ``inner`` with factor 1."""
    return one_of(_m_mul(_m_const(key), inner), _with_binding(inner, key, 1.0))


def _m_load(pred: Callable, key: str) -> Callable:
    """Operand defined by a Load accepted by `pred(load, st)`."""

    def m(op: Operand, ctx: _Ctx, st: _State) -> Optional[_State]:
        if not isinstance(op, str):
            return None
        d = ctx.defs.get(op)
        if not isinstance(d, Load):
            return None
        st2 = pred(d, st.consume(d))
        return None if st2 is None else st2.bind(**{key: d})

    return m


# ---------------------------------------------------------------------------
# Reduction and store matchers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Reduction:
    acc: str
    matrix_load: Load
    vector_load: Load
    access: AccessPattern
    alpha: float
    consumed: frozenset


def _vector_stride_check(load: Load, iv_col: str) -> None:
    """Require a unit-stride, offset-free 1-D access over the reduction iv."""
    if len(load.index) != 1:
        raise MatchFailure(
            SkipReason.NON_AFFINE, f"vector operand {load.buffer!r} uses 2-D subscripts"
        )
    e = load.index[0]
    if isinstance(e, NonAffineExpr):
        raise MatchFailure(SkipReason.NON_AFFINE, f"non-affine subscript {e.text!r}")
    coeffs = dict(e.terms)
    if set(coeffs) != {iv_col}:
        raise MatchFailure(
            SkipReason.NON_AFFINE,
            f"vector subscript ranges over {sorted(coeffs)} instead of {iv_col!r}",
        )
    if coeffs[iv_col] != 1 or e.offset != 0:
        raise MatchFailure(
            SkipReason.STRIDED,
            f"vector access {load.buffer}[{iv_col} * {coeffs[iv_col]} + {e.offset}] "
            f"is strided or offset; only unit stride is rewritten",
        )


def match_gemv_reduction(
    outer: Loop, inner: Loop, ctx: _Ctx, extents_of: Callable[[str], tuple]
) -> _Reduction:
    """Match the inner reduction loop of the idiom.

    Accepts an accumulator initialized to 0.0 in the outer body and updated
    once per inner iteration by an (optionally constant-scaled) product of a
    2-D load over (outer iv, inner iv) and a unit-stride 1-D load over the
    inner iv.

    Raises:
        MatchFailure: with the reason code for the first violated condition.
    """
    updates = [s for s in inner.body if isinstance(s, AccumUpdate)]
    if not updates:
        raise MatchFailure(
            SkipReason.NON_AFFINE, "inner loop has no multiply-add reduction"
        )
    if len(updates) > 1:
        raise MatchFailure(
            SkipReason.EXTRA_SIDE_EFFECT, "inner loop updates more than one accumulator"
        )
    update = updates[0]
    acc = update.name

    inits = [s for s in outer.body if isinstance(s, AccumInit) and s.name == acc]
    if len(inits) != 1 or inits[0].value != 0.0:
        raise MatchFailure(
            SkipReason.NON_AFFINE,
            f"accumulator {acc!r} is not initialized to 0.0 in the enclosing loop",
        )

    is_load = lambda d: isinstance(d, Load)
    factor = _m_scaled(_m_load(lambda load, st: st, key="load"), key="scale")
    state = _State().consume(update, inits[0])

    loads: list[Load] = []
    alpha = 1.0
    for op in (update.a, update.b):
        st = factor(op, ctx, state)
        if st is None:
            raise MatchFailure(
                SkipReason.NON_AFFINE,
                f"reduction factor {op!r} is not a (scaled) load",
            )
        loads.append(st.get("load"))
        alpha *= st.get("scale")
        state = st

    def load_ivs(load: Load) -> set:
        ivs = set()
        for e in load.index:
            if isinstance(e, NonAffineExpr):
                raise MatchFailure(
                    SkipReason.NON_AFFINE, f"non-affine subscript {e.text!r}"
                )
            ivs.update(e.ivs())
        return ivs

    classified = sorted(loads, key=lambda l: len(load_ivs(l)))
    vec_load, mat_load = classified[0], classified[1]
    if load_ivs(mat_load) != {outer.iv, inner.iv} or load_ivs(vec_load) != {inner.iv}:
        raise MatchFailure(
            SkipReason.NON_AFFINE,
            "reduction factors are not a 2-D load over both loop variables "
            "times a 1-D load over the reduction variable",
        )
    _vector_stride_check(vec_load, inner.iv)
    access = match_array_access(
        mat_load.index, outer.iv, inner.iv, extents_of(mat_load.buffer)
    )
    return _Reduction(
        acc=acc,
        matrix_load=mat_load,
        vector_load=vec_load,
        access=access,
        alpha=alpha,
        consumed=state.consumed,
    )


@dataclass(frozen=True)
class _StoreForm:
    store: Store
    output: str
    alpha: float
    beta: float
    consumed: frozenset


def match_store_of_vector(outer: Loop, reduction: _Reduction, ctx: _Ctx) -> _StoreForm:
    """Match the stored result: ``y[i] = [alpha *] s`` or ``beta*y[i] + alpha*s``.

    Missing scale factors default to alpha = 1 and beta = 0.
    """
    stores = [s for s in outer.body if isinstance(s, Store)]
    if not stores:
        raise MatchFailure(SkipReason.NON_AFFINE, "no store of the reduction result")
    if len(stores) > 1:
        raise MatchFailure(
            SkipReason.EXTRA_SIDE_EFFECT,
            f"{len(stores)} stores in the output loop; expected exactly one",
        )
    store = stores[0]

    if len(store.index) != 1:
        raise MatchFailure(
            SkipReason.NON_AFFINE, f"output store into {store.buffer!r} uses 2-D subscripts"
        )
    e = store.index[0]
    if isinstance(e, NonAffineExpr):
        raise MatchFailure(SkipReason.NON_AFFINE, f"non-affine subscript {e.text!r}")
    if _unit_term(e) != outer.iv:
        coeffs = dict(e.terms)
        if set(coeffs) == {outer.iv}:
            raise MatchFailure(
                SkipReason.STRIDED,
                f"output access {store.buffer}[...] is strided or offset; "
                f"only unit stride is rewritten",
            )
        raise MatchFailure(
            SkipReason.NON_AFFINE,
            f"output subscript does not range over the output loop variable {outer.iv!r}",
        )

    def same_slot_load(load: Load, st: _State) -> Optional[_State]:
        if load.buffer != store.buffer:
            return None
        if len(load.index) != 1 or _unit_term(load.index[0]) != outer.iv:
            return None
        return st

    m_sum = _m_scaled(_m_name(reduction.acc), key="alpha")
    m_prev = _m_scaled(_m_load(same_slot_load, key="yload"), key="beta")
    m_value = one_of(
        _with_binding(m_sum, "beta", 0.0),
        _m_add_commutative(m_prev, m_sum),
    )
    st = m_value(store.value, ctx, _State().consume(store))
    if st is None:
        raise MatchFailure(
            SkipReason.NON_AFFINE,
            f"stored value {store.value!r} is not a scaled accumulator or "
            f"an accumulate-into-output form",
        )
    return _StoreForm(
        store=store,
        output=store.buffer,
        alpha=st.get("alpha"),
        beta=st.get("beta"),
        consumed=st.consumed,
    )


def _m_add_commutative(left: Callable, right: Callable) -> Callable:
    def m(op: Operand, ctx: _Ctx, st: _State) -> Optional[_State]:
        if not isinstance(op, str):
            return None
        d = ctx.defs.get(op)
        if not isinstance(d, BinOp) or d.op != "add":
            return None
        for a, b in ((d.a, d.b), (d.b, d.a)):
            st_a = left(a, ctx, st.consume(d))
            if st_a is None:
                continue
            st_b = right(b, ctx, st_a)
            if st_b is not None:
                return st_b
        return None

    return m


# ---------------------------------------------------------------------------
# Whole-nest matching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GemvCandidate:
    """A structurally matched GEMV nest, ready for legality checks."""

    function: str
    nest: Loop  # the outer loop statement, replaced by the rewrite
    matrix: str
    vector: str
    output: str
    iv_out: str
    iv_red: str
    m: int
    n: int
    lda: Union[int, str]
    layout: str
    alpha: float
    beta: float
    store: Store

    def params_dict(self) -> dict:
        return {
            "matrix": self.matrix,
            "vector": self.vector,
            "output": self.output,
            "layout": self.layout,
            "m": self.m,
            "n": self.n,
            "lda": self.lda,
            "alpha": self.alpha,
            "beta": self.beta,
        }


def _const_trip_count(loop: Loop) -> int:
    lo, hi = loop.lower, loop.upper
    if not (isinstance(lo, AffineExpr) and lo.is_const and isinstance(hi, AffineExpr) and hi.is_const):
        raise MatchFailure(
            SkipReason.NON_AFFINE, f"loop {loop.iv!r} bounds are not integer constants"
        )
    if lo.offset != 0:
        raise MatchFailure(
            SkipReason.NON_AFFINE, f"loop {loop.iv!r} is not zero-based"
        )
    if hi.offset < 1:
        raise MatchFailure(SkipReason.NON_AFFINE, f"loop {loop.iv!r} is zero-trip")
    return hi.offset


def match_nest(function_name: str, nest: Loop, extents_of: Callable[[str], tuple]) -> GemvCandidate:
    """Match one top-level loop nest against the GEMV idiom.

    Raises:
        MatchFailure: with the skip reason when the nest does not fit.
    """
    inner_loops = [s for s in nest.body if isinstance(s, Loop)]
    if not inner_loops:
        raise MatchFailure(
            SkipReason.NOT_DEEP_ENOUGH, "loop nest is only one level deep"
        )
    if len(inner_loops) > 1:
        raise MatchFailure(
            SkipReason.EXTRA_SIDE_EFFECT, "multiple inner loops in one nest"
        )
    inner = inner_loops[0]
    deeper = [s for s in inner.body if isinstance(s, Loop)]
    if deeper:
        raise MatchFailure(
            SkipReason.EXTRA_SIDE_EFFECT,
            "nesting deeper than two loops is not a GEMV idiom",
        )

    m = _const_trip_count(nest)
    n = _const_trip_count(inner)

    defs: dict = {}
    for s in list(nest.body) + list(inner.body):
        if isinstance(s, (Load, BinOp)):
            defs.setdefault(s.dest, s)
    ctx = _Ctx(defs=defs)

    reduction = match_gemv_reduction(nest, inner, ctx, extents_of)
    stored = match_store_of_vector(nest, reduction, ctx)

    consumed = reduction.consumed | stored.consumed
    leftovers = [
        s
        for s in list(nest.body) + list(inner.body)
        if id(s) not in consumed and s is not inner
    ]
    if leftovers:
        kinds = ", ".join(type(s).__name__ for s in leftovers[:4])
        raise MatchFailure(
            SkipReason.EXTRA_SIDE_EFFECT,
            f"{len(leftovers)} statement(s) in the nest take no part in the "
            f"GEMV ({kinds})",
        )

    return GemvCandidate(
        function=function_name,
        nest=nest,
        matrix=reduction.matrix_load.buffer,
        vector=reduction.vector_load.buffer,
        output=stored.output,
        iv_out=nest.iv,
        iv_red=inner.iv,
        m=m,
        n=n,
        lda=reduction.access.lda,
        layout=reduction.access.layout,
        alpha=reduction.alpha * stored.alpha,
        beta=stored.beta,
        store=stored.store,
    )
