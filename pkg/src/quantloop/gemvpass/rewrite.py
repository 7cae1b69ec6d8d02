"""Driver for the GEMV idiom pass: find, check, rewrite, clean up.

The pass scans every top-level loop of every function, classifies each nest
as matched or skipped (with one of five reason codes), replaces matched
nests with a ``gemv`` intrinsic call, and then deletes the scalar plumbing
and empty loops the rewrite leaves behind.  Rejected nests are left
byte-identical to their input form.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from ..loopir.nodes import (
    AccumInit,
    AccumUpdate,
    BinOp,
    Function,
    IntrinsicCall,
    Load,
    Loop,
    LoopProgram,
    Stmt,
    Store,
)
from .matchers import GemvCandidate, MatchFailure, SkipReason, match_nest

__all__ = [
    "NestRecord",
    "PassResult",
    "check_legality",
    "dead_loop_cleanup",
    "find_candidates",
    "rewrite_candidate",
    "run_gemv_pass",
]


@dataclass(frozen=True)
class NestRecord:
    """Outcome for one scanned top-level loop nest."""

    function: str
    position: int  # index of the nest within the function body
    iv: str
    status: str  # "matched" | "skipped"
    reason: Optional[str] = None  # skip reason code, None when matched
    detail: str = ""
    params: Optional[dict] = None  # gemv parameters when matched

    def to_json(self) -> dict:
        out = {
            "function": self.function,
            "position": self.position,
            "iv": self.iv,
            "status": self.status,
        }
        if self.status == "skipped":
            out["reason"] = self.reason
            out["detail"] = self.detail
        else:
            out["params"] = dict(self.params or {})
        return out


@dataclass
class PassResult:
    program: LoopProgram
    records: list
    candidates: list

    @property
    def matched(self) -> list:
        return [r for r in self.records if r.status == "matched"]

    @property
    def skipped(self) -> list:
        return [r for r in self.records if r.status == "skipped"]

    def report(self) -> dict:
        """JSON-serializable per-nest report."""
        return {
            "nests_scanned": len(self.records),
            "matched": len(self.matched),
            "skipped": len(self.skipped),
            "records": [r.to_json() for r in self.records],
        }


def _extents_lookup(program: LoopProgram):
    table = {b.name: b.extents for b in program.buffers}

    def extents_of(name: str) -> tuple:
        return table.get(name, ())

    return extents_of


def find_candidates(program: LoopProgram):
    """Scan all top-level loops; return (candidates, records).

    Every scanned nest lands in exactly one record: matched candidates get a
    ``matched`` record, everything else a ``skipped`` record with a reason.
    Legality has not been applied yet; `run_gemv_pass` demotes candidates
    that fail it.
    """
    extents_of = _extents_lookup(program)
    candidates: list = []
    records: list = []
    for fn in program.functions:
        for pos, stmt in enumerate(fn.body):
            if not isinstance(stmt, Loop):
                continue
            try:
                cand = match_nest(fn.name, stmt, extents_of)
            except MatchFailure as fail:
                records.append(
                    NestRecord(
                        function=fn.name,
                        position=pos,
                        iv=stmt.iv,
                        status="skipped",
                        reason=fail.reason.value,
                        detail=fail.detail,
                    )
                )
                continue
            candidates.append(cand)
            records.append(
                NestRecord(
                    function=fn.name,
                    position=pos,
                    iv=stmt.iv,
                    status="matched",
                    params=cand.params_dict(),
                )
            )
    return candidates, records


def check_legality(candidate: GemvCandidate, program: LoopProgram):
    """Validate a structural match against the whole program.

    Returns ``(True, None, "")`` or ``(False, reason, detail)`` with a skip
    reason code.  Checks: the three operands are distinct buffers (aliasing
    would let the store interfere with the loads), the loop extents fit the
    declared buffer shapes, and an integer leading dimension covers the
    reduction width.
    """
    names = (candidate.matrix, candidate.vector, candidate.output)
    if len(set(names)) != len(names):
        return (
            False,
            SkipReason.EXTRA_SIDE_EFFECT.value,
            f"operands alias: matrix={candidate.matrix!r} "
            f"vector={candidate.vector!r} output={candidate.output!r}",
        )

    decls = {b.name: b for b in program.buffers}
    for name in names:
        if name not in decls:
            return (
                False,
                SkipReason.LAYOUT_UNKNOWN.value,
                f"buffer {name!r} is not declared",
            )

    if isinstance(candidate.lda, int):
        min_ld = candidate.n if candidate.layout == "RM" else candidate.m
        if candidate.lda < min_ld:
            return (
                False,
                SkipReason.LAYOUT_UNKNOWN.value,
                f"leading dimension {candidate.lda} < {min_ld}",
            )
        rows = candidate.m if candidate.layout == "RM" else candidate.n
        if candidate.lda * rows > decls[candidate.matrix].size:
            return (
                False,
                SkipReason.LAYOUT_UNKNOWN.value,
                f"access footprint {candidate.lda * rows} exceeds buffer "
                f"{candidate.matrix!r} size {decls[candidate.matrix].size}",
            )

    if decls[candidate.vector].size < candidate.n:
        return (
            False,
            SkipReason.LAYOUT_UNKNOWN.value,
            f"vector {candidate.vector!r} shorter than the reduction width",
        )
    if decls[candidate.output].size < candidate.m:
        return (
            False,
            SkipReason.LAYOUT_UNKNOWN.value,
            f"output {candidate.output!r} shorter than the output height",
        )
    return True, None, ""


def _gemv_call(c: GemvCandidate) -> IntrinsicCall:
    return IntrinsicCall(
        name="gemv",
        args=(
            c.layout,
            "NT",
            c.m,
            c.n,
            c.alpha,
            c.matrix,
            c.lda,
            c.vector,
            1,
            c.beta,
            c.output,
            1,
        ),
    )


def _drop_stmt(stmt: Stmt, target: Stmt) -> Optional[Stmt]:
    """Rebuild `stmt` without `target` (matched by identity)."""
    if stmt is target:
        return None
    if isinstance(stmt, Loop):
        new_body = tuple(
            s2 for s2 in (_drop_stmt(s, target) for s in stmt.body) if s2 is not None
        )
        if new_body != stmt.body:
            return replace(stmt, body=new_body)
    return stmt


def rewrite_candidate(program: LoopProgram, candidate: GemvCandidate) -> LoopProgram:
    """Replace one matched nest with a ``gemv`` intrinsic call.

    The matched store is removed and the call inserted where the nest stood;
    the drained loop skeleton is left for `dead_loop_cleanup`.
    """
    new_functions = []
    for fn in program.functions:
        if fn.name != candidate.function:
            new_functions.append(fn)
            continue
        body: list = []
        for stmt in fn.body:
            if stmt is candidate.nest:
                stripped = _drop_stmt(stmt, candidate.store)
                if stripped is not None:
                    body.append(stripped)
                body.append(_gemv_call(candidate))
            else:
                body.append(stmt)
        new_functions.append(replace(fn, body=tuple(body)))
    return replace(program, functions=tuple(new_functions))


# ---------------------------------------------------------------------------
# Dead code cleanup
# ---------------------------------------------------------------------------


def dead_loop_cleanup(program: LoopProgram) -> LoopProgram:
    """Remove pure scalar definitions with no uses and loops left empty.

    Runs to a fixpoint: deleting an unused load can empty a loop, and
    deleting the loop can orphan further definitions.  Stores and intrinsic
    calls are never removed.  An accumulator counts as dead when nothing
    reads it except its own updates.
    """
    new_functions = []
    for fn in program.functions:
        body = list(fn.body)
        while True:
            reads: dict = {}
            _count_reads(body, reads)
            body, changed = _sweep(body, reads)
            if not changed:
                break
        new_functions.append(replace(fn, body=tuple(body)))
    return replace(program, functions=tuple(new_functions))


def _count_reads(stmts, reads: dict) -> None:
    """Uses of each scalar name, not counting an accumulator's own updates."""
    for s in stmts:
        if isinstance(s, Store):
            if isinstance(s.value, str):
                reads[s.value] = reads.get(s.value, 0) + 1
        elif isinstance(s, BinOp):
            for op in (s.a, s.b, s.c):
                if isinstance(op, str):
                    reads[op] = reads.get(op, 0) + 1
        elif isinstance(s, AccumUpdate):
            for op in (s.a, s.b):
                if isinstance(op, str) and op != s.name:
                    reads[op] = reads.get(op, 0) + 1
        elif isinstance(s, IntrinsicCall):
            for arg in s.args:
                if isinstance(arg, str):
                    reads[arg] = reads.get(arg, 0) + 1
        elif isinstance(s, Loop):
            _count_reads(s.body, reads)


def _sweep(stmts, reads: dict):
    out: list = []
    changed = False
    for s in stmts:
        if isinstance(s, Loop):
            new_body, inner_changed = _sweep(s.body, reads)
            changed = changed or inner_changed
            if not new_body:
                changed = True
                continue
            out.append(replace(s, body=tuple(new_body)) if inner_changed else s)
            continue
        if isinstance(s, (Load, BinOp)) and reads.get(s.dest, 0) == 0:
            changed = True
            continue
        if isinstance(s, (AccumInit, AccumUpdate)) and reads.get(s.name, 0) == 0:
            changed = True
            continue
        out.append(s)
    return out, changed


def run_gemv_pass(program: LoopProgram) -> PassResult:
    """Match, check, rewrite, and clean up; returns the new program + report.

    Nests that fail either matching or legality are recorded once with their
    reason and left untouched (their printed form is byte-identical).
    """
    candidates, records = find_candidates(program)

    legal: list = []
    final_records: list = []
    by_nest = {id(c.nest): c for c in candidates}
    for rec in records:
        if rec.status != "matched":
            final_records.append(rec)
            continue
        cand = by_nest[id(program.function(rec.function).body[rec.position])]
        ok, reason, detail = check_legality(cand, program)
        if ok:
            legal.append(cand)
            final_records.append(rec)
        else:
            final_records.append(
                replace(rec, status="skipped", reason=reason, detail=detail, params=None)
            )

    new_program = program
    for cand in legal:
        new_program = rewrite_candidate(new_program, cand)
    new_program = dead_loop_cleanup(new_program)
    return PassResult(program=new_program, records=final_records, candidates=legal)
