"""Loop IR: node types, textual form, validation, and an interpreter."""

from .interp import Prepared, TrapError, interpret
from .nodes import (
    AccumInit,
    AccumUpdate,
    AffineExpr,
    BinOp,
    BufferDecl,
    Function,
    IndexExpr,
    IntrinsicCall,
    Load,
    Loop,
    LoopProgram,
    NonAffineExpr,
    Operand,
    Stmt,
    Store,
    walk,
)
from .textio import ParseError, parse_program, print_program
from .validate import KNOWN_INTRINSICS, validate

__all__ = [
    "AccumInit",
    "AccumUpdate",
    "AffineExpr",
    "BinOp",
    "BufferDecl",
    "Function",
    "IndexExpr",
    "IntrinsicCall",
    "KNOWN_INTRINSICS",
    "Load",
    "Loop",
    "LoopProgram",
    "NonAffineExpr",
    "Operand",
    "ParseError",
    "Prepared",
    "Stmt",
    "Store",
    "TrapError",
    "interpret",
    "parse_program",
    "print_program",
    "validate",
    "walk",
]
