"""GEMV idiom detection and rewriting over the loop IR."""

from .matchers import (
    AccessPattern,
    GemvCandidate,
    MatchFailure,
    SkipReason,
    match_array_access,
    match_gemv_reduction,
    match_nest,
    match_store_of_vector,
    one_of,
)
from .rewrite import (
    NestRecord,
    PassResult,
    check_legality,
    dead_loop_cleanup,
    find_candidates,
    rewrite_candidate,
    run_gemv_pass,
)

__all__ = [
    "AccessPattern",
    "GemvCandidate",
    "MatchFailure",
    "NestRecord",
    "PassResult",
    "SkipReason",
    "check_legality",
    "dead_loop_cleanup",
    "find_candidates",
    "match_array_access",
    "match_gemv_reduction",
    "match_nest",
    "match_store_of_vector",
    "one_of",
    "rewrite_candidate",
    "run_gemv_pass",
]
