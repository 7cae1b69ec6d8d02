"""Transformer runtime: config, checkpoints, program synthesis, engine."""

from .config import (
    ModelConfig,
    TOY_CONFIG,
    gemv_flops_per_token,
    param_count,
    tensor_shapes,
)
from .checkpoint import (
    CheckpointError,
    ExtentMismatchError,
    FLOAT_MAGIC,
    InvalidHeaderError,
    QUANT_MAGIC,
    TruncatedCheckpointError,
    make_toy_checkpoint,
    quantize_checkpoint,
    quantized_record_size,
    serialize_record,
    read_float_checkpoint,
    read_quantized_checkpoint,
    write_float_checkpoint,
    write_quantized_checkpoint,
)
from .engine import (
    Engine,
    EngineStats,
    GemvObservation,
    GenerationResult,
    MODES,
    sniff_magic,
    verify_bounds,
)
from .rng import SplitMix64, tensor_fill
from .synthesize import gemv_nest_count, synthesize_forward_program

__all__ = [
    "CheckpointError",
    "Engine",
    "EngineStats",
    "ExtentMismatchError",
    "FLOAT_MAGIC",
    "GemvObservation",
    "GenerationResult",
    "InvalidHeaderError",
    "MODES",
    "ModelConfig",
    "QUANT_MAGIC",
    "SplitMix64",
    "TOY_CONFIG",
    "TruncatedCheckpointError",
    "gemv_flops_per_token",
    "gemv_nest_count",
    "make_toy_checkpoint",
    "param_count",
    "quantize_checkpoint",
    "quantized_record_size",
    "read_float_checkpoint",
    "serialize_record",
    "read_quantized_checkpoint",
    "sniff_magic",
    "synthesize_forward_program",
    "tensor_fill",
    "verify_bounds",
    "write_float_checkpoint",
    "write_quantized_checkpoint",
]
