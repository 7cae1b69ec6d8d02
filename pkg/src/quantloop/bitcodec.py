"""Fixed-width bit packing of small integer codes into dense byte streams.

Code ``i`` of an ``n``-code stream occupies bit positions ``[i*b, (i+1)*b)``
where ``b`` is the code width in bits (1..8).  Bit position ``p`` lives in
byte ``p // 8`` at intra-byte offset ``p % 8``, least-significant bit first.
A code that straddles a byte boundary is split: its low-order bits fill the
remaining space of the current byte and the high-order bits spill into the
next byte.

The payload is exactly ``ceil(n*b/8)`` bytes and is always followed by a
single zero guard byte.  The guard lets a decoder form an unconditional
two-byte window ``payload[j] | payload[j+1] << 8`` even when extracting the
final code, without branching on the stream end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MAX_BIT_WIDTH",
    "CodeRangeError",
    "MalformedBuffer",
    "PackedBuffer",
    "pack_bits",
    "payload_size",
    "unpack_bits",
    "unpack_slice",
]

MAX_BIT_WIDTH = 8


class CodeRangeError(ValueError):
    """A code does not fit the declared bit width."""


class MalformedBuffer(ValueError):
    """A packed buffer is truncated or otherwise inconsistent."""


def payload_size(count: int, bit_width: int) -> int:
    """Number of payload bytes (guard byte excluded) for `count` codes."""
    return (count * bit_width + 7) // 8


@dataclass(frozen=True)
class PackedBuffer:
    """A densely packed stream of fixed-width codes.

    ``data`` holds the payload plus the trailing zero guard byte, so
    ``len(data) == payload_size(count, bit_width) + 1``.
    """

    data: bytes
    count: int
    bit_width: int

    @property
    def payload_bytes(self) -> int:
        return payload_size(self.count, self.bit_width)


def _check_bit_width(bit_width: int) -> None:
    if not 1 <= bit_width <= MAX_BIT_WIDTH:
        raise ValueError(f"bit width must be in 1..{MAX_BIT_WIDTH}, got {bit_width}")


def pack_bits(codes, bit_width: int) -> PackedBuffer:
    """Pack integer codes into a :class:`PackedBuffer`.

    Args:
        codes: sequence (or 1-D array) of integers, each in ``[0, 2**bit_width)``.
        bit_width: code width in bits, 1..8.

    Raises:
        CodeRangeError: if any code falls outside the representable range.
    """
    _check_bit_width(bit_width)
    arr = np.ascontiguousarray(codes, dtype=np.int64).reshape(-1)
    if arr.size:
        lo = int(arr.min())
        hi = int(arr.max())
        if lo < 0 or hi >= (1 << bit_width):
            raise CodeRangeError(
                f"codes must lie in [0, {1 << bit_width}) for bit width "
                f"{bit_width}; saw range [{lo}, {hi}]"
            )
    # Explode each code into bit_width little-endian bits, then let numpy
    # fold the flat bit stream back into bytes (LSB-first within each byte).
    bits = ((arr[:, None] >> np.arange(bit_width, dtype=np.int64)) & 1).astype(np.uint8)
    payload = np.packbits(bits.reshape(-1), bitorder="little").tobytes()
    return PackedBuffer(data=payload + b"\x00", count=arr.size, bit_width=bit_width)


def _payload_view(buf: PackedBuffer) -> np.ndarray:
    _check_bit_width(buf.bit_width)
    if buf.count < 0:
        raise MalformedBuffer(f"negative code count {buf.count}")
    need = payload_size(buf.count, buf.bit_width) + 1  # payload + guard
    if len(buf.data) < need:
        raise MalformedBuffer(
            f"packed buffer truncated: need {need} bytes "
            f"({need - 1} payload + 1 guard), have {len(buf.data)}"
        )
    return np.frombuffer(buf.data, dtype=np.uint8)


def unpack_slice(buf: PackedBuffer, start: int, count: int) -> np.ndarray:
    """Decode codes ``start .. start+count`` without touching the rest.

    Extraction forms a two-byte window around each code, shifts by the
    intra-byte bit offset, and masks to the code width.  The guard byte
    guarantees the window read at the end of the stream stays in bounds.
    """
    data = _payload_view(buf)
    if start < 0 or count < 0 or start + count > buf.count:
        raise IndexError(
            f"slice [{start}, {start + count}) out of range for {buf.count} codes"
        )
    if count == 0:
        return np.empty(0, dtype=np.uint8)
    b = buf.bit_width
    bit_off = (np.arange(start, start + count, dtype=np.int64)) * b
    byte_ix = bit_off >> 3
    shift = (bit_off & 7).astype(np.uint16)
    window = data[byte_ix].astype(np.uint16) | (data[byte_ix + 1].astype(np.uint16) << 8)
    mask = np.uint16((1 << b) - 1)
    return ((window >> shift) & mask).astype(np.uint8)


def unpack_bits(buf: PackedBuffer) -> np.ndarray:
    """Decode every code in the buffer; inverse of :func:`pack_bits`.

    Returns a ``uint8`` array of length ``buf.count``.

    Raises:
        MalformedBuffer: if the buffer is shorter than payload + guard.
    """
    return unpack_slice(buf, 0, buf.count)
