"""Per-tensor uniform b-bit quantization with LSB-first bit packing.

Wire layout of a blob, little-endian::

    u8 bits | f32 scale | f32 zero | u32 length | ceil(length*bits/8) payload bytes
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BitsOutOfRange, CorruptCodes, CorruptPackage

MIN_BITS, MAX_BITS = 2, 16
HEADER = struct.Struct("<BffI")
HEADER_SIZE = HEADER.size  # 13


def _check_bits(bits: int) -> None:
    if not MIN_BITS <= int(bits) <= MAX_BITS:
        raise BitsOutOfRange(f"bits must be in [{MIN_BITS}, {MAX_BITS}], got {bits}")


def pack_codes(codes, bits: int) -> bytes:
    """Pack unsigned codes into a little-endian bit stream, LSB first."""
    codes = np.asarray(codes, dtype=np.uint32).reshape(-1)
    if codes.size == 0:
        return b""
    shifts = np.arange(bits, dtype=np.uint32)
    bitmat = ((codes[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bitmat.reshape(-1), bitorder="little").tobytes()


def unpack_codes(payload: bytes, bits: int, length: int) -> np.ndarray:
    nbits = length * bits
    stream = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")
    if stream.size < nbits:
        raise CorruptPackage("packed payload shorter than declared length")
    bitmat = stream[:nbits].reshape(length, bits).astype(np.uint32)
    return (bitmat << np.arange(bits, dtype=np.uint32)).sum(axis=1, dtype=np.uint32)


def packed_size(length: int, bits: int) -> int:
    """Serialized blob size in bytes: fixed header plus packed payload."""
    return HEADER_SIZE + (length * bits + 7) // 8


@dataclass(frozen=True)
class QuantizedBlob:
    bits: int
    scale: float
    zero_point: float
    codes: np.ndarray
    length: int

    def to_bytes(self) -> bytes:
        return HEADER.pack(self.bits, self.scale, self.zero_point, self.length) + pack_codes(
            self.codes, self.bits
        )

    @classmethod
    def from_bytes(cls, buf: bytes, offset: int = 0) -> tuple["QuantizedBlob", int]:
        """Parse one blob starting at ``offset``; returns ``(blob, next_offset)``."""
        if len(buf) - offset < HEADER_SIZE:
            raise CorruptPackage("quantized blob header truncated")
        bits, scale, zero, length = HEADER.unpack_from(buf, offset)
        _check_bits(bits)
        end = offset + packed_size(length, bits)
        if end > len(buf):
            raise CorruptPackage("quantized blob payload truncated")
        codes = unpack_codes(buf[offset + HEADER_SIZE:end], bits, length)
        return cls(bits, scale, zero, codes, length), end


def _round_f32(x: float) -> float:
    return float(np.float32(x))


def quantize(values, bits: int) -> QuantizedBlob:
    """``q = clip(round((v - z) / s), 0, 2^b - 1)`` with min-max scale and zero-point.

    ``s`` and ``z`` are rounded to float32 before coding, which is how they
    are stored, so codes always refer to the stored lattice.  Rounding is
    half-to-even.
    """
    _check_bits(bits)
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValueError("cannot quantize an empty tensor")
    levels = (1 << bits) - 1
    lo, hi = float(v.min()), float(v.max())
    zero = _round_f32(lo)
    if hi == lo:
        return QuantizedBlob(bits, 0.0, zero, np.zeros(v.size, dtype=np.uint32), v.size)
    scale = _round_f32((hi - lo) / levels)
    q = np.clip(np.rint((v - zero) / scale), 0, levels).astype(np.uint32)
    return QuantizedBlob(bits, scale, zero, q, v.size)


def dequantize(blob: QuantizedBlob) -> np.ndarray:
    """``s * q + z`` as float64."""
    codes = np.asarray(blob.codes)
    if codes.size != blob.length:
        raise CorruptCodes(f"{codes.size} codes for declared length {blob.length}")
    if codes.size and int(codes.max()) >= (1 << blob.bits):
        raise CorruptCodes(f"code {int(codes.max())} does not fit in {blob.bits} bits")
    return float(blob.scale) * codes.astype(np.float64) + float(blob.zero_point)
