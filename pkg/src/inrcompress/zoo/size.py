"""Storage size, in bits, of compression artifacts.

Sizes follow each artifact's wire layout: float32 scalars cost 32 bits,
integer codes cost their bit width, and fixed metadata (shapes, scales,
radii) is amortized over the stored scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import singledispatch

import numpy as np

from ..quantizer import QuantizedBlob, packed_size
from .classical import ErgodicCode, LatticeCode, LowRankPair, SparseVector
from .structural import MaskScores, RnnParams, StaircaseCode

F32_BITS = 32
U32_BITS = 32
U8_BITS = 8


@dataclass(frozen=True)
class SizeReport:
    point_bits: float
    count: int
    total_bits: int

    def __post_init__(self):
        if self.count < 0 or self.total_bits < 0:
            raise ValueError("sizes must be non-negative")
        if self.count and math.ceil(self.point_bits * self.count) != self.total_bits:
            raise ValueError("total_bits must equal ceil(point_bits * count)")

    @classmethod
    def from_bits(cls, total_bits: int, count: int) -> "SizeReport":
        if count == 0:
            return cls(0.0, 0, int(total_bits))
        pb = total_bits / count
        while math.ceil(pb * count) > total_bits:
            pb = math.nextafter(pb, 0.0)
        return cls(pb, int(count), int(total_bits))


@singledispatch
def size_report(blob) -> SizeReport:
    raise TypeError(f"no size rule for {type(blob).__name__}")


@size_report.register
def _(blob: np.ndarray) -> SizeReport:
    # dense float32 storage
    return SizeReport.from_bits(F32_BITS * blob.size, blob.size)


@size_report.register
def _(blob: QuantizedBlob) -> SizeReport:
    return SizeReport.from_bits(8 * packed_size(blob.length, blob.bits), blob.length)


@size_report.register
def _(blob: LowRankPair) -> SizeReport:
    n, m = blob.shape
    scalars = blob.rank * (n + m)
    # three u32 dimensions (n, m, r) ride along as metadata
    return SizeReport.from_bits(F32_BITS * scalars + 3 * U32_BITS, scalars)


@size_report.register
def _(blob: SparseVector) -> SizeReport:
    k = len(blob.indices)
    # u32 length, then (u32 index, f32 value) per kept entry
    return SizeReport.from_bits(U32_BITS + k * (U32_BITS + F32_BITS), max(k, 1))


@size_report.register
def _(blob: MaskScores) -> SizeReport:
    # the deployed artifact is the masked vector: one (index, value) pair per kept entry
    k = blob.k
    return SizeReport.from_bits(U32_BITS + k * (U32_BITS + F32_BITS), max(k, 1))


@size_report.register
def _(blob: LatticeCode) -> SizeReport:
    d = len(blob.codes)
    # codes, then f32 radius and u8 bit width
    return SizeReport.from_bits(d * blob.bits + F32_BITS + U8_BITS, d)


@size_report.register
def _(blob: StaircaseCode) -> SizeReport:
    d = len(blob.codes)
    return SizeReport.from_bits(d * blob.bits + 2 * F32_BITS + U8_BITS, d)


@size_report.register
def _(blob: ErgodicCode) -> SizeReport:
    # the orbit index in its minimal bit width; frequencies, seed and
    # amplitude are implied by convention unless they deviate from it
    bits = max(1, int(blob.k).bit_length())
    if not blob.is_canonical:
        bits += blob.dim * 4 * F32_BITS
    return SizeReport.from_bits(bits, blob.dim)


@size_report.register
def _(blob: RnnParams) -> SizeReport:
    scalars = sum(p.size for p in blob.as_list()) + blob.h0.size
    return SizeReport.from_bits(F32_BITS * scalars, scalars)
