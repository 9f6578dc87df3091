"""Outlier-aware preprocessing of weight tensors.

The extreme ``k`` smallest and ``k`` largest weights are pulled into a
lossless dictionary, the remaining body is rescaled to [-1, 1], and the
tensor is laid out on a 2-D coordinate grid for the INR to fit.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    CorruptPackage,
    DegenerateConstantTensor,
    DegenerateRange,
    IndexOutOfRange,
    RankTooLow,
    TooSmallTensor,
)

DEFAULT_OUTLIER_FRACTION = 0.01


@dataclass(frozen=True)
class ShapeMeta:
    original_shape: tuple[int, ...]
    rows: int
    cols: int


def flatten_to_2d(entry) -> tuple[np.ndarray, ShapeMeta]:
    """View a rank>=2 tensor as a ``shape[0] x prod(shape[1:])`` float64 matrix."""
    shape = tuple(entry.shape)
    if len(shape) < 2:
        raise RankTooLow(f"rank-{len(shape)} tensor cannot be laid out on a 2-D grid")
    rows = shape[0]
    cols = math.prod(shape[1:])
    matrix = np.asarray(entry.data, dtype=np.float64).reshape(rows, cols)
    return matrix, ShapeMeta(shape, rows, cols)


def unflatten(matrix, meta: ShapeMeta) -> np.ndarray:
    return np.asarray(matrix).reshape(meta.original_shape)


@dataclass(frozen=True)
class OutlierDict:
    indices: np.ndarray  # uint32, strictly increasing
    values: np.ndarray  # float32, exact copies of the source weights
    fraction: float = DEFAULT_OUTLIER_FRACTION

    def __len__(self) -> int:
        return int(self.indices.size)

    def to_bytes(self) -> bytes:
        n = len(self)
        return (
            struct.pack("<I", n)
            + np.asarray(self.indices, dtype="<u4").tobytes()
            + np.asarray(self.values, dtype="<f4").tobytes()
        )

    @classmethod
    def from_bytes(cls, buf: bytes, fraction: float = DEFAULT_OUTLIER_FRACTION) -> "OutlierDict":
        if len(buf) < 4:
            raise CorruptPackage("outlier dictionary too short")
        (n,) = struct.unpack_from("<I", buf, 0)
        if len(buf) != 4 + 8 * n:
            raise CorruptPackage(f"outlier dictionary of {n} entries has {len(buf)} bytes")
        idx = np.frombuffer(buf, dtype="<u4", count=n, offset=4).copy()
        val = np.frombuffer(buf, dtype="<f4", count=n, offset=4 + 4 * n).copy()
        return cls(indices=idx, values=val, fraction=fraction)

    @classmethod
    def empty(cls) -> "OutlierDict":
        return cls(np.zeros(0, dtype=np.uint32), np.zeros(0, dtype=np.float32), 0.0)


def outlier_count(n: int, fraction: float) -> int:
    return max(1, int(math.floor(fraction * n)))


def extract_outliers(w, fraction: float = DEFAULT_OUTLIER_FRACTION):
    """Split ``w`` into a dense body and a dictionary of its 2k extreme entries.

    Returns ``(body, outliers)``.  ``body`` is float64 with every outlier slot
    overwritten by the nearest body extremum (low outliers get the body
    minimum, high outliers the body maximum), so the grid stays dense.
    """
    w = np.asarray(w).reshape(-1)
    n = w.size
    if n < 4:
        raise TooSmallTensor(f"need at least 4 values, got {n}")
    if not 0.0 < fraction < 0.5:
        raise ValueError(f"outlier fraction must lie in (0, 0.5), got {fraction}")
    w64 = w.astype(np.float64)
    if w64.min() == w64.max():
        raise DegenerateConstantTensor("all weights are equal")
    k = outlier_count(n, fraction)
    order = np.argsort(w64, kind="stable")
    low, high = order[:k], order[n - k:]
    keep = np.ones(n, dtype=bool)
    keep[low] = False
    keep[high] = False
    body = w64.copy()
    body_min = w64[keep].min()
    body_max = w64[keep].max()
    body[low] = body_min
    body[high] = body_max
    idx = np.sort(np.concatenate([low, high])).astype(np.uint32)
    vals = np.asarray(w, dtype=np.float32)[idx]
    return body, OutlierDict(indices=idx, values=vals, fraction=fraction)


@dataclass(frozen=True)
class NormParams:
    w_min: float
    w_max: float

    def __post_init__(self):
        if not self.w_max > self.w_min:
            raise DegenerateRange(f"w_max={self.w_max} must exceed w_min={self.w_min}")

    @property
    def half_range(self) -> float:
        return 0.5 * (self.w_max - self.w_min)


def normalize(body, extrema: tuple[float, float] | None = None):
    """Affinely map ``body`` so that its extrema land on -1 and +1.

    ``extrema`` overrides the range (used when normalizing by the global
    extrema of the tensor instead of the body's own).
    """
    body = np.asarray(body, dtype=np.float64)
    lo, hi = (float(body.min()), float(body.max())) if extrema is None else map(float, extrema)
    if not hi > lo:
        raise DegenerateRange("cannot normalize a constant body")
    params = NormParams(lo, hi)
    w_norm = 2.0 * (body - lo) / (hi - lo) - 1.0
    return np.clip(w_norm, -1.0, 1.0), params


def denormalize(w_norm, params: NormParams) -> np.ndarray:
    w_norm = np.asarray(w_norm, dtype=np.float64)
    return (w_norm + 1.0) * 0.5 * (params.w_max - params.w_min) + params.w_min


@dataclass(frozen=True)
class CoordGrid:
    h: int
    w: int
    coords: np.ndarray  # (h*w, 2), row-major

    def __len__(self) -> int:
        return self.h * self.w


def _axis(n: int) -> np.ndarray:
    return 2.0 * np.arange(n, dtype=np.float64) / max(n - 1, 1) - 1.0


def coordinate_grid(h: int, w: int) -> CoordGrid:
    if h < 1 or w < 1:
        raise ValueError(f"grid dims must be positive, got {(h, w)}")
    xs, ys = np.meshgrid(_axis(h), _axis(w), indexing="ij")
    coords = np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1)
    coords.setflags(write=False)
    return CoordGrid(h, w, coords)


def patch_outliers(w_hat, outliers: OutlierDict) -> np.ndarray:
    """Copy of ``w_hat`` with the stored exact values written back in place."""
    out = np.array(w_hat, copy=True).reshape(-1)
    if len(outliers) == 0:
        return out
    if int(outliers.indices.max()) >= out.size:
        raise IndexOutOfRange(f"outlier index {int(outliers.indices.max())} >= length {out.size}")
    out[outliers.indices.astype(np.int64)] = outliers.values
    return out
