"""Tensor archives (FTA v1), reconstruction metrics, and spectral helpers.

FTA v1 layout, little-endian throughout::

    b"FTA1" | u32 header_len | UTF-8 JSON header | raw payload

The header is ``{"entries": [{"name", "shape", "kind", "offset", "nbytes"}]}``
with offsets relative to the start of the payload.  Values are IEEE-754
binary32, row-major.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import (
    DuplicateName,
    IoFailure,
    MagicMismatch,
    ShapeByteMismatch,
    ShapeMismatch,
    TruncatedPayload,
    ZeroDenominator,
    ZeroNormInput,
)
from .fft import dft2  # noqa: F401  (re-exported)
from .rng import SeededRng, seeded_rng  # noqa: F401  (re-exported)

FTA_MAGIC = b"FTA1"
PSNR_CAP_DB = 200.0
_PSNR_MSE_FLOOR = 1e-20


class TensorKind(str, enum.Enum):
    CONV = "conv"
    LINEAR = "linear"
    NORM = "norm"
    BIAS = "bias"
    OTHER = "other"


@dataclass(frozen=True)
class TensorEntry:
    """One named tensor. ``data`` is a flat float32 array in row-major order."""

    shape: tuple[int, ...]
    kind: TensorKind
    data: np.ndarray

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        if len(shape) < 1 or any(d < 1 for d in shape):
            raise ValueError(f"invalid shape {shape}")
        data = np.ascontiguousarray(np.asarray(self.data, dtype="<f4").reshape(-1))
        if data.size != math.prod(shape):
            raise ShapeByteMismatch(
                f"{data.size} values do not fill shape {shape}"
            )
        data.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "kind", TensorKind(self.kind))
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, array, kind="other") -> "TensorEntry":
        array = np.asarray(array, dtype=np.float32)
        return cls(shape=array.shape, kind=kind, data=array.reshape(-1))

    @property
    def array(self) -> np.ndarray:
        return self.data.reshape(self.shape)

    @property
    def nbytes(self) -> int:
        return self.data.size * 4


@dataclass
class TensorArchive:
    entries: dict[str, TensorEntry] = field(default_factory=dict)
    source_hash: int = 0

    def __post_init__(self):
        for name in self.entries:
            if not name:
                raise ValueError("tensor names must be non-empty")
        if not self.source_hash:
            self.source_hash = payload_hash(self._payload())

    def _payload(self) -> bytes:
        return b"".join(e.data.tobytes() for e in self.entries.values())

    @property
    def names(self) -> list[str]:
        return list(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, name: str) -> TensorEntry:
        return self.entries[name]

    def equals(self, other: "TensorArchive") -> bool:
        """Bitwise equality of names, order, shapes, kinds and payloads."""
        if list(self.entries) != list(other.entries):
            return False
        for name, e in self.entries.items():
            o = other.entries[name]
            if e.shape != o.shape or e.kind != o.kind:
                return False
            if e.data.tobytes() != o.data.tobytes():
                return False
        return True


def payload_hash(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def build_archive(items: Iterable[tuple[str, TensorEntry]]) -> TensorArchive:
    entries: dict[str, TensorEntry] = {}
    for name, entry in items:
        if name in entries:
            raise DuplicateName(name)
        entries[name] = entry
    return TensorArchive(entries)


def archive_to_bytes(archive: TensorArchive) -> bytes:
    header = {"entries": []}
    offset = 0
    chunks = []
    for name, e in archive.entries.items():
        header["entries"].append(
            {
                "name": name,
                "shape": list(e.shape),
                "kind": e.kind.value,
                "offset": offset,
                "nbytes": e.nbytes,
            }
        )
        chunks.append(e.data.tobytes())
        offset += e.nbytes
    head = json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return FTA_MAGIC + struct.pack("<I", len(head)) + head + b"".join(chunks)


def archive_from_bytes(buf: bytes) -> TensorArchive:
    if len(buf) < 8 or buf[:4] != FTA_MAGIC:
        raise MagicMismatch("not an FTA1 archive")
    (header_len,) = struct.unpack_from("<I", buf, 4)
    if 8 + header_len > len(buf):
        raise TruncatedPayload("header extends past end of file")
    try:
        header = json.loads(buf[8:8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MagicMismatch(f"unreadable header: {exc}") from exc
    payload = buf[8 + header_len:]
    entries: dict[str, TensorEntry] = {}
    for spec in header.get("entries", []):
        name = spec["name"]
        if name in entries:
            raise DuplicateName(name)
        shape = tuple(spec["shape"])
        offset, nbytes = int(spec["offset"]), int(spec["nbytes"])
        if nbytes != math.prod(shape) * 4:
            raise ShapeByteMismatch(f"{name}: {nbytes} bytes for shape {shape}")
        if offset < 0 or offset + nbytes > len(payload):
            raise TruncatedPayload(f"{name}: payload ends before its data")
        data = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=offset)
        entries[name] = TensorEntry(shape=shape, kind=spec["kind"], data=data)
    return TensorArchive(entries, source_hash=payload_hash(payload))


def save_archive(archive: TensorArchive, path) -> int:
    """Write ``archive`` as FTA1; returns the number of bytes written."""
    buf = archive_to_bytes(archive)
    try:
        with open(path, "wb") as fh:
            fh.write(buf)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return len(buf)


def load_archive(path) -> TensorArchive:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return archive_from_bytes(buf)


def archive_nbytes(archive: TensorArchive) -> int:
    return len(archive_to_bytes(archive))


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class ReconMetrics:
    mse: float
    rel_mae: float
    cosine: float
    psnr: float

    def as_dict(self) -> dict:
        return {"mse": self.mse, "rel_mae": self.rel_mae, "cosine": self.cosine, "psnr": self.psnr}


def metrics(w, w_hat) -> ReconMetrics:
    """Reconstruction quality of ``w_hat`` against reference ``w``.

    PSNR uses the reference's dynamic range ``max(w) - min(w)`` as its peak
    and is capped at ``PSNR_CAP_DB`` when the MSE underflows 1e-20.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    w_hat = np.asarray(w_hat, dtype=np.float64).reshape(-1)
    if w.size != w_hat.size or w.size == 0:
        raise ShapeMismatch(f"lengths {w.size} and {w_hat.size}")
    diff = w_hat - w
    mse = float(np.mean(diff * diff))
    denom = float(np.sum(np.abs(w)))
    if denom == 0.0:
        raise ZeroDenominator("sum |w| is zero; relative MAE undefined")
    rel_mae = float(np.sum(np.abs(diff)) / denom)
    nw, nh = float(np.linalg.norm(w)), float(np.linalg.norm(w_hat))
    if nw == 0.0 or nh == 0.0:
        raise ZeroNormInput("cosine similarity undefined for a zero vector")
    cosine = float(np.clip(np.dot(w, w_hat) / (nw * nh), -1.0, 1.0))
    if mse < _PSNR_MSE_FLOOR:
        psnr = PSNR_CAP_DB
    else:
        peak = float(w.max() - w.min())
        if peak == 0.0:
            psnr = -PSNR_CAP_DB
        else:
            psnr = float(np.clip(10.0 * math.log10(peak * peak / mse), -PSNR_CAP_DB, PSNR_CAP_DB))
    return ReconMetrics(mse=mse, rel_mae=rel_mae, cosine=cosine, psnr=psnr)


def write_path_safely(path, data: bytes) -> int:
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return len(data)
