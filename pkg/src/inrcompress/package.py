"""B2SM v1 model packages.

Layout, little-endian::

    b"B2SM" | u32 version | u64 manifest_len | canonical JSON manifest
    | section* where section = u32 tag | u64 len | payload

Section tags: 1 raw tensor (f32), 2 INR parameters (f32), 3 INR parameters
(quantized blobs), 4 outlier dictionary, 5 normalization + architecture
metadata (JSON).  The manifest's ``layers`` list names, for every source
entry, its mode (``inr``, ``fallback`` or ``passthrough``) and the indices
of the sections that belong to it.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptPackage, IoFailure
from .inr_net import ArchSpec
from .preprocess import NormParams, OutlierDict
from .quantizer import QuantizedBlob
from .tensor_store import TensorEntry, write_path_safely

MAGIC = b"B2SM"
VERSION = 1

TAG_RAW = 1
TAG_INR_F32 = 2
TAG_INR_QUANT = 3
TAG_OUTLIERS = 4
TAG_META = 5

_SECTION_HEAD = struct.Struct("<IQ")


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _shape_prefix(shape) -> bytes:
    return struct.pack(f"<I{len(shape)}I", len(shape), *shape)


def _read_shape(buf: bytes, off: int) -> tuple[tuple[int, ...], int]:
    (ndim,) = struct.unpack_from("<I", buf, off)
    dims = struct.unpack_from(f"<{ndim}I", buf, off + 4)
    return tuple(dims), off + 4 + 4 * ndim


def encode_f32_params(params) -> bytes:
    return b"".join(
        _shape_prefix(p.shape) + np.asarray(p, dtype="<f4").tobytes() for p in params
    )


def decode_f32_params(buf: bytes) -> list[np.ndarray]:
    out, off = [], 0
    while off < len(buf):
        shape, off = _read_shape(buf, off)
        n = math.prod(shape)
        if off + 4 * n > len(buf):
            raise CorruptPackage("INR parameter section truncated")
        out.append(np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(shape).copy())
        off += 4 * n
    return out


def encode_quant_params(blobs, shapes) -> bytes:
    return b"".join(_shape_prefix(s) + b.to_bytes() for b, s in zip(blobs, shapes))


def decode_quant_params(buf: bytes) -> list[tuple[tuple[int, ...], QuantizedBlob]]:
    out, off = [], 0
    while off < len(buf):
        shape, off = _read_shape(buf, off)
        blob, off = QuantizedBlob.from_bytes(buf, off)
        if blob.length != math.prod(shape):
            raise CorruptPackage(f"blob of {blob.length} values for shape {shape}")
        out.append((shape, blob))
    return out


@dataclass
class LayerPackage:
    """Everything needed to rebuild one archive entry."""

    name: str
    original_shape: tuple[int, ...]
    kind: str
    mode: str  # "inr" | "fallback" | "passthrough"
    arch: ArchSpec | None = None
    inr_params: list[np.ndarray] | None = None  # float32 tensors
    quantized: list[QuantizedBlob] | None = None
    outliers: OutlierDict | None = None
    norm: NormParams | None = None
    grid: tuple[int, int] | None = None
    fit_mse: float | None = None
    raw: np.ndarray | None = None  # float32, flat
    reason: str | None = None
    seed: int | None = None
    norm_extrema: str = "body"
    report: object = None  # TrainReport, kept in memory only
    rejected: "LayerPackage | None" = None  # INR candidate a fallback replaced, memory only

    @property
    def fallback(self) -> bool:
        return self.mode == "fallback"

    @property
    def bits(self) -> int | None:
        return self.quantized[0].bits if self.quantized else None

    def sections(self) -> list[tuple[int, bytes]]:
        if self.mode != "inr":
            return [(TAG_RAW, np.asarray(self.raw, dtype="<f4").tobytes())]
        meta = {
            "arch": self.arch.to_dict(),
            "grid": list(self.grid),
            "norm": {"w_min": self.norm.w_min, "w_max": self.norm.w_max},
            "norm_extrema": self.norm_extrema,
            "outlier_fraction": self.outliers.fraction,
        }
        out = [(TAG_META, canonical_json(meta)), (TAG_OUTLIERS, self.outliers.to_bytes())]
        if self.quantized is not None:
            shapes = [s for _, s in self.arch.layer_shapes()]
            out.append((TAG_INR_QUANT, encode_quant_params(self.quantized, shapes)))
        else:
            out.append((TAG_INR_F32, encode_f32_params(self.inr_params)))
        return out

    def stored_nbytes(self) -> int:
        return sum(_SECTION_HEAD.size + len(p) for _, p in self.sections())

    def index_entry(self) -> dict:
        return {
            "name": self.name,
            "shape": list(self.original_shape),
            "kind": self.kind,
            "mode": self.mode,
            "fit_mse": self.fit_mse,
            "reason": self.reason,
            "seed": self.seed,
        }


@dataclass
class ModelPackage:
    manifest: dict
    layers: list[LayerPackage] = field(default_factory=list)

    def layer(self, name: str) -> LayerPackage:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    @property
    def passthrough(self) -> list[LayerPackage]:
        return [layer for layer in self.layers if layer.mode == "passthrough"]

    def to_bytes(self) -> bytes:
        sections: list[tuple[int, bytes]] = []
        index = []
        for layer in self.layers:
            entry = layer.index_entry()
            entry["sections"] = []
            for tag, payload in layer.sections():
                entry["sections"].append(len(sections))
                sections.append((tag, payload))
            index.append(entry)
        manifest = dict(self.manifest, layers=index, format="B2SM", version=VERSION)
        head = canonical_json(manifest)
        parts = [MAGIC, struct.pack("<IQ", VERSION, len(head)), head]
        for tag, payload in sections:
            parts.append(_SECTION_HEAD.pack(tag, len(payload)))
            parts.append(payload)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "ModelPackage":
        if len(buf) < 16 or buf[:4] != MAGIC:
            raise CorruptPackage("not a B2SM package")
        version, mlen = struct.unpack_from("<IQ", buf, 4)
        if version != VERSION:
            raise CorruptPackage(f"unsupported package version {version}")
        if 16 + mlen > len(buf):
            raise CorruptPackage("manifest truncated")
        try:
            manifest = json.loads(buf[16:16 + mlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptPackage(f"unreadable manifest: {exc}") from exc
        sections = []
        off = 16 + mlen
        while off < len(buf):
            if off + _SECTION_HEAD.size > len(buf):
                raise CorruptPackage("section header truncated")
            tag, n = _SECTION_HEAD.unpack_from(buf, off)
            off += _SECTION_HEAD.size
            if off + n > len(buf):
                raise CorruptPackage("section payload truncated")
            sections.append((tag, buf[off:off + n]))
            off += n
        layers = [_layer_from_sections(e, sections) for e in manifest.get("layers", [])]
        manifest = {k: v for k, v in manifest.items() if k != "layers"}
        return cls(manifest, layers)

    def save(self, path) -> int:
        return write_path_safely(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelPackage":
        try:
            with open(path, "rb") as fh:
                return cls.from_bytes(fh.read())
        except OSError as exc:
            raise IoFailure(str(exc)) from exc


def _layer_from_sections(entry: dict, sections) -> LayerPackage:
    try:
        parts = {sections[i][0]: sections[i][1] for i in entry["sections"]}
    except IndexError as exc:
        raise CorruptPackage(f"{entry['name']}: section index out of range") from exc
    layer = LayerPackage(
        name=entry["name"],
        original_shape=tuple(entry["shape"]),
        kind=entry["kind"],
        mode=entry["mode"],
        fit_mse=entry.get("fit_mse"),
        reason=entry.get("reason"),
        seed=entry.get("seed"),
    )
    n = math.prod(layer.original_shape)
    if layer.mode in ("fallback", "passthrough"):
        raw = parts.get(TAG_RAW)
        if raw is None or len(raw) != 4 * n:
            raise CorruptPackage(f"{layer.name}: raw section missing or mis-sized")
        layer.raw = np.frombuffer(raw, dtype="<f4").copy()
        TensorEntry(layer.original_shape, layer.kind, layer.raw)  # validates kind/shape
        return layer
    if layer.mode != "inr" or TAG_META not in parts or TAG_OUTLIERS not in parts:
        raise CorruptPackage(f"{layer.name}: incomplete INR layer")
    meta = json.loads(parts[TAG_META].decode("utf-8"))
    layer.arch = ArchSpec.from_dict(meta["arch"])
    layer.grid = tuple(meta["grid"])
    layer.norm = NormParams(float(meta["norm"]["w_min"]), float(meta["norm"]["w_max"]))
    layer.norm_extrema = meta.get("norm_extrema", "body")
    layer.outliers = OutlierDict.from_bytes(parts[TAG_OUTLIERS], meta.get("outlier_fraction", 0.01))
    shapes = [s for _, s in layer.arch.layer_shapes()]
    if TAG_INR_QUANT in parts:
        decoded = decode_quant_params(parts[TAG_INR_QUANT])
        if [s for s, _ in decoded] != shapes:
            raise CorruptPackage(f"{layer.name}: quantized tensors do not match the architecture")
        layer.quantized = [b for _, b in decoded]
    elif TAG_INR_F32 in parts:
        params = decode_f32_params(parts[TAG_INR_F32])
        if [p.shape for p in params] != shapes:
            raise CorruptPackage(f"{layer.name}: INR tensors do not match the architecture")
        layer.inr_params = params
    else:
        raise CorruptPackage(f"{layer.name}: no INR parameter section")
    return layer
