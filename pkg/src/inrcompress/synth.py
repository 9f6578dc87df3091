"""Seeded synthetic weight archives for desk-scale runs.

The default archive holds one 64x64x3x3 convolution kernel and one 512x256
linear matrix with N(0, 0.02^2) entries, plus planted +/-0.5 outliers at 1%
of the positions of each tensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .preprocess import outlier_count
from .rng import SeededRng
from .tensor_store import TensorArchive, TensorEntry, build_archive


@dataclass(frozen=True)
class SynthLayer:
    name: str
    shape: tuple[int, ...]
    kind: str


DEFAULT_LAYERS = (
    SynthLayer("features.conv.weight", (64, 64, 3, 3), "conv"),
    SynthLayer("classifier.linear.weight", (512, 256), "linear"),
)
WEIGHT_STD = 0.02
OUTLIER_MAGNITUDE = 0.5
OUTLIER_FRACTION = 0.01


def synth_tensor(shape, rng: SeededRng, std: float = WEIGHT_STD,
                 outlier_fraction: float = OUTLIER_FRACTION,
                 outlier_magnitude: float = OUTLIER_MAGNITUDE) -> np.ndarray:
    n = int(np.prod(shape))
    w = rng.normal(n, scale=std)
    if outlier_fraction > 0:
        k = outlier_count(n, outlier_fraction)
        where = rng.permutation(n)[:k]
        signs = np.where(rng.uniform(size=k) < 0.5, -1.0, 1.0)
        w[where] = signs * outlier_magnitude
    return w.reshape(shape).astype(np.float32)


def synth_archive(seed: int = 0, layers=DEFAULT_LAYERS, **kw) -> TensorArchive:
    rng = SeededRng(seed)
    items = []
    for layer in layers:
        w = synth_tensor(layer.shape, rng.child(layer.name), **kw)
        items.append((layer.name, TensorEntry.from_array(w, kind=layer.kind)))
    return build_archive(items)
