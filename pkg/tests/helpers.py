import numpy as np

from inrcompress.pipeline import PipelineConfig
from inrcompress.tensor_store import TensorEntry, build_archive
from inrcompress.train import TrainConfig


def smooth_matrix(rows, cols, seed=0):
    """A low-frequency pattern with a few planted spikes."""
    x = np.linspace(-1, 1, rows)[:, None]
    y = np.linspace(-1, 1, cols)[None, :]
    w = 0.02 * np.sin(2.0 * x + 1.5 * y) + 0.01 * np.cos(3.0 * x * y)
    spikes = np.random.default_rng(seed).choice(rows * cols, 4, replace=False)
    w.reshape(-1)[spikes] = [0.5, -0.5, 0.4, -0.45]
    return w.astype(np.float32)


def small_archive():
    return build_archive([
        ("a.weight", TensorEntry.from_array(smooth_matrix(24, 20), "linear")),
        ("b.weight", TensorEntry.from_array(smooth_matrix(8, 3, 1).reshape(8, 1, 3), "conv")),
        ("bn.weight", TensorEntry.from_array(np.linspace(0.5, 1.5, 8), "norm")),
        ("fc.bias", TensorEntry.from_array(np.linspace(-1, 1, 10), "bias")),
        ("flat.weight", TensorEntry.from_array(np.linspace(-1, 1, 30), "linear")),
    ])


def quick_config(**kw):
    train = TrainConfig(epochs=kw.pop("epochs", 150), lr0=kw.pop("lr", 1e-3))
    return PipelineConfig(min_bytes=kw.pop("min_bytes", 0), ratio=kw.pop("ratio", 0.5), train=train, **kw)
