"""Data-free compression of network weights with implicit neural representations.

Each large weight tensor is flattened to a matrix, stripped of its extreme
values (kept losslessly), normalized, and replaced by a small sinusoidal
coordinate network trained to reproduce it.
"""

from .errors import InrCompressError
from .inr_net import ArchSpec, InrNetwork, backward, forward, init, size_inr
from .package import LayerPackage, ModelPackage
from .pipeline import (
    PipelineConfig,
    VerifyReport,
    compress_layer,
    compress_model,
    decompress_layer,
    decompress_model,
    plan,
    requantize,
    verify,
)
from .preprocess import OutlierDict, coordinate_grid, extract_outliers, normalize, patch_outliers
from .quantizer import QuantizedBlob, dequantize, quantize
from .synth import synth_archive
from .tensor_store import TensorArchive, TensorEntry, load_archive, metrics, save_archive
from .train import LossWeights, TrainConfig, fit_inr, total_loss

__version__ = "0.1.0"
