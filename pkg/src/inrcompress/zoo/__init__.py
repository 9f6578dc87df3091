"""Executable compression mappings, their neural counterparts, and bound checks."""

from .classical import (
    ErgodicCode,
    LatticeCode,
    LowRankPair,
    NotFound,
    SparseVector,
    ergodic_decode,
    ergodic_encode,
    jacobi_svd,
    kd_distance,
    lattice_bound,
    lattice_quantize,
    magnitude_prune,
    orbit_point,
    svd_truncate,
    top_k_support,
    winding_frequencies,
)
from .report import ZooRow, rows_to_csv, rows_to_markdown, run_zoo
from .size import SizeReport, size_report
from .structural import (
    MaskScores,
    RnnParams,
    StaircaseCode,
    bottleneck_fit,
    mask_fit,
    mask_objective,
    rnn_ergodic_fit,
    rnn_rollout,
    staircase_apply,
    staircase_fit,
)
