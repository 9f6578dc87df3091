"""Bound-verification report: one row per mapping, measured against its bound."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from ..rng import SeededRng
from .classical import (
    ErgodicCode,
    kd_distance,
    lattice_bound,
    lattice_quantize,
    magnitude_prune,
    svd_truncate,
    ergodic_decode,
    ergodic_encode,
    orbit_point,
    winding_frequencies,
)
from .size import size_report
from .structural import StaircaseCode, bottleneck_fit, mask_fit, mask_objective, rnn_ergodic_fit, staircase_fit

REPORT_COLUMNS = ("case", "check", "bound", "measured", "status")


@dataclass(frozen=True)
class ZooRow:
    case: str
    check: str
    bound: float
    measured: float
    passed: bool

    @property
    def status(self) -> str:
        return "pass" if self.passed else "fail"

    def as_tuple(self) -> tuple:
        return (self.case, self.check, repr(self.bound), repr(self.measured), self.status)


def _le(case, check, measured, bound) -> ZooRow:
    return ZooRow(case, check, float(bound), float(measured), bool(measured <= bound))


def _lt(case, check, measured, bound) -> ZooRow:
    return ZooRow(case, check, float(bound), float(measured), bool(measured < bound))


def _size_row(case, artifact, dim) -> ZooRow:
    return _lt(case, "size_bits < 32*D", size_report(artifact).total_bits, 32 * dim)


def low_rank_rows(rng: SeededRng, trials: int = 20) -> list[ZooRow]:
    worst_formula = 0.0
    worst_direct = 0.0
    pair = None
    for _ in range(trials):
        w = rng.normal((8, 6))
        pair, err = svd_truncate(w, 2)
        tail = math.sqrt(float(np.sum(np.linalg.svd(w, compute_uv=False)[2:] ** 2)))
        worst_formula = max(worst_formula, abs(err - tail))
        worst_direct = max(worst_direct, abs(err - float(np.linalg.norm(w - pair.product()))))
    return [
        _le("low_rank", "abs(err - tail singular energy)", worst_formula, 1e-10),
        _le("low_rank", "abs(err - Frobenius residual)", worst_direct, 1e-10),
        _size_row("low_rank", pair, 48),
    ]


def lattice_rows(rng: SeededRng, trials: int = 2000, dim: int = 8) -> list[ZooRow]:
    rows = []
    code = None
    for bits in (2, 4, 6, 8):
        worst = 0.0
        for _ in range(trials):
            theta = rng.uniform(-1.0, 1.0, dim)
            code, err = lattice_quantize(theta, bits, 1.0)
            worst = max(worst, err / lattice_bound(1.0, dim, bits))
        rows.append(_le("quantization", f"err / bound, b={bits}", worst, 1.0))
    step = 2.0 / 16
    centers = -1.0 + step * rng.integers(0, 17, dim)
    _, err = lattice_quantize(centers, 4, 1.0)
    rows.append(_le("quantization", "abs(err - bound) at hypercube centers",
                    abs(err - lattice_bound(1.0, dim, 4)), 1e-12))
    rows.append(_size_row("quantization", code, dim))
    return rows


def pruning_rows(rng: SeededRng, trials: int = 50, dim: int = 12) -> list[ZooRow]:
    worst = 0.0
    for _ in range(trials):
        theta = rng.normal(dim)
        tail = np.sort(np.abs(theta))[::-1]
        for k in range(dim + 1):
            _, err2 = magnitude_prune(theta, k)
            worst = max(worst, abs(err2 - math.fsum(float(x) ** 2 for x in tail[k:])))
    sparse, _ = magnitude_prune(rng.normal(dim), 3)
    return [_le("pruning", "abs(err2 - discarded energy)", worst, 0.0), _size_row("pruning", sparse, dim)]


def ergodic_rows(rng: SeededRng, targets: int = 100, eps: float = 0.05,
                 k_max: int = 100_000) -> list[ZooRow]:
    rows = []
    for dim in (1, 2):
        worst_k = 0
        worst_gap = 0.0
        code = None
        for _ in range(targets):
            theta = rng.uniform(0.0, 1.0, dim)
            code = ergodic_encode(theta, eps, k_max)
            if not isinstance(code, ErgodicCode):
                worst_k = k_max + 1
                continue
            worst_k = max(worst_k, code.k)
            worst_gap = max(worst_gap, float(np.linalg.norm(ergodic_decode(code) - theta)))
        rows.append(_le("ergodic", f"max orbit index, D={dim}", worst_k, k_max))
        rows.append(_lt("ergodic", f"max decode error, D={dim}", worst_gap, eps))
        if isinstance(code, ErgodicCode):
            rows.append(_size_row("ergodic", code, dim))
    return rows


def distillation_rows(rng: SeededRng) -> list[ZooRow]:
    out = rng.normal(16)
    return [
        _le("distillation", "dist(x, x)", kd_distance(out, out), 0.0),
        _le("distillation", "abs(dist(e1, 0) - 1)", abs(kd_distance(np.eye(4)[0], np.zeros(4)) - 1.0), 0.0),
    ]


def bottleneck_rows(rng: SeededRng, trials: int = 3, steps: int = 20_000) -> list[ZooRow]:
    worst = 0.0
    pair = None
    for i in range(trials):
        w = rng.normal((10, 8))
        _, err = svd_truncate(w, 3)
        pair, hist = bottleneck_fit(w, 3, steps, rng.child(f"bottleneck{i}"), tol=1e-13)
        worst = max(worst, abs(hist[-1] / err ** 2 - 1.0))
    return [_le("bottleneck", "relative gap to rank-r optimum", worst, 1e-3), _size_row("bottleneck", pair, 80)]


def staircase_rows(rng: SeededRng, trials: int = 100, dim: int = 16, bits: int = 3) -> list[ZooRow]:
    worst = -math.inf
    code = None
    for _ in range(trials):
        theta = rng.normal(dim)
        scale, zero, err = staircase_fit(theta, bits)
        _, lat = lattice_quantize(theta, bits, float(np.max(np.abs(theta))))
        worst = max(worst, err - lat)
        code = StaircaseCode(np.zeros(dim, dtype=np.int64), bits, scale, zero)
    return [_le("staircase", "err - lattice err", worst, 0.0), _size_row("staircase", code, dim)]


def mask_rows(rng: SeededRng, trials: int = 20, dim: int = 10, k: int = 3) -> list[ZooRow]:
    from itertools import combinations

    mismatches = 0
    scores = None
    for _ in range(trials):
        theta = rng.normal(dim)
        scores, support = mask_fit(theta, k)
        best, best_sup = math.inf, None
        for sup in combinations(range(dim), k):
            m = np.zeros(dim)
            m[list(sup)] = 1.0
            val = mask_objective(theta, m)
            if val < best:
                best, best_sup = val, sup
        mismatches += tuple(support.tolist()) != best_sup
    return [_le("mask", "supports differing from exhaustive optimum", mismatches, 0),
            _size_row("mask", scores, dim)]


def recurrent_rows(rng: SeededRng, steps: int = 20_000) -> list[ZooRow]:
    alpha = winding_frequencies(1)
    traj = np.array([orbit_point(alpha, [0.0], t) for t in range(8)])
    _, loss = rnn_ergodic_fit(traj, 16, steps, rng.child("rnn"))
    return [_lt("recurrent", "trajectory replay loss", loss, 1e-3)]


def run_zoo(seed: int = 0) -> list[ZooRow]:
    rng = SeededRng(seed)
    rows: list[ZooRow] = []
    for name, fn in (
        ("low_rank", low_rank_rows),
        ("quantization", lattice_rows),
        ("pruning", pruning_rows),
        ("ergodic", ergodic_rows),
        ("distillation", distillation_rows),
        ("bottleneck", bottleneck_rows),
        ("staircase", staircase_rows),
        ("mask", mask_rows),
        ("recurrent", recurrent_rows),
    ):
        rows.extend(fn(rng.child(name)))
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(REPORT_COLUMNS)
    for row in rows:
        out.writerow(row.as_tuple())
    return buf.getvalue()


def rows_to_markdown(rows) -> str:
    lines = ["| " + " | ".join(REPORT_COLUMNS) + " |", "|" + "---|" * len(REPORT_COLUMNS)]
    for row in rows:
        lines.append(f"| {row.case} | {row.check} | {row.bound:.3g} | {row.measured:.3g} | {row.status} |")
    return "\n".join(lines) + "\n"
