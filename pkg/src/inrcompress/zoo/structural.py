"""Trainable neural counterparts of the classical mappings.

A linear bottleneck trained by gradient descent recovers truncated SVD, a
learned staircase activation recovers uniform quantization, a top-k mask
over scores recovers magnitude pruning, and a tanh recurrent network learns
to replay a winding trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import NonFiniteLoss, RankOutOfRange, ShapeMismatch
from ..rng import SeededRng
from ..train import AdamState, TrainConfig, adamw_step
from .classical import LowRankPair, top_k_support


def _adam_cfg(lr: float) -> TrainConfig:
    return TrainConfig(epochs=1, lr0=lr, weight_decay=0.0)


def bottleneck_fit(w, r: int, steps: int, rng: SeededRng, lr: float = 1e-2,
                   tol: float = 0.0) -> tuple[LowRankPair, np.ndarray]:
    """Train ``theta2 @ theta1`` (n x r times r x m) to minimize ``||W - theta2 theta1||_F^2``.

    Plain Adam (no weight decay) under a cosine schedule over ``steps``.
    Stops early once the loss changes by less than ``tol`` relative over
    a 500-step window.  Returns the factors and the per-step loss history.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeMismatch(f"expected a matrix, got shape {w.shape}")
    n, m = w.shape
    if not 1 <= r <= min(n, m):
        raise RankOutOfRange(f"rank {r} outside 1..{min(n, m)}")
    scale = math.sqrt(float(np.sqrt(np.mean(w * w))) / r) or 1.0
    theta2 = rng.normal((n, r), scale=scale)
    theta1 = rng.normal((r, m), scale=scale)
    params = [theta2, theta1]
    state = AdamState.zeros_like(params)
    cfg = _adam_cfg(lr)
    history = []
    for step in range(steps):
        resid = theta2 @ theta1 - w
        loss = float(np.sum(resid * resid))
        if not math.isfinite(loss):
            raise NonFiniteLoss(step)
        history.append(loss)
        if tol and step >= 500 and abs(history[-501] - loss) <= tol * loss:
            break
        g2 = 2.0 * resid @ theta1.T
        g1 = 2.0 * theta2.T @ resid
        step_lr = 0.5 * lr * (1.0 + math.cos(math.pi * step / steps))
        adamw_step(params, [g2, g1], state, step_lr, cfg)
    return LowRankPair(theta2.copy(), theta1.copy()), np.array(history)


@dataclass(frozen=True)
class StaircaseCode:
    codes: np.ndarray
    bits: int
    scale: float
    zero: float

    def values(self) -> np.ndarray:
        return self.zero + self.scale * self.codes


def staircase_apply(theta, bits: int, scale: float, zero: float) -> StaircaseCode:
    """Nearest level ``zero + scale * k`` with k in 0 .. 2**bits - 1."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    top = (1 << bits) - 1
    if scale > 0:
        k = np.clip(np.rint((theta - zero) / scale), 0, top)
    else:
        k = np.zeros(theta.size)
    return StaircaseCode(k.astype(np.int64), bits, float(scale), float(zero))


def _err(theta, code: StaircaseCode) -> float:
    return float(np.sqrt(np.sum((code.values() - theta) ** 2)))


def _regress(theta, codes):
    """Least-squares (scale, zero) for fixed level assignments."""
    k = codes.astype(np.float64)
    if np.ptp(k) == 0:
        return 0.0, float(np.mean(theta))
    scale, zero = np.polyfit(k, theta, 1)
    return float(scale), float(zero)


def staircase_fit(theta, bits: int, refine_iters: int = 50) -> tuple[float, float, float]:
    """Search ``(scale, zero)`` of a ``bits``-bit staircase minimizing the l2 error.

    Candidates are the min-max grids spanning [min, max] in 1 .. 2**bits - 1
    steps plus the symmetric lattice on [-R, R] with R = max|theta|; each is
    refined by alternating nearest-level assignment and least-squares
    regression, which never increases the error.  Returns
    ``(scale, zero, err)``.
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if bits < 1:
        raise ValueError("bits must be >= 1")
    if theta.size == 0:
        return 0.0, 0.0, 0.0
    lo, hi = float(theta.min()), float(theta.max())
    levels = 1 << bits
    cands = [((hi - lo) / steps, lo) for steps in range(1, levels)]
    radius = float(np.max(np.abs(theta)))
    if radius > 0:
        step = 2.0 * radius / levels
        cands.append((step, -radius + 0.5 * step))
    best = (math.inf, 0.0, 0.0)
    for scale, zero in cands:
        code = staircase_apply(theta, bits, scale, zero)
        err = _err(theta, code)
        for _ in range(refine_iters):
            s2, z2 = _regress(theta, code.codes)
            code2 = staircase_apply(theta, bits, s2, z2)
            err2 = _err(theta, code2)
            if not err2 < err:
                break
            scale, zero, code, err = s2, z2, code2, err2
        if err < best[0]:
            best = (err, scale, zero)
    err, scale, zero = best
    return scale, zero, err


@dataclass(frozen=True)
class MaskScores:
    scores: np.ndarray
    k: int

    def __post_init__(self):
        if not 0 <= self.k <= len(self.scores):
            raise ValueError(f"k={self.k} outside 0..{len(self.scores)}")

    @property
    def support(self) -> np.ndarray:
        return top_k_support(self.scores, self.k)

    def mask(self) -> np.ndarray:
        out = np.zeros(len(self.scores))
        out[self.support] = 1.0
        return out


def mask_fit(theta, k: int) -> tuple[MaskScores, np.ndarray]:
    """Scores ``|theta|`` with the hard top-k mask; returns ``(scores, support)``.

    This is the fixed point of a relaxed mask trained on
    ``||theta - mask * theta||^2`` under an l0 budget of ``k``.
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    scores = MaskScores(np.abs(theta), k)
    return scores, scores.support


def mask_objective(theta, mask) -> float:
    theta = np.asarray(theta, dtype=np.float64)
    d = theta - np.asarray(mask) * theta
    return float(np.sum(d * d))


@dataclass
class RnnParams:
    w_rec: np.ndarray  # hidden x hidden
    b_rec: np.ndarray  # hidden
    w_out: np.ndarray  # dim x hidden
    b_out: np.ndarray  # dim
    h0: np.ndarray  # hidden, fixed (not trained)

    def as_list(self) -> list[np.ndarray]:
        return [self.w_rec, self.b_rec, self.w_out, self.b_out]


def rnn_rollout(p: RnnParams, steps: int):
    """Hidden states h_1..h_T and outputs y_1..y_T of the autonomous recurrence."""
    hs = [p.h0]
    ys = []
    for _ in range(steps):
        h = np.tanh(p.w_rec @ hs[-1] + p.b_rec)
        hs.append(h)
        ys.append(p.w_out @ h + p.b_out)
    return hs, np.array(ys)


def _rnn_loss_grads(p: RnnParams, target):
    steps = target.shape[0]
    hs, ys = rnn_rollout(p, steps)
    err = ys - target
    loss = float(np.sum(err * err))
    g_wrec = np.zeros_like(p.w_rec)
    g_brec = np.zeros_like(p.b_rec)
    g_wout = np.zeros_like(p.w_out)
    g_bout = np.zeros_like(p.b_out)
    dh_next = np.zeros_like(p.h0)
    for t in reversed(range(steps)):
        dy = 2.0 * err[t]
        h = hs[t + 1]
        g_wout += np.outer(dy, h)
        g_bout += dy
        dh = p.w_out.T @ dy + dh_next
        da = dh * (1.0 - h * h)
        g_wrec += np.outer(da, hs[t])
        g_brec += da
        dh_next = p.w_rec.T @ da
    return loss, [g_wrec, g_brec, g_wout, g_bout]


def rnn_ergodic_fit(trajectory, hidden: int, steps: int, rng: SeededRng,
                    lr: float = 1e-2) -> tuple[RnnParams, float]:
    """Train a tanh RNN from a fixed initial state to replay ``trajectory``.

    The loss is ``sum_t ||trajectory[t] - y_{t+1}||^2``; gradients come from
    backpropagation through time and updates from Adam under a cosine
    schedule.  Returns the parameters and the final loss.
    """
    target = np.asarray(trajectory, dtype=np.float64)
    if target.ndim == 1:
        target = target[:, None]
    if target.shape[0] < 2 or hidden < 1:
        raise ValueError("trajectory length >= 2 and hidden >= 1 are required")
    dim = target.shape[1]
    bound = 1.0 / math.sqrt(hidden)
    p = RnnParams(
        w_rec=rng.uniform(-bound, bound, (hidden, hidden)),
        b_rec=rng.uniform(-bound, bound, hidden),
        w_out=rng.uniform(-bound, bound, (dim, hidden)),
        b_out=np.zeros(dim),
        h0=rng.uniform(-1.0, 1.0, hidden),
    )
    params = p.as_list()
    state = AdamState.zeros_like(params)
    cfg = _adam_cfg(lr)
    for step in range(steps):
        loss, grads = _rnn_loss_grads(p, target)
        if not math.isfinite(loss):
            raise NonFiniteLoss(step)
        step_lr = 0.5 * lr * (1.0 + math.cos(math.pi * step / steps))
        adamw_step(params, grads, state, step_lr, cfg)
    loss, _ = _rnn_loss_grads(p, target)
    return p, loss
