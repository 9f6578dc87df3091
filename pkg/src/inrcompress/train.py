"""Frequency-aware fitting of an INR to one normalized weight matrix.

The objective is ``alpha * MSE + beta * Grad + psi * Freq`` where Grad sums
squared mismatches of first-order finite differences along both axes and
Freq is the squared L2 distance between unnormalized 2-D spectra.  Training
is full-batch AdamW under a cosine learning-rate schedule that restarts
every ``t_max`` epochs.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import NonFiniteLoss, ShapeMismatch
from .fft import dft2, ifft
from .inr_net import ArchSpec, InrNetwork, backward, forward, init
from .preprocess import coordinate_grid
from .rng import SeededRng
from .tensor_store import ReconMetrics, metrics

log = logging.getLogger(__name__)
LOG_EVERY = 100


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 0.5
    psi: float = 0.1

    def __post_init__(self):
        if min(self.alpha, self.beta, self.psi) < 0:
            raise ValueError("loss weights must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "LossWeights":
        a, b, p = (float(t) for t in text.split(","))
        return cls(a, b, p)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10_000
    lr0: float = 1e-4
    t_max: int = 200
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: LossWeights = field(default_factory=LossWeights)
    restart: bool = True  # cosine schedule restarts every t_max epochs
    focal: bool = False  # focal spectrum weighting on the Freq term
    # activation precision of forward/backward; optimizer state, master
    # parameters and loss terms stay float64 regardless
    precision: str = "float32"

    def __post_init__(self):
        if self.epochs < 1 or not self.lr0 > 0 or self.t_max < 1:
            raise ValueError("epochs >= 1, lr0 > 0 and t_max >= 1 are required")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64, got {self.precision!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainReport:
    final_loss: float
    best_epoch: int
    history: dict[str, np.ndarray]
    final_metrics: ReconMetrics | None
    final_mse: float
    wall_time: float
    retried: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.history["total"])

    def running_best(self) -> np.ndarray:
        return np.minimum.accumulate(self.history["total"])

    def write_csv(self, path) -> None:
        cols = ["epoch", "lr", "total", "mse", "grad", "freq"]
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(cols)
            for e in range(self.epochs_run):
                out.writerow([e] + [repr(float(self.history[c][e])) for c in cols[1:]])


def _check_pair(w_hat, w):
    w_hat = np.asarray(w_hat, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if w_hat.shape != w.shape or w.ndim != 2:
        raise ShapeMismatch(f"shapes {w_hat.shape} and {w.shape}")
    return w_hat, w


def grad_loss(w_hat, w) -> float:
    """Squared mismatch of horizontal and vertical forward differences."""
    w_hat, w = _check_pair(w_hat, w)
    d = w_hat - w
    gh = np.diff(d, axis=1)
    gv = np.diff(d, axis=0)
    return float(np.sum(gh * gh) + np.sum(gv * gv))


def _focal_weights(err: np.ndarray) -> np.ndarray:
    mag = np.abs(err)
    top = mag.max()
    return mag / top if top > 0 else np.ones_like(mag)


def freq_loss(w_hat, w, focal: bool = False) -> float:
    """``|| DFT2(w_hat) - DFT2(w) ||^2`` with the unnormalized transform."""
    w_hat, w = _check_pair(w_hat, w)
    err = dft2(w_hat - w)
    power = err.real ** 2 + err.imag ** 2
    if focal:
        power = _focal_weights(err) * power
    return float(np.sum(power))


def mse_loss(w_hat, w) -> float:
    w_hat, w = _check_pair(w_hat, w)
    d = w_hat - w
    return float(np.mean(d * d))


def loss_terms(w_hat, w, weights: LossWeights, focal: bool = False):
    """Per-term values and the exact gradient of the weighted total w.r.t. ``w_hat``.

    Returns ``(total, {"mse", "grad", "freq"}, residual_grad)``.
    """
    w_hat, w = _check_pair(w_hat, w)
    rows, cols = w.shape
    n = w.size
    d = w_hat - w

    l_mse = float(np.mean(d * d))
    resid = (2.0 * weights.alpha / n) * d

    gh = np.diff(d, axis=1)
    gv = np.diff(d, axis=0)
    l_grad = float(np.sum(gh * gh) + np.sum(gv * gv))
    if weights.beta:
        # adjoint of the forward-difference operator
        c = 2.0 * weights.beta
        resid[:, 1:] += c * gh
        resid[:, :-1] -= c * gh
        resid[1:, :] += c * gv
        resid[:-1, :] -= c * gv

    err = dft2(d)
    power = err.real ** 2 + err.imag ** 2
    if focal:
        fw = _focal_weights(err)
        l_freq = float(np.sum(fw * power))
        if weights.psi:
            # weights are treated as constants, as in focal-frequency training
            back = ifft(ifft(fw * err, axis=0), axis=1).real
            resid += (2.0 * weights.psi * n) * back
    else:
        l_freq = float(np.sum(power))
        if weights.psi:
            # Parseval: d/dD ||DFT2 D||^2 = 2 H W D
            resid += (2.0 * weights.psi * n) * d

    total = weights.alpha * l_mse + weights.beta * l_grad + weights.psi * l_freq
    return total, {"mse": l_mse, "grad": l_grad, "freq": l_freq}, resid


def total_loss(w_hat, w, weights: LossWeights = LossWeights()):
    """``(value, residual_grad)`` of the frequency-aware objective."""
    total, _, resid = loss_terms(w_hat, w, weights)
    return total, resid


@dataclass
class AdamState:
    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adamw_step(params, grads, state: AdamState, lr: float, cfg: TrainConfig = TrainConfig()):
    """One AdamW update, in place.  Decay ``p -= lr * wd * p`` precedes the moment step."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("params, grads and optimizer state differ in length")
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatch(f"param {p.shape} vs grad {np.shape(g)}")
        if cfg.weight_decay:
            p *= 1.0 - lr * cfg.weight_decay
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
    return params, state


def cosine_lr(epoch: int, cfg: TrainConfig) -> float:
    phase = epoch % cfg.t_max if cfg.restart else min(epoch, cfg.t_max)
    return 0.5 * cfg.lr0 * (1.0 + math.cos(math.pi * phase / cfg.t_max))


def _safe_metrics(w, w_hat) -> ReconMetrics | None:
    try:
        return metrics(w, w_hat)
    except ValueError:
        return None


def _fit_once(w_norm: np.ndarray, spec: ArchSpec, cfg: TrainConfig, progress=None):
    rows, cols = w_norm.shape
    grid = coordinate_grid(rows, cols)
    net = init(spec, SeededRng(cfg.seed))
    state = AdamState.zeros_like(net.params)
    hist = {k: np.zeros(cfg.epochs) for k in ("lr", "total", "mse", "grad", "freq")}
    best = math.inf
    best_epoch = 0
    best_params = [p.copy() for p in net.params]
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg)
        y, tape = forward(net, grid, dtype=cfg.precision)
        total, terms, resid = loss_terms(y.reshape(rows, cols), w_norm, cfg.loss, cfg.focal)
        if not math.isfinite(total):
            raise NonFiniteLoss(epoch)
        hist["lr"][epoch] = lr
        hist["total"][epoch] = total
        for k, val in terms.items():
            hist[k][epoch] = val
        if total < best:
            best, best_epoch = total, epoch
            for dst, src in zip(best_params, net.params):
                dst[...] = src
        grads = backward(net, tape, resid.reshape(-1))
        del tape
        adamw_step(net.params, grads, state, lr, cfg)
        if progress is not None:
            progress(epoch, total, terms["mse"])
        if epoch % LOG_EVERY == 0:
            log.info("epoch %d lr %.3g loss %.6g mse %.6g", epoch, lr, total, terms["mse"])
    return InrNetwork(spec, best_params), hist, best, best_epoch


def fit_inr(w_norm, spec: ArchSpec, cfg: TrainConfig = TrainConfig(), progress=None):
    """Fit an INR to ``w_norm`` (an H x W matrix in [-1, 1]).

    Returns the best-loss network seen during training and a TrainReport.
    A non-finite loss triggers one retry at ``lr0 / 10``; a second failure
    propagates as NonFiniteLoss.
    """
    w_norm = np.asarray(w_norm, dtype=np.float64)
    if w_norm.ndim != 2:
        raise ShapeMismatch(f"expected a matrix, got shape {w_norm.shape}")
    start = time.perf_counter()
    retried = False
    try:
        net, hist, best, best_epoch = _fit_once(w_norm, spec, cfg, progress)
    except NonFiniteLoss as exc:
        log.warning("non-finite loss at epoch %d; retrying with lr0/10", exc.epoch)
        retried = True
        cfg = replace(cfg, lr0=cfg.lr0 / 10.0)
        net, hist, best, best_epoch = _fit_once(w_norm, spec, cfg, progress)
    y, _ = forward(net, coordinate_grid(*w_norm.shape), keep_tape=False)
    w_hat = y.reshape(w_norm.shape)
    report = TrainReport(
        final_loss=best,
        best_epoch=best_epoch,
        history=hist,
        final_metrics=_safe_metrics(w_norm, w_hat),
        final_mse=mse_loss(w_hat, w_norm),
        wall_time=time.perf_counter() - start,
        retried=retried,
    )
    return net, report
