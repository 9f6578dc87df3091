import csv
import math

import numpy as np
import pytest

from inrcompress import train as train_mod
from inrcompress.errors import NonFiniteLoss, ShapeMismatch
from inrcompress.inr_net import ArchSpec, width_pattern
from inrcompress.train import (
    AdamState,
    LossWeights,
    TrainConfig,
    adamw_step,
    cosine_lr,
    fit_inr,
    freq_loss,
    grad_loss,
    loss_terms,
    mse_loss,
    total_loss,
)


def naive_dft2(m):
    h, w = m.shape
    fh = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    fw = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return fh @ m @ fw


def _fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f(x)
        x[idx] = old - h
        down = f(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def test_terms_against_direct_formulas(rng):
    w_hat, w = rng.normal(size=(5, 6)), rng.normal(size=(5, 6))
    d = w_hat - w
    assert mse_loss(w_hat, w) == pytest.approx(np.mean(d ** 2))
    direct = sum((d[i, j + 1] - d[i, j]) ** 2 for i in range(5) for j in range(5))
    direct += sum((d[i + 1, j] - d[i, j]) ** 2 for i in range(4) for j in range(6))
    assert grad_loss(w_hat, w) == pytest.approx(direct, rel=1e-12)
    assert freq_loss(w_hat, w) == pytest.approx(np.sum(np.abs(naive_dft2(d)) ** 2), rel=1e-12)


@pytest.mark.parametrize("shape", [(3, 4), (1, 7), (6, 1), (17, 23)])
def test_parseval_identity(shape, rng):
    w_hat, w = rng.normal(size=shape), rng.normal(size=shape)
    sse = np.sum((w_hat - w) ** 2)
    assert freq_loss(w_hat, w) == pytest.approx(shape[0] * shape[1] * sse, rel=1e-10)


@pytest.mark.parametrize("weights", [LossWeights(), LossWeights(0.3, 0.0, 0.0), LossWeights(0.0, 1.0, 0.0),
                                     LossWeights(0.0, 0.0, 1.0)])
def test_residual_gradient(weights, rng):
    w = rng.normal(size=(3, 4))
    w_hat = rng.normal(size=(3, 4))
    _, resid = total_loss(w_hat, w, weights)
    fd = _fd_grad(lambda x: total_loss(x, w, weights)[0], w_hat.copy())
    assert np.allclose(resid, fd, rtol=1e-6, atol=1e-8)


def test_focal_gradient_with_frozen_weights(rng):
    w = rng.normal(size=(4, 5))
    w_hat = rng.normal(size=(4, 5))
    weights = LossWeights(0.0, 0.0, 1.0)
    _, _, resid = loss_terms(w_hat, w, weights, focal=True)
    err = naive_dft2(w_hat - w)
    fw = np.abs(err) / np.abs(err).max()

    def frozen(x):
        e = naive_dft2(x - w)
        return float(np.sum(fw * np.abs(e) ** 2))

    fd = _fd_grad(frozen, w_hat.copy())
    assert np.allclose(resid, fd, rtol=1e-6, atol=1e-8)


def test_shape_checks():
    with pytest.raises(ShapeMismatch):
        mse_loss(np.zeros((2, 3)), np.zeros((3, 2)))


def test_adamw_step_by_hand():
    cfg = TrainConfig(lr0=0.1, weight_decay=0.01)
    p = [np.array([1.0, -2.0])]
    g = [np.array([0.5, 0.25])]
    state = AdamState.zeros_like(p)
    adamw_step(p, g, state, 0.1, cfg)
    # step 1: bias-corrected m = g, v = g^2, so the update is lr * sign(g) (up to eps)
    decayed = np.array([1.0, -2.0]) * (1 - 0.1 * 0.01)
    expect = decayed - 0.1 * np.array([0.5, 0.25]) / (np.array([0.5, 0.25]) + 1e-8)
    assert np.allclose(p[0], expect, atol=1e-15)
    adamw_step(p, g, state, 0.1, cfg)
    m = 0.9 * 0.1 * g[0] + 0.1 * g[0]
    v = 0.999 * 0.001 * g[0] ** 2 + 0.001 * g[0] ** 2
    mh, vh = m / (1 - 0.81), v / (1 - 0.999 ** 2)
    expect = expect * (1 - 0.001) - 0.1 * mh / (np.sqrt(vh) + 1e-8)
    assert np.allclose(p[0], expect, atol=1e-15)


def test_cosine_schedule():
    cfg = TrainConfig(lr0=1e-3, t_max=200)
    assert cosine_lr(0, cfg) == 1e-3
    assert cosine_lr(100, cfg) == pytest.approx(5e-4)
    assert cosine_lr(200, cfg) == 1e-3  # restart
    assert cosine_lr(199, cfg) < 1e-6
    single = TrainConfig(lr0=1e-3, t_max=200, restart=False)
    assert cosine_lr(500, single) == pytest.approx(0.0, abs=1e-20)


def test_fit_reduces_loss_on_smooth_target():
    x = np.linspace(-1, 1, 24)
    target = 0.8 * np.sin(np.pi * np.add.outer(x, 0.5 * x))
    spec = ArchSpec(width_pattern(32), bands=3)
    net, rep = fit_inr(target, spec, TrainConfig(epochs=300, lr0=1e-3, seed=1))
    assert rep.final_loss < 0.2 * rep.history["total"][0]
    assert rep.final_loss == rep.history["total"][rep.best_epoch]
    assert rep.epochs_run == 300 and rep.final_metrics is not None


def test_constant_target_is_learned():
    spec = ArchSpec(width_pattern(32), bands=2)
    target = np.full((8, 8), 0.4)
    _, rep = fit_inr(target, spec, TrainConfig(epochs=400, lr0=1e-3, seed=0))
    assert rep.final_mse < 1e-4


def test_fit_is_deterministic():
    target = np.random.default_rng(0).uniform(-1, 1, (6, 7))
    spec = ArchSpec(width_pattern(32), bands=1)
    cfg = TrainConfig(epochs=20, seed=3)
    a, ra = fit_inr(target, spec, cfg)
    b, rb = fit_inr(target, spec, cfg)
    assert all(np.array_equal(x, y) for x, y in zip(a.params, b.params))
    assert np.array_equal(ra.history["total"], rb.history["total"])


def test_non_finite_loss_retries_then_raises(monkeypatch):
    calls = []
    real = train_mod.loss_terms

    def poisoned(w_hat, w, weights, focal=False):
        total, terms, resid = real(w_hat, w, weights, focal)
        calls.append(1)
        return math.nan, terms, resid

    monkeypatch.setattr(train_mod, "loss_terms", poisoned)
    spec = ArchSpec(width_pattern(32))
    with pytest.raises(NonFiniteLoss):
        fit_inr(np.eye(4), spec, TrainConfig(epochs=5))
    assert len(calls) == 2  # first attempt and the lr0/10 retry each fail at epoch 0


def test_report_csv(tmp_path):
    spec = ArchSpec(width_pattern(32))
    _, rep = fit_inr(np.eye(4), spec, TrainConfig(epochs=3))
    path = tmp_path / "loss.csv"
    rep.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["epoch", "lr", "total", "mse", "grad", "freq"] and len(rows) == 4


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(precision="float16")
    assert LossWeights.parse("1,0.5,0.1") == LossWeights()
