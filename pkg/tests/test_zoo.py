import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inrcompress.errors import OutOfBall, RankOutOfRange, ShapeMismatch
from inrcompress.quantizer import quantize
from inrcompress.rng import SeededRng
from inrcompress.zoo import (
    ErgodicCode,
    LowRankPair,
    MaskScores,
    NotFound,
    SizeReport,
    bottleneck_fit,
    ergodic_decode,
    ergodic_encode,
    jacobi_svd,
    kd_distance,
    lattice_bound,
    lattice_quantize,
    magnitude_prune,
    mask_fit,
    mask_objective,
    rnn_ergodic_fit,
    rows_to_csv,
    rows_to_markdown,
    size_report,
    staircase_fit,
    svd_truncate,
    winding_frequencies,
)
from inrcompress.zoo.structural import rnn_rollout


def jacobi_eigenvalues(a, sweeps=100):
    """Classical two-sided Jacobi eigenvalue iteration for a symmetric matrix."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= 1e-20 * np.linalg.norm(a):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) <= 1e-20 * math.sqrt(abs(a[p, p] * a[q, q])):
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                r = np.eye(n)
                r[p, p] = r[q, q] = c
                r[p, q], r[q, p] = s, -s
                a = r.T @ a @ r
    return np.sort(np.diag(a))[::-1]


# low rank ---------------------------------------------------------------

def test_svd_diagonal_example():
    pair, err = svd_truncate(np.diag([3.0, 2.0, 1.0]), 2)
    assert err == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(pair.product(), np.diag([3.0, 2.0, 0.0]), atol=1e-15)


def test_svd_full_rank_reproduces(rng):
    w = rng.normal(size=(5, 7))
    pair, err = svd_truncate(w, 5)
    assert err <= 1e-10 and np.allclose(pair.product(), w, atol=1e-12)


def test_svd_against_eigen_oracle(rng):
    for _ in range(5):
        w = rng.normal(size=(6, 4))
        _, err = svd_truncate(w, 2)
        eig = jacobi_eigenvalues(w.T @ w)
        assert err == pytest.approx(math.sqrt(eig[2] + eig[3]), rel=1e-8)


@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_jacobi_svd_factorization(n, m, seed):
    w = np.random.default_rng(seed).normal(size=(n, m))
    u, s, vt = jacobi_svd(w)
    assert np.allclose((u * s) @ vt, w, atol=1e-12)
    assert np.all(np.diff(s) <= 0)
    assert np.allclose(s, np.linalg.svd(w, compute_uv=False), atol=1e-12)
    k = min(n, m)
    assert np.allclose(vt @ vt.T, np.eye(k), atol=1e-12)


def test_svd_rank_errors(rng):
    with pytest.raises(RankOutOfRange):
        svd_truncate(rng.normal(size=(3, 4)), 0)
    with pytest.raises(RankOutOfRange):
        svd_truncate(rng.normal(size=(3, 4)), 4)
    with pytest.raises(RankOutOfRange):
        LowRankPair(np.zeros((2, 3)), np.zeros((3, 2)))


# lattice ---------------------------------------------------------------

def test_lattice_point_has_zero_error():
    # midpoints of the 2-bit cells on [-1, 1]
    _, err = lattice_quantize([-0.75, 0.25, 0.75], 2, 1.0)
    assert err == 0.0


def test_lattice_center_attains_bound():
    # one bit on [-1, 1]: levels -0.5 and 0.5, so 0 is the hypercube center
    _, err = lattice_quantize([0.0], 1, 1.0)
    assert err == 0.5 == lattice_bound(1.0, 1, 1)
    _, err = lattice_quantize([-0.5], 1, 1.0)
    assert err == 0.0
    _, err = lattice_quantize([-1.0, 1.0, 0.0, 0.5], 2, 1.0)
    assert err == pytest.approx(lattice_bound(1.0, 4, 2), abs=1e-15)


@given(st.integers(1, 10), st.integers(1, 10), st.floats(0.1, 10.0), st.integers(0, 2**32 - 1))
def test_lattice_bound_property(dim, bits, radius, seed):
    theta = np.random.default_rng(seed).uniform(-radius, radius, dim)
    code, err = lattice_quantize(theta, bits, radius)
    assert err <= lattice_bound(radius, dim, bits) * (1 + 1e-12)
    assert code.codes.min() >= 0 and code.codes.max() < 2 ** bits


def test_lattice_out_of_ball():
    with pytest.raises(OutOfBall):
        lattice_quantize([1.5], 3, 1.0)


# pruning and masks ------------------------------------------------------

def test_prune_examples():
    sparse, err2 = magnitude_prune([3.0, -4.0, 1.0], 2)
    assert sparse.indices.tolist() == [0, 1] and err2 == 1.0
    _, err2 = magnitude_prune([3.0, -4.0, 1.0], 3)
    assert err2 == 0.0


def test_prune_against_sort_oracle(rng):
    for _ in range(10):
        theta = rng.normal(size=12)
        tail = np.sort(np.abs(theta))[::-1]
        for k in range(13):
            sparse, err2 = magnitude_prune(theta, k)
            assert err2 == math.fsum(x * x for x in tail[k:])
            assert np.sum((sparse.dense() - theta) ** 2) == pytest.approx(err2, rel=1e-14, abs=1e-300)


def test_mask_matches_exhaustive_search(rng):
    for _ in range(10):
        theta = rng.normal(size=10)
        _, support = mask_fit(theta, 3)
        best = min(combinations(range(10), 3),
                   key=lambda s: mask_objective(theta, np.isin(np.arange(10), s)))
        assert tuple(support.tolist()) == best
        sparse, _ = magnitude_prune(theta, 3)
        assert np.array_equal(sparse.indices, support)


def test_mask_ties_and_full():
    _, support = mask_fit([1.0, 1.0, 0.0], 1)
    assert support.tolist() == [0]
    _, support = mask_fit([0.1, -0.2, 0.3], 3)
    assert support.tolist() == [0, 1, 2]
    with pytest.raises(ValueError):
        MaskScores(np.ones(3), 4)


# ergodic winding -------------------------------------------------------

def test_winding_frequencies():
    assert winding_frequencies(1)[0] == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-15)
    a = winding_frequencies(2)
    phi = 1.324717957244746  # plastic number, root of x^3 = x + 1
    assert np.allclose(a, [1 / phi, 1 / phi ** 2], atol=1e-14)


def test_encode_seed_target_is_k0():
    code = ergodic_encode([0.0, 0.0], 0.01, 10)
    assert isinstance(code, ErgodicCode) and code.k == 0
    assert np.array_equal(ergodic_decode(code), [0.0, 0.0])


def test_encode_matches_brute_force_scan(rng):
    alpha = winding_frequencies(1)[0]
    for _ in range(20):
        t = rng.uniform()
        code = ergodic_encode([t], 0.05, 20)
        scan = next(k for k in range(21) if abs(math.fmod(k * alpha, 1.0) - t) < 0.05)
        assert code.k == scan


def test_decode_within_eps_and_replayable(rng):
    for dim in (1, 2, 3):
        theta = rng.uniform(size=dim)
        code = ergodic_encode(theta, 0.05, 200_000)
        assert np.linalg.norm(ergodic_decode(code) - theta) < 0.05
        assert np.array_equal(ergodic_decode(code), ergodic_decode(code))


def test_encode_with_amplitude():
    theta = np.array([-3.0, 5.0])
    code = ergodic_encode(theta, 0.5, 100_000, scale=[10.0, 10.0], offset=[-5.0, 0.0])
    assert np.linalg.norm(ergodic_decode(code) - theta) < 0.5
    assert not code.is_canonical


def test_not_found_is_a_value():
    res = ergodic_encode([0.5, 0.5], 1e-9, 10)
    assert isinstance(res, NotFound) and res.k_max == 10
    with pytest.raises(OutOfBall):
        ergodic_encode([1.2], 0.1, 10)


# distillation ----------------------------------------------------------

def test_kd_distance(rng):
    x = rng.normal(size=7)
    y = rng.normal(size=7)
    assert kd_distance(x, x) == 0.0
    assert kd_distance([1.0, 0.0], [0.0, 0.0]) == 1.0
    assert kd_distance(x, y) == pytest.approx(math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y))))
    with pytest.raises(ShapeMismatch):
        kd_distance([1.0], [1.0, 2.0])


# trained counterparts --------------------------------------------------

def test_bottleneck_full_rank_and_determinism(rng):
    w = rng.normal(size=(4, 3))
    pair, hist = bottleneck_fit(w, 3, 5000, SeededRng(0))
    assert hist[-1] < 1e-6
    _, hist2 = bottleneck_fit(w, 3, 5000, SeededRng(0))
    assert np.array_equal(hist, hist2)


def test_bottleneck_reaches_tail_energy():
    _, hist = bottleneck_fit(np.diag([3.0, 2.0, 1.0]), 2, 20_000, SeededRng(1))
    assert hist[-1] == pytest.approx(1.0, rel=1e-3)


def test_staircase_examples():
    s, z, err = staircase_fit([0.0, 1.0], 1)
    assert (s, z, err) == (1.0, 0.0, 0.0)
    theta = 0.3 + 0.25 * np.array([0, 1, 2, 3, 1, 2])
    s, z, err = staircase_fit(theta, 2)
    assert err == pytest.approx(0.0, abs=1e-15)


def test_staircase_beats_lattice_and_uniform(rng):
    for _ in range(50):
        theta = rng.normal(size=20)
        _, _, err = staircase_fit(theta, 3)
        _, lat = lattice_quantize(theta, 3, float(np.max(np.abs(theta))))
        lo, hi = theta.min(), theta.max()
        s = (hi - lo) / 7
        uni = np.sqrt(np.sum((lo + s * np.clip(np.rint((theta - lo) / s), 0, 7) - theta) ** 2))
        assert err <= lat + 1e-12 and err <= uni + 1e-12


def test_rnn_constant_and_deterministic():
    traj = np.full((6, 1), 0.3)
    p, loss = rnn_ergodic_fit(traj, 8, 2000, SeededRng(0))
    assert loss < 1e-6
    _, loss2 = rnn_ergodic_fit(traj, 8, 2000, SeededRng(0))
    assert loss == loss2
    _, ys = rnn_rollout(p, 6)
    assert np.allclose(ys, 0.3, atol=1e-3)


def test_rnn_gradient_matches_finite_differences(rng):
    from inrcompress.zoo.structural import RnnParams, _rnn_loss_grads

    p = RnnParams(rng.normal(size=(4, 4)) * 0.5, rng.normal(size=4), rng.normal(size=(2, 4)),
                  rng.normal(size=2), rng.normal(size=4))
    target = rng.normal(size=(5, 2))
    _, grads = _rnn_loss_grads(p, target)
    for arr, g in zip(p.as_list(), grads):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + 1e-6
            up, _ = _rnn_loss_grads(p, target)
            arr[idx] = old - 1e-6
            down, _ = _rnn_loss_grads(p, target)
            arr[idx] = old
            assert (up - down) / 2e-6 == pytest.approx(g[idx], rel=1e-6, abs=1e-7)


# sizes -----------------------------------------------------------------

def test_size_examples(rng):
    r = size_report(np.zeros(100, dtype=np.float32))
    assert (r.point_bits, r.count, r.total_bits) == (32.0, 100, 3200)
    q = size_report(quantize(rng.normal(size=1000), 6))
    assert q.count == 1000 and q.total_bits == 8 * (13 + 750)
    assert 6.0 < q.point_bits < 6.2
    pair, _ = svd_truncate(rng.normal(size=(8, 6)), 2)
    lr = size_report(pair)
    assert lr.count == 2 * (8 + 6) and lr.total_bits == 32 * 28 + 96


@given(st.integers(0, 10**6), st.integers(1, 10**4))
def test_size_report_invariant(bits, count):
    r = SizeReport.from_bits(bits, count)
    assert math.ceil(r.point_bits * r.count) == r.total_bits


def test_report_rendering():
    from inrcompress.zoo.report import ZooRow

    rows = [ZooRow("a", "x", 1.0, 0.5, True), ZooRow("b", "y", 0.0, 1.0, False)]
    csv_text = rows_to_csv(rows)
    assert csv_text.splitlines()[0] == "case,check,bound,measured,status"
    assert csv_text.splitlines()[2].endswith(",fail")
    assert rows_to_markdown(rows).count("\n") == 4
