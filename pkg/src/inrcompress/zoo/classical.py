"""Classical compression mappings with their worst-case error bounds.

Low-rank truncation, uniform lattice quantization, magnitude pruning and
orbit-index encoding on an irrational winding of the torus.  Each returns
its compressed artifact together with the error it incurs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import OutOfBall, RankOutOfRange, ShapeMismatch, SvdNoConvergence

JACOBI_MAX_SWEEPS = 60


@dataclass(frozen=True)
class LowRankPair:
    a: np.ndarray  # n x r
    b: np.ndarray  # r x m

    def __post_init__(self):
        if self.a.ndim != 2 or self.b.ndim != 2 or self.a.shape[1] != self.b.shape[0]:
            raise ShapeMismatch(f"factors {self.a.shape} and {self.b.shape} do not chain")
        n, m = self.a.shape[0], self.b.shape[1]
        if self.rank > min(n, m):
            raise RankOutOfRange(f"rank {self.rank} exceeds min({n}, {m})")

    @property
    def rank(self) -> int:
        return self.a.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.a.shape[0], self.b.shape[1]

    def product(self) -> np.ndarray:
        return self.a @ self.b


def jacobi_svd(w, tol: float = 1e-15, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Returns ``(u, s, vt)`` with singular values in descending order.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeMismatch(f"expected a matrix, got shape {w.shape}")
    transposed = w.shape[0] < w.shape[1]
    a = (w.T if transposed else w).copy()
    m = a.shape[1]
    v = np.eye(m)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(m - 1):
            for q in range(p + 1, m):
                alpha = a[:, p] @ a[:, p]
                beta = a[:, q] @ a[:, q]
                gamma = a[:, p] @ a[:, q]
                if abs(gamma) <= tol * math.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.hypot(1.0, t)
                s = c * t
                ap, aq = a[:, p].copy(), a[:, q]
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            break
    else:
        raise SvdNoConvergence(f"no convergence after {max_sweeps} sweeps")
    sig = np.sqrt(np.einsum("ij,ij->j", a, a))
    order = np.argsort(-sig, kind="stable")
    sig, a, v = sig[order], a[:, order], v[:, order]
    u = np.zeros_like(a)
    nz = sig > 0
    u[:, nz] = a[:, nz] / sig[nz]
    if transposed:
        return v, sig, u.T
    return u, sig, v.T


def svd_truncate(w, r: int) -> tuple[LowRankPair, float]:
    """Best rank-``r`` approximation ``A @ B`` and its Frobenius error.

    The error is the root energy of the discarded singular values.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeMismatch(f"expected a matrix, got shape {w.shape}")
    if not 1 <= r <= min(w.shape):
        raise RankOutOfRange(f"rank {r} outside 1..{min(w.shape)}")
    u, s, vt = jacobi_svd(w)
    pair = LowRankPair(u[:, :r] * s[:r], vt[:r].copy())
    err = math.sqrt(math.fsum(float(x) ** 2 for x in s[r:]))
    return pair, err


@dataclass(frozen=True)
class LatticeCode:
    codes: np.ndarray  # level index per component, 0 .. 2**bits - 1
    bits: int
    radius: float

    @property
    def step(self) -> float:
        return 2.0 * self.radius / (1 << self.bits)

    def values(self) -> np.ndarray:
        return -self.radius + (self.codes + 0.5) * self.step


def lattice_bound(radius: float, dim: int, bits: int) -> float:
    """Worst-case l2 error of the ``bits``-bit lattice on [-R, R]^D."""
    return radius * math.sqrt(dim) / (1 << bits)


def lattice_quantize(theta, bits: int, radius: float) -> tuple[LatticeCode, float]:
    """Round each component to the nearest of ``2**bits`` cell midpoints.

    Levels are ``-R + (k + 1/2) * 2R / 2**bits``; each component is at most
    half a cell away, which gives the ``R * sqrt(D) / 2**bits`` bound.
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if bits < 1:
        raise ValueError("bits must be >= 1")
    if not radius > 0:
        raise ValueError("radius must be positive")
    if theta.size and np.max(np.abs(theta)) > radius:
        raise OutOfBall(f"max |theta| = {np.max(np.abs(theta))} exceeds radius {radius}")
    levels = 1 << bits
    step = 2.0 * radius / levels
    codes = np.clip(np.floor((theta + radius) / step), 0, levels - 1).astype(np.int64)
    code = LatticeCode(codes, bits, float(radius))
    err = float(np.sqrt(np.sum((code.values() - theta) ** 2)))
    return code, err


@dataclass(frozen=True)
class SparseVector:
    indices: np.ndarray
    values: np.ndarray
    length: int

    def dense(self) -> np.ndarray:
        out = np.zeros(self.length)
        out[self.indices] = self.values
        return out


def top_k_support(theta, k: int) -> np.ndarray:
    """Indices of the ``k`` largest |theta|; ties keep the lower index."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if not 0 <= k <= theta.size:
        raise ValueError(f"k={k} outside 0..{theta.size}")
    order = np.argsort(-np.abs(theta), kind="stable")
    return np.sort(order[:k])


def magnitude_prune(theta, k: int) -> tuple[SparseVector, float]:
    """Keep the ``k`` largest-magnitude entries; err2 is the discarded energy."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    keep = top_k_support(theta, k)
    dropped = np.ones(theta.size, dtype=bool)
    dropped[keep] = False
    err2 = math.fsum(float(x) ** 2 for x in theta[dropped])
    return SparseVector(keep, theta[keep].copy(), theta.size), err2


def winding_frequencies(dim: int) -> np.ndarray:
    """Frequencies ``frac(phi_D ** -j)`` with ``phi_D`` the root of x^(D+1) = x + 1.

    For D = 1 this is the golden-ratio fraction 0.618...
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    phi = 2.0
    for _ in range(64):  # fixed-point iteration, contracts quickly
        phi = (1.0 + phi) ** (1.0 / (dim + 1))
    return np.array([math.fmod(phi ** -(j + 1), 1.0) for j in range(dim)])


@dataclass(frozen=True)
class ErgodicCode:
    alpha: np.ndarray
    seed: np.ndarray
    k: int
    scale: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be non-negative")
        if len(set(np.asarray(self.alpha).tolist())) != len(self.alpha):
            raise ValueError("frequencies must be pairwise distinct")

    @property
    def dim(self) -> int:
        return len(self.alpha)

    @property
    def is_canonical(self) -> bool:
        """Zero seed, default frequencies and unit amplitude: only ``k`` needs storing."""
        return (
            not np.any(self.seed)
            and np.array_equal(self.alpha, winding_frequencies(self.dim))
            and np.all(self.scale == 1.0)
            and not np.any(self.offset)
        )


@dataclass(frozen=True)
class NotFound:
    k_max: int
    best_k: int
    best_dist: float


def orbit_point(alpha, seed, k) -> np.ndarray:
    """``T^k(seed)`` for the winding ``T(x) = (x + alpha) mod 1``, in closed form."""
    return np.mod(np.asarray(seed, dtype=np.float64) + k * np.asarray(alpha, dtype=np.float64), 1.0)


def ergodic_encode(theta, eps: float, k_max: int, scale=None, offset=None,
                   chunk: int = 65536) -> ErgodicCode | NotFound:
    """Smallest orbit index ``k <= k_max`` whose decoded point lies within ``eps`` of theta.

    ``theta`` is first mapped to ``(theta - offset) / scale``, which must lie
    in [0, 1)^D; distances are measured after mapping back, in the units of
    ``theta``.  The orbit starts at the origin.
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if not eps > 0 or k_max < 1:
        raise ValueError("eps > 0 and k_max >= 1 are required")
    dim = theta.size
    scale = np.ones(dim) if scale is None else np.asarray(scale, dtype=np.float64).reshape(dim)
    offset = np.zeros(dim) if offset is None else np.asarray(offset, dtype=np.float64).reshape(dim)
    target = (theta - offset) / scale
    if np.any(target < 0) or np.any(target >= 1):
        raise OutOfBall("scaled target must lie in [0, 1)^D")
    alpha = winding_frequencies(dim)
    seed = np.zeros(dim)
    best_k, best_d = 0, math.inf
    for start in range(0, k_max + 1, chunk):
        ks = np.arange(start, min(start + chunk, k_max + 1))
        pts = np.mod(seed + np.multiply.outer(ks, alpha), 1.0)
        d = np.sqrt(np.sum(((pts - target) * scale) ** 2, axis=1))
        hit = np.flatnonzero(d < eps)
        if hit.size:
            return ErgodicCode(alpha, seed, int(ks[hit[0]]), scale, offset)
        i = int(np.argmin(d))
        if d[i] < best_d:
            best_k, best_d = int(ks[i]), float(d[i])
    return NotFound(k_max, best_k, best_d)


def ergodic_decode(code: ErgodicCode) -> np.ndarray:
    return code.offset + code.scale * orbit_point(code.alpha, code.seed, code.k)


def kd_distance(teacher_out, student_out) -> float:
    """Euclidean distance between teacher and student outputs."""
    t = np.asarray(teacher_out, dtype=np.float64).reshape(-1)
    s = np.asarray(student_out, dtype=np.float64).reshape(-1)
    if t.shape != s.shape:
        raise ShapeMismatch(f"outputs of length {t.size} and {s.size}")
    return float(np.sqrt(np.sum((t - s) ** 2)))
