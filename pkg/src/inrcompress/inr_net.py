"""Frequency-modulated coordinate network with hand-written gradients.

Architecture (all linear maps act as ``y = x @ W.T + b``)::

    h0      = head(P(x))                      P = Fourier features of x
    p_i(x)  = mod_i(x) + omega0               one modulator per hidden layer
    h_{i+1} = sin(p_i(x) * (W_i h_i + b_i))   i = 0..5
    w_hat   = tail(h6)

Parameters are kept as a flat list in the fixed serialization order
head, synthesis 0..5, modulators 0..5, tail (weight then bias for each).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, TapeMismatch

N_HIDDEN = 6
MIN_WIDTH = 32
DEFAULT_OMEGA0 = 30.0
DEFAULT_SIGMA = 2.0


@dataclass(frozen=True)
class ArchSpec:
    hidden_widths: tuple[int, ...]
    omega0: float = DEFAULT_OMEGA0
    bands: int = 0
    sigma: float = DEFAULT_SIGMA
    in_dim: int = 2
    out_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if len(self.hidden_widths) != N_HIDDEN or min(self.hidden_widths) < 1:
            raise ValueError(f"need {N_HIDDEN} positive hidden widths, got {self.hidden_widths}")
        if self.bands < 0:
            raise ValueError("bands must be non-negative")

    @property
    def posenc_dim(self) -> int:
        return self.in_dim * (1 + 2 * self.bands)

    def layer_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """``(name, shape)`` of every parameter tensor in serialization order."""
        widths = self.hidden_widths
        shapes = [("head.weight", (widths[0], self.posenc_dim)), ("head.bias", (widths[0],))]
        fan_in = widths[0]
        for i, w in enumerate(widths):
            shapes += [(f"synthesis.{i}.weight", (w, fan_in)), (f"synthesis.{i}.bias", (w,))]
            fan_in = w
        for i, w in enumerate(widths):
            shapes += [(f"modulator.{i}.weight", (w, self.in_dim)), (f"modulator.{i}.bias", (w,))]
        shapes += [("tail.weight", (self.out_dim, widths[-1])), ("tail.bias", (self.out_dim,))]
        return shapes

    def to_dict(self) -> dict:
        return {
            "hidden_widths": list(self.hidden_widths),
            "omega0": self.omega0,
            "bands": self.bands,
            "sigma": self.sigma,
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        return cls(
            hidden_widths=tuple(d["hidden_widths"]),
            omega0=float(d["omega0"]),
            bands=int(d["bands"]),
            sigma=float(d["sigma"]),
            in_dim=int(d.get("in_dim", 2)),
            out_dim=int(d.get("out_dim", 1)),
        )


def nyquist_bands(grid_s: int) -> int:
    """``max(0, floor(log2(S/2)))`` evaluated in exact integer arithmetic."""
    grid_s = int(grid_s)
    if grid_s <= 2:
        return 0
    return grid_s.bit_length() - 2


def width_pattern(h: int) -> tuple[int, ...]:
    half = -(-h // 2)
    return (h, h, h, half, half, half)


def size_inr(
    p_raw: int,
    ratio: float,
    grid_s: int,
    omega0: float = DEFAULT_OMEGA0,
    sigma: float = DEFAULT_SIGMA,
) -> ArchSpec:
    """Pick the hidden width ``h = max(32, round(sqrt(P / (4 r))))``."""
    if p_raw < 1 or not ratio > 0:
        raise ValueError("p_raw must be >= 1 and ratio > 0")
    h = max(MIN_WIDTH, int(math.floor(math.sqrt(p_raw / (4.0 * ratio)) + 0.5)))
    return ArchSpec(width_pattern(h), omega0=omega0, bands=nyquist_bands(grid_s), sigma=sigma)


def posenc(x, spec: ArchSpec) -> np.ndarray:
    """Raw coordinates followed by ``[sin, cos](sigma**i * pi * x_j)`` per band.

    Accepts a single point ``(in_dim,)`` or a batch ``(N, in_dim)``.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x.reshape(-1, spec.in_dim)
    feats = [x2]
    for i in range(spec.bands):
        arg = (spec.sigma ** i) * math.pi * x2
        feats.append(np.stack([np.sin(arg), np.cos(arg)], axis=2).reshape(len(x2), -1))
    out = np.concatenate(feats, axis=1)
    return out[0] if single else out


@dataclass
class InrNetwork:
    spec: ArchSpec
    params: list[np.ndarray]

    def __post_init__(self):
        shapes = self.spec.layer_shapes()
        if len(self.params) != len(shapes):
            raise DimensionMismatch(f"expected {len(shapes)} tensors, got {len(self.params)}")
        for (name, shape), p in zip(shapes, self.params):
            if tuple(p.shape) != shape:
                raise DimensionMismatch(f"{name}: shape {p.shape}, expected {shape}")

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.spec.layer_shapes()]

    def named(self) -> dict[str, np.ndarray]:
        return dict(zip(self.names, self.params))

    def head(self):
        return self.params[0], self.params[1]

    def synthesis(self, i: int):
        return self.params[2 + 2 * i], self.params[3 + 2 * i]

    def modulator(self, i: int):
        base = 2 + 2 * N_HIDDEN
        return self.params[base + 2 * i], self.params[base + 2 * i + 1]

    def tail(self):
        return self.params[-2], self.params[-1]

    def copy(self) -> "InrNetwork":
        return InrNetwork(self.spec, [p.copy() for p in self.params])

    def astype_f32_roundtrip(self) -> "InrNetwork":
        """Parameters rounded to float32 and widened back (what a package stores)."""
        return InrNetwork(self.spec, [p.astype(np.float32).astype(np.float64) for p in self.params])


def zeros_like_network(spec: ArchSpec) -> InrNetwork:
    return InrNetwork(spec, [np.zeros(s) for _, s in spec.layer_shapes()])


def param_count(net: InrNetwork | ArchSpec) -> int:
    spec = net.spec if isinstance(net, InrNetwork) else net
    return sum(math.prod(s) for _, s in spec.layer_shapes())


def init(spec: ArchSpec, rng) -> InrNetwork:
    """SIREN-style initialization.

    head ~ U(+-1/fan_in); synthesis ~ U(+-sqrt(6/fan_in)/omega0);
    modulators ~ U(+-sqrt(6/fan_in)/omega0); tail ~ U(+-sqrt(6/fan_in));
    all biases zero.
    """
    params = []
    for name, shape in spec.layer_shapes():
        if name.endswith(".bias"):
            params.append(np.zeros(shape))
            continue
        fan_in = shape[1]
        if name.startswith("head"):
            bound = 1.0 / fan_in
        elif name.startswith(("synthesis", "modulator")):
            bound = math.sqrt(6.0 / fan_in) / spec.omega0
        else:
            bound = math.sqrt(6.0 / fan_in)
        params.append(rng.uniform(-bound, bound, size=shape))
    return InrNetwork(spec, params)


@dataclass
class Tape:
    """Activations retained by :func:`forward` for the backward pass."""

    spec: ArchSpec
    params: list[np.ndarray]  # the exact (possibly down-cast) values used
    coords: np.ndarray
    features: np.ndarray
    hidden: list[np.ndarray] = field(default_factory=list)  # h0..h6
    pre: list[np.ndarray] = field(default_factory=list)  # W_i h_i + b_i
    freq: list[np.ndarray] = field(default_factory=list)  # p_i(x)

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]


def _modulation(params, i: int, coords: np.ndarray, omega0: float) -> np.ndarray:
    base = 2 + 2 * N_HIDDEN
    m_w, m_b = params[base + 2 * i], params[base + 2 * i + 1]
    p = coords @ m_w.T
    p += m_b + omega0
    return p


def forward(net: InrNetwork, coords, keep_tape: bool = True, dtype=np.float64):
    """Evaluate the network on ``coords`` (a CoordGrid or an (N, 2) array).

    ``dtype`` selects the activation precision; parameters are cast to it
    for the pass.  Returns ``(values, tape)`` with ``tape`` None when
    ``keep_tape`` is False.  ``values`` are always float64.
    """
    coords = np.asarray(getattr(coords, "coords", coords), dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != net.spec.in_dim:
        raise DimensionMismatch(f"coords of shape {coords.shape} for in_dim={net.spec.in_dim}")
    dtype = np.dtype(dtype)
    params = [p.astype(dtype, copy=False) for p in net.params]
    feats = posenc(coords, net.spec).astype(dtype, copy=False)
    x = coords.astype(dtype, copy=False)
    omega0 = dtype.type(net.spec.omega0)
    h = feats @ params[0].T
    h += params[1]
    tape = Tape(net.spec, params, x, feats) if keep_tape else None
    for i in range(N_HIDDEN):
        z = h @ params[2 + 2 * i].T
        z += params[3 + 2 * i]
        p = _modulation(params, i, x, omega0)
        if tape is not None:
            tape.hidden.append(h)
            tape.pre.append(z)
            tape.freq.append(p)
        h = p * z
        np.sin(h, out=h)
    out = h @ params[-2].T
    out += params[-1]
    if tape is not None:
        tape.hidden.append(h)
    return out[:, 0].astype(np.float64), tape


def backward(net: InrNetwork, tape: Tape, residual_grad) -> list[np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter, given dL/d(output).

    Returns a float64 list aligned with ``net.params`` (the GradBuffer).
    """
    if tape.spec != net.spec or len(tape.hidden) != N_HIDDEN + 1:
        raise TapeMismatch("tape was not produced by a forward pass of this architecture")
    params = tape.params
    dtype = params[0].dtype
    g = np.asarray(residual_grad, dtype=dtype).reshape(-1)
    if g.size != tape.n_points:
        raise TapeMismatch(f"residual has {g.size} entries, tape has {tape.n_points} points")
    grads: list[np.ndarray | None] = [None] * len(params)
    coords = tape.coords

    grads[-2] = (g @ tape.hidden[-1])[None, :]
    grads[-1] = np.array([g.sum()])
    dh = np.multiply.outer(g, params[-2][0])

    base_mod = 2 + 2 * N_HIDDEN
    for i in reversed(range(N_HIDDEN)):
        z = tape.pre[i]
        p = tape.freq[i]
        da = p * z
        np.cos(da, out=da)
        da *= dh
        dp = da * z
        dz = da
        dz *= p
        grads[2 + 2 * i] = dz.T @ tape.hidden[i]
        grads[3 + 2 * i] = dz.sum(axis=0)
        grads[base_mod + 2 * i] = dp.T @ coords
        grads[base_mod + 2 * i + 1] = dp.sum(axis=0)
        dh = dz @ params[2 + 2 * i]

    grads[0] = dh.T @ tape.features
    grads[1] = dh.sum(axis=0)
    return [np.asarray(gr, dtype=np.float64) for gr in grads]


def output_bound(net: InrNetwork) -> float:
    """Upper bound on |output|: hidden activations are sines, so within [-1, 1]."""
    w, b = net.tail()
    return float(np.abs(w).sum() + np.abs(b).sum())
