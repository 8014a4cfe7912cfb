"""Dense numeric kernels shared by the tracking stack.

Everything here is a pure function over numpy arrays: direct (non-FFT)
convolutions, a numerically stable softmax, affine maps, layer norm,
multi-head self-attention, and small dense linear algebra for the motion
filter. Kernels are tiny at the scales this package runs at, so all
convolutions are computed as explicit sliding-window sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Conv2dKernel",
    "Conv3dKernel",
    "AttentionParams",
    "conv2d",
    "conv3d",
    "softmax",
    "linear",
    "relu",
    "sigmoid",
    "layer_norm",
    "multi_head_self_attention",
    "mat_mul",
    "mat_add",
    "mat_transpose",
    "mat_inv",
]


def _require_finite(name: str, arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _pair(v) -> tuple[int, int]:
    if np.isscalar(v):
        return int(v), int(v)
    a, b = v
    return int(a), int(b)


def _triple(v) -> tuple[int, int, int]:
    if np.isscalar(v):
        return int(v), int(v), int(v)
    a, b, c = v
    return int(a), int(b), int(c)


@dataclass(frozen=True)
class Conv2dKernel:
    """2-D convolution weights, indexed (out_channel, in_channel, kh, kw)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = _require_finite("conv2d weights", self.weights)
        b = _require_finite("conv2d bias", self.bias)
        if w.ndim != 4:
            raise ValueError(f"conv2d weights must be 4-D, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError("conv2d bias length must equal out_channels")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class Conv3dKernel:
    """3-D convolution weights, indexed (out_channel, in_channel, kd, kh, kw)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = _require_finite("conv3d weights", self.weights)
        b = _require_finite("conv3d bias", self.bias)
        if w.ndim != 5:
            raise ValueError(f"conv3d weights must be 5-D, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError("conv3d bias length must equal out_channels")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


def conv2d(x: np.ndarray, kernel: Conv2dKernel, stride=1, padding=0) -> np.ndarray:
    """Direct 2-D convolution (cross-correlation) of a (C, H, W) input.

    Output element (o, i, j) is the double sum over the kernel window plus
    bias. No activation is applied; callers add their own.
    """
    x = _require_finite("conv2d input", x)
    if x.ndim != 3:
        raise ValueError(f"conv2d input must be (C, H, W), got shape {x.shape}")
    out_ch, in_ch, kh, kw = kernel.weights.shape
    if x.shape[0] != in_ch:
        raise ValueError(f"conv2d channel mismatch: input has {x.shape[0]}, kernel expects {in_ch}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    if xp.shape[1] < kh or xp.shape[2] < kw:
        raise ValueError("conv2d output would be empty: kernel larger than padded input")
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    out = np.einsum("chwyx,ocyx->ohw", win, kernel.weights, optimize=True)
    return out + kernel.bias[:, None, None]


def conv3d(x: np.ndarray, kernel: Conv3dKernel, stride=1, padding=0) -> np.ndarray:
    """Direct 3-D convolution of a (C, D, H, W) input.

    Output element (o, d, i, j) is the triple sum over the kernel volume plus
    bias; activation is left to the caller.
    """
    x = _require_finite("conv3d input", x)
    if x.ndim != 4:
        raise ValueError(f"conv3d input must be (C, D, H, W), got shape {x.shape}")
    out_ch, in_ch, kd, kh, kw = kernel.weights.shape
    if x.shape[0] != in_ch:
        raise ValueError(f"conv3d channel mismatch: input has {x.shape[0]}, kernel expects {in_ch}")
    sd, sh, sw = _triple(stride)
    pd, ph, pw = _triple(padding)
    xp = np.pad(x, ((0, 0), (pd, pd), (ph, ph), (pw, pw)))
    if xp.shape[1] < kd or xp.shape[2] < kh or xp.shape[3] < kw:
        raise ValueError("conv3d output would be empty: kernel larger than padded input")
    win = sliding_window_view(xp, (kd, kh, kw), axis=(1, 2, 3))[:, ::sd, ::sh, ::sw]
    out = np.einsum("cdhwzyx,oczyx->odhw", win, kernel.weights, optimize=True)
    return out + kernel.bias[:, None, None, None]


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable softmax along `axis` (max-subtracted, so large logits are safe)."""
    v = _require_finite("softmax input", v)
    if v.size == 0:
        raise ValueError("softmax of an empty array")
    e = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map x @ w.T + b over the last axis; w is (out_dim, in_dim)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if x.shape[-1] != w.shape[1]:
        raise ValueError(f"linear shape mismatch: input dim {x.shape[-1]} vs weight in-dim {w.shape[1]}")
    return x @ w.T + b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Normalize the last axis to zero mean, unit variance, then scale/shift."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


@dataclass(frozen=True)
class AttentionParams:
    """Projection weights for one multi-head self-attention block."""

    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    n_heads: int


def multi_head_self_attention(
    tokens: np.ndarray, params: AttentionParams, return_weights: bool = False
):
    """Self-attention over a (n, dim) token matrix.

    There is no positional term here, so permuting the tokens permutes the
    output identically. Attention rows are softmax-normalized per head.
    """
    tokens = _require_finite("attention input", tokens)
    n, dim = tokens.shape
    if dim % params.n_heads != 0:
        raise ValueError(f"token dim {dim} not divisible by {params.n_heads} heads")
    dh = dim // params.n_heads
    q = linear(tokens, params.wq, params.bq).reshape(n, params.n_heads, dh)
    k = linear(tokens, params.wk, params.bk).reshape(n, params.n_heads, dh)
    v = linear(tokens, params.wv, params.bv).reshape(n, params.n_heads, dh)
    scores = np.einsum("nhd,mhd->hnm", q, k) / np.sqrt(dh)
    attn = softmax(scores, axis=-1)
    mixed = np.einsum("hnm,mhd->nhd", attn, v).reshape(n, dim)
    out = linear(mixed, params.wo, params.bo)
    if return_weights:
        return out, attn
    return out


def mat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = _require_finite("mat_mul lhs", a)
    b = _require_finite("mat_mul rhs", b)
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"mat_mul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def mat_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = _require_finite("mat_add lhs", a)
    b = _require_finite("mat_add rhs", b)
    if a.shape != b.shape:
        raise ValueError(f"mat_add shape mismatch: {a.shape} + {b.shape}")
    return a + b


def mat_transpose(a: np.ndarray) -> np.ndarray:
    return _require_finite("mat_transpose input", a).T


def mat_inv(a: np.ndarray) -> np.ndarray:
    """Inverse of a small square matrix; raises on singular input."""
    a = _require_finite("mat_inv input", a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"mat_inv needs a square matrix, got shape {a.shape}")
    try:
        inv = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular matrix: {exc}") from exc
    if not np.all(np.isfinite(inv)):
        raise ValueError("singular matrix: inverse overflowed")
    return inv
