"""Spectral embedding: hyperspectral patches to token sequences.

A patch is embedded by one 3-D convolution sweeping a window across the band
axis (capturing inter-band variation at each spatial position), a ReLU, and
one stride-P 2-D convolution that patchifies the stacked feature volumes into
tokens. A parallel 2-D patchify embeds 3-channel false-color images with the
same token geometry.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .numerics import Conv2dKernel, Conv3dKernel, conv2d, conv3d, relu
from .types import HsiCube

__all__ = ["SpectralEmbedParams", "TokenSeq", "embed_spectral", "embed_rgb", "params_checksum"]


@dataclass(frozen=True)
class TokenSeq:
    """A (n_tokens, dim) token matrix."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"token data must be (n_tokens, dim), got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("token data contains non-finite values")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def n_tokens(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SpectralEmbedParams:
    """Frozen, seeded embedding weights.

    spectral_conv spans `band_span` bands and 3x3 pixels per step and emits
    `depth` feature volumes; token_conv patchifies the (bands * depth)
    channel stack with a (patch x patch) kernel at stride patch; rgb_conv
    does the same for 3-channel images.
    """

    spectral_conv: Conv3dKernel
    token_conv: Conv2dKernel
    rgb_conv: Conv2dKernel
    patch: int
    band_span: int

    @property
    def depth(self) -> int:
        return self.spectral_conv.weights.shape[0]

    @property
    def bands(self) -> int:
        return self.token_conv.weights.shape[1] // self.depth

    @property
    def token_dim(self) -> int:
        return self.token_conv.weights.shape[0]

    @classmethod
    def create(
        cls,
        bands: int,
        depth: int,
        token_dim: int,
        patch: int,
        seed: int,
        band_span: int = 7,
        init_std: float = 0.02,
    ) -> "SpectralEmbedParams":
        if bands < 1 or depth < 1 or token_dim < 1 or patch < 1:
            raise ValueError("bands, depth, token_dim and patch must all be >= 1")
        rng = np.random.default_rng(seed)
        spectral = Conv3dKernel(
            rng.normal(0.0, init_std, size=(depth, 1, band_span, 3, 3)),
            np.zeros(depth),
        )
        token = Conv2dKernel(
            rng.normal(0.0, init_std, size=(token_dim, bands * depth, patch, patch)),
            np.zeros(token_dim),
        )
        rgb = Conv2dKernel(
            rng.normal(0.0, init_std, size=(token_dim, 3, patch, patch)),
            np.zeros(token_dim),
        )
        return cls(spectral, token, rgb, patch=int(patch), band_span=int(band_span))

    def tensors(self) -> dict[str, np.ndarray]:
        return {
            "spectral_conv.weights": self.spectral_conv.weights,
            "spectral_conv.bias": self.spectral_conv.bias,
            "token_conv.weights": self.token_conv.weights,
            "token_conv.bias": self.token_conv.bias,
            "rgb_conv.weights": self.rgb_conv.weights,
            "rgb_conv.bias": self.rgb_conv.bias,
        }

    @classmethod
    def from_tensors(cls, t: dict[str, np.ndarray], patch: int, band_span: int) -> "SpectralEmbedParams":
        return cls(
            Conv3dKernel(t["spectral_conv.weights"], t["spectral_conv.bias"]),
            Conv2dKernel(t["token_conv.weights"], t["token_conv.bias"]),
            Conv2dKernel(t["rgb_conv.weights"], t["rgb_conv.bias"]),
            patch=int(patch),
            band_span=int(band_span),
        )


def _check_divisible(h: int, w: int, patch: int) -> None:
    if h % patch != 0 or w % patch != 0:
        raise ValueError(f"patch size {patch} must divide spatial extents ({h}, {w})")


def embed_spectral(patch: HsiCube, params: SpectralEmbedParams) -> TokenSeq:
    """Embed a hyperspectral patch into (H*W/P^2, dim) tokens.

    Pipeline: band-window 3-D conv (extent-preserving zero padding) -> ReLU
    -> reshape to a (depth*bands, H, W) stack -> stride-P 2-D conv ->
    row-major flatten of the token grid.
    """
    _check_divisible(patch.height, patch.width, params.patch)
    if patch.bands != params.bands:
        raise ValueError(f"params built for {params.bands} bands, patch has {patch.bands}")
    pad = (params.band_span // 2, 1, 1)
    volumes = conv3d(patch.data[None, ...], params.spectral_conv, stride=1, padding=pad)
    volumes = relu(volumes)
    stack = volumes.reshape(-1, patch.height, patch.width)
    grid = conv2d(stack, params.token_conv, stride=params.patch, padding=0)
    return TokenSeq(grid.reshape(params.token_dim, -1).T)


def embed_rgb(img: np.ndarray, params: SpectralEmbedParams) -> TokenSeq:
    """Embed a (3, H, W) false-color image with the same token geometry."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) image, got shape {img.shape}")
    _check_divisible(img.shape[1], img.shape[2], params.patch)
    grid = conv2d(img, params.rgb_conv, stride=params.patch, padding=0)
    return TokenSeq(grid.reshape(params.token_dim, -1).T)


def params_checksum(tensors: dict[str, np.ndarray]) -> str:
    """Order-independent content hash of a named tensor set."""
    digest = hashlib.sha256()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=np.float64)
        digest.update(name.encode())
        digest.update(str(arr.shape).encode())
        digest.update(arr.tobytes())
    return digest.hexdigest()
