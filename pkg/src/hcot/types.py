"""Domain types shared by every module: cubes, boxes, sequences, maps, config.

All types validate their invariants at construction and are immutable
afterwards (array payloads are marked read-only), so instances can be shared
freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np

__all__ = [
    "ATTRIBUTE_VOCABULARY",
    "HsiCube",
    "BBox",
    "ResponseMaps",
    "SequenceRecord",
    "TrackerConfig",
    "false_color",
    "crop_patch",
    "subcube",
]

# The nine challenge attributes a sequence may be tagged with: background
# clutter, fast motion, in/out-of-plane rotation, illumination variation,
# low resolution, occlusion, spectral consistency, spectral variation.
ATTRIBUTE_VOCABULARY = frozenset({"BC", "FM", "IPR", "IV", "LR", "OCC", "OPR", "SC", "SV"})


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class HsiCube:
    """One frame of hyperspectral data: a (bands, height, width) reflectance grid.

    Values are finite, non-negative float32. Band index 0 is the first band;
    user-facing manifests use 1-based band numbering.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"cube data must be (bands, height, width), got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1 or data.shape[2] < 1:
            raise ValueError(f"cube dimensions must be positive, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("cube contains non-finite values")
        if data.min(initial=0.0) < 0.0:
            raise ValueError("cube contains negative reflectance values")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixels. (x, y) is the top-left corner; w, h > 0."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ValueError(f"box {name} is not finite")
            object.__setattr__(self, name, v)
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box size must be positive, got w={self.w}, h={self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    def intersects(self, width: int, height: int) -> bool:
        """True if the box overlaps a (width, height) frame by a nonzero area."""
        return self.x < width and self.y < height and self.x2 > 0 and self.y2 > 0


@dataclass(frozen=True)
class ResponseMaps:
    """Per-frame head outputs over the search grid.

    cm is a (Hc, Wc) foreground-probability map in [0, 1]; offset is a
    (2, Hc, Wc) grid of per-cell fractional offsets (x then y, may be
    negative); size is a (2, Hc, Wc) grid of box extents normalized by the
    search extent, in (0, 1].
    """

    cm: np.ndarray
    offset: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        cm = np.asarray(self.cm, dtype=np.float64)
        off = np.asarray(self.offset, dtype=np.float64)
        size = np.asarray(self.size, dtype=np.float64)
        if cm.ndim != 2 or cm.size == 0:
            raise ValueError(f"cm must be a non-empty 2-D grid, got shape {cm.shape}")
        if off.shape != (2,) + cm.shape or size.shape != (2,) + cm.shape:
            raise ValueError(
                f"map extents disagree: cm {cm.shape}, offset {off.shape}, size {size.shape}"
            )
        for name, arr in (("cm", cm), ("offset", off), ("size", size)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        if cm.min() < 0.0 or cm.max() > 1.0:
            raise ValueError("cm values must lie in [0, 1]")
        if size.min() <= 0.0 or size.max() > 1.0:
            raise ValueError("size values must lie in (0, 1]")
        object.__setattr__(self, "cm", _freeze(cm))
        object.__setattr__(self, "offset", _freeze(off))
        object.__setattr__(self, "size", _freeze(size))

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.cm.shape


@dataclass(frozen=True)
class SequenceRecord:
    """An annotated sequence: frames, one box per frame, challenge tags."""

    name: str
    frames: tuple[HsiCube, ...]
    annotations: tuple[BBox, ...]
    attributes: frozenset[str]
    false_color_bands: tuple[int, int, int]

    def __post_init__(self):
        frames = tuple(self.frames)
        annotations = tuple(self.annotations)
        attributes = frozenset(self.attributes)
        bands = tuple(int(b) for b in self.false_color_bands)
        if not frames:
            raise ValueError("sequence has no frames")
        if len(annotations) != len(frames):
            raise ValueError(
                f"{len(annotations)} annotations for {len(frames)} frames"
            )
        shape = frames[0].data.shape
        for i, f in enumerate(frames):
            if f.data.shape != shape:
                raise ValueError(f"frame {i} geometry {f.data.shape} differs from {shape}")
        unknown = attributes - ATTRIBUTE_VOCABULARY
        if unknown:
            raise ValueError(f"unknown attribute tags: {sorted(unknown)}")
        if len(bands) != 3:
            raise ValueError("false_color_bands must list exactly 3 band indices")
        for b in bands:
            if not 0 <= b < shape[0]:
                raise ValueError(f"false-color band index {b} out of range for {shape[0]} bands")
        c, h, w = shape
        for i, box in enumerate(annotations):
            if not box.intersects(w, h):
                raise ValueError(f"annotation {i} does not intersect the {w}x{h} frame")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "annotations", annotations)
        object.__setattr__(self, "attributes", attributes)
        object.__setattr__(self, "false_color_bands", bands)

    @property
    def n_frames(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class TrackerConfig:
    """Tracker hyperparameters with published defaults.

    The geometry fields (token_dim, embed_depth, downsample, patch sizes)
    default to full scale and are meant to be scaled down for desk-size runs;
    see `desk()`.
    """

    # distractor-aware module
    dc_threshold: float = 0.1
    offset_threshold: float = 20.0
    rectify_window: int = 5
    use_dam: bool = True
    rectify_enabled: bool = True
    dc_use_mean_denominator: bool = False
    # loss weights
    lambda1: float = 2.0
    lambda2: float = 5.0
    # embedding / backbone geometry
    embed_depth: int = 16
    token_dim: int = 768
    downsample: int = 16
    backbone_layers: int = 2
    adapter_dim: int = 96
    template_size: int = 128
    search_size: int = 256
    search_scale: float = 4.0
    # response generation
    response_generator: str = "spectral_correlation"
    rgb_only: bool = False
    false_color_bands: tuple[int, int, int] = (0, 8, 14)
    # motion filter noise (diagonals) and initial covariance scale
    process_noise_diag: tuple[float, ...] = (1.0, 1.0, 1.0, 1e-4, 10.0, 10.0, 1.0)
    observation_noise_diag: tuple[float, ...] = (1.0, 1.0, 10.0, 1e-2)
    initial_covariance_scale: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.dc_threshold <= 0:
            raise ValueError("dc_threshold must be > 0")
        if self.offset_threshold <= 0:
            raise ValueError("offset_threshold must be > 0")
        if self.rectify_window < 2:
            raise ValueError("rectify_window must be >= 2")
        for name in ("embed_depth", "token_dim", "downsample", "backbone_layers",
                     "adapter_dim", "template_size", "search_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.search_size % self.downsample != 0:
            raise ValueError("downsample must divide search_size")
        if self.template_size % self.downsample != 0:
            raise ValueError("downsample must divide template_size")
        if self.response_generator not in ("spdan_toy", "spectral_correlation"):
            raise ValueError(f"unknown response_generator {self.response_generator!r}")
        if len(self.process_noise_diag) != 7 or len(self.observation_noise_diag) != 4:
            raise ValueError("noise diagonals must have lengths 7 and 4")
        object.__setattr__(self, "false_color_bands", tuple(int(b) for b in self.false_color_bands))
        object.__setattr__(self, "process_noise_diag", tuple(float(v) for v in self.process_noise_diag))
        object.__setattr__(self, "observation_noise_diag",
                           tuple(float(v) for v in self.observation_noise_diag))

    @classmethod
    def desk(cls, **overrides) -> "TrackerConfig":
        """Desk-scale geometry suitable for the synthetic suite and tests."""
        base = dict(
            embed_depth=4,
            token_dim=32,
            downsample=8,
            backbone_layers=2,
            adapter_dim=8,
            template_size=32,
            search_size=64,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TrackerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kwargs)

    def with_overrides(self, **kwargs) -> "TrackerConfig":
        return replace(self, **kwargs)


def false_color(cube: HsiCube, band_indices: Sequence[int]) -> np.ndarray:
    """Project three bands of a cube into a (3, H, W) false-color image.

    This is a pure projection: output channel k is band band_indices[k],
    values untouched.
    """
    idx = tuple(int(b) for b in band_indices)
    if len(idx) != 3:
        raise ValueError("false_color needs exactly 3 band indices")
    for b in idx:
        if not 0 <= b < cube.bands:
            raise IndexError(f"band index {b} out of range for {cube.bands} bands")
    return np.stack([cube.data[b] for b in idx])


def subcube(cube: HsiCube, band_indices: Sequence[int]) -> HsiCube:
    """A cube restricted to the given bands, in the given order."""
    idx = [int(b) for b in band_indices]
    for b in idx:
        if not 0 <= b < cube.bands:
            raise IndexError(f"band index {b} out of range for {cube.bands} bands")
    return HsiCube(cube.data[idx])


def crop_patch(cube: HsiCube, box: BBox, out_size: int) -> HsiCube:
    """Resample the box region of a cube to a (bands, out_size, out_size) patch.

    Bilinear per band; area outside the frame contributes zeros. The box must
    overlap the frame.
    """
    out_size = int(out_size)
    if out_size < 1:
        raise ValueError("out_size must be >= 1")
    if not box.intersects(cube.width, cube.height):
        raise ValueError("box does not overlap the frame")
    xs = box.x + (np.arange(out_size) + 0.5) * (box.w / out_size) - 0.5
    ys = box.y + (np.arange(out_size) + 0.5) * (box.h / out_size) - 0.5
    return HsiCube(_bilinear_gather(cube.data, ys, xs))


def _bilinear_gather(data: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample data[:, ys, xs] bilinearly with zero fill outside the grid."""
    _, h, w = data.shape
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    tx = xs - x0
    ty = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    out = np.zeros((data.shape[0], len(ys), len(xs)), dtype=np.float64)
    for dy in (0, 1):
        yi = y0 + dy
        wy = (ty if dy else 1.0 - ty) * ((yi >= 0) & (yi < h))
        yc = np.clip(yi, 0, h - 1)
        for dx in (0, 1):
            xi = x0 + dx
            wx = (tx if dx else 1.0 - tx) * ((xi >= 0) & (xi < w))
            xc = np.clip(xi, 0, w - 1)
            out += data[:, yc[:, None], xc[None, :]] * (wy[:, None] * wx[None, :])
    return out.astype(np.float32)
