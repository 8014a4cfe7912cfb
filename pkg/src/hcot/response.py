"""Response-map machinery: prompt adapters, a frozen toy transformer backbone,
head decoding, loss evaluation, and the deterministic spectral-correlation
response generator.

Two interchangeable generators emit the per-frame ResponseMaps the tracker
consumes:

* ``SpdanToyGenerator`` wires the full architecture (spectral + false-color
  token embedding, per-layer cross-modality prompt adapters, frozen encoder
  layers, conv head) with seeded random weights. It is a structural stand-in:
  deterministic and shape-correct, but untrained.
* ``SpectralCorrelationGenerator`` matches pooled per-cell spectra against the
  pooled template spectrum by cosine similarity. It is accurate on synthetic
  scenes and is the default for end-to-end runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics
from .embedding import (
    SpectralEmbedParams,
    TokenSeq,
    embed_rgb,
    embed_spectral,
    params_checksum,
)
from .numerics import (
    AttentionParams,
    Conv2dKernel,
    conv2d,
    layer_norm,
    linear,
    multi_head_self_attention,
    relu,
    sigmoid,
    softmax,
)
from .types import BBox, HsiCube, ResponseMaps, TrackerConfig, false_color, subcube

__all__ = [
    "AdapterParams",
    "EncoderLayerParams",
    "BackboneParams",
    "spatial_attention",
    "adapter_forward",
    "encoder_layer",
    "backbone_forward",
    "decode_box",
    "encode_box_to_maps",
    "gaussian_peak_target",
    "loss_total",
    "correlate_spectral",
    "pooled_band_tokens",
    "SpectralCorrelationGenerator",
    "SpdanToyGenerator",
    "make_generator",
]


def spatial_attention(m: np.ndarray) -> np.ndarray:
    """Hadamard-weight a grid by the softmax of its own flattened values."""
    m = np.asarray(m, dtype=np.float64)
    return m * softmax(m.reshape(-1)).reshape(m.shape)


@dataclass(frozen=True)
class AdapterParams:
    """One cross-modality adapter: two down-projections and one up-projection.

    proj1 feeds the spatial-attention branch, proj2 the previous-prompt
    branch; their outputs are concatenated on the feature axis and proj3 maps
    the pair back to the backbone token dim.
    """

    proj1_w: np.ndarray
    proj1_b: np.ndarray
    proj2_w: np.ndarray
    proj2_b: np.ndarray
    proj3_w: np.ndarray
    proj3_b: np.ndarray

    @classmethod
    def create(cls, dim: int, low_dim: int, rng: np.random.Generator, init_std: float = 0.02):
        return cls(
            rng.normal(0.0, init_std, (low_dim, dim)), np.zeros(low_dim),
            rng.normal(0.0, init_std, (low_dim, dim)), np.zeros(low_dim),
            rng.normal(0.0, init_std, (dim, 2 * low_dim)), np.zeros(dim),
        )

    def tensors(self, prefix: str) -> dict[str, np.ndarray]:
        return {
            f"{prefix}.proj1_w": self.proj1_w, f"{prefix}.proj1_b": self.proj1_b,
            f"{prefix}.proj2_w": self.proj2_w, f"{prefix}.proj2_b": self.proj2_b,
            f"{prefix}.proj3_w": self.proj3_w, f"{prefix}.proj3_b": self.proj3_b,
        }


def adapter_forward(ca: AdapterParams, features: TokenSeq, prev_prompt: TokenSeq) -> TokenSeq:
    """Fuse backbone features and the previous prompt into the next prompt."""
    if features.n_tokens != prev_prompt.n_tokens:
        raise ValueError(
            f"token count mismatch: features {features.n_tokens} vs prompt {prev_prompt.n_tokens}"
        )
    attended = spatial_attention(linear(features.data, ca.proj1_w, ca.proj1_b))
    carried = linear(prev_prompt.data, ca.proj2_w, ca.proj2_b)
    fused = np.concatenate([attended, carried], axis=-1)
    return TokenSeq(linear(fused, ca.proj3_w, ca.proj3_b))


@dataclass(frozen=True)
class EncoderLayerParams:
    """Pre-norm transformer encoder layer: MHSA then a 2-layer feed-forward."""

    attention: AttentionParams
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray

    @classmethod
    def create(cls, dim: int, n_heads: int, rng: np.random.Generator,
               mlp_ratio: int = 2, init_std: float = 0.02):
        hidden = dim * mlp_ratio
        attn = AttentionParams(
            wq=rng.normal(0.0, init_std, (dim, dim)), bq=np.zeros(dim),
            wk=rng.normal(0.0, init_std, (dim, dim)), bk=np.zeros(dim),
            wv=rng.normal(0.0, init_std, (dim, dim)), bv=np.zeros(dim),
            wo=rng.normal(0.0, init_std, (dim, dim)), bo=np.zeros(dim),
            n_heads=n_heads,
        )
        return cls(
            attention=attn,
            ln1_g=np.ones(dim), ln1_b=np.zeros(dim),
            ln2_g=np.ones(dim), ln2_b=np.zeros(dim),
            ffn_w1=rng.normal(0.0, init_std, (hidden, dim)), ffn_b1=np.zeros(hidden),
            ffn_w2=rng.normal(0.0, init_std, (dim, hidden)), ffn_b2=np.zeros(dim),
        )

    def tensors(self, prefix: str) -> dict[str, np.ndarray]:
        a = self.attention
        return {
            f"{prefix}.wq": a.wq, f"{prefix}.wk": a.wk, f"{prefix}.wv": a.wv, f"{prefix}.wo": a.wo,
            f"{prefix}.ln1_g": self.ln1_g, f"{prefix}.ln2_g": self.ln2_g,
            f"{prefix}.ffn_w1": self.ffn_w1, f"{prefix}.ffn_w2": self.ffn_w2,
        }


def encoder_layer(tokens: np.ndarray, p: EncoderLayerParams) -> np.ndarray:
    x = tokens + multi_head_self_attention(layer_norm(tokens, p.ln1_g, p.ln1_b), p.attention)
    h = relu(linear(layer_norm(x, p.ln2_g, p.ln2_b), p.ffn_w1, p.ffn_b1))
    return x + linear(h, p.ffn_w2, p.ffn_b2)


@dataclass(frozen=True)
class BackboneParams:
    """Frozen encoder layers plus one adapter per stage.

    adapters[0] builds the initial prompts from (false-color tokens, spectral
    tokens); adapters[l] for l >= 1 builds the layer-l prompt from the
    previous layer's output and the previous prompt.
    """

    layers: tuple[EncoderLayerParams, ...]
    adapters: tuple[AdapterParams, ...]

    def __post_init__(self):
        if len(self.adapters) != len(self.layers) + 1:
            raise ValueError("need exactly one adapter per layer plus the initial one")

    @classmethod
    def create(cls, dim: int, low_dim: int, n_layers: int, n_heads: int, seed: int):
        rng = np.random.default_rng(seed)
        layers = tuple(EncoderLayerParams.create(dim, n_heads, rng) for _ in range(n_layers))
        adapters = tuple(AdapterParams.create(dim, low_dim, rng) for _ in range(n_layers + 1))
        return cls(layers, adapters)

    def tensors(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            out.update(layer.tensors(f"layer{i}"))
        for i, ca in enumerate(self.adapters):
            out.update(ca.tensors(f"adapter{i}"))
        return out


def backbone_forward(
    bb: BackboneParams,
    z_rgb: TokenSeq,
    x_rgb: TokenSeq,
    z_hs: TokenSeq,
    x_hs: TokenSeq,
) -> tuple[TokenSeq, TokenSeq]:
    """Run the prompt-injected encoder stack over template + search tokens.

    Template and search prompts are adapted separately at every stage with
    shared weights, concatenated along the token axis, encoded, and split
    again. Returns (template features, search features); the head consumes
    the search half.
    """
    n_z = z_rgb.n_tokens
    prompt_z = adapter_forward(bb.adapters[0], z_rgb, z_hs)
    prompt_x = adapter_forward(bb.adapters[0], x_rgb, x_hs)
    feats_z, feats_x = z_rgb, x_rgb
    for layer, ca in zip(bb.layers, bb.adapters[1:]):
        prompt_z = adapter_forward(ca, feats_z, prompt_z)
        prompt_x = adapter_forward(ca, feats_x, prompt_x)
        joint = np.concatenate([prompt_z.data, prompt_x.data], axis=0)
        encoded = encoder_layer(joint, layer)
        feats_z = TokenSeq(encoded[:n_z])
        feats_x = TokenSeq(encoded[n_z:])
    return feats_z, feats_x


def decode_box(maps: ResponseMaps, p: int, search_origin=(0.0, 0.0)) -> BBox:
    """Decode the peak response cell into a box in search coordinates.

    The argmax of cm picks the cell (ties resolved to the smallest row-major
    index); the per-cell fractional offsets place the center inside it; the
    size map scales the search extent. search_origin translates the result.
    """
    cm = maps.cm
    hc, wc = cm.shape
    flat = int(np.argmax(cm))
    i_p, j_p = divmod(flat, wc)
    cx = (j_p + maps.offset[0, i_p, j_p]) * p + float(search_origin[0])
    cy = (i_p + maps.offset[1, i_p, j_p]) * p + float(search_origin[1])
    w = maps.size[0, i_p, j_p] * wc * p
    h = maps.size[1, i_p, j_p] * hc * p
    return BBox.from_center(cx, cy, w, h)


def encode_box_to_maps(box: BBox, p: int, grid_shape: tuple[int, int]) -> ResponseMaps:
    """Build one-hot maps whose decode is the given box (inverse of decode_box).

    The box is interpreted in search coordinates; its center cell gets cm 1,
    the fractional offsets and normalized size are stored there, and every
    other cell carries zeros (sizes are filled with the same value to stay in
    the valid range).
    """
    hc, wc = grid_shape
    cx, cy = box.center
    j = int(np.clip(np.floor(cx / p), 0, wc - 1))
    i = int(np.clip(np.floor(cy / p), 0, hc - 1))
    cm = np.zeros(grid_shape)
    cm[i, j] = 1.0
    offset = np.zeros((2,) + grid_shape)
    offset[0, i, j] = cx / p - j
    offset[1, i, j] = cy / p - i
    size = np.empty((2,) + grid_shape)
    size[0] = box.w / (wc * p)
    size[1] = box.h / (hc * p)
    return ResponseMaps(cm, offset, size)


def gaussian_peak_target(grid_shape: tuple[int, int], cell: tuple[int, int],
                         sigma: float = 1.0) -> np.ndarray:
    """Unit-peak Gaussian bump centered on a grid cell, for the focal target."""
    hc, wc = grid_shape
    i0, j0 = cell
    ii, jj = np.mgrid[0:hc, 0:wc]
    return np.exp(-((ii - i0) ** 2 + (jj - j0) ** 2) / (2.0 * sigma**2))


def _focal_loss(cm: np.ndarray, target: np.ndarray, alpha: float = 2.0, beta: float = 4.0) -> float:
    eps = 1e-12
    pred = np.clip(cm, eps, 1.0 - eps)
    pos = target >= 1.0
    pos_term = ((1.0 - pred) ** alpha) * np.log(pred) * pos
    neg_term = ((1.0 - target) ** beta) * (pred**alpha) * np.log(1.0 - pred) * ~pos
    n_pos = max(1, int(pos.sum()))
    return float(-(pos_term.sum() + neg_term.sum()) / n_pos)


def loss_total(pred: ResponseMaps, gt: BBox, p: int,
               lambda1: float = 2.0, lambda2: float = 5.0) -> float:
    """Training objective value: focal classification + weighted box regression.

    L = L_cls + lambda1 * (1 - GIoU(decoded, gt)) + lambda2 * L1, where L1 is
    the mean absolute error of center and size normalized by the search
    extent. gt is in search coordinates and must lie inside the search window.
    """
    hc, wc = pred.grid_shape
    wx, hx = wc * p, hc * p
    cx, cy = gt.center
    if not (0 <= cx <= wx and 0 <= cy <= hx):
        raise ValueError("ground-truth center lies outside the search window")
    j = int(np.clip(np.floor(cx / p), 0, wc - 1))
    i = int(np.clip(np.floor(cy / p), 0, hc - 1))
    target = gaussian_peak_target((hc, wc), (i, j))
    target[i, j] = 1.0
    l_cls = _focal_loss(pred.cm, target)
    decoded = decode_box(pred, p)
    l_iou = 1.0 - metrics.giou(decoded, gt)
    dx, dy = decoded.center
    l_one = (abs(dx - cx) / wx + abs(dy - cy) / hx
             + abs(decoded.w - gt.w) / wx + abs(decoded.h - gt.h) / hx) / 4.0
    return float(l_cls + lambda1 * l_iou + lambda2 * l_one)


def _quadratic_offset(left: float, mid: float, right: float) -> float:
    """Sub-cell peak shift from a 3-point parabola fit, clamped to [-0.5, 0.5]."""
    denom = left - 2.0 * mid + right
    if abs(denom) < 1e-12:
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def correlate_spectral(
    template_feat: TokenSeq,
    search_feat: TokenSeq,
    grid_shape: tuple[int, int],
    size_norm: tuple[float, float],
) -> ResponseMaps:
    """Cosine-match search tokens against the pooled template feature.

    cm(i, j) = (cos(mean template token, search token (i, j)) + 1) / 2, so an
    exact spectral match peaks at 1 and orthogonal features flatten to 0.5.
    Offsets come from quadratic sub-cell peak interpolation and the size map
    is the (width, height) of the expected box normalized by the search
    extent.
    """
    hc, wc = grid_shape
    if search_feat.n_tokens != hc * wc:
        raise ValueError(f"search tokens {search_feat.n_tokens} do not fill a {hc}x{wc} grid")
    if template_feat.dim != search_feat.dim:
        raise ValueError("template and search feature dims differ")
    tpl = template_feat.data.mean(axis=0)
    tpl_norm = np.linalg.norm(tpl)
    tok = search_feat.data
    tok_norm = np.linalg.norm(tok, axis=1)
    if tpl_norm == 0.0 or np.any(tok_norm == 0.0):
        raise ValueError("zero-norm features cannot be correlated")
    cos = np.clip((tok @ tpl) / (tok_norm * tpl_norm), -1.0, 1.0)
    cm = ((cos + 1.0) / 2.0).reshape(hc, wc)

    flat = int(np.argmax(cm))
    i_p, j_p = divmod(flat, wc)
    dx = dy = 0.0
    if 0 < j_p < wc - 1:
        dx = _quadratic_offset(cm[i_p, j_p - 1], cm[i_p, j_p], cm[i_p, j_p + 1])
    if 0 < i_p < hc - 1:
        dy = _quadratic_offset(cm[i_p - 1, j_p], cm[i_p, j_p], cm[i_p + 1, j_p])
    offset = np.zeros((2, hc, wc))
    offset[0] += 0.5
    offset[1] += 0.5
    offset[0, i_p, j_p] = 0.5 + dx
    offset[1, i_p, j_p] = 0.5 + dy

    sw = float(np.clip(size_norm[0], 1e-6, 1.0))
    sh = float(np.clip(size_norm[1], 1e-6, 1.0))
    size = np.empty((2, hc, wc))
    size[0] = sw
    size[1] = sh
    return ResponseMaps(cm, offset, size)


def pooled_band_tokens(cube: HsiCube, patch: int, band_subset=None) -> TokenSeq:
    """Per-cell mean spectra: pool each (patch x patch) cell over space.

    Token (i, j) is the mean reflectance vector of that cell, one feature per
    band (optionally restricted to band_subset). Tokens are row-major over
    the cell grid.
    """
    data = cube.data if band_subset is None else subcube(cube, band_subset).data
    c, h, w = data.shape
    if h % patch != 0 or w % patch != 0:
        raise ValueError(f"patch size {patch} must divide spatial extents ({h}, {w})")
    grid = data.reshape(c, h // patch, patch, w // patch, patch).mean(axis=(2, 4))
    return TokenSeq(grid.reshape(c, -1).T)


class SpectralCorrelationGenerator:
    """Deterministic response generator: pooled-spectrum template matching."""

    name = "spectral_correlation"

    def __init__(self, cfg: TrackerConfig):
        self.cfg = cfg
        self._bands = cfg.false_color_bands if cfg.rgb_only else None
        self._template: TokenSeq | None = None

    def initialize(self, template: HsiCube) -> None:
        self._template = pooled_band_tokens(template, self.cfg.downsample, self._bands)

    def respond(self, search: HsiCube, size_norm: tuple[float, float]) -> ResponseMaps:
        if self._template is None:
            raise RuntimeError("generator not initialized with a template")
        p = self.cfg.downsample
        grid_shape = (search.height // p, search.width // p)
        tokens = pooled_band_tokens(search, p, self._bands)
        return correlate_spectral(self._template, tokens, grid_shape, size_norm)


@dataclass(frozen=True)
class HeadParams:
    """Three conv branches over the search-token grid: cls, offset, size."""

    cls_convs: tuple[Conv2dKernel, ...]
    offset_convs: tuple[Conv2dKernel, ...]
    size_convs: tuple[Conv2dKernel, ...]

    @classmethod
    def create(cls, dim: int, rng: np.random.Generator, width: int = 64, init_std: float = 0.02):
        def branch(out_ch):
            dims = [dim, width, width, out_ch]
            return tuple(
                Conv2dKernel(rng.normal(0.0, init_std, (dims[i + 1], dims[i], 3, 3)),
                             np.zeros(dims[i + 1]))
                for i in range(3)
            )

        return cls(branch(1), branch(2), branch(2))

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for branch, convs in (("cls", self.cls_convs), ("offset", self.offset_convs),
                              ("size", self.size_convs)):
            for i, k in enumerate(convs):
                out[f"head.{branch}{i}.weights"] = k.weights
                out[f"head.{branch}{i}.bias"] = k.bias
        return out


def _head_branch(grid: np.ndarray, convs: tuple[Conv2dKernel, ...]) -> np.ndarray:
    x = grid
    for k in convs[:-1]:
        x = relu(conv2d(x, k, stride=1, padding=1))
    return conv2d(x, convs[-1], stride=1, padding=1)


class SpdanToyGenerator:
    """Full architecture with frozen seeded weights behind the generator interface.

    Untrained, so its boxes are not accurate; it exists to exercise the
    embedding -> adapter -> backbone -> head path end to end with the exact
    map geometry of the correlation generator.
    """

    name = "spdan_toy"

    def __init__(self, cfg: TrackerConfig):
        self.cfg = cfg
        self._bands = cfg.false_color_bands if cfg.rgb_only else None
        self._embed: SpectralEmbedParams | None = None
        self._backbone: BackboneParams | None = None
        self._head: HeadParams | None = None
        self._template_tokens: tuple[TokenSeq, TokenSeq] | None = None

    def _build(self, bands: int) -> None:
        cfg = self.cfg
        n_heads = 4 if cfg.token_dim % 4 == 0 else 1
        self._embed = SpectralEmbedParams.create(
            bands, cfg.embed_depth, cfg.token_dim, cfg.downsample, seed=cfg.seed
        )
        self._backbone = BackboneParams.create(
            cfg.token_dim, cfg.adapter_dim, cfg.backbone_layers, n_heads, seed=cfg.seed + 1
        )
        self._head = HeadParams.create(cfg.token_dim, np.random.default_rng(cfg.seed + 2))

    def _modal_tokens(self, patch: HsiCube) -> tuple[TokenSeq, TokenSeq]:
        hs_cube = patch if self._bands is None else subcube(patch, self._bands)
        rgb = false_color(patch, self.cfg.false_color_bands)
        return embed_rgb(rgb, self._embed), embed_spectral(hs_cube, self._embed)

    def initialize(self, template: HsiCube) -> None:
        feature_bands = template.bands if self._bands is None else len(self._bands)
        if self._embed is None or self._embed.bands != feature_bands:
            self._build(feature_bands)
        self._template_tokens = self._modal_tokens(template)

    def respond(self, search: HsiCube, size_norm: tuple[float, float]) -> ResponseMaps:
        if self._template_tokens is None:
            raise RuntimeError("generator not initialized with a template")
        p = self.cfg.downsample
        hc, wc = search.height // p, search.width // p
        z_rgb, z_hs = self._template_tokens
        x_rgb, x_hs = self._modal_tokens(search)
        _, feats_x = backbone_forward(self._backbone, z_rgb, x_rgb, z_hs, x_hs)
        grid = feats_x.data.T.reshape(self.cfg.token_dim, hc, wc)
        cm = sigmoid(_head_branch(grid, self._head.cls_convs)[0])
        offset = _head_branch(grid, self._head.offset_convs)
        size = sigmoid(_head_branch(grid, self._head.size_convs))
        size = np.clip(size, 1e-6, 1.0)
        return ResponseMaps(cm, offset, size)

    def tensors(self) -> dict[str, np.ndarray]:
        if self._embed is None:
            raise RuntimeError("parameters not built yet; initialize first")
        out = dict(self._embed.tensors())
        out.update(self._backbone.tensors())
        out.update(self._head.tensors())
        return out

    def checksum(self) -> str:
        return params_checksum(self.tensors())


def make_generator(cfg: TrackerConfig):
    """Build the response generator selected by cfg.response_generator."""
    if cfg.response_generator == "spectral_correlation":
        return SpectralCorrelationGenerator(cfg)
    if cfg.response_generator == "spdan_toy":
        return SpdanToyGenerator(cfg)
    raise ValueError(f"unknown response_generator {cfg.response_generator!r}")
