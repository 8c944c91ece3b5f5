"""Complementary feature masking and cross-modal image reconstruction.

A seeded sampler picks patch-aligned spatial cells covering a target fraction
of the last-stage feature map and deals each cell to exactly one modality's
mask, so every hidden position is visible in the opposite stream. Two
reconstruction units then rebuild the input images from the masked feature
pair via cross-attention plus a squeeze-excitation local path, upsampling
back to image resolution with stride-2 transposed convolutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import (Conv2d, ConvSpec, ConvTranspose2d, Layer, Tensor, add,
                     affine, bmm, concat_channels, from_tokens,
                     global_avg_pool, mul, relu, round_half_up, sigmoid,
                     softmax_w, to_tokens, transpose_hw)
from .tensor.fdt import write_fdt

__all__ = ["MaskPair", "ReconConfig", "sample_complementary_masks", "apply_masks",
           "CrossAttention", "CrossReconstructionUnit", "export_masks"]


@dataclass(frozen=True, eq=False)
class MaskPair:
    """Disjoint binary planes; their union covers the patch-quantized target area."""
    mask_i: np.ndarray
    mask_v: np.ndarray
    patch: int
    ratio: float

    def __post_init__(self):
        mi = np.ascontiguousarray(self.mask_i, dtype=np.uint8)
        mv = np.ascontiguousarray(self.mask_v, dtype=np.uint8)
        if mi.ndim != 2 or mi.shape != mv.shape:
            raise ShapeError(f"masks must be equal-shape 2-D planes: {mi.shape} vs {mv.shape}")
        if np.logical_and(mi, mv).any():
            raise ShapeError("masks overlap; they must hide disjoint positions")
        mi.flags.writeable = False
        mv.flags.writeable = False
        object.__setattr__(self, "mask_i", mi)
        object.__setattr__(self, "mask_v", mv)

    @property
    def union(self) -> np.ndarray:
        return np.logical_or(self.mask_i, self.mask_v)

    @property
    def covered(self) -> int:
        return int(self.union.sum())


def sample_complementary_masks(h: int, w: int, ratio: float, patch: int, seed: int,
                               split_ratio: float = 0.5) -> MaskPair:
    """Draw the complementary mask pair for an h x w feature map.

    Selects round(ratio * grid_cells) distinct patch cells uniformly (the grid
    drops partial edge patches), then deals each selected cell to one modality
    with probability ``split_ratio`` for the infrared side. Deterministic in
    all arguments.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"mask ratio must be in (0,1), got {ratio}")
    if not 0.0 <= split_ratio <= 1.0:
        raise ConfigError(f"split_ratio must be in [0,1], got {split_ratio}")
    if patch < 1:
        raise ConfigError(f"patch size must be >= 1, got {patch}")
    gh, gw = h // patch, w // patch
    cells = gh * gw
    if cells < 1:
        raise ConfigError(f"patch {patch} leaves no full cells on a {h}x{w} map")
    if ratio * cells < 2:
        raise ConfigError(f"ratio*grid_cells = {ratio * cells:.3g} < 2: cannot split the "
                          "hidden area asymmetrically between the two modalities")
    k = round_half_up(ratio * cells)
    rng = np.random.default_rng(seed)
    chosen = rng.permutation(cells)[:k]
    to_infrared = rng.random(k) < split_ratio
    mask_i = np.zeros((h, w), dtype=np.uint8)
    mask_v = np.zeros((h, w), dtype=np.uint8)
    for cell, inf in zip(chosen, to_infrared):
        r, c = divmod(int(cell), gw)
        target = mask_i if inf else mask_v
        target[r * patch:(r + 1) * patch, c * patch:(c + 1) * patch] = 1
    return MaskPair(mask_i=mask_i, mask_v=mask_v, patch=patch, ratio=ratio)


def apply_masks(feat_i, feat_v, masks: MaskPair) -> tuple[Tensor, Tensor]:
    """Zero each modality's features where its own mask is set (all channels)."""
    ti = feat_i.value if hasattr(feat_i, "value") else feat_i
    tv = feat_v.value if hasattr(feat_v, "value") else feat_v
    h, w = masks.mask_i.shape
    if ti.shape[2:] != (h, w) or tv.shape[2:] != (h, w):
        raise ShapeError(f"mask extents {h}x{w} do not match features "
                         f"{ti.shape[2:]} / {tv.shape[2:]}")
    keep_i = Tensor((1 - masks.mask_i).reshape(1, 1, h, w), dtype=ti.dtype)
    keep_v = Tensor((1 - masks.mask_v).reshape(1, 1, h, w), dtype=tv.dtype)
    return mul(feat_i, keep_i), mul(feat_v, keep_v)


def export_masks(masks: MaskPair, path_i, path_v) -> None:
    """Write the two planes as 0/1-valued f32 FDT files for inspection."""
    h, w = masks.mask_i.shape
    write_fdt(path_i, Tensor(masks.mask_i.reshape(1, 1, h, w), dtype="f32"))
    write_fdt(path_v, Tensor(masks.mask_v.reshape(1, 1, h, w), dtype="f32"))


@dataclass(frozen=True)
class ReconConfig:
    channels: int
    upsample_steps: int
    out_channels: int
    upsample_stride: int = 2
    head_width: int | None = None
    se_ratio: int = 4
    min_channels: int = 4

    def __post_init__(self):
        if self.channels < 1 or self.out_channels < 1:
            raise ConfigError("channels and out_channels must be >= 1")
        if self.upsample_steps < 0:
            raise ConfigError(f"upsample_steps must be >= 0, got {self.upsample_steps}")
        if self.upsample_stride < 2:
            raise ConfigError(f"upsample_stride must be >= 2, got {self.upsample_stride}")
        if self.head_width is None:
            object.__setattr__(self, "head_width", self.channels)
        if self.se_ratio < 1:
            raise ConfigError(f"se_ratio must be >= 1, got {self.se_ratio}")

    @property
    def cumulative_stride(self) -> int:
        return self.upsample_stride ** self.upsample_steps

    def decoder_channels(self) -> list[int]:
        out = [self.channels]
        for _ in range(self.upsample_steps):
            out.append(max(out[-1] // 2, self.min_channels))
        return out


class CrossAttention(Layer):
    """Single-head scaled dot-product attention between two feature maps.

    Queries come from the first map, keys/values from the second, via learned
    1x1 projections; the output projection restores the channel layout.
    """

    def __init__(self, channels: int, rng: np.random.Generator, dtype="f32",
                 head_width: int | None = None):
        super().__init__()
        self.channels = channels
        self.head_width = channels if head_width is None else head_width
        proj = ConvSpec.square(channels, self.head_width, 1)
        self.wq = self.add_child("wq", Conv2d(proj, rng, dtype))
        # a key bias shifts every logit in a row equally, so softmax ignores it
        self.wk = self.add_child("wk", Conv2d(ConvSpec.square(channels, self.head_width, 1,
                                                              has_bias=False), rng, dtype))
        self.wv = self.add_child("wv", Conv2d(proj, rng, dtype))
        self.wo = self.add_child("wo", Conv2d(ConvSpec.square(self.head_width, channels, 1), rng, dtype))

    def forward(self, query_feat: Tensor, kv_feat: Tensor) -> Tensor:
        if query_feat.shape != kv_feat.shape:
            raise ShapeError(f"attention inputs differ: {query_feat.shape} vs {kv_feat.shape}")
        n, c, h, w = query_feat.shape
        if c != self.channels:
            raise ShapeError(f"attention built for {self.channels} channels, got {c}")
        if h * w == 0:
            raise ShapeError("attention over zero tokens")
        q = to_tokens(self.wq.forward(query_feat))
        k = to_tokens(self.wk.forward(kv_feat))
        v = to_tokens(self.wv.forward(kv_feat))
        scores = affine(bmm(q, transpose_hw(k)), 1.0 / math.sqrt(self.head_width))
        attn = softmax_w(scores)
        mixed = from_tokens(bmm(attn, v), h, w)
        return self.wo.forward(mixed)

    def attention_rows(self, query_feat: Tensor, kv_feat: Tensor) -> np.ndarray:
        """The (N, tokens, tokens) softmax matrix, for inspection and tests."""
        q = to_tokens(self.wq.forward(query_feat))
        k = to_tokens(self.wk.forward(kv_feat))
        scores = affine(bmm(q, transpose_hw(k)), 1.0 / math.sqrt(self.head_width))
        return softmax_w(scores).data[:, 0]


class CrossReconstructionUnit(Layer):
    """Rebuild one modality's image from the masked feature pair.

    Local path: 3x3 conv on the self features; global path: cross-attention
    into the other modality plus a squeeze-excitation-gated mix of the channel
    -squeezed concatenation; decoder: stride-2 transposed convolutions back to
    image resolution and two 1x1 convolutions onto the target channel count.
    """

    def __init__(self, cfg: ReconConfig, rng: np.random.Generator, dtype="f32"):
        super().__init__()
        self.cfg = cfg
        c = cfg.channels
        self.conv_self = self.add_child("conv_self", Conv2d(ConvSpec.square(c, c, 3, padding=1), rng, dtype))
        self.squeeze = self.add_child("squeeze", Conv2d(ConvSpec.square(2 * c, c, 1), rng, dtype))
        self.conv_mix = self.add_child("conv_mix", Conv2d(ConvSpec.square(c, c, 3, padding=1), rng, dtype))
        hidden = max(c // cfg.se_ratio, 1)
        self.se_down = self.add_child("se_down", Conv2d(ConvSpec.square(c, hidden, 1), rng, dtype))
        self.se_up = self.add_child("se_up", Conv2d(ConvSpec.square(hidden, c, 1), rng, dtype))
        self.attention = self.add_child("attention", CrossAttention(c, rng, dtype, cfg.head_width))
        chans = cfg.decoder_channels()
        self.upsamples = [
            self.add_child(f"up{i}", ConvTranspose2d(
                ConvSpec.square(chans[i], chans[i + 1], cfg.upsample_stride, stride=cfg.upsample_stride),
                rng, dtype))
            for i in range(cfg.upsample_steps)]
        last = chans[-1]
        self.head1 = self.add_child("head1", Conv2d(ConvSpec.square(last, last, 1), rng, dtype))
        self.head2 = self.add_child("head2", Conv2d(ConvSpec.square(last, cfg.out_channels, 1), rng, dtype))

    def forward(self, x_self: Tensor, x_other: Tensor, expect_hw: tuple[int, int] | None = None) -> Tensor:
        if x_self.shape != x_other.shape:
            raise ShapeError(f"feature shapes differ: {x_self.shape} vs {x_other.shape}")
        x = relu(self.conv_self.forward(x_self))
        att = self.attention.forward(x, x_other)
        sq = relu(self.squeeze.forward(concat_channels([x, x_other])))
        mix = relu(self.conv_mix.forward(sq))
        gate = sigmoid(self.se_up.forward(relu(self.se_down.forward(global_avg_pool(mix)))))
        y = add(att, mul(mix, gate))
        for up in self.upsamples:
            y = relu(up.forward(y))
        y = self.head2.forward(relu(self.head1.forward(y)))
        if expect_hw is not None and y.shape[2:] != tuple(expect_hw):
            raise ShapeError(f"reconstruction is {y.shape[2]}x{y.shape[3]} after upsampling, "
                             f"expected {expect_hw[0]}x{expect_hw[1]}")
        return y
