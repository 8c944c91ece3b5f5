"""Two-stream frequency-decomposed encoder.

Per stage and per modality the channel stack is split into a high-frequency
part (DCT-basis grouped filtering plus a learned spatial attention mask) and
a low-frequency part (parallel dilated depthwise convolutions summed and
channel-gated). A parameter-free cross-modal addition then recouples the
dominant band of each modality before a per-modality 3x3 fusion convolution.
The parallel branches of the low-frequency unit merge exactly into one large
depthwise kernel for inference.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dct import FrequencySet, dct_basis, select_frequencies
from .errors import ConfigError, ShapeError
from .tensor import (BatchNorm2d, Conv2d, ConvSpec, Layer, Tensor, add,
                     channel_pool, channel_split, concat_channels, conv2d,
                     embed_dilated, global_avg_pool, mul, relu, round_half_up,
                     sigmoid, slice_channels)

__all__ = [
    "BranchSpec", "MergedKernel", "HighFreqConfig", "LowFreqConfig", "EncoderConfig",
    "HighFreqUnit", "LowFreqUnit", "CrossModalRecouple", "EncoderStage", "Stem", "Encoder",
    "merge_branches", "expected_parameter_count", "COMBINATION_MODES",
]

COMBINATION_MODES = ("parallel_HL", "H_only", "L_only", "serial_HL", "serial_LH")
DEFAULT_BRANCHES = ((7, 1), (3, 1), (3, 2), (3, 3))


@dataclass(frozen=True)
class BranchSpec:
    """One dilated depthwise branch: kernel k at dilation d."""
    kernel: int
    dilation: int

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"branch (k={self.kernel}, d={self.dilation}): kernel must be odd "
                              "so branch outputs stay spatially aligned")
        if self.dilation < 1:
            raise ConfigError(f"branch (k={self.kernel}, d={self.dilation}): dilation must be >= 1")

    @property
    def effective(self) -> int:
        return self.kernel + (self.kernel - 1) * (self.dilation - 1)


@dataclass(frozen=True)
class MergedKernel:
    """Single large depthwise kernel equivalent to the summed branches."""
    weight: np.ndarray  # (channels, 1, rf, rf)
    bias: np.ndarray    # (channels,)


@dataclass(frozen=True)
class HighFreqConfig:
    channels: int
    group_count: int = 4
    frequency_policy: str = "zigzag_skip_dc"
    frequency_set: FrequencySet | None = None
    attention_kernel: int = 7
    normalized_basis: bool = False

    def __post_init__(self):
        if self.channels < 1:
            raise ConfigError(f"high-frequency unit needs >= 1 channel, got {self.channels}")
        if self.group_count < 1 or self.channels % self.group_count:
            raise ConfigError(f"channels={self.channels} not divisible by group_count={self.group_count}")
        if self.frequency_set is not None and len(self.frequency_set) != self.group_count:
            raise ConfigError(f"frequency set holds {len(self.frequency_set)} indices, "
                              f"expected one per group ({self.group_count})")
        if self.attention_kernel % 2 == 0:
            raise ConfigError("attention kernel must be odd")


@dataclass(frozen=True)
class LowFreqConfig:
    channels: int
    receptive_field: int = 7
    branches: tuple[BranchSpec, ...] = tuple(BranchSpec(*b) for b in DEFAULT_BRANCHES)
    bottleneck: int | None = None

    def __post_init__(self):
        branches = tuple(b if isinstance(b, BranchSpec) else BranchSpec(*b) for b in self.branches)
        object.__setattr__(self, "branches", branches)
        if self.receptive_field % 2 == 0:
            raise ConfigError("receptive field must be odd")
        for i, b in enumerate(branches):
            if b.effective > self.receptive_field:
                raise ConfigError(f"branch {i} (k={b.kernel}, d={b.dilation}) has effective size "
                                  f"{b.effective} > receptive field {self.receptive_field}")
        if self.bottleneck is None:
            object.__setattr__(self, "bottleneck", self.channels // 4)
        if self.bottleneck < 1:
            raise ConfigError(f"channel-mix bottleneck must be >= 1, got {self.bottleneck} "
                              f"(channels={self.channels})")


def merge_branches(branch_weights, branch_biases, cfg: LowFreqConfig) -> MergedKernel:
    """Collapse the parallel branches into one centered rf x rf depthwise kernel.

    Each branch kernel gets d-1 zeros inserted between taps, is zero-padded
    symmetrically to the receptive field, and the results are summed; biases
    add directly.
    """
    if len(branch_weights) != len(cfg.branches) or len(branch_biases) != len(cfg.branches):
        raise ConfigError(f"expected {len(cfg.branches)} branch weights and biases")
    rf = cfg.receptive_field
    acc_w = None
    acc_b = None
    def as_tensor(v):
        if isinstance(v, Tensor):
            return v
        if hasattr(v, "value"):
            return v.value
        return Tensor(np.asarray(v))

    for i, (bw, bb, spec) in enumerate(zip(branch_weights, branch_biases, cfg.branches)):
        wt = as_tensor(bw)
        bt = as_tensor(bb)
        if wt.shape != (cfg.channels, 1, spec.kernel, spec.kernel):
            raise ShapeError(f"branch {i}: weight shape {wt.shape} != "
                             f"({cfg.channels}, 1, {spec.kernel}, {spec.kernel})")
        emb = embed_dilated(wt, rf, spec.dilation)
        acc_w = emb if acc_w is None else add(acc_w, emb)
        acc_b = bt if acc_b is None else add(acc_b, bt)
    return MergedKernel(weight=acc_w.data.copy(), bias=acc_b.data.reshape(cfg.channels).copy())


class HighFreqUnit(Layer):
    """Grouped DCT-basis filtering followed by a learned spatial attention mask."""

    def __init__(self, cfg: HighFreqConfig, rng: np.random.Generator, dtype="f32"):
        super().__init__()
        self.cfg = cfg
        self.dtype = dtype
        k = cfg.attention_kernel
        self.attention = self.add_child(
            "attention", Conv2d(ConvSpec.square(2, 1, k, padding=(k - 1) // 2), rng, dtype))
        self.calls = 0
        self._basis_cache: dict[tuple[int, int], tuple[FrequencySet, tuple[Tensor, ...]]] = {}

    def _bases_for(self, h: int, w: int) -> tuple[FrequencySet, tuple[Tensor, ...]]:
        key = (h, w)
        hit = self._basis_cache.get(key)
        if hit is not None:
            return hit
        cfg = self.cfg
        if cfg.frequency_set is not None:
            fset = cfg.frequency_set
            if (fset.height, fset.width) != (h, w):
                raise ShapeError(f"frequency set was built for a {fset.height}x{fset.width} grid, "
                                 f"feature map is {h}x{w}")
        else:
            fset = select_frequencies(cfg.group_count, h, w, cfg.frequency_policy)
        planes = tuple(
            Tensor(dct_basis(u, v, h, w, cfg.normalized_basis).values.reshape(1, 1, h, w),
                   dtype=self.dtype)
            for u, v in fset.indices)
        self._basis_cache[key] = (fset, planes)
        return fset, planes

    def filter_bands(self, x: Tensor) -> Tensor:
        """Multiply each contiguous channel group by its assigned basis plane."""
        n, c, h, w = x.shape
        if c != self.cfg.channels:
            raise ShapeError(f"high-frequency unit built for {self.cfg.channels} channels, got {c}")
        _, planes = self._bases_for(h, w)
        gsize = c // self.cfg.group_count
        parts = [mul(slice_channels(x, g * gsize, (g + 1) * gsize), planes[g])
                 for g in range(self.cfg.group_count)]
        return parts[0] if len(parts) == 1 else concat_channels(parts)

    def spatial_mask(self, filtered: Tensor) -> Tensor:
        """Sigmoid attention plane from channel-pooled avg/max descriptors."""
        pooled = concat_channels([channel_pool(filtered, "avg"), channel_pool(filtered, "max")])
        return sigmoid(self.attention.forward(pooled))

    def forward(self, x: Tensor) -> Tensor:
        filtered = self.filter_bands(x)
        mask = self.spatial_mask(filtered)
        self.calls += 1
        return mul(filtered, mask)


class LowFreqUnit(Layer):
    """Parallel dilated depthwise branches (or their merged kernel) plus a channel gate."""

    def __init__(self, cfg: LowFreqConfig, rng: np.random.Generator, dtype="f32"):
        super().__init__()
        self.cfg = cfg
        c = cfg.channels
        self.branch_convs = [
            self.add_child(f"branch{i}", Conv2d(
                ConvSpec.square(c, c, b.kernel, padding=b.dilation * (b.kernel - 1) // 2,
                                dilation=b.dilation, groups=c), rng, dtype))
            for i, b in enumerate(cfg.branches)]
        self.merged_spec = ConvSpec.square(c, c, cfg.receptive_field,
                                           padding=cfg.receptive_field // 2, groups=c)
        self.mix_down = self.add_child("mix_down", Conv2d(ConvSpec.square(c, cfg.bottleneck, 1), rng, dtype))
        self.mix_up = self.add_child("mix_up", Conv2d(ConvSpec.square(cfg.bottleneck, c, 1), rng, dtype))
        self.calls = 0

    def merge(self) -> MergedKernel:
        return merge_branches([conv.weight for conv in self.branch_convs],
                              [conv.bias for conv in self.branch_convs], self.cfg)

    def _merged_tensors(self):
        # Differentiable merge: gradients reach the branch parameters.
        acc_w = None
        acc_b = None
        for conv, spec in zip(self.branch_convs, self.cfg.branches):
            emb = embed_dilated(conv.weight, self.cfg.receptive_field, spec.dilation)
            acc_w = emb if acc_w is None else add(acc_w, emb)
            acc_b = conv.bias if acc_b is None else add(acc_b, conv.bias)
        return acc_w, acc_b

    def forward(self, x: Tensor, mode: str = "multi_branch",
                merged: MergedKernel | None = None) -> Tensor:
        if x.shape[1] != self.cfg.channels:
            raise ShapeError(f"low-frequency unit built for {self.cfg.channels} channels, got {x.shape[1]}")
        if mode == "multi_branch":
            acc = None
            for conv in self.branch_convs:
                y = conv.forward(x)
                acc = y if acc is None else add(acc, y)
        elif mode == "merged":
            if merged is None:
                mw, mb = self._merged_tensors()
            else:
                dt = x.dtype
                mw = Tensor(merged.weight, dtype=dt)
                mb = Tensor(merged.bias.reshape(1, -1, 1, 1), dtype=dt)
            acc = conv2d(x, self.merged_spec, mw, mb)
        else:
            raise ConfigError(f"unknown low-frequency mode {mode!r}")
        self.calls += 1
        gate = sigmoid(self.mix_up.forward(relu(self.mix_down.forward(global_avg_pool(acc)))))
        return mul(acc, gate)


class CrossModalRecouple(Layer):
    """Parameter-free cross-modal band addition, then per-modality 3x3 fusion."""

    def __init__(self, channels: int, rng: np.random.Generator, dtype="f32", symmetric: bool = False):
        super().__init__()
        self.channels = channels
        self.symmetric = symmetric
        spec = ConvSpec.square(channels, channels, 3, padding=1)
        self.conv_i = self.add_child("conv_i", Conv2d(spec, rng, dtype))
        self.conv_v = self.add_child("conv_v", Conv2d(spec, rng, dtype))

    @staticmethod
    def addition_stage(xi_h, xv_h, xi_l, xv_l, symmetric: bool = False):
        """The linear recoupling: infrared high gains visible high, visible low
        gains infrared low. Returns (hi, li, hv, lv) after the update."""
        if xi_h.shape != xv_h.shape:
            raise ShapeError(f"high-band shapes differ: {xi_h.shape} vs {xv_h.shape}")
        if xi_l.shape != xv_l.shape:
            raise ShapeError(f"low-band shapes differ: {xi_l.shape} vs {xv_l.shape}")
        if xi_h.shape[2:] != xi_l.shape[2:]:
            raise ShapeError(f"band spatial extents differ: {xi_h.shape[2:]} vs {xi_l.shape[2:]}")
        if symmetric:
            return add(xi_h, xv_h), add(xi_l, xv_l), add(xv_h, xi_h), add(xv_l, xi_l)
        return add(xi_h, xv_h), xi_l, xv_h, add(xv_l, xi_l)

    def forward(self, xi_h, xv_h, xi_l, xv_l):
        hi, li, hv, lv = self.addition_stage(xi_h, xv_h, xi_l, xv_l, self.symmetric)
        yi = self.conv_i.forward(concat_channels([hi, li]))
        yv = self.conv_v.forward(concat_channels([hv, lv]))
        return yi, yv


@dataclass(frozen=True)
class EncoderConfig:
    alpha: float | tuple[float, ...] = 0.5  # one ratio, or one per stage
    stem_channels: int = 16
    stages: int = 3
    stage_strides: tuple[int, ...] | None = None
    combination_mode: str = "parallel_HL"
    group_count: int = 4
    frequency_policy: str = "zigzag_skip_dc"
    branches: tuple = DEFAULT_BRANCHES
    receptive_field: int = 7
    symmetric_recouple: bool = False
    normalized_basis: bool = False
    seed: int = 0
    dtype: str = "f32"

    def __post_init__(self):
        alphas = (tuple(float(a) for a in self.alpha)
                  if isinstance(self.alpha, (tuple, list)) else (float(self.alpha),) * self.stages)
        if len(alphas) != self.stages:
            raise ConfigError(f"got {len(alphas)} alpha values for {self.stages} stages")
        for a in alphas:
            if not 0.0 < a < 1.0:
                raise ConfigError(f"alpha must be in (0,1), got {a}")
        object.__setattr__(self, "alpha", alphas if isinstance(self.alpha, (tuple, list))
                           else alphas[0])
        if self.stem_channels < 2:
            raise ConfigError(f"stem_channels must be >= 2, got {self.stem_channels}")
        if self.stages < 1:
            raise ConfigError(f"stages must be >= 1, got {self.stages}")
        if self.combination_mode not in COMBINATION_MODES:
            raise ConfigError(f"unknown combination_mode {self.combination_mode!r}; "
                              f"expected one of {COMBINATION_MODES}")
        strides = self.stage_strides
        if strides is None:
            strides = (1,) + (2,) * (self.stages - 1)
        strides = tuple(int(s) for s in strides)
        if len(strides) != self.stages or any(s not in (1, 2) for s in strides):
            raise ConfigError(f"stage_strides must be {self.stages} values from {{1, 2}}, got {strides}")
        object.__setattr__(self, "stage_strides", strides)
        object.__setattr__(self, "branches",
                           tuple(b if isinstance(b, BranchSpec) else BranchSpec(*b) for b in self.branches))

    @property
    def stage_alphas(self) -> tuple[float, ...]:
        if isinstance(self.alpha, tuple):
            return self.alpha
        return (self.alpha,) * self.stages

    @property
    def stage_channels(self) -> tuple[int, ...]:
        out = []
        ch = self.stem_channels
        for s in self.stage_strides:
            if s == 2:
                ch *= 2
            out.append(ch)
        return tuple(out)

    @property
    def cumulative_stride(self) -> int:
        prod = 2  # stem
        for s in self.stage_strides:
            prod *= s
        return prod

    def high_channels(self, channels: int, alpha: float | None = None) -> int:
        a = self.stage_alphas[0] if alpha is None else alpha
        return round_half_up(a * channels)


class Stem(Layer):
    """6x6 stride-2 convolution + batch norm + ReLU; halves even extents."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, dtype="f32"):
        super().__init__()
        # bias-free: batch norm would cancel a conv bias anyway
        self.conv = self.add_child("conv", Conv2d(
            ConvSpec.square(in_channels, out_channels, 6, stride=2, padding=2, has_bias=False),
            rng, dtype))
        self.bn = self.add_child("bn", BatchNorm2d(out_channels, dtype))

    def forward(self, x: Tensor) -> Tensor:
        _, _, h, w = x.shape
        if h < 6 or w < 6:
            raise ShapeError(f"stem input extents {h}x{w} are below the 6x6 kernel")
        if h % 2 or w % 2:
            raise ShapeError(f"stem input extents {h}x{w} must be even to halve cleanly")
        return relu(self.bn.forward(self.conv.forward(x)))


class _Downsample(Layer):
    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, dtype="f32"):
        super().__init__()
        self.conv = self.add_child("conv", Conv2d(
            ConvSpec.square(in_channels, out_channels, 3, stride=2, padding=1, has_bias=False),
            rng, dtype))
        self.bn = self.add_child("bn", BatchNorm2d(out_channels, dtype))

    def forward(self, x: Tensor) -> Tensor:
        _, _, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"cannot stride-2 downsample odd extents {h}x{w}")
        return relu(self.bn.forward(self.conv.forward(x)))


class EncoderStage(Layer):
    """One decomposition stage over an aligned (infrared, visible) feature pair."""

    def __init__(self, cfg: EncoderConfig, channels: int, rng: np.random.Generator,
                 alpha: float | None = None):
        super().__init__()
        self.cfg = cfg
        self.channels = channels
        self.alpha = cfg.stage_alphas[0] if alpha is None else alpha
        self.mode = cfg.combination_mode
        dtype = cfg.dtype
        split_modes = ("parallel_HL", "H_only", "L_only")
        if self.mode in split_modes:
            ch_high = cfg.high_channels(channels, self.alpha)
            ch_low = channels - ch_high
            if not 1 <= ch_high <= channels - 1:
                raise ConfigError(f"alpha={self.alpha} leaves an empty split on {channels} channels")
        else:
            ch_high = ch_low = channels
        self.split_channels = (ch_high, ch_low)

        def hf_cfg(c):
            return HighFreqConfig(channels=c, group_count=cfg.group_count,
                                  frequency_policy=cfg.frequency_policy,
                                  normalized_basis=cfg.normalized_basis)

        def lf_cfg(c):
            return LowFreqConfig(channels=c, receptive_field=cfg.receptive_field,
                                 branches=cfg.branches)

        self.hfu_i = self.hfu_v = None
        self.lfu_i = self.lfu_v = None
        if self.mode != "L_only":
            self.hfu_i = self.add_child("hfu_i", HighFreqUnit(hf_cfg(ch_high), rng, dtype))
            self.hfu_v = self.add_child("hfu_v", HighFreqUnit(hf_cfg(ch_high), rng, dtype))
        if self.mode != "H_only":
            self.lfu_i = self.add_child("lfu_i", LowFreqUnit(lf_cfg(ch_low), rng, dtype))
            self.lfu_v = self.add_child("lfu_v", LowFreqUnit(lf_cfg(ch_low), rng, dtype))
        self.recouple = self.add_child(
            "recouple", CrossModalRecouple(channels, rng, dtype, symmetric=cfg.symmetric_recouple))

    @property
    def unit_calls(self) -> dict[str, int]:
        hfu = sum(u.calls for u in (self.hfu_i, self.hfu_v) if u is not None)
        lfu = sum(u.calls for u in (self.lfu_i, self.lfu_v) if u is not None)
        return {"hfu": hfu, "lfu": lfu}

    def forward(self, x_i: Tensor, x_v: Tensor) -> tuple[Tensor, Tensor]:
        if x_i.shape != x_v.shape:
            raise ShapeError(f"modality shapes differ: {x_i.shape} vs {x_v.shape}")
        if x_i.shape[1] != self.channels:
            raise ShapeError(f"stage built for {self.channels} channels, got {x_i.shape[1]}")
        mode = self.mode
        if mode in ("serial_HL", "serial_LH"):
            first_i, second_i = ((self.hfu_i, self.lfu_i) if mode == "serial_HL"
                                 else (self.lfu_i, self.hfu_i))
            first_v, second_v = ((self.hfu_v, self.lfu_v) if mode == "serial_HL"
                                 else (self.lfu_v, self.hfu_v))
            ti = second_i.forward(first_i.forward(x_i))
            tv = second_v.forward(first_v.forward(x_v))
            # no frequency bands to recouple in a serial arrangement
            return self.recouple.conv_i.forward(ti), self.recouple.conv_v.forward(tv)

        hi, li = channel_split(x_i, self.alpha)
        hv, lv = channel_split(x_v, self.alpha)
        if mode != "L_only":
            hi, hv = self.hfu_i.forward(hi), self.hfu_v.forward(hv)
        if mode != "H_only":
            li, lv = self.lfu_i.forward(li), self.lfu_v.forward(lv)
        return self.recouple.forward(hi, hv, li, lv)


class Encoder(Layer):
    """Stems, stride-2 transitions, and the configured decomposition stages."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        dtype = cfg.dtype
        c = cfg.stem_channels
        self.stem_i = self.add_child("stem_i", Stem(1, c, rng, dtype))
        self.stem_v = self.add_child("stem_v", Stem(3, c, rng, dtype))
        self.stages: list[EncoderStage] = []
        self.downs: list[tuple[_Downsample, _Downsample] | None] = []
        ch = c
        for k, (stride, alpha) in enumerate(zip(cfg.stage_strides, cfg.stage_alphas)):
            if stride == 2:
                nxt = ch * 2
                di = self.add_child(f"down{k}_i", _Downsample(ch, nxt, rng, dtype))
                dv = self.add_child(f"down{k}_v", _Downsample(ch, nxt, rng, dtype))
                self.downs.append((di, dv))
                ch = nxt
            else:
                self.downs.append(None)
            self.stages.append(self.add_child(f"stage{k}", EncoderStage(cfg, ch, rng, alpha)))
        self.rename_parameters("encoder.")

    @property
    def last_channels(self) -> int:
        return self.cfg.stage_channels[-1]

    @property
    def cumulative_stride(self) -> int:
        return self.cfg.cumulative_stride

    def forward(self, image_i: Tensor, image_v: Tensor) -> list[tuple[Tensor, Tensor]]:
        if image_i.shape[1] != 1:
            raise ShapeError(f"infrared input must have 1 channel, got {image_i.shape[1]}")
        if image_v.shape[1] != 3:
            raise ShapeError(f"visible input must have 3 channels, got {image_v.shape[1]}")
        if image_i.shape[0] != image_v.shape[0] or image_i.shape[2:] != image_v.shape[2:]:
            raise ShapeError(f"image pair misaligned: {image_i.shape} vs {image_v.shape}")
        xi = self.stem_i.forward(image_i)
        xv = self.stem_v.forward(image_v)
        outs: list[tuple[Tensor, Tensor]] = []
        for down, stage in zip(self.downs, self.stages):
            if down is not None:
                xi = down[0].forward(xi)
                xv = down[1].forward(xv)
            xi, xv = stage.forward(xi, xv)
            outs.append((xi, xv))
        return outs


def expected_parameter_count(cfg: EncoderConfig) -> int:
    """Closed-form parameter total from the declared convolution geometry.

    Enumerates every ConvSpec and batch-norm width the configuration implies,
    without building the model; the test suite checks this against the built
    encoder's enumeration.
    """
    specs: list[ConvSpec] = []
    bn_channels: list[int] = []
    c = cfg.stem_channels
    specs += [ConvSpec.square(1, c, 6, stride=2, padding=2, has_bias=False),
              ConvSpec.square(3, c, 6, stride=2, padding=2, has_bias=False)]
    bn_channels += [c, c]
    ch = c
    for stride, alpha in zip(cfg.stage_strides, cfg.stage_alphas):
        if stride == 2:
            specs += 2 * [ConvSpec.square(ch, ch * 2, 3, stride=2, padding=1, has_bias=False)]
            bn_channels += [ch * 2, ch * 2]
            ch *= 2
        if cfg.combination_mode in ("parallel_HL", "H_only", "L_only"):
            ch_high = cfg.high_channels(ch, alpha)
            ch_low = ch - ch_high
        else:
            ch_high = ch_low = ch
        if cfg.combination_mode != "L_only":
            k = 7
            specs += 2 * [ConvSpec.square(2, 1, k, padding=3)]
        if cfg.combination_mode != "H_only":
            lf = LowFreqConfig(channels=ch_low, receptive_field=cfg.receptive_field,
                               branches=cfg.branches)
            for b in lf.branches:
                specs += 2 * [ConvSpec.square(ch_low, ch_low, b.kernel, groups=ch_low,
                                              padding=b.dilation * (b.kernel - 1) // 2,
                                              dilation=b.dilation)]
            specs += 2 * [ConvSpec.square(ch_low, lf.bottleneck, 1)]
            specs += 2 * [ConvSpec.square(lf.bottleneck, ch_low, 1)]
        specs += 2 * [ConvSpec.square(ch, ch, 3, padding=1)]
    return sum(s.param_count() for s in specs) + sum(2 * c for c in bn_channels)
