"""Full description of a 2-D convolution's geometry."""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0
    dilation: int = 1
    groups: int = 1
    has_bias: bool = True

    def __post_init__(self):
        for field in ("in_channels", "out_channels", "kernel_h", "kernel_w", "stride", "dilation", "groups"):
            if getattr(self, field) < 1:
                raise ConfigError(f"ConvSpec.{field} must be >= 1, got {getattr(self, field)}")
        if self.padding < 0:
            raise ConfigError(f"ConvSpec.padding must be >= 0, got {self.padding}")
        if self.in_channels % self.groups != 0:
            raise ConfigError(f"in_channels={self.in_channels} not divisible by groups={self.groups}")
        if self.out_channels % self.groups != 0:
            raise ConfigError(f"out_channels={self.out_channels} not divisible by groups={self.groups}")

    @classmethod
    def square(cls, in_channels: int, out_channels: int, kernel: int, **kw) -> "ConvSpec":
        return cls(in_channels, out_channels, kernel, kernel, **kw)

    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, self.kernel_h, self.kernel_w)

    def transpose_weight_shape(self) -> tuple[int, int, int, int]:
        return (self.in_channels, self.out_channels // self.groups, self.kernel_h, self.kernel_w)

    def param_count(self) -> int:
        o, i, kh, kw = self.weight_shape()
        return o * i * kh * kw + (self.out_channels if self.has_bias else 0)

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        def one(n, k):
            return (n + 2 * self.padding - self.dilation * (k - 1) - 1) // self.stride + 1
        return one(h, self.kernel_h), one(w, self.kernel_w)
