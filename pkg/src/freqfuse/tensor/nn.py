"""Parameter-holding layers: minimal containers over the functional ops.

A Layer tracks its parameters and children in registration order, which makes
parameter iteration, naming, optimizer state, and weight serialization
deterministic. There is no autograd logic here; forwards call into
:mod:`freqfuse.tensor.ops`.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ShapeError
from . import ops
from .convspec import ConvSpec
from .core import Parameter, Tensor, resolve_dtype
from .fdt import read_fdt, write_fdt

__all__ = ["Layer", "Conv2d", "ConvTranspose2d", "BatchNorm2d",
           "xavier_uniform", "save_weights", "load_weights"]


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(resolve_dtype(dtype))


class Layer:
    """Base container: registered parameters and children, train/eval mode."""

    def __init__(self):
        self._params: list[tuple[str, Parameter]] = []
        self._children: list[tuple[str, "Layer"]] = []
        self.training = True

    def add_param(self, name: str, array) -> Parameter:
        p = Parameter(array, name=name)
        self._params.append((name, p))
        return p

    def add_child(self, name: str, child: "Layer") -> "Layer":
        self._children.append((name, child))
        return child

    def parameters(self) -> list[Parameter]:
        out = [p for _, p in self._params]
        for _, child in self._children:
            out.extend(child.parameters())
        return out

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out = []
        for name, p in self._params:
            out.append((f"{prefix}{name}", p))
        for name, child in self._children:
            out.extend(child.named_parameters(f"{prefix}{name}."))
        return out

    def rename_parameters(self, prefix: str = "") -> None:
        """Assign fully qualified names to every parameter under this layer."""
        for name, p in self.named_parameters(prefix):
            p.name = name

    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True) -> "Layer":
        self.training = mode
        for _, child in self._children:
            child.train(mode)
        return self

    def eval(self) -> "Layer":
        return self.train(False)


class Conv2d(Layer):
    def __init__(self, spec: ConvSpec, rng: np.random.Generator, dtype="f32"):
        super().__init__()
        self.spec = spec
        o, i, kh, kw = spec.weight_shape()
        w = xavier_uniform(rng, (o, i, kh, kw), fan_in=i * kh * kw, fan_out=(o // spec.groups) * kh * kw, dtype=dtype)
        self.weight = self.add_param("weight", w)
        self.bias = (self.add_param("bias", np.zeros((1, spec.out_channels, 1, 1), resolve_dtype(dtype)))
                     if spec.has_bias else None)

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.spec, self.weight, self.bias)


class ConvTranspose2d(Layer):
    def __init__(self, spec: ConvSpec, rng: np.random.Generator, dtype="f32"):
        super().__init__()
        self.spec = spec
        i, o, kh, kw = spec.transpose_weight_shape()
        w = xavier_uniform(rng, (i, o, kh, kw), fan_in=i * kh * kw, fan_out=o * kh * kw, dtype=dtype)
        self.weight = self.add_param("weight", w)
        self.bias = (self.add_param("bias", np.zeros((1, spec.out_channels, 1, 1), resolve_dtype(dtype)))
                     if spec.has_bias else None)

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d_transpose(x, self.spec, self.weight, self.bias)


class BatchNorm2d(Layer):
    def __init__(self, channels: int, dtype="f32", momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        if eps <= 0:
            raise ConfigError(f"BatchNorm2d: eps must be > 0, got {eps}")
        dt = resolve_dtype(dtype)
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = self.add_param("gamma", np.ones((1, channels, 1, 1), dt))
        self.beta = self.add_param("beta", np.zeros((1, channels, 1, 1), dt))
        # running statistics are buffers, not Parameters: never optimized
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = np.ones(channels, dtype=np.float64)

    def forward(self, x: Tensor) -> Tensor:
        mode = "train" if self.training else "eval"
        return ops.batchnorm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                             mode=mode, momentum=self.momentum, eps=self.eps)


def save_weights(layer: Layer, directory) -> None:
    """Write every parameter as <name>.fdt plus a manifest (name, file, shape)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for name, p in layer.named_parameters():
        fname = f"{name}.fdt"
        write_fdt(directory / fname, p.value)
        lines.append(f"{name}\t{fname}\t{'x'.join(map(str, p.value.shape))}")
    (directory / "manifest.tsv").write_text("\n".join(lines) + "\n")


def load_weights(layer: Layer, directory) -> None:
    """Load parameters saved by :func:`save_weights`; names and shapes must match."""
    directory = Path(directory)
    manifest = directory / "manifest.tsv"
    if not manifest.exists():
        raise ConfigError(f"no manifest.tsv under {directory}")
    by_name = dict(layer.named_parameters())
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        name, fname, shape_s = line.split("\t")
        if name not in by_name:
            raise ConfigError(f"manifest parameter {name!r} not present in the model")
        t = read_fdt(directory / fname)
        expect = tuple(int(v) for v in shape_s.split("x"))
        if t.shape != expect:
            raise ShapeError(f"weight file {fname}: shape {t.shape} != manifest {expect}")
        by_name[name].assign(t.astype(by_name[name].value.dtype))
