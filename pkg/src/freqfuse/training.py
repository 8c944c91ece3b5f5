"""Losses, momentum SGD, synthetic paired data, and the deterministic toy loop.

The toy loop runs encoder -> complementary masks -> two reconstruction units
-> reconstruction loss over seeded synthetic image pairs built to carry the
frequency asymmetry the model targets: visible frames are smooth color
gradients plus high-frequency texture, infrared frames are blurred intensity
renditions of the same geometry.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .encoder import Encoder, EncoderConfig
from .errors import ConfigError, NonFiniteError, ShapeError, TrainingDivergedError
from .mrm import CrossReconstructionUnit, ReconConfig, apply_masks, sample_complementary_masks
from .tensor import OpGraph, Parameter, Tensor, add, affine, backward, mul, record, reduce_mean, sub

__all__ = ["LossWeights", "TrainConfig", "TrainReport", "reconstruction_loss", "total_loss",
           "SGD", "synthetic_pairs", "build_pipeline", "toy_train_run",
           "format_report", "parse_report"]


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.lambda1 == 0 and self.lambda2 == 0:
            raise ConfigError("loss weights cannot both be zero")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    steps: int = 200
    batch_size: int = 2
    seed: int = 42
    image_size: int = 64
    image_count: int = 4
    mask_ratio: float = 0.3
    mask_patch: int = 2

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1 or self.image_count < 1:
            raise ConfigError("batch_size and image_count must be >= 1")


def reconstruction_loss(f_i, f_v, image_i, image_v) -> Tensor:
    """Half the mean squared error of each reconstruction against its image."""
    if f_i.shape != image_i.shape:
        raise ShapeError(f"infrared reconstruction {f_i.shape} != image {image_i.shape}")
    if f_v.shape != image_v.shape:
        raise ShapeError(f"visible reconstruction {f_v.shape} != image {image_v.shape}")
    d_i = sub(f_i, image_i)
    d_v = sub(f_v, image_v)
    return add(affine(reduce_mean(mul(d_i, d_i)), 0.5),
               affine(reduce_mean(mul(d_v, d_v)), 0.5))


def total_loss(l_rc, l_det=0.0, weights: LossWeights = LossWeights()):
    """lambda1 * reconstruction + lambda2 * detection; either input may be a
    scalar Tensor (kept on the graph) or a plain float."""

    def check(v, name):
        if isinstance(v, Tensor):
            if v.shape != (1, 1, 1, 1):
                raise ShapeError(f"{name} must be scalar, got shape {v.shape}")
            return v
        if not math.isfinite(v):
            raise NonFiniteError(f"{name} is not finite: {v}")
        return float(v)

    rc = check(l_rc, "reconstruction loss")
    det = check(l_det, "detection loss")
    if isinstance(rc, Tensor) and isinstance(det, Tensor):
        return add(affine(rc, weights.lambda1), affine(det, weights.lambda2))
    if isinstance(rc, Tensor):
        return affine(rc, weights.lambda1, weights.lambda2 * det)
    if isinstance(det, Tensor):
        return affine(det, weights.lambda2, weights.lambda1 * rc)
    return weights.lambda1 * rc + weights.lambda2 * det


class SGD:
    """Classic momentum SGD with L2 weight decay folded into the gradient.

    v <- momentum * v + (g + wd * w); w <- w - lr * v; gradients are zeroed
    after each step.
    """

    def __init__(self, params: list[Parameter], lr: float, momentum: float = 0.9,
                 weight_decay: float = 0.0):
        if lr <= 0:
            raise ConfigError(f"learning rate must be > 0, got {lr}")
        if momentum < 0 or weight_decay < 0:
            raise ConfigError("momentum and weight_decay must be >= 0")
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity = [np.zeros(p.shape, dtype=p.value.np_dtype) for p in self.params]

    def step(self) -> None:
        for p, v in zip(self.params, self._velocity):
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.value.data
            v *= self.momentum
            v += g
            p.assign(p.value.data - self.lr * v)
            p.zero_grad()

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def _blur(plane: np.ndarray, passes: int = 3) -> np.ndarray:
    """Separable binomial [1,2,1]/4 blur, repeated; reflective edges."""
    out = plane
    for _ in range(passes):
        p = np.pad(out, 1, mode="edge")
        out = (p[:-2, 1:-1] + 2 * p[1:-1, 1:-1] + p[2:, 1:-1]) / 4.0
        p = np.pad(out, 1, mode="edge")
        out = (p[1:-1, :-2] + 2 * p[1:-1, 1:-1] + p[1:-1, 2:]) / 4.0
    return out


def synthetic_pairs(count: int, size: int, seed: int, dtype: str = "f32") -> list[tuple[Tensor, Tensor]]:
    """Seeded (infrared, visible) image pairs with the intended frequency split."""
    rng = np.random.default_rng(seed)
    ys, xs = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij")
    pairs = []
    for _ in range(count):
        geometry = np.zeros((size, size))
        for _ in range(rng.integers(2, 5)):
            cy, cx = rng.uniform(0.15, 0.85, size=2)
            sy, sx = rng.uniform(0.05, 0.25, size=2)
            geometry += rng.uniform(0.4, 1.0) * np.exp(
                -((ys - cy) ** 2 / (2 * sy ** 2) + (xs - cx) ** 2 / (2 * sx ** 2)))
        geometry = np.clip(geometry, 0.0, 1.0)

        visible = np.zeros((3, size, size))
        for ch in range(3):
            a, bx, by = rng.uniform(0.1, 0.5), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)
            smooth = a + bx * xs + by * ys + rng.uniform(0.3, 0.7) * geometry
            fx, fy = rng.integers(6, 14, size=2)
            phase = rng.uniform(0, 2 * np.pi, size=2)
            texture = 0.08 * np.sin(2 * np.pi * fx * xs + phase[0]) * np.sin(2 * np.pi * fy * ys + phase[1])
            texture += 0.02 * rng.standard_normal((size, size))
            visible[ch] = np.clip(smooth + texture, 0.0, 1.0)

        infrared = np.clip(_blur(0.2 + 0.8 * geometry), 0.0, 1.0)
        pairs.append((Tensor(infrared.reshape(1, 1, size, size), dtype=dtype),
                      Tensor(visible.reshape(1, 3, size, size), dtype=dtype)))
    return pairs


def build_pipeline(encoder_cfg: EncoderConfig, recon_seed: int = 1,
                   se_ratio: int = 4) -> tuple[Encoder, CrossReconstructionUnit, CrossReconstructionUnit]:
    """Encoder plus one reconstruction unit per modality, strides validated to match."""
    enc = Encoder(encoder_cfg)
    steps = int(round(math.log2(enc.cumulative_stride)))
    if 2 ** steps != enc.cumulative_stride:
        raise ConfigError(f"encoder cumulative stride {enc.cumulative_stride} is not a power of 2")
    c = enc.last_channels
    rng = np.random.default_rng(recon_seed)
    cru_i = CrossReconstructionUnit(
        ReconConfig(channels=c, upsample_steps=steps, out_channels=1, se_ratio=se_ratio),
        rng, encoder_cfg.dtype)
    cru_v = CrossReconstructionUnit(
        ReconConfig(channels=c, upsample_steps=steps, out_channels=3, se_ratio=se_ratio),
        rng, encoder_cfg.dtype)
    if cru_i.cfg.cumulative_stride != enc.cumulative_stride:
        raise ConfigError(f"decoder stride {cru_i.cfg.cumulative_stride} != encoder "
                          f"stride {enc.cumulative_stride}")
    cru_i.rename_parameters("recon_i.")
    cru_v.rename_parameters("recon_v.")
    return enc, cru_i, cru_v


@dataclass
class TrainReport:
    seed: int
    steps: int
    losses: list[float] = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)

    @property
    def initial_loss(self) -> float:
        return self.losses[0]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    @property
    def loss_ratio(self) -> float:
        return self.final_loss / self.initial_loss


def toy_train_run(cfg: TrainConfig = TrainConfig(),
                  encoder_cfg: EncoderConfig | None = None,
                  weights: LossWeights = LossWeights(lambda1=1.0, lambda2=0.0)) -> TrainReport:
    """Deterministic desk-scale reconstruction training; detection weight is zero.

    Aborts with :class:`TrainingDivergedError` (carrying the step index) if a
    loss stops being finite.
    """
    root = np.random.SeedSequence(cfg.seed)
    data_seed, enc_seed, recon_seed, batch_seed, mask_seed = (
        int(s.generate_state(1)[0]) for s in root.spawn(5))
    if encoder_cfg is None:
        encoder_cfg = EncoderConfig(seed=enc_seed)
    enc, cru_i, cru_v = build_pipeline(encoder_cfg, recon_seed=recon_seed)

    pairs = synthetic_pairs(cfg.image_count, cfg.image_size, data_seed, dtype=encoder_cfg.dtype)
    params = enc.parameters() + cru_i.parameters() + cru_v.parameters()
    opt = SGD(params, lr=cfg.learning_rate, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    batch_rng = np.random.default_rng(batch_seed)

    report = TrainReport(seed=cfg.seed, steps=cfg.steps, config_echo={
        "learning_rate": cfg.learning_rate, "momentum": cfg.momentum,
        "weight_decay": cfg.weight_decay, "batch_size": cfg.batch_size,
        "image_size": cfg.image_size, "image_count": cfg.image_count,
        "mask_ratio": cfg.mask_ratio, "mask_patch": cfg.mask_patch,
        "encoder_mode": encoder_cfg.combination_mode,
        "stem_channels": encoder_cfg.stem_channels, "stages": encoder_cfg.stages,
    })

    for step in range(cfg.steps):
        idx = batch_rng.integers(0, len(pairs), size=cfg.batch_size)
        bi = Tensor(np.concatenate([pairs[j][0].data for j in idx], axis=0))
        bv = Tensor(np.concatenate([pairs[j][1].data for j in idx], axis=0))
        try:
            graph = OpGraph()
            with record(graph):
                feats = enc.forward(bi, bv)
                fi, fv = feats[-1]
                h, w = fi.shape[2:]
                masks = sample_complementary_masks(h, w, cfg.mask_ratio, cfg.mask_patch,
                                                   seed=mask_seed + step)
                mi, mv = apply_masks(fi, fv, masks)
                rec_i = cru_i.forward(mi, mv, expect_hw=bi.shape[2:])
                rec_v = cru_v.forward(mv, mi, expect_hw=bv.shape[2:])
                loss = total_loss(reconstruction_loss(rec_i, rec_v, bi, bv), 0.0, weights)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDivergedError(step)
            backward(graph, loss)
            opt.step()
        except NonFiniteError as exc:
            raise TrainingDivergedError(step, f"non-finite value at step {step}: {exc}") from exc
        report.losses.append(value)
    return report


def format_report(report: TrainReport) -> str:
    """Flat structured-text rendering, parseable by :func:`parse_report`."""
    lines = ["# freqfuse toy-train report",
             f"seed = {report.seed}",
             f"steps = {report.steps}"]
    lines += [f"{k} = {v}" for k, v in report.config_echo.items()]
    lines += [f"initial_loss = {report.initial_loss!r}",
              f"final_loss = {report.final_loss!r}",
              f"loss_ratio = {report.loss_ratio!r}"]
    lines += [f"step {i} loss = {v!r}" for i, v in enumerate(report.losses)]
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> TrainReport:
    seed = steps = None
    losses: dict[int, float] = {}
    echo: dict = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "seed":
            seed = int(value)
        elif key == "steps":
            steps = int(value)
        elif key.startswith("step "):
            parts = key.split()
            losses[int(parts[1])] = float(value)
        elif key in ("initial_loss", "final_loss", "loss_ratio"):
            continue
        else:
            echo[key] = value
    if seed is None or steps is None:
        raise ConfigError("report is missing seed/steps")
    ordered = [losses[i] for i in sorted(losses)]
    if len(ordered) != steps:
        raise ConfigError(f"report lists {len(ordered)} step losses, expected {steps}")
    return TrainReport(seed=seed, steps=steps, losses=ordered, config_echo=echo)
