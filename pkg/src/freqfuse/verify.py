"""Independent oracles and checkers.

The reference implementations here deliberately share no code with the paths
they validate: convolution is re-derived as a plain nested-loop summation,
the DCT as a quadruple loop over ``math.cos``, attention as a per-token
python loop, and gradients are checked against seeded central finite
differences. Every check is deterministic under its seed and reports
(name, status, metric, tolerance, seed, millis).
"""
from __future__ import annotations

import math
import time
import zlib
from dataclasses import dataclass

import numpy as np

from . import dct as dctmod
from .encoder import (BranchSpec, CrossModalRecouple, EncoderConfig,
                      HighFreqConfig, HighFreqUnit, LowFreqConfig, LowFreqUnit,
                      MergedKernel)
from .errors import ConfigError, FreqfuseError, NonFiniteError
from .mrm import (CrossAttention, CrossReconstructionUnit, ReconConfig,
                  apply_masks, sample_complementary_masks)
from .tensor import (BatchNorm2d, ConvSpec, OpGraph, Parameter, Tensor, add,
                     backward, conv2d, conv2d_transpose, mul, record, reduce_sum)
from .training import SGD, LossWeights, reconstruction_loss, total_loss

__all__ = ["CheckReport", "conv_direct_oracle", "dct_direct_oracle",
           "finite_diff_check", "reparam_equivalence_check", "run_suite",
           "SUITE_NAMES", "reports_to_text", "reports_to_json"]

SUITE_NAMES = ("tensor", "dct", "hfu", "lfu", "css", "mrm", "training")


@dataclass
class CheckReport:
    name: str
    status: str
    metric: float
    tolerance: float
    seed: int
    millis: float
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _run_check(name: str, seed: int, tolerance: float, fn) -> CheckReport:
    t0 = time.perf_counter()
    note = ""
    try:
        metric = float(fn())
    except FreqfuseError as exc:
        metric = math.inf
        note = f"{type(exc).__name__}: {exc}"
    millis = (time.perf_counter() - t0) * 1e3
    status = "pass" if metric <= tolerance else "fail"
    return CheckReport(name, status, metric, tolerance, seed, millis, note)


def _rng_for(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def _randomize_biases(layer, rng: np.random.Generator, scale: float = 0.05) -> None:
    """Move bias-like parameters off zero before a finite-difference check.

    Freshly initialized nets evaluate ReLUs exactly at their kinks (zero
    biases on zero activations), where the loss is not differentiable and
    central differences legitimately disagree with the subgradient. Checks
    run at a generic point instead.
    """
    for name, p in layer.named_parameters():
        if name.endswith("bias") or name.endswith("beta"):
            p.assign(scale * rng.standard_normal(p.shape).astype(p.value.np_dtype))


# ---------------------------------------------------------------------------
# direct oracles
# ---------------------------------------------------------------------------

def conv_direct_oracle(x, weight, bias, spec: ConvSpec) -> Tensor:
    """Nested-loop direct-summation convolution in f64; the reference truth.

    No im2col, no matmul, no shortcuts: six loops over output position,
    in-group channel, and kernel taps (plus batch and output channel).
    """
    xd = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    wd = np.asarray(weight.data if isinstance(weight, Tensor) else weight, dtype=np.float64)
    bd = None
    if bias is not None:
        bd = np.asarray(bias.data if isinstance(bias, Tensor) else bias, dtype=np.float64).reshape(-1)
    nb, c, h, w = xd.shape
    co, cg, kh, kw = wd.shape
    s, p, d = spec.stride, spec.padding, spec.dilation
    ho = (h + 2 * p - d * (kh - 1) - 1) // s + 1
    wo = (w + 2 * p - d * (kw - 1) - 1) // s + 1
    cog = co // spec.groups
    out = np.zeros((nb, co, ho, wo))
    for n in range(nb):
        for o in range(co):
            grp = o // cog
            for oh in range(ho):
                for ow in range(wo):
                    acc = 0.0 if bd is None else float(bd[o])
                    for ci in range(cg):
                        ic = grp * cg + ci
                        for i in range(kh):
                            ih = oh * s - p + i * d
                            if ih < 0 or ih >= h:
                                continue
                            for j in range(kw):
                                iw = ow * s - p + j * d
                                if iw < 0 or iw >= w:
                                    continue
                                acc += xd[n, ic, ih, iw] * wd[o, ci, i, j]
                    out[n, o, oh, ow] = acc
    return Tensor(out, dtype="f64")


def dct_direct_oracle(plane) -> np.ndarray:
    """Quadruple-loop 2-D DCT over math.cos; independent of the dct module."""
    arr = np.asarray(plane, dtype=np.float64)
    h, w = arr.shape
    out = np.zeros((h, w))
    for u in range(h):
        for v in range(w):
            acc = 0.0
            for i in range(h):
                ci = math.cos(math.pi * u / h * (i + 0.5))
                for j in range(w):
                    acc += arr[i, j] * ci * math.cos(math.pi * v / w * (j + 0.5))
            out[u, v] = acc
    return out


def _attention_reference(layer: CrossAttention, q_map: np.ndarray, kv_map: np.ndarray) -> np.ndarray:
    """Per-token python attention using the layer's weights; no tensor ops."""

    def proj(x, conv):
        w = conv.weight.value.data
        b = conv.bias.value.data.reshape(-1) if conv.bias is not None else 0.0
        co = w.shape[0]
        n, ci, h, wd = x.shape
        out = np.zeros((n, co, h, wd))
        for nn in range(n):
            for i in range(h):
                for j in range(wd):
                    out[nn, :, i, j] = w.reshape(co, ci) @ x[nn, :, i, j] + b
        return out

    q = proj(q_map, layer.wq)
    k = proj(kv_map, layer.wk)
    v = proj(kv_map, layer.wv)
    n, c, h, w = q.shape
    scale = 1.0 / math.sqrt(layer.head_width)
    mixed = np.zeros_like(q)
    for nn in range(n):
        qt = q[nn].reshape(c, h * w).T  # (T, C)
        kt = k[nn].reshape(c, h * w).T
        vt = v[nn].reshape(c, h * w).T
        for t in range(h * w):
            logits = [scale * float(qt[t] @ kt[u]) for u in range(h * w)]
            m = max(logits)
            exps = [math.exp(z - m) for z in logits]
            tot = sum(exps)
            weights = [e / tot for e in exps]
            outv = np.zeros(c)
            for u in range(h * w):
                outv += weights[u] * vt[u]
            mixed[nn, :, t // w, t % w] = outv
    return proj(mixed, layer.wo)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def finite_diff_check(name: str, loss_fn, params: list[Parameter], *,
                      step: float = 1e-6, tolerance: float = 1e-4, seed: int = 0,
                      coords: int = 64, grad_scale: float = 1.0) -> CheckReport:
    """Compare reverse-mode gradients with seeded central finite differences.

    ``loss_fn`` rebuilds the scalar loss from the current parameter values.
    Per parameter tensor, up to ``coords`` seeded coordinates are perturbed by
    +/-step; the metric is the max relative error with denominators floored
    at 1e-8. ``grad_scale`` deliberately corrupts the analytic gradients (for
    harness-sensitivity fault injection). Non-finite evaluations produce a
    fail report rather than raising.
    """
    t0 = time.perf_counter()
    rng = _rng_for(seed, name)
    note = ""
    metric = 0.0
    try:
        for p in params:
            p.zero_grad()
        g = OpGraph()
        with record(g):
            loss = loss_fn()
        backward(g, loss)
        analytic = [p.grad.copy() * grad_scale for p in params]

        for p, ad in zip(params, analytic):
            flat_n = p.value.size
            n_coords = min(coords, flat_n)
            picks = rng.choice(flat_n, size=n_coords, replace=False)
            base = p.value.data.copy()
            for c in picks:
                idx = np.unravel_index(int(c), p.value.shape)
                bumped = base.copy()
                bumped[idx] += step
                p.assign(bumped)
                lp = loss_fn().item()
                bumped[idx] -= 2 * step
                p.assign(bumped)
                lm = loss_fn().item()
                p.assign(base)
                fd = (lp - lm) / (2 * step)
                an = float(ad[idx])
                rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
                metric = max(metric, rel)
    except NonFiniteError as exc:
        metric = math.inf
        note = f"non-finite evaluation: {exc}"
    millis = (time.perf_counter() - t0) * 1e3
    status = "pass" if metric <= tolerance else "fail"
    return CheckReport(name, status, metric, tolerance, seed, millis, note)


def reparam_equivalence_check(cfg: LowFreqConfig, seeds: int = 20, tolerance: float = 1e-10,
                              dtype: str = "f64", shape: tuple[int, int, int, int] = (1, 16, 64, 64),
                              seed: int = 0, perturb_tap: float = 0.0,
                              name: str | None = None) -> CheckReport:
    """Run the low-frequency unit in multi-branch and merged modes over random
    weights/inputs; the metric is the max absolute output difference across
    seeds. ``perturb_tap`` nudges one merged-kernel tap (fault injection)."""
    if shape[1] != cfg.channels:
        raise ConfigError(f"input shape {shape} does not carry cfg.channels={cfg.channels}")
    name = name or f"lfu.reparam_{dtype}"
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(seeds):
        rng = _rng_for(seed, f"{name}/{k}")
        unit = LowFreqUnit(cfg, rng, dtype)
        for conv in unit.branch_convs:  # nonzero biases so the merge covers them
            conv.bias.assign(rng.standard_normal(conv.bias.shape).astype(conv.bias.value.np_dtype) * 0.1)
        x = Tensor(rng.standard_normal(shape), dtype=dtype)
        y_multi = unit.forward(x, mode="multi_branch")
        merged = unit.merge()
        if perturb_tap:
            w2 = merged.weight.copy()
            w2[0, 0, cfg.receptive_field // 2, cfg.receptive_field // 2] += perturb_tap
            merged = MergedKernel(weight=w2, bias=merged.bias)
        y_merged = unit.forward(x, mode="merged", merged=merged)
        worst = max(worst, float(np.abs(y_multi.data - y_merged.data).max()))
    millis = (time.perf_counter() - t0) * 1e3
    status = "pass" if worst <= tolerance else "fail"
    return CheckReport(name, status, worst, tolerance, seed, millis)


# ---------------------------------------------------------------------------
# suite: tensor
# ---------------------------------------------------------------------------

def _random_conv_case(rng: np.random.Generator):
    while True:
        k = int(rng.choice([1, 3, 6, 7]))
        d = int(rng.choice([1, 2, 3]))
        stride = int(rng.choice([1, 2]))
        padding = int(rng.integers(0, 4))
        c = int(rng.choice([2, 3, 4]))
        depthwise = bool(rng.integers(0, 2))
        groups = c if depthwise else 1
        co = c if depthwise else int(rng.choice([2, 3, 4]))
        h = int(rng.integers(5, 10))
        w = int(rng.integers(5, 10))
        out_h = (h + 2 * padding - d * (k - 1) - 1) // stride + 1
        out_w = (w + 2 * padding - d * (k - 1) - 1) // stride + 1
        if out_h < 1 or out_w < 1:
            continue
        has_bias = bool(rng.integers(0, 2))
        spec = ConvSpec(c, co, k, k, stride=stride, padding=padding, dilation=d,
                        groups=groups, has_bias=has_bias)
        n = int(rng.integers(1, 3))
        x = Tensor(rng.standard_normal((n, c, h, w)), dtype="f64")
        wt = Tensor(rng.standard_normal(spec.weight_shape()), dtype="f64")
        b = Tensor(rng.standard_normal((1, co, 1, 1)), dtype="f64") if has_bias else None
        return spec, x, wt, b


def _suite_tensor(seed: int) -> list[CheckReport]:
    reports = []

    def conv_oracle_agreement():
        rng = _rng_for(seed, "tensor.conv_oracle")
        worst = 0.0
        for _ in range(50):
            spec, x, wt, b = _random_conv_case(rng)
            fast = conv2d(x, spec, wt, b)
            ref = conv_direct_oracle(x, wt, b, spec)
            worst = max(worst, float(np.abs(fast.data - ref.data).max()))
        return worst
    reports.append(_run_check("tensor.conv_direct_agreement", seed, 1e-12, conv_oracle_agreement))

    def conv_linearity():
        rng = _rng_for(seed, "tensor.conv_linearity")
        spec = ConvSpec.square(3, 4, 3, padding=1, has_bias=False)
        wt = Tensor(rng.standard_normal(spec.weight_shape()), dtype="f64")
        x = Tensor(rng.standard_normal((2, 3, 8, 8)), dtype="f64")
        y = Tensor(rng.standard_normal((2, 3, 8, 8)), dtype="f64")
        a, b = 1.7, -0.6
        lhs = conv2d(Tensor(a * x.data + b * y.data), spec, wt)
        rhs = a * conv2d(x, spec, wt).data + b * conv2d(y, spec, wt).data
        return float(np.abs(lhs.data - rhs).max())
    reports.append(_run_check("tensor.conv_linearity", seed, 1e-10, conv_linearity))

    def transpose_adjoint():
        rng = _rng_for(seed, "tensor.transpose_adjoint")
        worst = 0.0
        for groups in (1, 4):
            ci, co = 4, 8
            spec = ConvSpec(ci, co, 3, 3, stride=2, padding=1, groups=groups, has_bias=False)
            wt = Tensor(rng.standard_normal(spec.weight_shape()), dtype="f64")
            x = Tensor(rng.standard_normal((2, ci, 9, 9)), dtype="f64")
            yx = conv2d(x, spec, wt)
            y = Tensor(rng.standard_normal(yx.shape), dtype="f64")
            tspec = ConvSpec(co, ci, 3, 3, stride=2, padding=1, groups=groups, has_bias=False)
            xty = conv2d_transpose(y, tspec, wt)
            lhs = float((yx.data * y.data).sum())
            rhs = float((x.data * xty.data).sum())
            worst = max(worst, abs(lhs - rhs))
        return worst
    reports.append(_run_check("tensor.transpose_adjoint_identity", seed, 1e-9, transpose_adjoint))

    def transpose_equals_input_grad():
        rng = _rng_for(seed, "tensor.transpose_inputgrad")
        ci, co = 3, 5
        spec = ConvSpec(ci, co, 3, 3, stride=2, padding=1, has_bias=False)
        wt = Tensor(rng.standard_normal(spec.weight_shape()), dtype="f64")
        p = Parameter(Tensor(rng.standard_normal((1, ci, 9, 9)), dtype="f64"), "y")
        g = OpGraph()
        with record(g):
            loss = reduce_sum(conv2d(p, spec, wt))
        backward(g, loss)
        ones = Tensor(np.ones((1, co, 5, 5)), dtype="f64")
        tspec = ConvSpec(co, ci, 3, 3, stride=2, padding=1, has_bias=False)
        via_t = conv2d_transpose(ones, tspec, wt)
        return float(np.abs(p.grad - via_t.data).max())
    reports.append(_run_check("tensor.transpose_equals_conv_input_grad", seed, 1e-12,
                              transpose_equals_input_grad))

    def batchnorm_fd():
        rng = _rng_for(seed, "tensor.batchnorm_fd")
        c = 4
        bn = BatchNorm2d(c, dtype="f64")
        bn.gamma.assign(1.0 + 0.3 * rng.standard_normal((1, c, 1, 1)))
        bn.beta.assign(0.3 * rng.standard_normal((1, c, 1, 1)))
        px = Parameter(Tensor(rng.standard_normal((2, c, 5, 5)), dtype="f64"), "x")
        # projection loss: a plain sum of normalized output is constant by
        # construction, which would leave nothing to differentiate
        r = Tensor(rng.standard_normal((2, c, 5, 5)), dtype="f64")

        rep = finite_diff_check("tensor.batchnorm_fd.inner",
                                lambda: reduce_sum(mul(bn.forward(px), r)),
                                [px, bn.gamma, bn.beta], tolerance=1e-5, seed=seed)
        return rep.metric
    reports.append(_run_check("tensor.batchnorm_fd", seed, 1e-5, batchnorm_fd))

    def quadratic_gradcheck():
        rng = _rng_for(seed, "tensor.quadratic")
        p = Parameter(Tensor(rng.standard_normal((1, 2, 4, 4)), dtype="f64"), "w")
        # a quadratic has no truncation error, so the wider step only cuts
        # floating-point noise
        rep = finite_diff_check("tensor.quadratic.inner", lambda: reduce_sum(mul(p, p)),
                                [p], tolerance=1e-9, seed=seed, step=1e-3)
        return rep.metric
    reports.append(_run_check("tensor.gradcheck_quadratic", seed, 1e-9, quadratic_gradcheck))

    def fault_injection_detected():
        rng = _rng_for(seed, "tensor.fault")
        p = Parameter(Tensor(rng.standard_normal((1, 2, 4, 4)), dtype="f64"), "w")
        rep = finite_diff_check("tensor.fault.inner", lambda: reduce_sum(mul(p, p)),
                                [p], tolerance=1e-4, seed=seed, step=1e-3, grad_scale=1.01)
        detected = rep.status == "fail" and rep.metric > 1e-3
        return 0.0 if detected else 1.0
    reports.append(_run_check("tensor.gradcheck_fault_injection_detected", seed, 0.0,
                              fault_injection_detected))
    return reports


# ---------------------------------------------------------------------------
# suite: dct
# ---------------------------------------------------------------------------

def _suite_dct(seed: int) -> list[CheckReport]:
    reports = []

    def oracle_match():
        rng = _rng_for(seed, "dct.oracle")
        worst = 0.0
        for _ in range(100):
            plane = rng.standard_normal((8, 8))
            worst = max(worst, float(np.abs(dctmod.dct2d(plane) - dct_direct_oracle(plane)).max()))
        return worst
    reports.append(_run_check("dct.oracle_match_100x8x8", seed, 1e-12, oracle_match))

    def orthogonality():
        bases = [dctmod.dct_basis(u, v, 8, 8).values for u in range(8) for v in range(8)]
        worst = 0.0
        for a in range(64):
            for b in range(a + 1, 64):
                worst = max(worst, abs(float((bases[a] * bases[b]).sum())))
        return worst
    reports.append(_run_check("dct.basis_orthogonality_8x8", seed, 1e-9, orthogonality))

    def dc_and_bound():
        b00 = dctmod.dct_basis(0, 0, 8, 8).values
        err = float(np.abs(b00 - 1.0).max())
        for u in range(8):
            for v in range(8):
                err = max(err, float(np.abs(dctmod.dct_basis(u, v, 8, 8).values).max()) - 1.0)
        return max(err, 0.0)
    reports.append(_run_check("dct.dc_plane_and_unit_bound", seed, 1e-12, dc_and_bound))

    def roundtrip():
        rng = _rng_for(seed, "dct.roundtrip")
        worst = 0.0
        for _ in range(10):
            plane = rng.standard_normal((8, 8))
            worst = max(worst, float(np.abs(dctmod.idct2d(dctmod.dct2d(plane)) - plane).max()))
        return worst
    reports.append(_run_check("dct.roundtrip_energy_8x8", seed, 1e-8, roundtrip))

    def linearity():
        rng = _rng_for(seed, "dct.linearity")
        x, y = rng.standard_normal((2, 8, 8))
        a, b = -1.3, 0.7
        return float(np.abs(dctmod.dct2d(a * x + b * y)
                            - (a * dctmod.dct2d(x) + b * dctmod.dct2d(y))).max())
    reports.append(_run_check("dct.spectrum_linearity", seed, 1e-10, linearity))

    def selection_contract():
        first = dctmod.select_frequencies(1, 8, 8).indices
        four = dctmod.select_frequencies(4, 8, 8).indices
        ok = first == ((0, 1),) and four == ((0, 1), (1, 0), (2, 0), (1, 1))
        try:
            dctmod.select_frequencies(64, 8, 8)
            ok = False
        except ConfigError:
            pass
        return 0.0 if ok else 1.0
    reports.append(_run_check("dct.zigzag_selection_contract", seed, 0.0, selection_contract))
    return reports


# ---------------------------------------------------------------------------
# suite: hfu
# ---------------------------------------------------------------------------

def _desk_hfu(seed: int, name: str, channels: int = 8, groups: int = 4):
    rng = _rng_for(seed, name)
    cfg = HighFreqConfig(channels=channels, group_count=groups)
    return HighFreqUnit(cfg, rng, "f64"), rng


def _suite_hfu(seed: int) -> list[CheckReport]:
    reports = []

    def group_filter_reference():
        unit, rng = _desk_hfu(seed, "hfu.groupref")
        h = w = 8
        x = np.zeros((1, 8, h, w))
        x[0, 4:6] = rng.standard_normal((2, h, w))  # group 2 of 4 (2 channels each)
        filtered = unit.filter_bands(Tensor(x, dtype="f64"))
        fset, _ = unit._bases_for(h, w)
        ref = np.zeros_like(x)
        for c in range(8):
            u, v = fset.indices[c // 2]
            for i in range(h):
                for j in range(w):
                    ref[0, c, i, j] = x[0, c, i, j] * (
                        math.cos(math.pi * u / h * (i + 0.5)) * math.cos(math.pi * v / w * (j + 0.5)))
        err = float(np.abs(filtered.data - ref).max())
        outside = float(np.abs(filtered.data[0, [0, 1, 2, 3, 6, 7]]).max())
        return max(err, outside)
    reports.append(_run_check("hfu.group_filter_reference", seed, 1e-12, group_filter_reference))

    def mask_open_interval():
        unit, rng = _desk_hfu(seed, "hfu.mask")
        x = Tensor(rng.standard_normal((2, 8, 8, 8)), dtype="f64")
        filtered = unit.filter_bands(x)
        mask = unit.spatial_mask(filtered)
        ok = mask.shape == (2, 1, 8, 8) and (mask.data > 0).all() and (mask.data < 1).all()
        out = unit.forward(x)
        ok = ok and (np.abs(out.data) <= np.abs(filtered.data) + 1e-15).all()
        return 0.0 if ok else 1.0
    reports.append(_run_check("hfu.mask_strictly_in_unit_interval", seed, 0.0, mask_open_interval))

    def identity_filter():
        rng = _rng_for(seed, "hfu.identity")
        fset = dctmod.select_frequencies(1, 8, 8, "custom", custom=[(0, 0)])
        cfg = HighFreqConfig(channels=8, group_count=1, frequency_set=fset)
        unit = HighFreqUnit(cfg, rng, "f64")
        x = Tensor(rng.standard_normal((1, 8, 8, 8)), dtype="f64")
        filtered = unit.filter_bands(x)
        if not np.array_equal(filtered.data, x.data):
            return 1.0
        mask = unit.spatial_mask(filtered)
        out = unit.forward(x)
        return float(np.abs(out.data - mask.data * x.data).max())
    reports.append(_run_check("hfu.dc_identity_filter", seed, 1e-15, identity_filter))

    def hfu_fd():
        unit, rng = _desk_hfu(seed, "hfu.fd")
        _randomize_biases(unit, rng)
        px = Parameter(Tensor(rng.standard_normal((1, 8, 8, 8)), dtype="f64"), "x")
        rep = finite_diff_check("hfu.fd.inner", lambda: reduce_sum(unit.forward(px)),
                                [px] + unit.parameters(), tolerance=1e-4, seed=seed)
        return rep.metric
    reports.append(_run_check("hfu.finite_difference", seed, 1e-4, hfu_fd))
    return reports


# ---------------------------------------------------------------------------
# suite: lfu
# ---------------------------------------------------------------------------

def _suite_lfu(seed: int) -> list[CheckReport]:
    reports = []

    def branch_gate():
        cfg = LowFreqConfig(channels=8)
        eff = [b.effective for b in cfg.branches]
        ok = eff == [7, 3, 5, 7]
        try:
            LowFreqConfig(channels=8, branches=((5, 2),))  # effective 9 > 7
            ok = False
        except ConfigError:
            pass
        try:
            BranchSpec(4, 1)  # even kernel cannot align
            ok = False
        except ConfigError:
            pass
        return 0.0 if ok else 1.0
    reports.append(_run_check("lfu.receptive_field_gate", seed, 0.0, branch_gate))

    cfg16 = LowFreqConfig(channels=16)
    reports.append(reparam_equivalence_check(cfg16, seeds=20, tolerance=1e-10, dtype="f64",
                                             seed=seed, name="lfu.reparam_equivalence_f64"))
    reports.append(reparam_equivalence_check(cfg16, seeds=20, tolerance=1e-4, dtype="f32",
                                             seed=seed, name="lfu.reparam_equivalence_f32"))

    def reparam_fault():
        rep = reparam_equivalence_check(cfg16, seeds=3, tolerance=1e-10, dtype="f64",
                                        seed=seed, perturb_tap=1e-2, name="lfu.fault.inner")
        return 0.0 if (rep.status == "fail" and rep.metric >= 1e-3) else 1.0
    reports.append(_run_check("lfu.reparam_fault_injection_detected", seed, 0.0, reparam_fault))

    def single_branch_identity():
        cfg = LowFreqConfig(channels=8, branches=((7, 1),))
        rep = reparam_equivalence_check(cfg, seeds=3, tolerance=0.0, dtype="f64",
                                        shape=(1, 8, 16, 16), seed=seed, name="lfu.single.inner")
        return rep.metric
    reports.append(_run_check("lfu.single_branch_identity_merge", seed, 0.0, single_branch_identity))

    def zero_input():
        rng = _rng_for(seed, "lfu.zero")
        unit = LowFreqUnit(LowFreqConfig(channels=8), rng, "f64")  # freshly built: zero biases
        x = Tensor.zeros((1, 8, 12, 12), dtype="f64")
        worst = 0.0
        for mode in ("multi_branch", "merged"):
            worst = max(worst, float(np.abs(unit.forward(x, mode=mode).data).max()))
        return worst
    reports.append(_run_check("lfu.zero_input_zero_output", seed, 0.0, zero_input))

    def lfu_fd(mode):
        def run():
            rng = _rng_for(seed, f"lfu.fd.{mode}")
            unit = LowFreqUnit(LowFreqConfig(channels=8), rng, "f64")
            _randomize_biases(unit, rng)
            px = Parameter(Tensor(rng.standard_normal((1, 8, 9, 9)), dtype="f64"), "x")
            rep = finite_diff_check(f"lfu.fd.{mode}.inner",
                                    lambda: reduce_sum(unit.forward(px, mode=mode)),
                                    [px] + unit.parameters(), tolerance=1e-4, seed=seed)
            return rep.metric
        return run
    reports.append(_run_check("lfu.finite_difference_multi_branch", seed, 1e-4, lfu_fd("multi_branch")))
    reports.append(_run_check("lfu.finite_difference_merged", seed, 1e-4, lfu_fd("merged")))
    return reports


# ---------------------------------------------------------------------------
# suite: css
# ---------------------------------------------------------------------------

def _suite_css(seed: int) -> list[CheckReport]:
    reports = []

    def preconv_linearity():
        rng = _rng_for(seed, "css.linearity")
        shape_h, shape_l = (1, 4, 6, 6), (1, 4, 6, 6)

        def stage(parts):
            outs = CrossModalRecouple.addition_stage(*[Tensor(p, dtype="f64") for p in parts])
            return [o.data for o in outs]

        a = [rng.standard_normal(s) for s in (shape_h, shape_h, shape_l, shape_l)]
        b = [rng.standard_normal(s) for s in (shape_h, shape_h, shape_l, shape_l)]
        zero = [np.zeros(s) for s in (shape_h, shape_h, shape_l, shape_l)]
        ab = stage([x + y for x, y in zip(a, b)])
        sa, sb, s0 = stage(a), stage(b), stage(zero)
        worst = 0.0
        for t_ab, t_a, t_b, t_0 in zip(ab, sa, sb, s0):
            worst = max(worst, float(np.abs(t_ab - t_a - t_b + t_0).max()))
        return worst
    reports.append(_run_check("css.preconv_addition_linearity", seed, 1e-12, preconv_linearity))

    def zero_other_identity():
        rng = _rng_for(seed, "css.zero")
        xi_h = Tensor(rng.standard_normal((1, 4, 6, 6)), dtype="f64")
        xv_l = Tensor(rng.standard_normal((1, 4, 6, 6)), dtype="f64")
        zeros = Tensor.zeros((1, 4, 6, 6), dtype="f64")
        hi, li, hv, lv = CrossModalRecouple.addition_stage(xi_h, zeros, zeros, xv_l)
        ok = np.array_equal(hi.data, xi_h.data) and np.array_equal(lv.data, xv_l.data)
        return 0.0 if ok else 1.0
    reports.append(_run_check("css.zero_other_additive_identity", seed, 0.0, zero_other_identity))

    def shape_contract():
        rng = _rng_for(seed, "css.shape")
        rec = CrossModalRecouple(8, rng, "f64")
        hs = Tensor(rng.standard_normal((2, 3, 6, 6)), dtype="f64")
        ls = Tensor(rng.standard_normal((2, 5, 6, 6)), dtype="f64")
        yi, yv = rec.forward(hs, Tensor(hs.data), ls, Tensor(ls.data))
        ok = yi.shape == (2, 8, 6, 6) and yv.shape == (2, 8, 6, 6)
        return 0.0 if ok else 1.0
    reports.append(_run_check("css.channel_restoring_shapes", seed, 0.0, shape_contract))

    def css_fd():
        rng = _rng_for(seed, "css.fd")
        rec = CrossModalRecouple(6, rng, "f64")
        _randomize_biases(rec, rng)
        feats = [Parameter(Tensor(rng.standard_normal((1, 3, 6, 6)), dtype="f64"), f"f{i}")
                 for i in range(4)]

        def loss_fn():
            yi, yv = rec.forward(*feats)
            return add(reduce_sum(yi), reduce_sum(yv))

        rep = finite_diff_check("css.fd.inner", loss_fn, feats + rec.parameters(),
                                tolerance=1e-4, seed=seed)
        return rep.metric
    reports.append(_run_check("css.finite_difference", seed, 1e-4, css_fd))
    return reports


# ---------------------------------------------------------------------------
# suite: mrm
# ---------------------------------------------------------------------------

def _suite_mrm(seed: int) -> list[CheckReport]:
    reports = []

    def mask_invariants():
        target = round(0.3 * 256) * 16  # 64x64 map, patch 4
        for s in range(1000):
            m = sample_complementary_masks(64, 64, 0.3, 4, seed=seed * 100000 + s)
            if np.logical_and(m.mask_i, m.mask_v).any():
                return 1.0
            if m.covered != target:
                return 1.0
            blocks = m.union.reshape(16, 4, 16, 4)
            per_patch = blocks.sum(axis=(1, 3))
            if not np.isin(per_patch, (0, 16)).all():
                return 1.0
        m1 = sample_complementary_masks(64, 64, 0.3, 4, seed=seed + 7)
        m2 = sample_complementary_masks(64, 64, 0.3, 4, seed=seed + 7)
        same = np.array_equal(m1.mask_i, m2.mask_i) and np.array_equal(m1.mask_v, m2.mask_v)
        return 0.0 if same else 1.0
    reports.append(_run_check("mrm.mask_invariants_1000_seeds", seed, 0.0, mask_invariants))

    def attention_rows():
        rng = _rng_for(seed, "mrm.rows")
        att = CrossAttention(6, rng, "f64")
        a = Tensor(rng.standard_normal((2, 6, 4, 4)), dtype="f64")
        b = Tensor(rng.standard_normal((2, 6, 4, 4)), dtype="f64")
        rows = att.attention_rows(a, b)
        return float(np.abs(rows.sum(axis=-1) - 1.0).max())
    reports.append(_run_check("mrm.attention_rows_sum_to_one", seed, 1e-6, attention_rows))

    def attention_shift_invariance():
        from .tensor import affine, bmm, softmax_w, to_tokens, transpose_hw
        rng = _rng_for(seed, "mrm.shift")
        att = CrossAttention(6, rng, "f64")
        a = Tensor(rng.standard_normal((1, 6, 4, 4)), dtype="f64")
        b = Tensor(rng.standard_normal((1, 6, 4, 4)), dtype="f64")
        q = to_tokens(att.wq.forward(a))
        k = to_tokens(att.wk.forward(b))
        scores = affine(bmm(q, transpose_hw(k)), 1.0 / math.sqrt(att.head_width))
        rows = softmax_w(scores)
        rows_shifted = softmax_w(affine(scores, 1.0, 17.5))
        err = float(np.abs(rows.data - rows_shifted.data).max())
        # tie the hand-built scores to the layer's own attention matrix
        err = max(err, float(np.abs(rows.data[:, 0] - att.attention_rows(a, b)).max()))
        return err
    reports.append(_run_check("mrm.attention_key_shift_invariance", seed, 1e-6,
                              attention_shift_invariance))

    def attention_reference():
        rng = _rng_for(seed, "mrm.ref")
        att = CrossAttention(5, rng, "f64")
        a = Tensor(rng.standard_normal((2, 5, 3, 4)), dtype="f64")
        b = Tensor(rng.standard_normal((2, 5, 3, 4)), dtype="f64")
        ref = _attention_reference(att, a.data, b.data)
        return float(np.abs(att.forward(a, b).data - ref).max())
    reports.append(_run_check("mrm.attention_reference_loop", seed, 1e-10, attention_reference))

    def attention_permutation():
        rng = _rng_for(seed, "mrm.perm")
        att = CrossAttention(5, rng, "f64")
        a = rng.standard_normal((1, 5, 4, 4))
        b = Tensor(rng.standard_normal((1, 5, 4, 4)), dtype="f64")
        out = att.forward(Tensor(a, dtype="f64"), b).data
        perm = rng.permutation(16)
        a_tokens = a.reshape(1, 5, 16)[:, :, perm].reshape(1, 5, 4, 4)
        out_p = att.forward(Tensor(a_tokens, dtype="f64"), b).data
        expected = out.reshape(1, 5, 16)[:, :, perm].reshape(1, 5, 4, 4)
        return float(np.abs(out_p - expected).max())
    reports.append(_run_check("mrm.attention_query_permutation", seed, 1e-10, attention_permutation))

    def cru_shapes():
        rng = _rng_for(seed, "mrm.shapes")
        fi = Tensor(rng.standard_normal((1, 64, 32, 32)), dtype="f32")
        fv = Tensor(rng.standard_normal((1, 64, 32, 32)), dtype="f32")
        cru_i = CrossReconstructionUnit(ReconConfig(64, 3, out_channels=1), rng, "f32")
        cru_v = CrossReconstructionUnit(ReconConfig(64, 3, out_channels=3), rng, "f32")
        ri = cru_i.forward(fi, fv, expect_hw=(256, 256))
        rv = cru_v.forward(fv, fi, expect_hw=(256, 256))
        ok = ri.shape == (1, 1, 256, 256) and rv.shape == (1, 3, 256, 256)
        return 0.0 if ok else 1.0
    reports.append(_run_check("mrm.cru_output_shapes", seed, 0.0, cru_shapes))

    def cru_fd():
        rng = _rng_for(seed, "mrm.crufd")
        cru = CrossReconstructionUnit(ReconConfig(8, 1, out_channels=1), rng, "f64")
        _randomize_biases(cru, rng)
        pa = Parameter(Tensor(rng.standard_normal((1, 8, 16, 16)), dtype="f64"), "fa")
        pb = Parameter(Tensor(rng.standard_normal((1, 8, 16, 16)), dtype="f64"), "fb")
        target = Tensor(rng.random((1, 1, 32, 32)), dtype="f64")

        def loss_fn():
            out = cru.forward(pa, pb)
            d = reconstruction_loss(out, out, target, target)
            return d

        rep = finite_diff_check("mrm.crufd.inner", loss_fn, [pa, pb] + cru.parameters(),
                                tolerance=1e-4, seed=seed)
        return rep.metric
    reports.append(_run_check("mrm.cru_finite_difference", seed, 1e-4, cru_fd))
    return reports


# ---------------------------------------------------------------------------
# suite: training
# ---------------------------------------------------------------------------

def _suite_training(seed: int) -> list[CheckReport]:
    reports = []

    def rc_loss_independent():
        rng = _rng_for(seed, "training.rc")
        fi = Tensor(rng.standard_normal((2, 1, 6, 6)), dtype="f64")
        fv = Tensor(rng.standard_normal((2, 3, 6, 6)), dtype="f64")
        ii = Tensor(rng.standard_normal((2, 1, 6, 6)), dtype="f64")
        iv = Tensor(rng.standard_normal((2, 3, 6, 6)), dtype="f64")
        got = reconstruction_loss(fi, fv, ii, iv).item()
        sq_i = math.fsum((float(a) - float(b)) ** 2
                         for a, b in zip(fi.data.ravel(), ii.data.ravel()))
        sq_v = math.fsum((float(a) - float(b)) ** 2
                         for a, b in zip(fv.data.ravel(), iv.data.ravel()))
        ref = 0.5 * sq_i / fi.size + 0.5 * sq_v / fv.size
        return abs(got - ref)
    reports.append(_run_check("training.rc_loss_independent_reduction", seed, 1e-12,
                              rc_loss_independent))

    def total_loss_contract():
        w = LossWeights(1.0, 1.0)
        err = abs(total_loss(0.2, 0.3, w) - 0.5)
        err = max(err, abs(total_loss(0.7, 0.9, LossWeights(0.0, 2.0)) - 1.8))
        a, b = 0.31, 1.7
        lin = abs(total_loss(a + b, 0.0, w) - total_loss(a, 0.0, w) - total_loss(b, 0.0, w))
        return max(err, lin)
    reports.append(_run_check("training.total_loss_linearity", seed, 1e-12, total_loss_contract))

    def sgd_recursion():
        p = Parameter(Tensor.full((1, 1, 1, 1), 1.0, "f64"), "w")
        opt = SGD([p], lr=0.1, momentum=0.0, weight_decay=0.0)
        p.grad[...] = 1.0
        opt.step()
        err = abs(p.value.item() - 0.9)
        p2 = Parameter(Tensor.full((1, 1, 1, 1), 1.0, "f64"), "w2")
        opt2 = SGD([p2], lr=0.1, momentum=0.9, weight_decay=0.0)
        g1, g2 = 0.5, -0.2
        p2.grad[...] = g1
        opt2.step()
        v1 = g1
        w1 = 1.0 - 0.1 * v1
        p2.grad[...] = g2
        opt2.step()
        v2 = 0.9 * v1 + g2
        w2 = w1 - 0.1 * v2
        err = max(err, abs(p2.value.item() - w2))
        p3 = Parameter(Tensor.full((1, 1, 1, 1), 0.7, "f64"), "w3")
        SGD([p3], lr=0.5, momentum=0.9, weight_decay=0.0).step()  # zero grads: identity
        err = max(err, abs(p3.value.item() - 0.7))
        return err
    reports.append(_run_check("training.sgd_momentum_recursion", seed, 0.0, sgd_recursion))

    def cross_modal_gradient_flow():
        rng = _rng_for(seed, "training.flow")
        c, h = 6, 8
        cru = CrossReconstructionUnit(ReconConfig(c, 1, out_channels=1), rng, "f64")
        pi = Parameter(Tensor(rng.standard_normal((1, c, h, h)), dtype="f64"), "feat_i")
        pv = Parameter(Tensor(rng.standard_normal((1, c, h, h)), dtype="f64"), "feat_v")
        masks = sample_complementary_masks(h, h, 0.4, 2, seed=seed + 3)
        target = Tensor(rng.random((1, 1, 2 * h, 2 * h)), dtype="f64")
        g = OpGraph()
        with record(g):
            mi, mv = apply_masks(pi, pv, masks)
            out = cru.forward(mi, mv)
            loss = reconstruction_loss(out, out, target, target)
        backward(g, loss)
        sel_i = masks.mask_i.astype(bool)
        grad_i_masked = np.abs(pi.grad[0, :, sel_i]).max()
        grad_v_at_masked_i = np.abs(pv.grad[0, :, sel_i]).max()
        ok = grad_i_masked == 0.0 and grad_v_at_masked_i > 0.0
        return 0.0 if ok else 1.0
    reports.append(_run_check("training.cross_modal_gradient_flow", seed, 0.0,
                              cross_modal_gradient_flow))

    def stem_fd():
        rng = _rng_for(seed, "training.stemfd")
        from .encoder import Stem
        stem = Stem(3, 4, rng, "f64")
        _randomize_biases(stem, rng)
        px = Parameter(Tensor(rng.standard_normal((1, 3, 16, 16)), dtype="f64"), "img")
        rep = finite_diff_check("training.stemfd.inner",
                                lambda: reduce_sum(stem.forward(px)),
                                [px] + stem.parameters(), tolerance=1e-4, seed=seed)
        return rep.metric
    reports.append(_run_check("training.stem_finite_difference", seed, 1e-4, stem_fd))

    def rc_loss_fd():
        rng = _rng_for(seed, "training.rcfd")
        fi = Parameter(Tensor(rng.standard_normal((1, 1, 6, 6)), dtype="f64"), "fi")
        fv = Parameter(Tensor(rng.standard_normal((1, 3, 6, 6)), dtype="f64"), "fv")
        ii = Tensor(rng.standard_normal((1, 1, 6, 6)), dtype="f64")
        iv = Tensor(rng.standard_normal((1, 3, 6, 6)), dtype="f64")
        rep = finite_diff_check("training.rcfd.inner",
                                lambda: reconstruction_loss(fi, fv, ii, iv),
                                [fi, fv], tolerance=1e-4, seed=seed)
        return rep.metric
    reports.append(_run_check("training.rc_loss_finite_difference", seed, 1e-4, rc_loss_fd))

    def end_to_end_grads_nonzero():
        rng = _rng_for(seed, "training.e2e")
        from .training import build_pipeline
        cfg = EncoderConfig(stem_channels=8, stages=2, group_count=2, seed=seed, dtype="f64")
        enc, cru_i, cru_v = build_pipeline(cfg, recon_seed=seed + 1)
        ii = Tensor(rng.random((1, 1, 32, 32)), dtype="f64")
        iv = Tensor(rng.random((1, 3, 32, 32)), dtype="f64")
        g = OpGraph()
        with record(g):
            feats = enc.forward(ii, iv)
            fi, fv = feats[-1]
            masks = sample_complementary_masks(fi.shape[2], fi.shape[3], 0.3, 1, seed=seed)
            mi, mv = apply_masks(fi, fv, masks)
            loss = total_loss(reconstruction_loss(cru_i.forward(mi, mv), cru_v.forward(mv, mi),
                                                  ii, iv),
                              0.0, LossWeights(1.0, 0.0))
        backward(g, loss)
        enc_norm = sum(float(np.abs(p.grad).sum()) for p in enc.parameters())
        cru_norm = sum(float(np.abs(p.grad).sum())
                       for p in cru_i.parameters() + cru_v.parameters())
        return 0.0 if (enc_norm > 0 and cru_norm > 0) else 1.0
    reports.append(_run_check("training.backward_reaches_all_components", seed, 0.0,
                              end_to_end_grads_nonzero))
    return reports


_SUITES = {
    "tensor": _suite_tensor,
    "dct": _suite_dct,
    "hfu": _suite_hfu,
    "lfu": _suite_lfu,
    "css": _suite_css,
    "mrm": _suite_mrm,
    "training": _suite_training,
}


def run_suite(names, seed: int = 0) -> tuple[list[CheckReport], bool]:
    """Run the named suites; returns (reports sorted by name, all_passed).

    Unknown names raise before anything executes. "all" expands to every suite.
    """
    if isinstance(names, str):
        names = [names]
    expanded: list[str] = []
    for n in names:
        if n == "all":
            expanded.extend(SUITE_NAMES)
        elif n in _SUITES:
            expanded.append(n)
        else:
            raise ConfigError(f"unknown suite {n!r}; expected one of {SUITE_NAMES + ('all',)}")
    reports: list[CheckReport] = []
    for n in dict.fromkeys(expanded):
        reports.extend(_SUITES[n](seed))
    reports.sort(key=lambda r: r.name)
    return reports, all(r.passed for r in reports)


def reports_to_text(reports: list[CheckReport]) -> str:
    lines = []
    for r in reports:
        line = (f"{r.status.upper():4s} {r.name}  metric={r.metric:.3e}  "
                f"tol={r.tolerance:.3e}  seed={r.seed}  millis={r.millis:.1f}")
        if r.note:
            line += f"  note={r.note}"
        lines.append(line)
    passed = sum(r.passed for r in reports)
    lines.append(f"# {passed}/{len(reports)} checks passed")
    return "\n".join(lines) + "\n"


def reports_to_json(reports: list[CheckReport]) -> list[dict]:
    return [{"name": r.name, "status": r.status, "metric": r.metric,
             "tolerance": r.tolerance, "seed": r.seed, "millis": r.millis,
             **({"note": r.note} if r.note else {})} for r in reports]
