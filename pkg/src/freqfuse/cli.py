"""Command-line driver.

Subcommands: ``verify`` (run check suites), ``bench`` (time multi-branch vs
merged low-frequency forward), ``train-toy`` (deterministic toy training),
``dct`` (write a basis plane or a spectrum as FDT), ``info`` (config echo and
parameter counts). Exit status: 0 all checks passed, 1 check or property
failures, 2 usage/config errors. Reports go to stdout, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import dct as dctmod
from .config import encoder_config_from, load_config, train_config_from
from .encoder import EncoderConfig, LowFreqConfig, LowFreqUnit, expected_parameter_count
from .errors import FreqfuseError, TrainingDivergedError
from .tensor import Tensor, read_fdt, write_fdt
from .training import TrainConfig, build_pipeline, format_report, parse_report, toy_train_run
from .verify import reports_to_json, reports_to_text, run_suite, SUITE_NAMES


def _parse_shape(text: str) -> tuple[int, int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"shape must be NxCxHxW, got {text!r}")
    return tuple(int(p) for p in parts)  # type: ignore[return-value]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freqfuse", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="seed for all randomized behavior")
    parser.add_argument("--config", type=str, default=None, help="flat key = value config file")
    parser.add_argument("--json", action="store_true", help="emit machine-readable reports")
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run verification suites")
    p_verify.add_argument("--suite", action="append", choices=SUITE_NAMES + ("all",),
                          default=None, help="suite name (repeatable); default all")

    p_bench = sub.add_parser("bench", help="micro-benchmark")
    p_bench.add_argument("target", choices=("lfu",), help="what to benchmark")
    p_bench.add_argument("--shape", type=_parse_shape, default=(1, 16, 64, 64),
                         help="input shape NxCxHxW")
    p_bench.add_argument("--iters", type=int, default=50)

    p_train = sub.add_parser("train-toy", help="run the deterministic toy training loop")
    p_train.add_argument("--steps", type=int, default=None, help="override step count")
    p_train.add_argument("--out", type=str, default=None, help="also write the report here")
    p_train.add_argument("--compare", type=str, default=None,
                         help="compare against a previously written report")

    p_dct = sub.add_parser("dct", help="write a DCT basis plane or a spectrum as FDT")
    p_dct.add_argument("--out", type=str, required=True)
    g = p_dct.add_mutually_exclusive_group(required=True)
    g.add_argument("--basis", type=str, default=None, metavar="U,V",
                   help="write the basis plane for frequency (u, v)")
    g.add_argument("--input", type=str, default=None,
                   help="FDT tensor whose per-plane spectrum to write")
    p_dct.add_argument("--height", type=int, default=8)
    p_dct.add_argument("--width", type=int, default=8)

    sub.add_parser("info", help="print config echo and parameter counts")
    return parser


def _cmd_verify(args) -> int:
    suites = args.suite or ["all"]
    reports, ok = run_suite(suites, seed=args.seed)
    if args.json:
        print(json.dumps({"seed": args.seed, "checks": reports_to_json(reports),
                          "all_passed": ok}, indent=2))
    else:
        print(reports_to_text(reports), end="")
    return 0 if ok else 1


def _cmd_bench(args) -> int:
    n, c, h, w = args.shape
    rng = np.random.default_rng(args.seed)
    unit = LowFreqUnit(LowFreqConfig(channels=c), rng, "f32")
    x = Tensor(rng.standard_normal(args.shape), dtype="f32")
    merged = unit.merge()

    def time_mode(mode, kw):
        times = []
        unit.forward(x, mode=mode, **kw)  # warm-up
        for _ in range(args.iters):
            t0 = time.perf_counter()
            unit.forward(x, mode=mode, **kw)
            times.append((time.perf_counter() - t0) * 1e3)
        return {"mean_ms": float(np.mean(times)), "min_ms": float(np.min(times))}

    result = {
        "target": "lfu", "shape": list(args.shape), "iters": args.iters, "seed": args.seed,
        "modes": {"multi_branch": time_mode("multi_branch", {}),
                  "merged": time_mode("merged", {"merged": merged})},
        "equivalence_max_abs_diff": float(np.abs(
            unit.forward(x, mode="multi_branch").data
            - unit.forward(x, mode="merged", merged=merged).data).max()),
    }
    if args.json:
        print(json.dumps(result, indent=2))
    else:
        print(f"# lfu bench  shape={'x'.join(map(str, args.shape))}  iters={args.iters}  seed={args.seed}")
        for mode, t in result["modes"].items():
            print(f"{mode:13s} mean {t['mean_ms']:8.3f} ms   min {t['min_ms']:8.3f} ms")
        print(f"equivalence max |diff| = {result['equivalence_max_abs_diff']:.3e}")
    return 0


def _cmd_train_toy(args, values: dict) -> int:
    cfg = train_config_from(values, seed_override=args.seed if args.seed != 0 else None,
                            steps_override=args.steps)
    encoder_cfg = encoder_config_from(values) if values else None
    try:
        report = toy_train_run(cfg, encoder_cfg=encoder_cfg)
    except TrainingDivergedError as exc:
        print(f"training diverged at step {exc.step}", file=sys.stderr)
        return 1
    text = format_report(report)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    if args.json:
        print(json.dumps({"seed": report.seed, "steps": report.steps,
                          "initial_loss": report.initial_loss, "final_loss": report.final_loss,
                          "loss_ratio": report.loss_ratio, "losses": report.losses,
                          "config": report.config_echo}, indent=2))
    else:
        print(text, end="")
    ok = all(np.isfinite(report.losses)) and report.loss_ratio <= 0.5
    if args.compare:
        with open(args.compare) as fh:
            previous = parse_report(fh.read())
        same = (previous.steps == report.steps
                and np.allclose(previous.losses, report.losses, rtol=1e-7, atol=0))
        if not same:
            print("regression: loss sequence differs from the reference report", file=sys.stderr)
        ok = ok and same
    return 0 if ok else 1


def _cmd_dct(args) -> int:
    if args.basis is not None:
        u, _, v = args.basis.partition(",")
        basis = dctmod.dct_basis(int(u), int(v), args.height, args.width)
        write_fdt(args.out, Tensor(basis.values.reshape(1, 1, args.height, args.width),
                                   dtype="f64"))
        print(f"wrote basis ({int(u)}, {int(v)}) on {args.height}x{args.width} to {args.out}")
        return 0
    tensor = read_fdt(args.input)
    n, c, h, w = tensor.shape
    spectrum = np.empty((n, c, h, w))
    for i in range(n):
        for j in range(c):
            spectrum[i, j] = dctmod.dct2d(tensor.data[i, j])
    write_fdt(args.out, Tensor(spectrum, dtype="f64"))
    print(f"wrote {n}x{c} spectra of {h}x{w} planes to {args.out}")
    return 0


def _cmd_info(args, values: dict) -> int:
    encoder_cfg = encoder_config_from(values) if values else EncoderConfig()
    train_cfg = train_config_from(values) if values else TrainConfig()
    enc, cru_i, cru_v = build_pipeline(encoder_cfg)
    info = {
        "encoder": {
            "alpha": encoder_cfg.alpha,
            "stem_channels": encoder_cfg.stem_channels,
            "stages": encoder_cfg.stages,
            "stage_strides": list(encoder_cfg.stage_strides),
            "stage_channels": list(encoder_cfg.stage_channels),
            "cumulative_stride": encoder_cfg.cumulative_stride,
            "combination_mode": encoder_cfg.combination_mode,
            "group_count": encoder_cfg.group_count,
            "frequency_policy": encoder_cfg.frequency_policy,
            "branches": [[b.kernel, b.dilation] for b in encoder_cfg.branches],
            "seed": encoder_cfg.seed,
            "dtype": encoder_cfg.dtype,
        },
        "training": {
            "learning_rate": train_cfg.learning_rate, "momentum": train_cfg.momentum,
            "weight_decay": train_cfg.weight_decay, "steps": train_cfg.steps,
            "batch_size": train_cfg.batch_size, "mask_ratio": train_cfg.mask_ratio,
            "mask_patch": train_cfg.mask_patch,
        },
        "parameters": {
            "encoder": enc.parameter_count(),
            "encoder_closed_form": expected_parameter_count(encoder_cfg),
            "recon_infrared": cru_i.parameter_count(),
            "recon_visible": cru_v.parameter_count(),
        },
    }
    info["parameters"]["total"] = (info["parameters"]["encoder"]
                                   + info["parameters"]["recon_infrared"]
                                   + info["parameters"]["recon_visible"])
    if args.json:
        print(json.dumps(info, indent=2))
    else:
        for section, body in info.items():
            print(f"[{section}]")
            for k, v in body.items():
                print(f"  {k} = {v}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        values = load_config(args.config) if args.config else {}
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "train-toy":
            return _cmd_train_toy(args, values)
        if args.command == "dct":
            return _cmd_dct(args)
        if args.command == "info":
            return _cmd_info(args, values)
        parser.error(f"unknown command {args.command!r}")
    except FreqfuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
