"""Acceptance criteria, one test per criterion, one printed pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see every line. Each
criterion pins its tolerance here; several consume the shared verification
suite run so the whole module stays fast.
"""
import math
import time

import numpy as np
import pytest

from freqfuse.cli import main
from freqfuse.encoder import EncoderConfig, EncoderStage
from freqfuse.mrm import sample_complementary_masks
from freqfuse.tensor import (OpGraph, Parameter, Tensor, backward, read_fdt,
                             record, reduce_sum, write_fdt)
from freqfuse.training import TrainConfig, build_pipeline, parse_report, toy_train_run
from freqfuse.verify import _randomize_biases, finite_diff_check, run_suite

SEED = 7


@pytest.fixture(scope="module")
def suite():
    reports, ok = run_suite("all", seed=SEED)
    return {r.name: r for r in reports}


def _report(num: int, name: str, ok: bool, detail: str = ""):
    line = f"[criterion {num}] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


def test_criterion_1_dct_correctness(suite):
    oracle = suite["dct.oracle_match_100x8x8"]
    ortho = suite["dct.basis_orthogonality_8x8"]
    runtime_s = (oracle.millis + ortho.millis) / 1e3
    ok = (oracle.passed and oracle.tolerance == 1e-12
          and ortho.passed and ortho.tolerance == 1e-9
          and runtime_s < 5.0)
    _report(1, "DCT matches quadruple-loop oracle; bases orthogonal", ok,
            f"oracle {oracle.metric:.2e} <= 1e-12, ortho {ortho.metric:.2e} <= 1e-9, "
            f"{runtime_s:.2f}s < 5s")


def test_criterion_2_reparam_equivalence(suite):
    f64 = suite["lfu.reparam_equivalence_f64"]
    f32 = suite["lfu.reparam_equivalence_f32"]
    fault = suite["lfu.reparam_fault_injection_detected"]
    runtime_s = (f64.millis + f32.millis + fault.millis) / 1e3
    ok = (f64.passed and f64.tolerance == 1e-10 and f32.passed and f32.tolerance == 1e-4
          and fault.passed and runtime_s < 30.0)
    _report(2, "merged == multi-branch over 20 seeds; fault-injected kernel fails", ok,
            f"f64 {f64.metric:.2e} <= 1e-10, f32 {f32.metric:.2e} <= 1e-4, "
            f"{runtime_s:.2f}s < 30s")


def test_criterion_3_gradient_fidelity(suite):
    names = ["training.stem_finite_difference", "hfu.finite_difference",
             "lfu.finite_difference_multi_branch", "lfu.finite_difference_merged",
             "css.finite_difference", "mrm.cru_finite_difference",
             "training.rc_loss_finite_difference"]
    checks = [suite[n] for n in names]
    fault = suite["tensor.gradcheck_fault_injection_detected"]
    runtime_s = (sum(c.millis for c in checks) + fault.millis) / 1e3
    ok = (all(c.passed and c.tolerance == 1e-4 for c in checks)
          and fault.passed and runtime_s < 120.0)
    worst = max(c.metric for c in checks)
    _report(3, "finite differences agree for stem/HFU/LFU(x2)/CSS/CRU/rc_loss; "
               "1.01x fault detected", ok,
            f"worst rel err {worst:.2e} <= 1e-4, {runtime_s:.2f}s < 2min")


def test_criterion_4_mask_contract(suite):
    masks = suite["mrm.mask_invariants_1000_seeds"]
    runtime_s = masks.millis / 1e3
    sample = sample_complementary_masks(64, 64, 0.3, 4, seed=SEED)
    exact = sample.covered == round(0.3 * 256) * 16
    ok = masks.passed and exact and runtime_s < 10.0
    _report(4, "1000 seeds: disjoint, patch-aligned, exact quantized coverage", ok,
            f"coverage {sample.covered} px, {runtime_s:.2f}s < 10s")


def test_criterion_5_shape_contract():
    enc, cru_i, cru_v = build_pipeline(EncoderConfig(seed=SEED))
    g = np.random.default_rng(SEED)
    feats = enc.forward(Tensor(g.random((1, 1, 256, 256)), dtype="f32"),
                        Tensor(g.random((1, 3, 256, 256)), dtype="f32"))
    shapes = [f[0].shape[1:] for f in feats]
    fi, fv = feats[-1]
    ri = cru_i.forward(fi, fv, expect_hw=(256, 256))
    rv = cru_v.forward(fv, fi, expect_hw=(256, 256))
    ok = (shapes == [(16, 128, 128), (32, 64, 64), (64, 32, 32)]
          and ri.shape == (1, 1, 256, 256) and rv.shape == (1, 3, 256, 256))
    _report(5, "default config stage and reconstruction shapes", ok,
            f"stages {shapes}, recon {ri.shape}/{rv.shape}")


def test_criterion_6_toy_reconstruction_learning():
    t0 = time.perf_counter()
    report = toy_train_run(TrainConfig())  # 200 steps, seed 42, detection weight 0
    runtime_s = time.perf_counter() - t0
    rerun = toy_train_run(TrainConfig())
    finite = all(math.isfinite(v) for v in report.losses)
    deterministic = report.losses == rerun.losses
    halved = report.loss_ratio <= 0.5
    with open("tests/fixtures/toy_curve_seed42.txt") as fh:
        fixture = parse_report(fh.read())
    regression = (fixture.steps == report.steps
                  and np.allclose(fixture.losses, report.losses, rtol=1e-7, atol=0))
    ok = finite and deterministic and halved and regression and runtime_s < 300.0
    _report(6, "toy training: finite, deterministic, final <= 0.5 x initial, "
               "matches recorded curve", ok,
            f"ratio {report.loss_ratio:.3f}, {runtime_s:.1f}s < 5min")


def test_criterion_7_ablation_plumbing():
    modes = ("H_only", "L_only", "serial_HL", "serial_LH", "parallel_HL")
    all_ok = True
    details = []
    for mode in modes:
        cfg = EncoderConfig(combination_mode=mode, group_count=2, dtype="f64", seed=SEED)
        rng = np.random.default_rng(SEED)
        stage = EncoderStage(cfg, 8, rng)
        _randomize_biases(stage, rng)
        pi = Parameter(Tensor(rng.standard_normal((1, 8, 6, 6)), dtype="f64"), "xi")
        pv = Parameter(Tensor(rng.standard_normal((1, 8, 6, 6)), dtype="f64"), "xv")

        def loss_fn():
            yi, yv = stage.forward(pi, pv)
            return reduce_sum(yi)

        graph = OpGraph()
        with record(graph):
            loss = loss_fn()
        backward(graph, loss)
        grads_flow = any(float(np.abs(p.grad).sum()) > 0 for p in stage.parameters())
        stage.zero_grad()
        rep = finite_diff_check(f"stage.{mode}", loss_fn,
                                [pi, pv] + stage.parameters(),
                                tolerance=1e-4, seed=SEED, coords=16)
        calls = stage.unit_calls
        exclusive = ((mode != "H_only" or calls["lfu"] == 0)
                     and (mode != "L_only" or calls["hfu"] == 0))
        mode_ok = grads_flow and rep.passed and exclusive
        all_ok = all_ok and mode_ok
        details.append(f"{mode}: rel {rep.metric:.1e}{'' if mode_ok else ' FAIL'}")
    _report(7, "all five combination modes build, train, and stay exclusive", all_ok,
            "; ".join(details))


def test_criterion_8_cli_and_format(tmp_path, capsys):
    t = Tensor(np.random.default_rng(SEED).standard_normal((2, 3, 4, 5)), dtype="f32")
    path = tmp_path / "t.fdt"
    write_fdt(path, t)
    roundtrip = read_fdt(path).data.tobytes() == t.data.tobytes()

    import struct
    hand = b"FDT1" + bytes([0, 4]) + struct.pack("<4Q", 1, 1, 1, 2) + struct.pack("<2f", 1.0, 2.0)
    hp = tmp_path / "hand.fdt"
    hp.write_bytes(hand)
    decoded = read_fdt(hp)
    hand_ok = decoded.shape == (1, 1, 1, 2) and decoded.data.reshape(-1).tolist() == [1.0, 2.0]

    exit0 = main(["--seed", str(SEED), "verify", "--suite", "dct"]) == 0
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text("stem_channels = 8\nstages = 2\ngroup_count = 2\nsteps = 1\n"
                   "image_size = 32\nimage_count = 2\nbatch_size = 1\nmask_patch = 1\n")
    exit1 = main(["--config", str(cfg), "train-toy"]) == 1  # 1 step cannot halve the loss
    try:
        main(["verify", "--suite", "ffu"])
        exit2_usage = False
    except SystemExit as err:
        exit2_usage = err.code == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense_key = 1\n")
    exit2_config = main(["--config", str(bad), "info"]) == 2
    capsys.readouterr()

    ok = roundtrip and hand_ok and exit0 and exit1 and exit2_usage and exit2_config
    _report(8, "FDT round-trip/hand fixture; CLI exit statuses 0/1/2", ok,
            f"roundtrip={roundtrip}, hand={hand_ok}, codes 0/1/2="
            f"{exit0}/{exit1}/{exit2_usage and exit2_config}")
