"""Acceptance criteria 1-10, each printing one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``. Criterion 9 trains toy
models and takes roughly half an hour on one CPU core.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from resp3d import _kernels
from resp3d import frames as fp
from resp3d import trainer as tr
from resp3d.analysis import (Instrumented, flop_study, grad_check_module, grad_check_ops, instrumented_madds,
                             param_count_delta, profile, tiny_block, tiny_network_config)
from resp3d.cli import main
from resp3d.network import NetworkConfig, build_model, load_checkpoint, save_checkpoint
from resp3d.p3d import P3DBlock, P3DBlockConfig, apply_attention, attention_mask, feature_residual
from resp3d.tensor import Tensor, ops, precision

TABLE1 = [("conv1_rgb", "32×56²"), ("conv1_residual", "32×56²"), ("res2", "32×56²"), ("res3", "32×28²"),
          ("res4", "32×14²"), ("res5", "32×7²"), ("pool", "1×1×1")]


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_01_shape_conformance(capsys):
    capsys.readouterr()
    t0 = time.perf_counter()
    code = main(["inspect-shapes"])
    elapsed = time.perf_counter() - t0
    out = capsys.readouterr().out
    rows = {line.split()[0]: line.split()[-1] for line in out.splitlines()[1:]}
    got = [(stage, rows.get(stage)) for stage, _ in TABLE1]
    ok = code == 0 and got == TABLE1 and elapsed < 1.0
    report(capsys, 1, ok, f"output sizes {', '.join(f'{s} {v}' for s, v in got)}; {elapsed:.3f}s")


def test_criterion_02_gradient_correctness(capsys, monkeypatch):
    t0 = time.perf_counter()
    ops_reports = grad_check_ops(0)
    worst_op = max(ops_reports.items(), key=lambda kv: kv[1].max_rel_err)
    block, x = tiny_block(0)
    block_err = grad_check_module(block, [x], 0).max_rel_err
    correct = _kernels.impl.feature_residual_backward
    monkeypatch.setattr(_kernels.impl, "feature_residual_backward", lambda f, g: 0.5 * correct(f, g))
    block, x = tiny_block(0)
    control_err = grad_check_module(block, [x], 0).max_rel_err
    monkeypatch.undo()
    elapsed = time.perf_counter() - t0
    ok = worst_op[1].max_rel_err <= 1e-4 and block_err <= 1e-4 and control_err > 1e-4 and elapsed < 300
    report(capsys, 2, ok, f"{len(ops_reports)} ops max {worst_op[1].max_rel_err:.2e} ({worst_op[0]}); "
                          f"block {block_err:.2e}; negative control {control_err:.2e} flagged; {elapsed:.1f}s")


def _conv_case(rng, kind):
    N, C, T, H, W = (int(rng.integers(1, m + 1)) for m in (2, 3, 4, 6, 6))
    co = int(rng.integers(1, 4))
    x, b = rng.standard_normal((N, C, T, H, W)), rng.standard_normal(co)
    if kind == "spatial":
        k = int(rng.choice([1, 3]))
        s, pad = int(rng.integers(1, 3)), (k - 1) // 2
        w = rng.standard_normal((co, C, 1, k, k))
        got = ops.conv_spatial(Tensor(x), Tensor(w), Tensor(b), s, pad).data
        ref = Instrumented().conv(x, w, b, s, (0, pad, pad))
    elif kind == "temporal":
        pad = int(rng.integers(0, 2))
        w = rng.standard_normal((co, C, 3, 1, 1))
        if T + 2 * pad < 3:
            pad = 1
        got = ops.conv_temporal(Tensor(x), Tensor(w), Tensor(b), pad).data
        ref = Instrumented().conv(x, w, b, 1, (pad, 0, 0))
    else:
        s = int(rng.integers(1, 3))
        w = rng.standard_normal((co, C))
        got = ops.conv_pointwise(Tensor(x), Tensor(w), Tensor(b), s).data
        ref = Instrumented().pointwise(x, w, b, s)
    return float(np.abs(got - ref).max())


def test_criterion_03_convolution_oracle(capsys):
    rng = np.random.default_rng(2024)
    worst = {}
    with precision("float64"):
        for case in range(100):
            kind = ("spatial", "temporal", "pointwise")[case % 3]
            worst[kind] = max(worst.get(kind, 0.0), _conv_case(rng, kind))
    ok = max(worst.values()) <= 1e-12
    report(capsys, 3, ok, "100 cases, max abs diff " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
           + f" (backend {_kernels.BACKEND})")


def test_criterion_04_flop_claim(capsys):
    study = flop_study()
    conv, expansion = study.chosen
    p3d = profile(replace(NetworkConfig(), restore_expansion=expansion)).gflops(conv)
    f3d = profile(replace(NetworkConfig(), restore_expansion=expansion, conv_backend="full3d")).gflops(conv)
    ratio = f3d / p3d
    ok = abs(p3d - 30) <= 0.15 * 30 and abs(f3d - 163) <= 0.25 * 163 and 4.0 <= ratio <= 6.8
    report(capsys, 4, ok, f"pair ({conv}, expansion {expansion}): pseudo3d {p3d:.2f} G (target 30 ±15%), "
                          f"full3d {f3d:.2f} G (target 163 ±25%), ratio {ratio:.2f} (target 4.0-6.8)")


def test_criterion_05_cost_model_oracle(capsys):
    variants = [{}, {"modalities": ("residual",)}, {"conv_backend": "full3d"}, {"enable_attention": False},
                {"enable_feature_residual": False}, {"restore_expansion": 2}]
    rows = []
    for overrides in variants:
        cfg = tiny_network_config(**overrides)
        rng = np.random.default_rng(0)
        shape = (1, 3, cfg.clip_len, cfg.crop, cfg.crop)
        rgb = rng.standard_normal(shape) if "rgb" in cfg.modalities else None
        res = rng.standard_normal(shape) if "residual" in cfg.modalities else None
        _, counted = instrumented_madds(build_model(cfg), rgb, res)
        rows.append((counted, profile(cfg).total_madds))
    ok = all(a == b for a, b in rows)
    report(capsys, 5, ok, f"{len(rows)} tiny configs, instrumented == analytic: "
                          + ", ".join(f"{a}{'==' if a == b else '!='}{b}" for a, b in rows))


def test_criterion_06_residual_invariants(capsys):
    rng = np.random.default_rng(6)
    frames = rng.integers(0, 256, (40, 16, 16, 3)) / 256.0
    seq = fp.FrameSequence(frames.astype(np.float32), 15.0, "random")
    static = fp.FrameSequence(np.repeat(frames[:1], 40, axis=0).astype(np.float32), 15.0, "static")
    checks = {}
    checks["static"] = all(not fp.build_residual_clip(static, 0, 32, s).data.any() for s in (1, 2, 4))
    pair = fp.FrameSequence(frames[:2].astype(np.float32), 15.0, "pair")
    swapped = fp.FrameSequence(frames[1::-1].astype(np.float32), 15.0, "swapped")
    checks["symmetry"] = np.array_equal(fp.residual_frame(pair, 0, 1), fp.residual_frame(swapped, 0, 1))
    shifted = fp.FrameSequence((frames + 0.25).astype(np.float32), 15.0, "shifted")
    checks["offset"] = all(np.array_equal(fp.build_residual_clip(seq, 0, 32, s).data,
                                          fp.build_residual_clip(shifted, 0, 32, s).data) for s in (1, 2, 4))
    lengths = []
    for s in (1, 2, 4):
        native = fp.build_residual_clip(seq, 3, 32, s, "none")
        padded = fp.build_residual_clip(seq, 3, 32, s, "repeat")
        lengths.append((s, native.length, padded.length))
        checks[f"pad s={s}"] = (native.length == 32 - s and padded.length == 32
                               and np.array_equal(padded.data[:32 - s], native.data))
    ok = all(checks.values())
    report(capsys, 6, ok, "static zero, symmetry, offset exact; native/padded lengths "
                          + ", ".join(f"s={s}: {n}/{p}" for s, n, p in lengths)
                          + ("" if ok else f"; failing {[k for k, v in checks.items() if not v]}"))


def test_criterion_07_attention_invariants(capsys):
    rng = np.random.default_rng(7)
    inside = sign = bounds = True
    for _ in range(1000):
        n, c = int(rng.integers(1, 3)), int(rng.integers(1, 7))
        f = rng.standard_normal((n, c, int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 4))))
        mask = attention_mask(f, rng.standard_normal((c, c)) * 3, rng.standard_normal(c) * 3).data
        inside &= bool(((mask > 0) & (mask < 1)).all())
        out = apply_attention(f, mask).data
        sign &= bool(np.array_equal(np.sign(out), np.sign(f)))
        bounds &= bool((np.abs(f) <= np.abs(out)).all() and (np.abs(out) <= 2 * np.abs(f)).all())
    block = P3DBlock(P3DBlockConfig(8, 4, 8), np.random.default_rng(0))
    x = Tensor(rng.standard_normal((2, 8, 4, 6, 6)).astype(np.float32))
    r = block.reduce(x)
    fm = block.temporal(r)
    f = ops.concat_channels([block.spatial(r), fm, feature_residual(fm)]).data
    zero_mask = attention_mask(f, block.attention.weight, block.attention.bias).data
    gain = np.array_equal(zero_mask, np.full_like(zero_mask, 0.5)) and np.array_equal(block.transform(x).data, 1.5 * f)
    ok = inside and sign and bounds and gain
    report(capsys, 7, ok, f"1000 tensors: mask in (0,1) {inside}, sign kept {sign}, |f|<=|f_att|<=2|f| {bounds}; "
                          f"zero-init mask 0.5 and gain exactly 1.5 {gain}")


def test_criterion_08_ablation_reachability(capsys):
    base = NetworkConfig()
    table4 = {
        "full module": base,
        "w/o attention": replace(base, enable_attention=False),
        "w/o residual feature": replace(base, enable_feature_residual=False),
        "w/o both": replace(base, enable_attention=False, enable_feature_residual=False),
    }
    counts = {name: build_model(cfg).num_parameters() for name, cfg in table4.items()}
    blocks = [b for _, b in base.block_configs()]
    att3 = sum(3 * b.mid_channels * (3 * b.mid_channels + 1) for b in blocks)
    att2 = sum(2 * b.mid_channels * (2 * b.mid_channels + 1) for b in blocks)
    res_path = sum(b.mid_channels * b.out_channels for b in blocks)
    closed = {
        ("full module", "w/o attention"): att3,
        ("full module", "w/o residual feature"): att3 - att2 + res_path,
        ("w/o attention", "w/o both"): res_path,
        ("w/o residual feature", "w/o both"): att2,
        ("full module", "w/o both"): att3 + res_path,
    }
    ok = True
    for (a, b), expected in closed.items():
        ok &= counts[a] - counts[b] == param_count_delta(table4[a], table4[b]) == expected
    report(capsys, 8, ok, "params " + ", ".join(f"{k} {v:,}" for k, v in counts.items())
                          + f"; {len(closed)} deltas match closed forms")


def _toy_run(root, modality, clip_len, seed, epochs, early_stop):
    net = tr.toy_network(modality, clip_len)
    data = tr.toy_data_config(root / "train", root / "val")
    train_index = fp.open_dataset(root / "train")
    data = tr.with_standardizers(data, tr.fit_standardizers(tr.VideoDataset(train_index, net, data)))
    train_set = tr.VideoDataset(train_index, net, data)
    val_set = tr.VideoDataset(fp.open_dataset(root / "val"), net, data)
    cfg = tr.TrainConfig(epochs=epochs, seed=seed, early_stop_top1=early_stop)
    return tr.train(build_model(net, seed), train_set, cfg, val_set)


@pytest.mark.slow
def test_criterion_09_learnability(capsys, tmp_path_factory):
    passes, lines = 0, []
    for seed in (0, 1, 2):
        t0 = time.perf_counter()
        root = tmp_path_factory.mktemp(f"toy_seed{seed}")
        tr.generate_toy_splits(root, seed, 200, 80)
        residual = _toy_run(root, "residual", 16, seed, 60, 0.9)
        control = _toy_run(root, "rgb", 1, seed, 60, 0.0)
        reach = next((r.epoch for r in residual.history if r.top1 >= 0.9), None)
        worst_control = max(r.top1 for r in control.history)
        ok = reach is not None and worst_control <= 0.40
        passes += ok
        lines.append(f"seed {seed}: residual best {residual.best_top1:.3f} "
                     f"(>=0.9 at epoch {reach}), rgb T=1 max {worst_control:.3f} final {control.final.top1:.3f} "
                     f"[{'ok' if ok else 'miss'}, {time.perf_counter() - t0:.0f}s]")
        with capsys.disabled():
            print(f"\n  {lines[-1]}")
        if passes >= 2 or passes + (2 - seed) < 2:
            break
    report(capsys, 9, passes >= 2, f"{passes} seed(s) passed (need 2 of 3): " + "; ".join(lines))


def test_criterion_10_determinism_and_persistence(capsys, toy_small, tmp_path):
    net = tr.toy_network("residual", 4, crop=24, stage_blocks=(1, 1, 1, 1), stage_channels=(4, 4, 8, 8),
                         conv1_channels=4, fc1_units=16)
    data = replace(tr.toy_data_config(), short_side=32)
    ds = tr.VideoDataset(toy_small[1], net, data)
    cfg = tr.TrainConfig(epochs=4, batch_size=4, seed=11)
    first = [tr.train(build_model(net, 11), ds, replace(cfg, epochs=1)).history[0].loss for _ in range(2)]
    same_loss = first[0] == first[1]

    model = build_model(net, 11)
    full = tr.train(model, ds, cfg)
    clip = np.random.default_rng(0).standard_normal((2, 3, 4, 24, 24)).astype(np.float32)
    before = model.eval()(res=clip).data
    save_checkpoint(model, tmp_path / "m.ckpt")
    loaded, _ = load_checkpoint(tmp_path / "m.ckpt", build_model(net, 0))
    round_trip = np.array_equal(loaded.eval()(res=clip).data, before)

    class Stop(Exception):
        pass

    def halt(rec):
        if rec.epoch == 2:
            raise Stop

    with pytest.raises(Stop):
        tr.train(build_model(net, 11), ds, cfg, run_dir=tmp_path / "run", on_epoch=halt)
    resumed_model = build_model(net, 0)
    resumed = tr.resume(resumed_model, tmp_path / "run" / tr.LAST_CKPT, ds, cfg)
    ref = dict(model.named_parameters())
    same_resume = [r.loss for r in resumed.history] == [r.loss for r in full.history] and all(
        np.array_equal(p.data, ref[k].data) for k, p in resumed_model.named_parameters())
    ok = same_loss and round_trip and same_resume
    report(capsys, 10, ok, f"epoch-1 loss bitwise {same_loss} ({first[0]:.6f}); checkpoint forward bitwise "
                           f"{round_trip}; resume after epoch 2 == uninterrupted {same_resume}")
