"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from mtr_codec import entropy, genadv
from mtr_codec.coder import (
    TOTAL, AdaptiveModel, RangeDecoder, RangeEncoder, build_cdf_gaussian,
)
from mtr_codec.memorizer import CellState, cell_step, init_conv_lstm
from mtr_codec.numerics import DTYPE, Rng
from mtr_codec.pipeline.ablation import run_ablation
from mtr_codec.pipeline.codec import encode_gop, estimated_bits, quantize_gop
from mtr_codec.pipeline.forward import generator_losses, heatmaps
from mtr_codec.pipeline.metrics import bitrate_kbps
from mtr_codec.pipeline.model import ABLATIONS, CRITICS, GENERATOR_SIDE, ModelConfig, init_weights
from mtr_codec.pipeline.synth import synth_dataset, synth_sequence
from mtr_codec.pipeline.train import TrainConfig, central_difference, train_toy
from mtr_codec.recaller import attend, init_attention, recall, recall_monc
from mtr_codec.skeleton import NUM_NODES, Skeleton, absolute_bits, decode_track, encode_track

from test_memorizer import scalar_cell


# ---------------------------------------------------------------- criterion 1

def _ideal_bits(symbol, model):
    """Information content of one symbol under the model it is coded with (escape included)."""
    lo, hi = model.bound
    inside = lo <= symbol <= hi
    if isinstance(model, AdaptiveModel):
        idx = symbol - lo if inside else len(model.freq) - 1
        bits = -math.log2(model.freq[idx] / model.total)
    else:
        idx = symbol - lo if inside else model.size - 1
        bits = -math.log2((model.cum[idx + 1] - model.cum[idx]) / TOTAL)
    return bits if inside else bits + 16 + 1


def test_criterion_01_range_coder(verdict):
    rng = np.random.default_rng(2024)
    failures, worst = [], 0.0
    for case in range(100):
        n = int(10 ** rng.uniform(0, 4))
        sigmas = np.exp(rng.uniform(-3, 4, size=8))
        statics = [build_cdf_gaussian(float(s), 32) for s in sigmas]
        skew = rng.dirichlet(np.full(63, 0.3))
        adaptive = AdaptiveModel(-31, 31)
        enc, ideal, plan = RangeEncoder(), 0.0, []
        for _ in range(n):
            if rng.random() < 0.5:
                k = int(rng.integers(len(statics)))
                model = statics[k]
                sym = int(np.rint(rng.normal(0.0, sigmas[k])))
            else:
                k, model = -1, adaptive
                sym = int(rng.choice(63, p=skew)) - 31 if rng.random() > 0.01 else int(rng.integers(-9000, 9000))
            sym = max(-65535, min(65535, sym))
            ideal += _ideal_bits(sym, model)
            enc.encode_symbol(sym, model)
            plan.append((k, sym))
        data = enc.finish()
        dec, replay = RangeDecoder(data), AdaptiveModel(-31, 31)
        got = [dec.decode_symbol(replay if k < 0 else statics[k]) for k, _ in plan]
        if got != [s for _, s in plan]:
            failures.append(f"case {case} (n={n}) did not round-trip")
        if n >= 1000:
            bits = 8 * len(data)
            worst = max(worst, bits / (ideal * 1.02 + 64))
            if bits > ideal * 1.02 + 64:
                failures.append(f"case {case}: {bits} bits > 1.02 x {ideal:.0f} + 64")
    verdict(1, not failures, f"100 mixed streams round-trip; worst size/bound {worst:.3f}"
            + ("" if not failures else f"; {failures[:3]}"))


# ---------------------------------------------------------------- criterion 2

def test_criterion_02_normalization(verdict):
    errs = []
    for s in (1e-4, 0.1, 1.0, 10.0, 1e4):
        n = int(40 * s) + 50
        errs.append(abs(entropy.prob_memory(np.arange(-n, n + 1), s).sum() - 1.0))
    rng = np.random.default_rng(5)
    for _ in range(10):
        loc, ls = rng.uniform(-10, 10), rng.uniform(math.log(1e-4), math.log(1e2))
        n = int(60 * math.exp(ls) + abs(loc)) + 60
        errs.append(abs(entropy.prob_hyper(np.arange(-n, n + 1), loc, ls).sum() - 1.0))
    verdict(2, max(errs) <= 1e-6, f"max |sum - 1| = {max(errs):.2e} over 15 densities")


# ---------------------------------------------------------------- criterion 3

def test_criterion_03_estimate_fidelity(verdict):
    cfg = ModelConfig()
    worst, bad = 0.0, []
    for seed in range(20):
        w = init_weights(cfg, seed)
        for k in ("embed.w1", "embed.w2"):  # vary the memory spread across instances
            w.tensors[k] = w.tensors[k] * np.float32(1.0 + 0.25 * (seed % 5))
        seq = synth_sequence(Rng(1000 + seed), cfg.height, cfg.width, cfg.gop_size)
        st = quantize_gop(seq.frames, w)
        est = estimated_bits(st, w)
        actual = encode_gop(seq.frames, seq.track, w).memory_bits
        slack = 0.02 * est + 192
        worst = max(worst, abs(actual - est) / slack)
        if abs(actual - est) > slack:
            bad.append((seed, actual, round(est)))
    verdict(3, not bad, f"20 instances; worst |actual - estimate| / (2% + 192) = {worst:.3f}" + (f" {bad}" if bad else ""))


# ---------------------------------------------------------------- criterion 4

def test_criterion_04_convlstm_oracle(verdict):
    worst = 0.0
    for n, shape in enumerate([(1, 1, 1)] * 25 + [(2, 4, 4)] * 25):
        rng = Rng(500 + n)
        cm, h, w = shape
        p = init_conv_lstm(rng, cm, h, w, scale=2.0)
        for k in p:
            if k.startswith("b_"):
                p[k] = rng.normal(p[k].shape)
        x = rng.normal(shape)
        prev = CellState(rng.normal(shape), np.tanh(rng.normal(shape)).astype(DTYPE))
        got = cell_step(p, x, prev)
        c_ref, h_ref = scalar_cell(p, x, prev.C, prev.H)
        worst = max(worst, float(np.abs(got.C - c_ref).max()), float(np.abs(got.H - h_ref).max()))
    verdict(4, worst <= 1e-6, f"50 instances, max abs deviation {worst:.2e}")


# ---------------------------------------------------------------- criterion 5

def test_criterion_05_attention_algebra(verdict):
    one, zero = np.ones((1, 1, 1, 1), DTYPE), np.zeros(1, DTYPE)
    p = {"q_w": one, "q_b": zero, "k_w": np.array([[[[1.0]], [[0.0]]]], DTYPE), "k_b": zero,
         "v_w": np.array([[[[0.0]], [[1.0]]]], DTYPE), "v_b": zero}
    kv = np.array([[[3.0]], [[5.0]]])
    hand = attend(np.full((1, 1, 1), 2.0), kv, p).ravel().tolist()
    zero_q = attend(np.zeros((1, 1, 1)), kv, p).ravel().tolist()
    # orthogonal keys: Q along e1, K along e2, so W = 0
    eye = np.eye(2, dtype=DTYPE)[:, :, None, None]
    p2 = {"q_w": eye, "q_b": np.zeros(2, DTYPE), "k_w": np.concatenate([eye, 0 * eye], 1),
          "k_b": np.zeros(2, DTYPE), "v_w": np.concatenate([0 * eye, eye], 1), "v_b": np.zeros(2, DTYPE)}
    q = np.array([1.0, 0.0]).reshape(2, 1, 1) * np.ones((2, 1, 3))
    k = np.array([0.0, 1.0]).reshape(2, 1, 1) * np.ones((2, 1, 3))
    v = Rng(1).normal((2, 1, 3))
    ortho = attend(q, np.concatenate([k, v]), p2)
    ortho_ok = np.allclose(ortho, np.concatenate([q, v]), atol=0)
    rng = Rng(11)
    pa = init_attention(rng, 18, 18, 4)
    mem, heat = rng.normal((18, 2, 2)), rng.random((18, 2, 2)).astype(DTYPE)
    differs = not np.allclose(recall(mem, heat, pa), recall_monc(mem, heat, pa))
    ok = hand == [32.0, 5.0] and zero_q == [0.0, 5.0] and ortho_ok and differs
    verdict(5, ok, f"(2,3,5)->{hand}, zero query->{zero_q}, orthogonal keys exact={ortho_ok}, MonC differs={differs}")


# ---------------------------------------------------------------- criterion 6

def _walk(rng, length, max_step, random_visibility):
    pos = rng.integers(0, 1000, size=(NUM_NODES, 2))
    track = []
    for _ in range(length):
        pos = np.clip(pos + rng.integers(-max_step, max_step + 1, size=pos.shape), 0, 65535)
        vis = rng.random(NUM_NODES) < 0.8 if random_visibility else None
        track.append(Skeleton.from_array(pos, vis))
    return track


def test_criterion_06_skeleton_codec(verdict):
    rng = np.random.default_rng(66)
    mismatches = 0
    for _ in range(1000):
        track = _walk(rng, 10, 7, True)
        mismatches += decode_track(encode_track(track), 10) != track
    ratios = []
    for _ in range(100):
        track = _walk(rng, 10, 3, False)
        ratios.append(8 * len(encode_track(track)) / absolute_bits(track))
    ok = mismatches == 0 and max(ratios) <= 0.40
    verdict(6, ok, f"1000 tracks, {mismatches} mismatches; bounded-motion size ratio max {max(ratios):.3f} "
                   f"(mean {np.mean(ratios):.3f}) of absolute 16-bit")


# ---------------------------------------------------------------- criterion 7

_DETERMINISM_SCRIPT = textwrap.dedent("""
    import hashlib
    import numpy as np
    from mtr_codec.container import unpack_container
    from mtr_codec.pipeline.codec import decode_gop, encode_gop, quantize_gop
    from mtr_codec.pipeline.model import ModelConfig, init_weights
    from mtr_codec.pipeline.synth import synth_sequence
    from mtr_codec.numerics import Rng
    cfg = ModelConfig(height=16, width=16, gop_size=4, cm=4, cz=2, d=4, gen_widths=(8, 4))
    for seed in range(10):
        w = init_weights(cfg, seed)
        seq = synth_sequence(Rng(seed), 16, 16, 4)
        stream = encode_gop(seq.frames, seq.track, w).pack()
        dec = decode_gop(unpack_container(stream), w)
        st = quantize_gop(seq.frames, w)
        exact = (np.array_equal(dec.m_hat, st.m_hat) and np.array_equal(dec.z_hat, st.z_hat)
                 and dec.track == seq.track)
        digest = hashlib.sha256(stream + dec.frames.astype("<f4").tobytes()).hexdigest()
        print(seed, digest, exact)
""")


def test_criterion_07_determinism(verdict):
    runs = [subprocess.run([sys.executable, "-c", _DETERMINISM_SCRIPT], capture_output=True, text=True, check=True)
            for _ in range(2)]
    a, b = runs[0].stdout.splitlines(), runs[1].stdout.splitlines()
    exact = all(line.endswith("True") for line in a + b)
    ok = len(a) == 10 and a == b and exact
    verdict(7, ok, f"10 pairs, two processes identical={a == b}, decoder state equals encoder state={exact}")


# ---------------------------------------------------------------- criterion 8

def test_criterion_08_fd_gradient(verdict):
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(20):
        m = float(np.float32(rng.uniform(0.3, 4.0) * rng.choice([-1, 1])))
        s = float(np.exp(rng.uniform(-0.5, 1.5)))
        fn = lambda b: entropy.memory_bits(b.astype(np.float64)[:, :, None, None], np.full((1, 1, 1), s))
        g = central_difference(fn, np.array([m], DTYPE))[0]
        a, c = (m + 0.5) / s, (m - 0.5) / s
        pdf = lambda x: math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
        prob = 0.5 * (math.erf(a / math.sqrt(2)) - math.erf(c / math.sqrt(2)))
        want = -(pdf(a) - pdf(c)) / s / (prob * math.log(2))
        worst = max(worst, abs(g - want) / abs(want))
    verdict(8, worst <= 1e-3, f"20 points, max relative error {worst:.2e}")


# ---------------------------------------------------------------- criteria 9, 10

@pytest.fixture(scope="module")
def toy_data():
    return synth_dataset(7, 4, 8, 8, 4)


def test_criterion_09_toy_optimization(verdict, toy_data):
    rows, ok = [], True
    for seed in (0, 1, 2):
        r = train_toy(TrainConfig(seed=seed, steps=200, gop_size=4), toy_data)
        n_params = r.weights.count(GENERATOR_SIDE + CRITICS)
        tr = np.array(r.trace)
        k = len(tr) // 10
        first, last = tr[:k].mean(), tr[-k:].mean()
        ok &= bool(last < first) and n_params <= 2000 and len(tr) == 200
        rows.append(f"seed {seed}: {first:.2f} -> {last:.2f}")
    verdict(9, ok, f"8x8, T=4, {n_params} params, 200 steps; " + "; ".join(rows))


def test_criterion_10_rate_control(verdict, toy_data):
    bits = []
    for lam in (0.1, 1.0, 10.0):
        w = train_toy(TrainConfig(seed=0, steps=200, gop_size=4, lambda_rate=lam), toy_data).weights
        bits.append(sum(encode_gop(s.frames, s.track, w).memory_bits for s in toy_data))
    ok = bits[0] >= bits[1] >= bits[2]
    verdict(10, ok, f"coded memory bits over 4 clips at lambda_rate 0.1/1/10: {bits}")


# ---------------------------------------------------------------- criterion 11

def test_criterion_11_loss_constants(verdict):
    cfg = ModelConfig(height=8, width=8, gop_size=4, cm=2, cz=1, d=2, gen_widths=(4, 4), disc_widths=(2, 2))
    w = init_weights(cfg, 3)
    for g in CRITICS:
        w.tensors[f"{g}.w3"] = np.zeros_like(w.tensors[f"{g}.w3"])
        w.tensors[f"{g}.b3"] = np.zeros_like(w.tensors[f"{g}.b3"])
    seq = synth_sequence(Rng(3), 8, 8, 4)
    heat = heatmaps(seq.track, cfg)
    rng = Rng(4)
    noise_m, noise_z = rng.uniform_centered(cfg.memory_shape), rng.uniform_centered((1, 1, 1))
    T = cfg.gop_size
    ps, pt = w.group("disc_s"), w.group("disc_t")
    losses = generator_losses(w.tensors, cfg, seq.frames, heat, noise_m, noise_z)
    spatial = float(genadv.loss_dis_spatial(seq.frames, losses.fake, heat.full, ps))
    temporal = float(genadv.loss_dis_temporal(seq.frames, losses.fake, heat.full, pt))
    adv = float(losses.adv)
    hand = float(losses.rate) + adv + 10 * float(losses.perceptual) + 10 * float(losses.fm)
    checks = {
        "spatial critic 2T log2": math.isclose(spatial, 2 * T * math.log(2), rel_tol=1e-6),
        "temporal critic 2(T-1) log2": math.isclose(temporal, 2 * (T - 1) * math.log(2), rel_tol=1e-6),
        "generator adversarial (2T-1) log2": math.isclose(adv, (T + T - 1) * math.log(2), rel_tol=1e-6),
        "weighted total": math.isclose(float(losses.total), hand, rel_tol=1e-9),
        "numeric example": genadv.loss_total(3.0, 2.0, 0.5, 0.25) == 3.0 + 2.0 + 2.5 + 5.0,
        "default lambdas": (genadv.LAMBDA_RATE, genadv.LAMBDA_FM, genadv.LAMBDA_VGG) == (1.0, 10.0, 10.0),
    }
    failed = [k for k, v in checks.items() if not v]
    verdict(11, not failed, f"T={T}: spatial {spatial:.4f}, adversarial {adv:.4f}, total {float(losses.total):.4f}"
            + (f"; failed {failed}" if failed else ""))


# ---------------------------------------------------------------- criterion 12

def test_criterion_12_ablation_harness(verdict):
    data = synth_dataset(12, 1, 8, 8, 4)
    reports = {v: run_ablation(v, TrainConfig(steps=2, gop_size=4), data) for v in ABLATIONS}
    ok = set(reports) == {"full", "no_memorize", "no_recall", "monc"}
    parts = []
    for v, r in reports.items():
        ok &= {"kbps", "psnr"} <= set(r) and np.isfinite(r["psnr"])
        ok &= math.isclose(r["kbps"], bitrate_kbps(r["bits_per_gop"], 4)) and math.isclose(
            r["kbps"], r["bits_per_gop"] * 25 / 4 / 1000)
        parts.append(f"{v} {r['kbps']:.2f} Kbps / {r['psnr']:.1f} dB")
    verdict(12, ok, "; ".join(parts))
