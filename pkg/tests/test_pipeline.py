from dataclasses import replace

import numpy as np
import pytest

from mtr_codec import entropy
from mtr_codec.container import fnv1a64, unpack_container
from mtr_codec.errors import ConfigurationError, DecodeError
from mtr_codec.numerics import DTYPE, Rng
from mtr_codec.pipeline.ablation import run_ablation
from mtr_codec.pipeline.codec import (
    WeightsMismatchError, decode_gop, encode_gop, estimated_bits, latent_shape, quantize_gop,
)
from mtr_codec.pipeline.frameio import read_dataset, read_frames, read_pgm, write_frames, write_sequence
from mtr_codec.pipeline.metrics import PSNR_CAP, bitrate_kbps, mean_psnr, psnr, to_uint8
from mtr_codec.pipeline.model import (
    ABLATIONS, ModelConfig, ModelWeights, init_weights, parse_key_values, weights_from_bytes,
)
from mtr_codec.pipeline.synth import synth_dataset, synth_sequence
from mtr_codec.pipeline.train import TrainConfig
from mtr_codec.skeleton import NUM_NODES, Skeleton

SMALL = ModelConfig(height=16, width=16, gop_size=3, cm=3, cz=2, d=3, gen_widths=(4, 4))


@pytest.fixture(scope="module")
def clip():
    return synth_dataset(5, 1, 16, 16, 3)[0]


class TestModelConfig:
    def test_defaults(self):
        c = ModelConfig()
        assert (c.height, c.width, c.gop_size, c.cm) == (32, 32, 10, 8)
        assert c.memory_shape == (8, 8, 8) and c.variant == "full"

    def test_text_round_trip(self):
        c = SMALL.with_variant("monc")
        assert ModelConfig.from_mapping(parse_key_values(c.to_text())) == c

    @pytest.mark.parametrize("kw", [dict(height=10), dict(attention="x"), dict(memorize="x"), dict(gop_size=0)])
    def test_rejects(self, kw):
        with pytest.raises(ConfigurationError):
            ModelConfig(**kw)

    def test_variants(self):
        for name, (mem, att) in ABLATIONS.items():
            c = SMALL.with_variant(name)
            assert (c.memorize, c.attention, c.variant) == (mem, att, name)
        with pytest.raises(ConfigurationError):
            SMALL.with_variant("nope")


class TestWeightsFile:
    def test_round_trip_and_hash(self, tmp_path):
        w = init_weights(SMALL, 3)
        h = w.save(tmp_path / "w.mtrw")
        assert h == w.hash == fnv1a64((tmp_path / "w.mtrw").read_bytes())
        back = ModelWeights.load(tmp_path / "w.mtrw")
        assert back.config == w.config and back.to_bytes() == w.to_bytes()

    def test_layout(self):
        data = init_weights(SMALL).to_bytes()
        assert data[:4] == b"MTRW" and data[4] == 1

    def test_hash_changes_with_any_value(self):
        w = init_weights(SMALL)
        v = w.copy()
        v.tensors["gen.b3"] = v.tensors["gen.b3"] + np.float32(1e-3)
        assert v.hash != w.hash

    def test_no_lstm_for_first_frame(self):
        w = init_weights(SMALL.with_variant("no_memorize"))
        assert not w.names(["lstm"])

    @pytest.mark.parametrize("cut", [3, 10, 200, -1])
    def test_truncated(self, cut):
        with pytest.raises(DecodeError):
            weights_from_bytes(init_weights(SMALL).to_bytes()[:cut])

    def test_layout_mismatch(self):
        w = init_weights(SMALL)
        del w.tensors["gen.b3"]
        with pytest.raises(DecodeError, match="missing"):
            weights_from_bytes(w.to_bytes())


class TestCodec:
    def test_round_trip_exact(self, clip):
        w = init_weights(SMALL, 1)
        c = encode_gop(clip.frames, clip.track, w)
        dec = decode_gop(unpack_container(c.pack()), w)
        st = quantize_gop(clip.frames, w)
        np.testing.assert_array_equal(dec.m_hat, st.m_hat)
        np.testing.assert_array_equal(dec.z_hat, st.z_hat)
        assert dec.track == clip.track
        assert dec.frames.shape == clip.frames.shape
        assert dec.m_hat.shape == SMALL.memory_shape and dec.z_hat.shape == latent_shape(SMALL)

    def test_estimate_close_to_actual(self, clip):
        w = init_weights(SMALL, 2)
        st = quantize_gop(clip.frames, w)
        c = encode_gop(clip.frames, clip.track, w)
        assert abs(c.memory_bits - estimated_bits(st, w)) <= 0.02 * estimated_bits(st, w) + 192

    def test_weights_mismatch(self, clip):
        w = init_weights(SMALL, 1)
        c = encode_gop(clip.frames, clip.track, w)
        with pytest.raises(WeightsMismatchError):
            decode_gop(c, init_weights(SMALL, 2))
        with pytest.raises(WeightsMismatchError):
            encode_gop(clip.frames, clip.track, w, weights_hash=123)

    def test_shape_and_track_contracts(self, clip):
        w = init_weights(SMALL)
        with pytest.raises(ConfigurationError):
            encode_gop(clip.frames[:2], clip.track[:2], w)
        far = Skeleton.from_array(np.full((NUM_NODES, 2), 100))
        with pytest.raises(ConfigurationError):
            encode_gop(clip.frames, [far] * 3, w)

    def test_corrupt_memory_payload(self, clip):
        w = init_weights(SMALL, 1)
        c = encode_gop(clip.frames, clip.track, w)
        with pytest.raises(DecodeError):
            decode_gop(replace(c, m_payload=b""), w)


def identity_retention(full: ModelWeights) -> ModelWeights:
    """ConvLSTM that copies tanh of its first input into the cell and ignores everything else."""
    w = full.copy()
    cm = full.config.cm
    for k in list(w.tensors):
        if k.startswith("lstm.") or k.startswith("hyper."):
            w.tensors[k] = np.zeros_like(w.tensors[k])
    centre = np.zeros((cm, cm, 3, 3), DTYPE)
    centre[np.arange(cm), np.arange(cm), 1, 1] = 1.0
    w.tensors["lstm.W_xc"] = centre
    w.tensors["lstm.b_i"] = np.full(cm, 20.0, DTYPE)
    # saturate the embedder so rounding cannot tell e from tanh(e)
    w.tensors["embed.w2"] = w.tensors["embed.w2"] * 50
    w.tensors["embed.b1"] = np.linspace(-0.5, 0.5, cm).astype(DTYPE)
    return w


class TestAblationEquivalence:
    def test_single_frame_no_memorize_matches_full(self):
        cfg = ModelConfig(height=16, width=16, gop_size=1, cm=3, cz=2, d=3, gen_widths=(4, 4))
        clip = synth_sequence(Rng(4), 16, 16, 1)
        full = identity_retention(init_weights(cfg, 9))
        first = ModelWeights(cfg.with_variant("no_memorize"),
                             {k: v for k, v in full.tensors.items() if not k.startswith("lstm.")})
        a = encode_gop(clip.frames, clip.track, full)
        b = encode_gop(clip.frames, clip.track, first)
        assert np.any(quantize_gop(clip.frames, full).m_hat != 0)
        assert (a.z_payload, a.m_payload, a.skeleton_payload) == (b.z_payload, b.m_payload, b.skeleton_payload)
        np.testing.assert_array_equal(decode_gop(a, full).frames, decode_gop(b, first).frames)

    def test_report_fields(self):
        data = synth_dataset(0, 1, 8, 8, 2)
        rep = run_ablation("no_recall", TrainConfig(steps=1, gop_size=2), data)
        assert rep["variant"] == "no_recall" and rep["clips"] == 1
        assert rep["kbps"] == pytest.approx(bitrate_kbps(rep["bits_per_gop"], 2))
        assert np.isfinite(rep["psnr"])
        with pytest.raises(ValueError):
            run_ablation("bogus", TrainConfig(steps=1, gop_size=2), data)


class TestSynth:
    def test_shapes_grid_and_clues(self):
        seqs = synth_dataset(1, 2, 16, 12, 5, max_step=2)
        for s in seqs:
            assert s.frames.shape == (5, 1, 16, 12) and s.frames.dtype == DTYPE
            np.testing.assert_array_equal((to_uint8(s.frames) / 127.5 - 1.0).astype(DTYPE), s.frames)
            assert all(k.inside(12, 16) for k in s.track)
            xy = np.array([[k.x, k.y] for k in s.track])
            assert np.abs(np.diff(xy, axis=0)).max() <= 2

    def test_deterministic(self):
        a, b = synth_dataset(3, 1, 8, 8, 3)[0], synth_dataset(3, 1, 8, 8, 3)[0]
        np.testing.assert_array_equal(a.frames, b.frames)
        assert a.track == b.track

    def test_rejects_bad_size(self):
        with pytest.raises(ConfigurationError):
            synth_dataset(0, 1, 10, 8, 2)

    def test_drop_visibility(self):
        s = synth_dataset(0, 1, 16, 16, 4, drop_prob=0.5)[0]
        assert not all(all(k.visible) for k in s.track)


class TestMetrics:
    def test_psnr_examples(self):
        level = lambda v: v / 127.5 - 1.0
        a = np.full((1, 4, 4), level(100))
        assert psnr(a, a) == PSNR_CAP
        b = a.copy()
        b[0, 0, 0] = level(110)  # MSE = 100 / 16
        assert psnr(a, b) == pytest.approx(10 * np.log10(255 ** 2 / 6.25))
        assert to_uint8(level(np.arange(256))).tolist() == list(range(256))

    def test_extremes(self):
        assert psnr(-np.ones((1, 2, 2)), np.ones((1, 2, 2))) == pytest.approx(0.0)

    def test_mean_psnr_is_per_frame_average(self):
        ref = np.zeros((2, 1, 2, 2))
        rec = ref.copy()
        rec[1] = 1.0
        assert mean_psnr(ref, rec) == pytest.approx((PSNR_CAP + psnr(ref[1], rec[1])) / 2)

    def test_kbps(self):
        assert bitrate_kbps(840, 10) == pytest.approx(2.1)
        assert bitrate_kbps(4000, 25, fps=25) == 4.0


class TestFrameIO:
    def test_pgm_round_trip(self, tmp_path, clip):
        write_frames(tmp_path / "f", clip.frames)
        back = read_frames(tmp_path / "f")
        np.testing.assert_array_equal(back, clip.frames)
        assert (tmp_path / "f" / "frame_0000.pgm").read_bytes()[:2] == b"P5"

    def test_dataset(self, tmp_path):
        seqs = synth_dataset(2, 2, 8, 8, 2)
        for i, s in enumerate(seqs):
            write_sequence(tmp_path / f"c{i}", s)
        back = read_dataset(tmp_path)
        assert [b.track for b in back] == [s.track for s in seqs]

    def test_errors(self, tmp_path):
        with pytest.raises(DecodeError):
            read_frames(tmp_path)
        (tmp_path / "x.pgm").write_bytes(b"garbage")
        with pytest.raises(DecodeError):
            read_pgm(tmp_path / "x.pgm")


def test_rate_of_quantized_state_is_finite(clip):
    w = init_weights(SMALL)
    st = quantize_gop(clip.frames, w)
    assert np.isfinite(entropy.rate_bits(st.m_hat, st.z_hat, st.sigma, w.group("zprior")))


class TestRateAccounting:
    @pytest.mark.parametrize("seed", range(4))
    def test_payload_brackets_estimate(self, seed):
        w = init_weights(SMALL, seed)
        seq = synth_sequence(Rng(seed), 16, 16, 3)
        st = quantize_gop(seq.frames, w)
        c = encode_gop(seq.frames, seq.track, w)
        est = estimated_bits(st, w)
        payload = c.memory_bits
        assert payload >= est
        assert payload <= est * 1.02 + 192
        assert c.total_bits == 8 * len(c.pack())

    def test_all_zero_weights_minimal_payload(self, clip):
        w = init_weights(SMALL)
        w.tensors = {k: np.zeros_like(v) for k, v in w.tensors.items()}
        st = quantize_gop(clip.frames, w)
        assert not st.m_hat.any() and not st.z_hat.any()
        # sigma = exp(0) = 1 everywhere, so each zero costs -log2 P(0 | sigma=1)
        ideal = st.m_hat.size * -np.log2(entropy.prob_memory(0, 1.0)) + st.z_hat.size * -np.log2(
            entropy.prob_hyper(0, 0.0, 0.0))
        assert estimated_bits(st, w) == pytest.approx(ideal)
        assert encode_gop(clip.frames, clip.track, w).memory_bits <= ideal + 2 * 40
