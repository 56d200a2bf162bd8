import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from resp3d import frames as fp
from resp3d.frames import DatasetError, FrameSequence

pixels = hnp.arrays(np.float32, (2, 4, 5, 3), elements=st.floats(0, 1, width=32))
# 8-bit style intensities on a dyadic grid, so adding a power-of-two offset is exact
grid_pixels = hnp.arrays(np.int32, (2, 4, 5, 3), elements=st.integers(0, 256)).map(
    lambda a: (a / 256).astype(np.float32))


def seq_of(frames, fps=15.0):
    return FrameSequence(np.asarray(frames, dtype=np.float32), fps, "test")


def random_seq(L=10, H=8, W=8, seed=0):
    return seq_of(np.random.default_rng(seed).random((L, H, W, 3)))


class TestFrameSequence:
    def test_needs_two_frames(self):
        with pytest.raises(ValueError):
            seq_of(np.zeros((1, 4, 4, 3)))

    def test_needs_rgb(self):
        with pytest.raises(ValueError):
            seq_of(np.zeros((3, 4, 4, 1)))


class TestResampleResize:
    def test_halves_30fps(self):
        frames = np.stack([np.full((4, 4, 3), i / 10, np.float32) for i in range(10)])
        out = fp.resample_and_resize(seq_of(frames, 30.0), 15.0, 4)
        np.testing.assert_array_equal(out.frames[:, 0, 0, 0], frames[::2, 0, 0, 0])

    def test_short_side_round_half_up(self):
        out = fp.resample_and_resize(seq_of(np.zeros((2, 240, 320, 3))), 15.0, 256)
        assert out.frames.shape[1:3] == (256, 341)

    def test_identity_at_target(self):
        s = random_seq(L=5, H=16, W=20)
        out = fp.resample_and_resize(s, 15.0, 16)
        np.testing.assert_array_equal(out.frames, s.frames)

    def test_low_fps_keeps_every_frame(self):
        out = fp.resample_and_resize(random_seq(L=7), 15.0, 8)
        assert len(out) == 7

    def test_portrait(self):
        out = fp.resample_and_resize(seq_of(np.zeros((2, 320, 240, 3))), 15.0, 256)
        assert out.frames.shape[1:3] == (341, 256)


class TestResidualFrame:
    def test_static(self):
        s = seq_of(np.repeat(np.random.default_rng(0).random((1, 4, 4, 3)), 3, axis=0))
        np.testing.assert_array_equal(fp.residual_frame(s, 0, 1), 0.0)

    def test_pixel_difference(self):
        frames = np.stack([np.full((2, 2, 3), 0.2), np.full((2, 2, 3), 0.7)])
        np.testing.assert_allclose(fp.residual_frame(seq_of(frames), 0, 1), 0.5, atol=1e-7)

    def test_translated_square(self):
        a = np.zeros((6, 6, 3), np.float32)
        b = np.zeros((6, 6, 3), np.float32)
        a[2:4, 1:3] = 1.0
        b[2:4, 2:4] = 1.0
        res = fp.residual_frame(seq_of(np.stack([a, b])), 0, 1)
        fa, fb = a[..., 0] > 0, b[..., 0] > 0
        np.testing.assert_array_equal(res[..., 0] > 0, fa ^ fb)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            fp.residual_frame(random_seq(L=3), 1, 2)

    @settings(max_examples=50, deadline=None)
    @given(pixels)
    def test_symmetric(self, pair):
        fwd = fp.residual_frame(seq_of(pair), 0, 1)
        rev = fp.residual_frame(seq_of(pair[::-1]), 0, 1)
        np.testing.assert_array_equal(fwd, rev)

    @settings(max_examples=50, deadline=None)
    @given(grid_pixels, st.sampled_from([0.125, 0.25, -0.5, 1.0]))
    def test_constant_offset_cancels(self, pair, c):
        base = fp.residual_frame(seq_of(pair), 0, 1)
        shifted = fp.residual_frame(FrameSequence(pair + np.float32(c), 15.0, "x"), 0, 1)
        np.testing.assert_array_equal(base, shifted)


class TestResidualClip:
    @pytest.mark.parametrize("s", [1, 2, 4])
    def test_native_then_padded(self, s):
        seq = random_seq(L=40, H=4, W=4)
        native = fp.build_residual_clip(seq, 3, 32, s, "none")
        padded = fp.build_residual_clip(seq, 3, 32, s, "repeat")
        assert native.length == 32 - s and padded.length == 32
        np.testing.assert_array_equal(padded.data[:32 - s], native.data)
        for k in range(s):
            np.testing.assert_array_equal(padded.data[32 - s + k], native.data[-1])
        assert padded.step_size == s and padded.modality == fp.RESIDUAL

    def test_matches_residual_frames(self):
        seq = random_seq(L=12)
        clip = fp.build_residual_clip(seq, 2, 8, 2, "none")
        for i in range(6):
            np.testing.assert_array_equal(clip.data[i], fp.residual_frame(seq, 2 + i, 2))

    def test_step_guard(self):
        with pytest.raises(ValueError, match="step size must be < clip length"):
            fp.build_residual_clip(random_seq(L=40), 0, 32, 32)

    @pytest.mark.parametrize("s,policy", [(1, "repeat"), (3, "none"), (5, "repeat")])
    def test_static_gives_zero(self, s, policy):
        static = seq_of(np.repeat(np.random.default_rng(0).random((1, 4, 4, 3)), 10, axis=0))
        for start in (0, 2):
            np.testing.assert_array_equal(fp.build_residual_clip(static, start, 8, s, policy).data, 0.0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 5))
    def test_bounded_by_window_range(self, seed, s):
        seq = random_seq(L=10, H=3, W=3, seed=seed)
        clip = fp.build_residual_clip(seq, 1, 8, s)
        window = seq.frames[1:9]
        assert clip.data.min() >= 0
        assert clip.data.max() <= window.max() - window.min()

    def test_short_video_repeats_last_frame(self):
        seq = random_seq(L=5)
        rgb = fp.build_rgb_clip(seq, 0, 8)
        assert rgb.length == 8
        np.testing.assert_array_equal(rgb.data[5:], np.repeat(seq.frames[-1:], 3, axis=0))


class TestAugmentation:
    def test_center_crop_window(self):
        frame = np.random.default_rng(0).random((1, 256, 256, 3)).astype(np.float32)
        clip = fp.Clip(frame, fp.RGB)
        out = fp.apply_geometry(clip, 1.0, "center", 112)
        np.testing.assert_array_equal(out.data, frame[:, 72:184, 72:184])

    def test_same_seed_same_crops(self):
        seq = random_seq(L=4, H=40, W=48)
        rgb = fp.build_rgb_clip(seq, 0, 4)
        a = fp.augment_train(rgb, None, 24, rng=np.random.default_rng(9))[0]
        b = fp.augment_train(rgb, None, 24, rng=np.random.default_rng(9))[0]
        assert a.geometry == b.geometry
        np.testing.assert_array_equal(a.data, b.data)

    def test_modalities_share_geometry(self):
        seq = random_seq(L=6, H=40, W=48)
        for seed in range(10):
            rgb, res = fp.augment_train(fp.build_rgb_clip(seq, 0, 4), fp.build_residual_clip(seq, 0, 4, 1), 24,
                                        rng=np.random.default_rng(seed))
            assert rgb.geometry == res.geometry
            assert rgb.data.shape == res.data.shape == (4, 24, 24, 3)

    def test_crop_too_large(self):
        clip = fp.build_rgb_clip(random_seq(L=2, H=20, W=20), 0, 2)
        with pytest.raises(ValueError, match="crop"):
            fp.apply_geometry(clip, 0.66, "tl", 16)

    @pytest.mark.parametrize("corner", fp.CORNERS)
    def test_crop_commutes_with_residual(self, corner):
        seq = random_seq(L=6, H=20, W=24)
        rgb, res = fp.build_rgb_clip(seq, 0, 6), fp.build_residual_clip(seq, 0, 6, 2, "none")
        cropped = fp.apply_geometry(rgb, 1.0, corner, 16).data
        lhs = np.abs(cropped[2:] - cropped[:-2])
        np.testing.assert_array_equal(lhs, fp.apply_geometry(res, 1.0, corner, 16).data)

    @pytest.mark.parametrize("scale", [0.875, 0.75, 0.66])
    def test_bilinear_commutes_for_sign_consistent_motion(self, scale):
        # |.| commutes with a positive-weight interpolation when b - a keeps one sign per pixel
        rng = np.random.default_rng(3)
        a = rng.random((1, 40, 40, 3)).astype(np.float32) * 0.5
        b = a + rng.random(a.shape).astype(np.float32) * 0.5
        seq = seq_of(np.concatenate([a, b]))
        rgb, res = fp.build_rgb_clip(seq, 0, 2), fp.build_residual_clip(seq, 0, 2, 1, "none")
        scaled = fp.apply_geometry(rgb, scale, "br", 24).data
        lhs = np.abs(scaled[1:] - scaled[:1])
        np.testing.assert_allclose(lhs, fp.apply_geometry(res, scale, "br", 24).data, atol=1e-6)


class TestTestSampling:
    def test_linspace(self):
        assert fp.sample_test_clips(212, 32, 10) == [round(k * 180 / 9) for k in range(10)]

    def test_length_equals_T(self):
        assert fp.sample_test_clips(32, 32, 10) == [0] * 10

    def test_one_frame_slack(self):
        starts = fp.sample_test_clips(33, 32, 10)
        assert starts == [int(np.floor(k / 9 + 0.5)) for k in range(10)]
        assert starts[0] == 0 and starts[-1] == 1

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 400), st.integers(1, 64), st.integers(2, 12))
    def test_endpoints_and_order(self, length, T, n):
        starts = fp.sample_test_clips(length, T, n)
        assert len(starts) == n and starts == sorted(starts)
        assert starts[0] == 0 and starts[-1] == max(0, length - T)


class TestDatasetLayout:
    def _video(self, root, name, n=3):
        fp.write_frames(root / name, np.random.default_rng(0).random((n, 8, 8, 3)))

    def test_scan_and_index(self, tmp_path):
        self._video(tmp_path, "b_class/v1")
        self._video(tmp_path, "a_class/v1")
        self._video(tmp_path, "a_class/v2", 4)
        idx = fp.scan_dataset(tmp_path)
        assert idx.classes == ["a_class", "b_class"]
        assert [(e.path, e.label, e.frame_count) for e in idx.entries] == [
            ("a_class/v1", 0, 3), ("a_class/v2", 0, 4), ("b_class/v1", 1, 3)]
        fp.write_index(idx, tmp_path / "index.txt")
        again = fp.open_dataset(tmp_path)
        assert [(e.path, e.label) for e in again.entries] == [(e.path, e.label) for e in idx.entries]

    def test_png_round_trip_is_8bit(self, tmp_path):
        frames = np.random.default_rng(0).random((2, 5, 6, 3)).astype(np.float32)
        fp.write_frames(tmp_path / "v", frames)
        back = fp.load_frames(tmp_path / "v").frames
        np.testing.assert_allclose(back, np.rint(frames * 255) / 255, atol=1e-7)

    def test_gap_in_numbering_names_path(self, tmp_path):
        self._video(tmp_path, "c/v", 3)
        (tmp_path / "c/v/img_00002.png").unlink()
        with pytest.raises(DatasetError, match="c/v"):
            fp.frame_files(tmp_path / "c/v")

    def test_missing_root(self, tmp_path):
        with pytest.raises(DatasetError, match="not found"):
            fp.scan_dataset(tmp_path / "nope")

    def test_malformed_index_line(self, tmp_path):
        (tmp_path / "index.txt").write_text("a/v 0 3\n")
        with pytest.raises(DatasetError, match="index.txt:1"):
            fp.read_index(tmp_path / "index.txt")

    def test_sparse_labels_rejected(self, tmp_path):
        (tmp_path / "index.txt").write_text("a/v 0 3 15\nb/v 2 3 15\n")
        with pytest.raises(DatasetError, match="dense"):
            fp.read_index(tmp_path / "index.txt")


class TestStandardize:
    def test_stats_and_apply(self):
        clips = [np.random.default_rng(i).normal(0.3, 0.1, (4, 5, 5, 3)) for i in range(3)]
        std = fp.stream_stats(clips)
        flat = np.concatenate([c.reshape(-1, 3) for c in clips])
        np.testing.assert_allclose(std.mean, flat.mean(axis=0))
        out = std(flat.astype(np.float32))
        np.testing.assert_allclose(out.mean(axis=0), 0, atol=1e-5)

    def test_batch_layout(self):
        clip = fp.Clip(np.random.default_rng(0).random((4, 6, 6, 3)).astype(np.float32), fp.RGB)
        batch = fp.batch_clips([clip, clip])
        assert batch.shape == (2, 3, 4, 6, 6)
        np.testing.assert_array_equal(batch[0, 1, 2], clip.data[2, :, :, 1])

    def test_env_workers(self, monkeypatch):
        monkeypatch.setenv("P3D_NUM_WORKERS", "3")
        assert fp.env_workers(1) == 3
        monkeypatch.delenv("P3D_NUM_WORKERS")
        assert fp.env_workers(2) == 2
