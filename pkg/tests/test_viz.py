import numpy as np
import pytest

from neuralmesh import (
    Frame,
    MeshConfig,
    apply_colormap,
    init_params,
    make_rng,
    normalize,
    ppm_bytes,
    render_frame,
    run_window,
    write_frames,
    write_ppm,
)


class TestNormalize:
    def test_sigmoid_midpoint(self):
        assert normalize(np.array([0.0]), "sigmoid")[0] == 0.5

    def test_sigmoid_formula(self):
        v = np.array([-2.0, 1.0, 3.5])
        expected = 1.0 / (1.0 + np.exp(-v))
        assert np.allclose(normalize(v, "sigmoid"), expected, rtol=0, atol=1e-15)

    def test_clip_clamps(self):
        v = np.array([-0.3, 0.0, 0.4, 1.0, 2.5])
        out = normalize(v, "clip")
        assert out.tolist() == [0.0, 0.0, 0.4, 1.0, 1.0]

    def test_clip_identity_in_range(self):
        v = np.linspace(0.0, 1.0, 11)
        assert np.array_equal(normalize(v, "clip"), v)

    def test_output_always_unit_interval(self):
        v = make_rng(3).normal(0, 10, size=(5, 5))
        for mode in ("sigmoid", "clip"):
            out = normalize(v, mode)
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            normalize(np.zeros(3), "tanh")

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            normalize(np.array([0.0, np.nan]), "clip")
        with pytest.raises(ValueError):
            normalize(np.array([np.inf]), "sigmoid")


class TestColormap:
    def test_anchor_black(self):
        assert apply_colormap(0.0) == (0, 0, 0)

    def test_anchor_pink(self):
        assert apply_colormap(0.5) == (255, 105, 180)

    def test_anchor_yellow(self):
        assert apply_colormap(1.0) == (255, 255, 0)

    def test_quarter_point(self):
        # 0.5 * (255, 105, 180) rounded half-up per channel
        assert apply_colormap(0.25) == (128, 53, 90)

    def test_three_quarter_point(self):
        # midpoint of pink and yellow
        assert apply_colormap(0.75) == (255, 180, 90)

    def test_array_input_shape(self):
        u = np.array([[0.0, 0.5], [1.0, 0.25]])
        rgb = apply_colormap(u)
        assert rgb.shape == (2, 2, 3)
        assert rgb.dtype == np.uint8
        assert rgb[0, 1].tolist() == [255, 105, 180]

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            apply_colormap(-0.01)
        with pytest.raises(ValueError):
            apply_colormap(np.array([0.2, 1.01]))

    def test_green_channel_monotone(self):
        u = np.linspace(0.0, 1.0, 101)
        g = apply_colormap(u)[:, 1].astype(int)
        assert np.all(np.diff(g) >= 0)

    def test_red_channel_saturates(self):
        u = np.linspace(0.5, 1.0, 20)
        r = apply_colormap(u)[:, 0]
        assert np.all(r == 255)


class TestRenderFrame:
    def test_unit_scale_passthrough(self):
        grid = np.array([[0.0, 1.0], [0.5, 0.25]])
        frame = render_frame(grid, scale=1)
        assert (frame.height, frame.width) == (2, 2)
        assert frame.pixels[3:6] == bytes([255, 255, 0])

    def test_scale_repeats_blocks(self):
        grid = np.array([[0.0, 1.0]])
        frame = render_frame(grid, scale=3)
        assert (frame.height, frame.width) == (3, 6)
        rgb = np.frombuffer(frame.pixels, dtype=np.uint8).reshape(3, 6, 3)
        assert np.all(rgb[:, :3] == 0)
        assert np.all(rgb[:, 3:] == np.array([255, 255, 0]))

    def test_scale_validation(self):
        with pytest.raises(ValueError):
            render_frame(np.zeros((2, 2)), scale=0)

    def test_requires_2d(self):
        with pytest.raises(ValueError):
            render_frame(np.zeros(4), scale=1)


class TestPpm:
    def test_header_layout(self):
        frame = render_frame(np.zeros((2, 3)), scale=1)
        data = ppm_bytes(frame)
        assert data.startswith(b"P6\n3 2\n255\n")
        assert len(data) == len(b"P6\n3 2\n255\n") + 2 * 3 * 3

    def test_pixel_order_row_major(self):
        data = ppm_bytes(render_frame(np.array([[0.5, 1.0]]), scale=1))
        assert data.endswith(bytes([255, 105, 180, 255, 255, 0]))

    def test_write_ppm_round_trip(self, tmp_path):
        frame = render_frame(np.array([[0.25, 0.75]]), scale=2)
        path = tmp_path / "out.ppm"
        write_ppm(frame, path)
        assert path.read_bytes() == ppm_bytes(frame)


class TestFrameValidation:
    def test_pixel_count_must_match(self):
        with pytest.raises(ValueError):
            Frame(width=2, height=3, pixels=b"\x00" * 5)

    def test_exact_payload_accepted(self):
        frame = Frame(width=2, height=3, pixels=b"\x00" * 18)
        assert frame.width == 2 and frame.height == 3


class TestWriteFrames:
    def _trace(self, window=4, seed=0):
        cfg = MeshConfig(window_size=window, height=3, width=3, input_dim=5)
        params = init_params(cfg, seed=seed)
        x = make_rng(seed, 7).uniform(0.0, 1.0, size=5)
        _, trace = run_window(x, params, cfg)
        return trace

    def _read(self, path):
        with open(path, "rb") as fh:
            return fh.read()

    def test_one_file_per_step(self, tmp_path):
        trace = self._trace(window=4)
        paths = write_frames(trace, "sigmoid", 1, tmp_path)
        assert len(paths) == 4
        for p in paths:
            assert self._read(p)

    def test_step_naming(self, tmp_path):
        trace = self._trace(window=3)
        paths = write_frames(trace, "clip", 1, tmp_path)
        import os

        assert [os.path.basename(p) for p in paths] == [
            "step_000.ppm",
            "step_001.ppm",
            "step_002.ppm",
        ]

    def test_frames_show_post_update_state(self, tmp_path):
        trace = self._trace(window=2)
        paths = write_frames(trace, "sigmoid", 1, tmp_path)
        expected = ppm_bytes(render_frame(normalize(trace[1].state_end, "sigmoid"), 1))
        assert self._read(paths[1]) == expected

    def test_zero_state_is_black_in_clip_mode(self, tmp_path):
        cfg = MeshConfig(window_size=1, height=2, width=2, input_dim=3)
        params = init_params(cfg, seed=0)
        params.w_in[:] = 0.0
        _, trace = run_window(np.zeros(3), params, cfg)
        paths = write_frames(trace, "clip", 1, tmp_path)
        assert self._read(paths[0]) == b"P6\n2 2\n255\n" + b"\x00" * 12

    def test_byte_identical_across_runs(self, tmp_path):
        trace = self._trace(window=3, seed=5)
        a = write_frames(trace, "sigmoid", 1, tmp_path / "a")
        b = write_frames(trace, "sigmoid", 1, tmp_path / "b")
        for pa, pb in zip(a, b):
            assert self._read(pa) == self._read(pb)

    def test_scale_factor_applied(self, tmp_path):
        trace = self._trace(window=1)
        paths = write_frames(trace, "sigmoid", 4, tmp_path)
        assert self._read(paths[0]).startswith(b"P6\n12 12\n255\n")

    def test_creates_missing_directories(self, tmp_path):
        trace = self._trace(window=1)
        nested = tmp_path / "x" / "y" / "z"
        paths = write_frames(trace, "clip", 1, nested)
        assert self._read(paths[0]).startswith(b"P6\n")

    def test_unknown_mode_rejected(self, tmp_path):
        trace = self._trace(window=1)
        with pytest.raises(ValueError):
            write_frames(trace, "linear", 1, tmp_path)
