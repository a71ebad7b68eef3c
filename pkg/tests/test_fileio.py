import numpy as np
import pytest

from worldwalk import DepthMap, Frame, load_depth, read_frame, save_depth, write_frame
from worldwalk.fileio import frame_from_png_bytes, frame_to_png_bytes


class TestFramePng:
    def test_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        frame = Frame(rng.integers(0, 256, (24, 30, 3), dtype=np.uint8))
        path = tmp_path / "frame.png"
        write_frame(frame, path)
        np.testing.assert_array_equal(read_frame(path).pixels, frame.pixels)

    def test_bytes_round_trip(self):
        frame = Frame.filled(8, 6, (1, 2, 3))
        np.testing.assert_array_equal(
            frame_from_png_bytes(frame_to_png_bytes(frame)).pixels, frame.pixels)

    def test_png_bytes_deterministic(self):
        rng = np.random.default_rng(5)
        frame = Frame(rng.integers(0, 256, (10, 10, 3), dtype=np.uint8))
        assert frame_to_png_bytes(frame) == frame_to_png_bytes(frame)


class TestPfm:
    def test_uniform_two(self, tmp_path):
        path = tmp_path / "d.pfm"
        save_depth(DepthMap.from_values(np.full((4, 6), 2.0)), path, "pfm")
        loaded = load_depth(path, "pfm", scale=1.0)
        assert loaded.valid.all()
        np.testing.assert_array_equal(loaded.values, 2.0)

    def test_round_trip_identity_on_valid(self, tmp_path):
        rng = np.random.default_rng(7)
        vals = rng.uniform(0.5, 50, (12, 9)).astype(np.float32).astype(np.float64)
        vals[3, 4] = np.nan
        vals[5, 1] = -2.0
        depth = DepthMap.from_values(vals)
        path = tmp_path / "d.pfm"
        save_depth(depth, path, "pfm")
        loaded = load_depth(path, "pfm")
        np.testing.assert_array_equal(loaded.valid, depth.valid)
        np.testing.assert_array_equal(loaded.values[loaded.valid], vals[depth.valid])

    def test_nan_pixel_invalid_others_preserved(self, tmp_path):
        path = tmp_path / "d.pfm"
        with open(path, "wb") as f:
            f.write(b"Pf\n3 2\n-1.0\n")
            data = np.array([[1, 2, 3], [4, np.nan, 6]], dtype="<f4")
            np.flipud(data).tofile(f)
        loaded = load_depth(path, "pfm")
        assert not loaded.valid[1, 1]
        assert loaded.valid.sum() == 5
        assert loaded.values[0, 0] == 1.0 and loaded.values[1, 2] == 6.0

    def test_scale_applied(self, tmp_path):
        path = tmp_path / "d.pfm"
        save_depth(DepthMap.from_values(np.full((2, 2), 4.0)), path, "pfm")
        loaded = load_depth(path, "pfm", scale=0.5)
        np.testing.assert_array_equal(loaded.values, 2.0)

    def test_rejects_color_pfm(self, tmp_path):
        path = tmp_path / "bad.pfm"
        path.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)
        with pytest.raises(ValueError, match="color"):
            load_depth(path, "pfm")

    def test_rejects_malformed_header(self, tmp_path):
        path = tmp_path / "bad.pfm"
        path.write_bytes(b"Pf\ntwo by two\n-1.0\n")
        with pytest.raises(ValueError, match="dimension"):
            load_depth(path, "pfm")

    def test_rejects_truncated_payload(self, tmp_path):
        path = tmp_path / "bad.pfm"
        path.write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 8)
        with pytest.raises(ValueError, match="truncated"):
            load_depth(path, "pfm")

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_depth(tmp_path / "nope.pfm", "pfm")


class TestPng16:
    def test_scaled_load(self, tmp_path):
        from PIL import Image
        path = tmp_path / "d.png"
        Image.fromarray(np.full((3, 3), 1000, np.uint16)).save(path)
        loaded = load_depth(path, "png16", scale=0.001)
        assert loaded.valid.all()
        assert loaded.values[0, 0] == 1.0

    def test_round_trip_identity_on_valid(self, tmp_path):
        rng = np.random.default_rng(11)
        counts = rng.integers(0, 4000, (8, 5)).astype(np.float64)
        depth = DepthMap.from_values(counts * 0.01)
        path = tmp_path / "d.png"
        save_depth(depth, path, "png16", scale=0.01)
        loaded = load_depth(path, "png16", scale=0.01)
        np.testing.assert_array_equal(loaded.valid, depth.valid)
        np.testing.assert_allclose(loaded.values[loaded.valid], depth.values[depth.valid])

    def test_zero_is_invalid(self, tmp_path):
        from PIL import Image
        path = tmp_path / "d.png"
        arr = np.array([[0, 5], [7, 0]], np.uint16)
        Image.fromarray(arr).save(path)
        loaded = load_depth(path, "png16", scale=1.0)
        np.testing.assert_array_equal(loaded.valid, arr > 0)

    def test_range_overflow_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="range"):
            save_depth(DepthMap.from_values(np.full((2, 2), 70000.0)),
                       tmp_path / "d.png", "png16", scale=1.0)


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(ValueError, match="format"):
        load_depth(tmp_path / "x.bin", "exr")
