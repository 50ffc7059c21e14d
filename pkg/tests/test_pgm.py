import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from blindspot.image import Image
from blindspot.pgm import (
    MalformedHeaderError,
    TruncatedPayloadError,
    UnsupportedFormatError,
    load_f32,
    load_image,
    save_f32,
    save_image,
)


class TestLoad:
    def test_p5_normalization(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
        img = load_image(path)
        assert (img.width, img.height) == (2, 2)
        assert img.data.ravel().tolist() == [0.0, 1.0, 128 / 255, 64 / 255]

    def test_p2_ascii(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_text("P2 1 1 255 \n 255")
        img = load_image(path)
        assert img.data.tolist() == [[1.0]]

    def test_p2_with_comment(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_text("P2\n# a comment\n2 1\n255\n10 20\n")
        img = load_image(path)
        assert img.data.ravel().tolist() == [10 / 255, 20 / 255]

    def test_unsupported_magic(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P7\n1 1\n255\n\x00")
        with pytest.raises(UnsupportedFormatError):
            load_image(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P5\n2 x\n255\n\x00\x00")
        with pytest.raises(MalformedHeaderError):
            load_image(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P5\n2 2\n255\n\x00\x01")
        with pytest.raises(TruncatedPayloadError):
            load_image(path)

    def test_bad_maxval(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P5\n1 1\n100\n\x00")
        with pytest.raises(MalformedHeaderError):
            load_image(path)

    def test_16bit_big_endian(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P5\n1 1\n65535\n" + (65535).to_bytes(2, "big"))
        img = load_image(path)
        assert img.data[0, 0] == 1.0


class TestSave:
    def test_rounding(self, tmp_path):
        path = tmp_path / "a.pgm"
        save_image(Image(np.array([[0.5]])), path, "8bit")
        assert path.read_bytes().endswith(bytes([128]))

    def test_clamping(self, tmp_path):
        path = tmp_path / "a.pgm"
        save_image(Image(np.array([[-0.2, 1.4]])), path, "8bit")
        assert path.read_bytes().endswith(bytes([0, 255]))

    def test_16bit_quantization_bound(self, tmp_path):
        path = tmp_path / "a.pgm"
        save_image(Image(np.array([[1 / 3]])), path, "16bit")
        img = load_image(path)
        assert abs(img.data[0, 0] - 1 / 3) < 1 / (2 * 65535)

    def test_bad_depth(self, tmp_path):
        with pytest.raises(ValueError):
            save_image(Image(np.zeros((1, 1))), tmp_path / "a.pgm", "12bit")

    @given(
        arrays(np.float64, (5, 4), elements=st.floats(0, 1)),
        st.sampled_from(["8bit", "16bit"]),
    )
    @settings(max_examples=40, deadline=None)
    def test_round_trip_within_half_step(self, data, depth):
        import tempfile
        from pathlib import Path

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "img.pgm"
            img = Image(data)
            save_image(img, path, depth)
            back = load_image(path)
        maxval = 255 if depth == "8bit" else 65535
        assert np.max(np.abs(back.data - img.data)) <= 0.5 / maxval + 1e-12


class TestF32:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "a.f32"
        data = np.arange(6, dtype=np.float32).reshape(2, 3) / 7.0
        save_f32(Image(data.astype(np.float64)), path)
        back = load_f32(path)
        assert back.data.shape == (2, 3)
        assert np.array_equal(back.data, data.astype(np.float64))

    def test_preserves_unclipped_values(self, tmp_path):
        path = tmp_path / "a.f32"
        img = Image(np.array([[-0.25, 1.5]]))
        save_f32(img, path)
        assert load_f32(path).data.tolist() == [[-0.25, 1.5]]

    def test_truncation(self, tmp_path):
        path = tmp_path / "a.f32"
        save_f32(Image(np.zeros((2, 2))), path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(TruncatedPayloadError):
            load_f32(path)
