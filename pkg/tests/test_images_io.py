"""PNG/PGM codec round trips and export conventions."""

import numpy as np
import pytest

from clothfold import images, sim


class TestPng:
    def test_roundtrip_exact_on_uint8_grid(self, tmp_path, rng):
        rgb = np.round(rng.random((17, 23, 3)) * 255) / 255.0
        path = tmp_path / "x.png"
        images.write_png_rgb(path, rgb)
        back = images.read_png_rgb(path)
        np.testing.assert_array_equal(back, rgb)

    def test_render_roundtrip_exact(self, tmp_path):
        obs = sim.render(sim.init_cloth("t-shirt"), sim.default_camera())
        path = tmp_path / "obs.png"
        images.write_png_rgb(path, obs.rgb)
        np.testing.assert_array_equal(images.read_png_rgb(path), obs.rgb)

    def test_deterministic_bytes(self, tmp_path, rng):
        rgb = rng.random((8, 8, 3))
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        images.write_png_rgb(a, rgb)
        images.write_png_rgb(b, rgb)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_file_rejected(self, tmp_path):
        p = tmp_path / "junk.png"
        p.write_bytes(b"not a png")
        with pytest.raises(images.ImageFormatError):
            images.read_png_rgb(p)


class TestPgm:
    def test_depth_roundtrip_exact_at_unit_grid(self, tmp_path):
        depth = np.array([[1.0, 0.998], [0.996, 0.5]])
        path = tmp_path / "d.pgm"
        images.write_depth_pgm(path, depth)
        np.testing.assert_array_equal(images.read_depth_pgm(path), depth)

    def test_depth_unit_is_tenth_millimeter(self, tmp_path):
        path = tmp_path / "d.pgm"
        images.write_depth_pgm(path, np.array([[1.0]]))
        raw = images.read_pgm16(path)
        assert raw[0, 0] == 10000

    def test_heatmap_scaling(self, tmp_path):
        q = np.array([[0.0, 0.5], [1.0, 0.25]])
        path = tmp_path / "q.pgm"
        images.write_heatmap_pgm(path, q)
        raw = images.read_pgm16(path)
        assert raw[1, 0] == 65535
        assert raw[0, 1] == round(0.5 * 65535)
        back = images.read_heatmap_pgm(path)
        assert np.abs(back - q).max() <= 0.5 / 65535

    def test_out_of_range_depth_rejected(self, tmp_path):
        with pytest.raises(images.ImageFormatError):
            images.write_depth_pgm(tmp_path / "d.pgm", np.array([[7.0]]))

    def test_big_endian_samples(self, tmp_path):
        path = tmp_path / "x.pgm"
        images.write_pgm16(path, np.array([[0x0102]], dtype=np.uint16))
        blob = path.read_bytes()
        assert blob.endswith(b"\x01\x02")
