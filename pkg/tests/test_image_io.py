"""Tests for Netpbm image IO and frame-directory video IO."""

from __future__ import annotations

import numpy as np
import pytest

from src.image_io import ImageFormatError, load_image, load_video, read_maxval, save_image, save_video
from src.tensor_core import DenseTensor


@pytest.mark.light
def test_ppm_round_trip_is_byte_identical(tmp_path):
    """PPM の読み書きでバイト列が変わらない。"""
    payload = b"P6\n2 2\n255\n" + bytes([0, 64, 128, 255, 1, 2, 3, 4, 5, 200, 100, 50])
    source = tmp_path / "in.ppm"
    source.write_bytes(payload)
    image = load_image(source)
    assert image.dims == (2, 2, 3)
    assert image.to_array()[0, 1, 0] == pytest.approx(1.0)

    target = tmp_path / "out.ppm"
    save_image(target, image)
    assert target.read_bytes() == payload


@pytest.mark.light
def test_header_comments_are_skipped(tmp_path):
    """ヘッダー中のコメントを読み飛ばす。"""
    source = tmp_path / "comment.ppm"
    source.write_bytes(b"P6\n# made by hand\n1 1\n255\n" + bytes([10, 20, 30]))
    np.testing.assert_allclose(load_image(source).data, np.array([10, 20, 30]) / 255.0)


@pytest.mark.light
def test_grayscale_is_replicated_to_three_channels(tmp_path):
    """グレースケールは 3 チャネルに複製する。"""
    source = tmp_path / "gray.pgm"
    source.write_bytes(b"P5\n2 1\n255\n" + bytes([0, 255]))
    image = load_image(source)
    assert image.dims == (1, 2, 3)
    np.testing.assert_allclose(image.to_array()[0, 1], [1.0, 1.0, 1.0])


@pytest.mark.light
def test_sixteen_bit_samples_are_scaled_by_maxval(tmp_path):
    """16 ビットのサンプルは maxval で正規化する。"""
    source = tmp_path / "deep.pgm"
    source.write_bytes(b"P5\n1 1\n1023\n" + (1023).to_bytes(2, "big"))
    assert load_image(source).data[0] == pytest.approx(1.0)


@pytest.mark.light
def test_non_default_maxval_round_trips_through_read_maxval(tmp_path):
    """maxval 100 の PPM は read_maxval で同じバイト列に書き戻せる。"""
    payload = b"P6\n2 1\n100\n" + bytes([0, 50, 100, 25, 75, 10])
    source = tmp_path / "shallow.ppm"
    source.write_bytes(payload)
    assert read_maxval(source) == 100

    target = tmp_path / "out.ppm"
    save_image(target, load_image(source), maxval=read_maxval(source))
    assert target.read_bytes() == payload


@pytest.mark.light
@pytest.mark.parametrize(
    "payload",
    [b"P3\n1 1\n255\n0 0 0", b"P6\n2 2\n255\n" + bytes(5), b"P6\nx 2\n255\n", b"P6\n2"],
)
def test_malformed_images_raise_image_format_error(tmp_path, payload):
    """壊れた画像は ImageFormatError。"""
    source = tmp_path / "bad.ppm"
    source.write_bytes(payload)
    with pytest.raises(ImageFormatError):
        load_image(source)


@pytest.mark.light
def test_save_image_rejects_non_image_dims(tmp_path):
    with pytest.raises(ValueError):
        save_image(tmp_path / "x.ppm", DenseTensor.zeros((2, 2, 2)))


@pytest.mark.light
def test_video_round_trip_through_frame_directory(tmp_path, rng):
    """フレームディレクトリ経由で動画を往復できる。"""
    levels = rng.integers(0, 256, size=(3, 4, 5, 3)) / 255.0
    video = DenseTensor.from_array(levels)
    written = save_video(tmp_path / "frames", video)
    assert len(written) == 5
    restored = load_video(tmp_path / "frames")
    assert restored.dims == (3, 4, 5, 3)
    np.testing.assert_allclose(restored.data, video.data, atol=1e-12)


@pytest.mark.light
def test_empty_frame_directory_raises(tmp_path):
    """空のフレームディレクトリはエラー。"""
    (tmp_path / "empty").mkdir()
    with pytest.raises(ImageFormatError):
        load_video(tmp_path / "empty")
    with pytest.raises(FileNotFoundError):
        load_video(tmp_path / "absent")
