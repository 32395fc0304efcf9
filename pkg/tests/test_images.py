import numpy as np
import pytest
from PIL import Image

from leakscope import load_image, save_image, to_grayscale


def test_png_gray_roundtrip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (20, 30), dtype=np.uint8)
    path = tmp_path / "g.png"
    save_image(img, path)
    assert np.array_equal(load_image(path), img)


def test_png_rgb_roundtrip(tmp_path):
    img = np.random.default_rng(1).integers(0, 256, (12, 9, 3), dtype=np.uint8)
    path = tmp_path / "c.png"
    save_image(img, path)
    assert np.array_equal(load_image(path), img)


def test_pgm_and_ppm_roundtrip(tmp_path):
    gray = np.random.default_rng(2).integers(0, 256, (8, 8), dtype=np.uint8)
    color = np.random.default_rng(3).integers(0, 256, (8, 8, 3), dtype=np.uint8)
    pgm = tmp_path / "g.pgm"
    ppm = tmp_path / "c.ppm"
    save_image(gray, pgm)
    save_image(color, ppm)
    assert np.array_equal(load_image(pgm), gray)
    assert np.array_equal(load_image(ppm), color)


def test_lossy_output_rejected(tmp_path):
    img = np.zeros((4, 4), dtype=np.uint8)
    with pytest.raises(ValueError, match="refusing"):
        save_image(img, tmp_path / "x.jpg")


def test_pgm_rejects_color(tmp_path):
    img = np.zeros((4, 4, 3), dtype=np.uint8)
    with pytest.raises(ValueError, match="single channel"):
        save_image(img, tmp_path / "x.pgm")


def test_16bit_input_rejected(tmp_path):
    path = tmp_path / "deep.png"
    deep = Image.new("I;16", (4, 4))
    deep.putdata([4096] * 16)
    deep.save(path)
    with pytest.raises(ValueError, match="bit depth"):
        load_image(path)


def test_alpha_input_rejected(tmp_path):
    path = tmp_path / "rgba.png"
    Image.fromarray(np.zeros((4, 4, 4), dtype=np.uint8), mode="RGBA").save(path)
    with pytest.raises(ValueError, match="channel count"):
        load_image(path)


def test_palette_expands_to_rgb(tmp_path):
    path = tmp_path / "pal.png"
    rgb = np.random.default_rng(4).integers(0, 256, (8, 8, 3), dtype=np.uint8)
    Image.fromarray(rgb).convert("P", palette=Image.ADAPTIVE).save(path)
    out = load_image(path)
    assert out.ndim == 3 and out.shape[2] == 3


def test_luma_weights():
    # round(0.299*255) = 76, round(0.587*255) = 150, round(0.114*255) = 29
    red = np.zeros((1, 1, 3), dtype=np.uint8)
    red[0, 0] = (255, 0, 0)
    green = np.zeros((1, 1, 3), dtype=np.uint8)
    green[0, 0] = (0, 255, 0)
    blue = np.zeros((1, 1, 3), dtype=np.uint8)
    blue[0, 0] = (0, 0, 255)
    assert to_grayscale(red)[0, 0] == 76
    assert to_grayscale(green)[0, 0] == 150
    assert to_grayscale(blue)[0, 0] == 29
    gray = np.full((2, 2), 7, dtype=np.uint8)
    assert to_grayscale(gray) is gray
