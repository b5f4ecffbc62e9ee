import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from isdl.images import AUGMENT_OPS, INVERSE_OP, ImageGrid, augment, read_grid_csv, read_pgm, write_grid_csv, write_pgm

grids = st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3)).flatmap(
    lambda shape: arrays(np.float64, shape, elements=st.floats(0, 1))
)


def test_rot90_counterclockwise():
    img = ImageGrid(np.array([[1, 2], [3, 4]]) / 4.0)
    assert (augment(img, "rot90").pixels[:, :, 0] * 4).tolist() == [[2, 4], [1, 3]]


def test_flip_h_involution():
    img = ImageGrid(np.random.default_rng(0).random((3, 5, 2)))
    twice = augment(augment(img, "flip_h"), "flip_h")
    assert np.array_equal(twice.pixels, img.pixels)


def test_four_quarter_turns():
    img = ImageGrid(np.random.default_rng(1).random((4, 3, 1)))
    out = img
    for _ in range(4):
        out = augment(out, "rot90")
    assert np.array_equal(out.pixels, img.pixels)


@given(grids, st.sampled_from(AUGMENT_OPS))
def test_inverse_is_identity(pixels, op):
    img = ImageGrid(pixels)
    back = augment(augment(img, op), INVERSE_OP[op])
    assert np.array_equal(back.pixels, img.pixels)


@given(grids, st.sampled_from(AUGMENT_OPS))
def test_values_permuted_only(pixels, op):
    img = ImageGrid(pixels)
    out = augment(img, op)
    assert np.array_equal(np.sort(out.flat()), np.sort(img.flat()))
    assert out.channels == img.channels


def test_unknown_op():
    with pytest.raises(ValueError):
        augment(ImageGrid(np.zeros((2, 2))), "shear")


def test_pixel_range():
    with pytest.raises(ValueError):
        ImageGrid(np.array([[1.5]]))


def test_pgm_roundtrip(tmp_path):
    a = np.arange(12).reshape(3, 4) * 20
    write_pgm(tmp_path / "a.pgm", a)
    data = (tmp_path / "a.pgm").read_bytes()
    assert data.startswith(b"P5\n4 3\n255\n")
    img = read_pgm(tmp_path / "a.pgm")
    assert np.allclose(img.pixels[:, :, 0] * 255, a)


def test_grid_csv_roundtrip(tmp_path):
    a = np.random.default_rng(0).random((2, 3, 2))
    write_grid_csv(tmp_path / "g.csv", a, fmt="%.17g")
    assert np.array_equal(read_grid_csv(tmp_path / "g.csv", channels=2).pixels, a)
