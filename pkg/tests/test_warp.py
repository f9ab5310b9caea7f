"""Displacement-field warping: exactness, wrapping, masks, file format."""

import numpy as np
import pytest

from panometrics.depthio import MalformedDepthFile
from panometrics.warp import (
    apply_displacement,
    column_shift_field,
    identity_field,
    read_field,
    validate_field,
    write_field,
)

from helpers import pano, random_panorama


def test_zero_field_is_a_true_identity():
    d = pano(random_panorama(0, 32, 16))
    out = apply_displacement(d, identity_field(32, 16))
    np.testing.assert_array_equal(out.values, d.values)
    np.testing.assert_array_equal(out.mask, d.mask)
    assert out.d_max == d.d_max


def test_column_shifts_permute_columns_exactly():
    width, height = 32, 16
    d = pano(random_panorama(1, width, height))
    for k in (1, 5, width - 1):
        out = apply_displacement(d, column_shift_field(width, height, k))
        # Shifting the look direction by +k columns reads column i + k.
        np.testing.assert_array_equal(out.values, np.roll(d.values, -k, axis=1))


def test_full_turn_is_exact():
    width, height = 32, 16
    d = pano(random_panorama(2, width, height))
    field = identity_field(width, height)
    field[..., 0] = 2.0 * np.pi
    out = apply_displacement(d, field)
    np.testing.assert_array_equal(out.values, d.values)
    np.testing.assert_array_equal(out.mask, d.mask)


def test_half_pixel_shift_blends_neighbors():
    width, height = 32, 16
    d = pano(random_panorama(3, width, height))
    field = identity_field(width, height)
    field[..., 0] = np.pi / width  # half a column
    out = apply_displacement(d, field)
    expected = 0.5 * (d.values + np.roll(d.values, -1, axis=1))
    np.testing.assert_allclose(out.values, expected, atol=1e-12)


def test_invalid_sources_poison_touching_outputs():
    width, height = 32, 16
    values = random_panorama(4, width, height)
    values[8, 10] = 0.0  # one invalid source pixel
    d = pano(values)
    field = identity_field(width, height)
    field[..., 0] = np.pi / width
    out = apply_displacement(d, field)
    # Both outputs whose bilinear footprint touches column 10 go invalid.
    assert not out.mask[8, 9] and not out.mask[8, 10]
    assert out.mask.sum() == out.mask.size - 2
    assert out.values[8, 9] == 0.0 and out.values[8, 10] == 0.0


def test_pole_displacement_clamps():
    width, height = 32, 16
    d = pano(random_panorama(5, width, height))
    field = identity_field(width, height)
    field[..., 1] = -1.0  # push everything past the top pole
    out = apply_displacement(d, field)
    assert out.mask.all()
    assert np.isfinite(out.values).all()
    # Rows pushed beyond the pole all read from the clamped top row.
    np.testing.assert_array_equal(out.values[0], d.values[0])


def test_constant_map_stays_constant_under_any_field():
    width, height = 32, 16
    d = pano(np.full((height, width), 4.25))
    rng = np.random.default_rng(6)
    field = rng.uniform(-0.5, 0.5, size=(height, width, 2))
    out = apply_displacement(d, field)
    np.testing.assert_allclose(out.values, 4.25, atol=1e-12)
    assert out.mask.all()


def test_validate_field_rejects_bad_inputs():
    with pytest.raises(ValueError):
        validate_field(np.zeros((16, 32)), 32, 16)
    with pytest.raises(ValueError):
        validate_field(np.zeros((16, 31, 2)), 32, 16)
    bad = np.zeros((16, 32, 2))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        validate_field(bad, 32, 16)
    d = pano(random_panorama(7, 32, 16))
    with pytest.raises(ValueError):
        apply_displacement(d, np.zeros((16, 16, 2)))


def test_field_file_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    field = rng.uniform(-0.3, 0.3, size=(16, 32, 2))
    path = tmp_path / "shift.dfield"
    write_field(path, field)
    loaded = read_field(path)
    # Files store float32 planes; the round trip is exact at that precision.
    np.testing.assert_array_equal(loaded, field.astype("<f4").astype(np.float64))
    assert loaded.shape == (16, 32, 2)


def test_field_file_malformed_errors(tmp_path):
    path = tmp_path / "bad.dfield"
    path.write_bytes(b"NOTAFLD!" + b"\x00" * 16)
    with pytest.raises(MalformedDepthFile):
        read_field(path)
    good = tmp_path / "good.dfield"
    write_field(good, np.zeros((4, 8, 2)))
    truncated = tmp_path / "short.dfield"
    truncated.write_bytes(good.read_bytes()[:-7])
    with pytest.raises(MalformedDepthFile):
        read_field(truncated)
    with pytest.raises(ValueError):
        write_field(tmp_path / "x.dfield", np.zeros((4, 8)))


def test_warped_field_from_file_matches_in_memory(tmp_path):
    width, height = 32, 16
    d = pano(random_panorama(9, width, height))
    field = column_shift_field(width, height, 3)
    path = tmp_path / "cols.dfield"
    write_field(path, field)
    from_file = apply_displacement(d, read_field(path))
    in_memory = apply_displacement(d, field)
    # float32 storage shifts the angles by < 1e-7 rad, well inside the snap.
    np.testing.assert_array_equal(from_file.values, in_memory.values)
