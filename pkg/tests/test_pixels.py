from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mmstream.pixels import (
    Frame,
    PixelTuple,
    Region,
    crop,
    downscale,
    from_pixel_tuples,
    greyscale,
    read_ppm,
    red_fraction,
    red_mask,
    to_pixel_tuples,
    write_ppm,
)


def _frame(h: int, w: int, seed: int = 0) -> Frame:
    rng = np.random.default_rng(seed)
    return Frame(3, 100, rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


def test_frame_is_immutable_and_validated() -> None:
    f = _frame(4, 6)
    assert not f.pixels.flags.writeable
    with pytest.raises(ValueError):
        Frame(0, 0, np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(ValueError):
        Frame(0, 0, np.zeros((0, 4, 3), dtype=np.uint8))
    assert f == f.with_pixels(f.pixels)
    assert (f.height, f.width) == (4, 6)


def test_crop_selects_rows_and_columns() -> None:
    f = _frame(8, 10)
    r = Region(2, 6, 3, 9)
    out = crop(f, r)
    assert out.pixels.shape == (4, 6, 3)
    assert np.array_equal(out.pixels, f.pixels[2:6, 3:9])
    assert (out.frame_id, out.event_time) == (f.frame_id, f.event_time)
    with pytest.raises(ValueError):
        crop(f, Region(0, 9, 0, 10))


def test_downscale_rounds_block_means_half_up() -> None:
    px = np.zeros((2, 2, 3), dtype=np.uint8)
    px[..., 0] = [[0, 1], [1, 0]]  # mean 0.5 rounds up to 1
    px[..., 1] = [[255, 255], [255, 254]]  # mean 254.75 rounds to 255
    px[..., 2] = [[10, 11], [10, 10]]  # mean 10.25 rounds to 10
    out = downscale(Frame(0, 0, px), 2)
    assert out.pixels.tolist() == [[[1, 255, 10]]]


def test_downscale_rejects_bad_factors() -> None:
    f = _frame(6, 6)
    assert downscale(f, 1) is f
    with pytest.raises(ValueError):
        downscale(f, 0)
    with pytest.raises(ValueError):
        downscale(f, 4)


def test_greyscale_uses_luma_weights() -> None:
    px = np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255], [100, 100, 100]]], dtype=np.uint8)
    out = greyscale(Frame(0, 0, px)).pixels
    assert out[..., 0].tolist() == [[76, 150, 29, 100]]
    assert np.array_equal(out[..., 0], out[..., 1]) and np.array_equal(out[..., 1], out[..., 2])


def test_red_mask_threshold() -> None:
    px = np.array([[[200, 90, 90], [200, 101, 50], [99, 0, 0], [100, 50, 50]]], dtype=np.uint8)
    assert red_mask(px).tolist() == [[True, False, False, True]]
    assert red_fraction(Frame(0, 0, px)) == 0.5


def test_pixel_tuple_round_trip() -> None:
    f = _frame(3, 5, seed=4)
    tuples = to_pixel_tuples(f)
    assert len(tuples) == 15
    assert tuples[7] == PixelTuple(1, 2, *f.pixels[1, 2].tolist())
    back = from_pixel_tuples(reversed(tuples), f.frame_id, f.event_time)
    assert back == f


def test_from_pixel_tuples_rejects_holes_and_duplicates() -> None:
    with pytest.raises(ValueError):
        from_pixel_tuples([])
    with pytest.raises(ValueError):
        from_pixel_tuples([PixelTuple(0, 0, 1, 1, 1), PixelTuple(1, 1, 1, 1, 1)])
    with pytest.raises(ValueError):
        from_pixel_tuples([PixelTuple(0, 0, 1, 1, 1), PixelTuple(0, 0, 2, 2, 2)])


def test_ppm_round_trip(tmp_path) -> None:
    f = _frame(7, 9, seed=2)
    path = tmp_path / "f.ppm"
    write_ppm(f, path)
    assert read_ppm(path, f.frame_id, f.event_time) == f


def test_region_helpers() -> None:
    r = Region(3, 7, 1, 6)
    assert (r.height, r.width, r.area) == (4, 5, 20)
    assert r.scaled(2).as_tuple() == (6, 14, 2, 12)
    assert r.aligned_outward(4).as_tuple() == (0, 8, 0, 8)
    assert r.aligned_outward(4).is_aligned(4) and not r.is_aligned(4)
    assert r.intersection(Region(5, 10, 0, 2)) == Region(5, 7, 1, 2)
    assert r.intersection(Region(8, 10, 0, 2)) is None
    assert Region.from_dict(r.to_dict()) == r
    with pytest.raises(ValueError):
        Region(2, 2, 0, 1)


@st.composite
def _frames(draw, max_blocks: int = 4, max_b: int = 4):
    b = draw(st.integers(1, max_b))
    h, w = b * draw(st.integers(1, max_blocks)), b * draw(st.integers(1, max_blocks))
    px = draw(arrays(np.uint8, (h, w, 3)))
    return Frame(0, 0, px), b


@settings(max_examples=60, deadline=None)
@given(_frames())
def test_downscale_equals_grouped_average_over_pixel_tuples(case) -> None:
    frame, b = case
    groups: dict[tuple[int, int], list[PixelTuple]] = {}
    for t in to_pixel_tuples(frame):
        groups.setdefault((t.row_id // b, t.column_id // b), []).append(t)
    n = b * b
    expected = [
        PixelTuple(r, c, *[(2 * sum(getattr(t, ch) for t in ts) + n) // (2 * n) for ch in ("red", "green", "blue")])
        for (r, c), ts in groups.items()
    ]
    assert downscale(frame, b) == from_pixel_tuples(expected)


@settings(max_examples=80, deadline=None)
@given(_frames(max_blocks=6), st.data())
def test_crop_commutes_with_downscale_on_block_aligned_regions(case, data) -> None:
    frame, b = case
    hb, wb = frame.height // b, frame.width // b
    r0 = data.draw(st.integers(0, hb - 1))
    r1 = data.draw(st.integers(r0 + 1, hb))
    c0 = data.draw(st.integers(0, wb - 1))
    c1 = data.draw(st.integers(c0 + 1, wb))
    small = Region(r0, r1, c0, c1)
    assert crop(downscale(frame, b), small) == downscale(crop(frame, small.scaled(b)), b)


@pytest.mark.parametrize("b", [2, 3, 5, 6, 16, 17])
def test_downscale_matches_wide_integer_reference(b: int) -> None:
    f = _frame(2 * b, 3 * b, seed=b)
    px = f.pixels.astype(np.int64).reshape(2, b, 3, b, 3).sum(axis=(1, 3))
    n = b * b
    expected = (2 * px + n) // (2 * n)
    assert np.array_equal(downscale(f, b).pixels, expected.astype(np.uint8))
    white = Frame(0, 0, np.full((b, b, 3), 255, dtype=np.uint8))
    assert downscale(white, b).pixels.tolist() == [[[255, 255, 255]]]
