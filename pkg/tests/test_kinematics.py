from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmstream.kinematics import compute_skip_amount


@pytest.mark.parametrize(
    ("fps", "v_max", "d_entry", "expected"),
    [(30, 30, 1.0, 3), (30, 60, 1.0, 1), (60, 30, 1.0, 7), (30, 15, 1.0, 7), (25, 90, 1.0, 1)],
)
def test_worked_examples(fps: float, v_max: float, d_entry: float, expected: int) -> None:
    assert compute_skip_amount(fps, v_max, d_entry) == expected


@pytest.mark.parametrize("args", [(0, 30, 1.0), (30, 0, 1.0), (30, 30, 0.0), (-1, 30, 1.0)])
def test_non_positive_inputs_rejected(args) -> None:
    with pytest.raises(ValueError):
        compute_skip_amount(*args)


_pos = st.floats(0.1, 200, allow_nan=False, allow_infinity=False)


@given(_pos, _pos, st.floats(0.05, 10))
def test_faster_objects_never_allow_longer_skips(fps: float, v: float, d: float) -> None:
    assert compute_skip_amount(fps, v * 2, d) <= compute_skip_amount(fps, v, d)
    assert compute_skip_amount(fps, v, d) >= 0


@given(_pos, _pos, st.floats(0.05, 10))
def test_skip_never_exceeds_the_crossing_time(fps: float, v: float, d: float) -> None:
    n = compute_skip_amount(fps, v, d)
    frames_to_cross = fps * d / (v / 3.6)
    assert n <= frames_to_cross + 1e-6
    assert n > frames_to_cross - 1 - 1e-6
