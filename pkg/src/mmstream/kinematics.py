"""Frame-rate / speed arithmetic shared by the generators and the optimizer."""
from __future__ import annotations

import math

KMH_TO_MS = 1 / 3.6


def compute_skip_amount(fps: float, v_max_kmh: float, d_entry_m: float) -> int:
    """Frames a fastest object needs to cross ``d_entry_m`` metres.

    ``N = floor(fps * d_entry / (v_max / 3.6))``.  Skipping at most ``N``
    frames after an empty frame cannot step over an object that needs at
    least ``N + 1`` frames in the detection zone.
    """
    if fps <= 0:
        raise ValueError(f"non-positive fps {fps}")
    if v_max_kmh <= 0:
        raise ValueError(f"non-positive v_max {v_max_kmh}")
    if d_entry_m <= 0:
        raise ValueError(f"non-positive d_entry {d_entry_m}")
    # small epsilon keeps exact products (e.g. 7.0000000001) from flooring down
    return int(math.floor(fps * d_entry_m / (v_max_kmh * KMH_TO_MS) + 1e-9))
