"""Frames, the relational pixel-tuple view, and the image reduction kernels.

All kernels are pure functions over immutable :class:`Frame` values.  Integer
arithmetic is used throughout so results are bit-exact and reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

__all__ = [
    "Frame",
    "PixelTuple",
    "Region",
    "crop",
    "downscale",
    "greyscale",
    "red_mask",
    "red_fraction",
    "to_pixel_tuples",
    "from_pixel_tuples",
    "write_ppm",
    "read_ppm",
]


class PixelTuple(NamedTuple):
    row_id: int
    column_id: int
    red: int
    green: int
    blue: int


@dataclass(frozen=True, eq=False)
class Frame:
    """A raster image with stream position.

    ``pixels`` is a read-only ``(height, width, 3)`` uint8 array.
    """

    frame_id: int
    event_time: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must have shape (h, w, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("frame must be at least 1x1")
        if px.dtype != np.uint8:
            px = px.astype(np.uint8)
        if px.flags.writeable:
            px = px.copy()
            px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def with_pixels(self, pixels: np.ndarray) -> "Frame":
        return Frame(self.frame_id, self.event_time, pixels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.event_time == other.event_time
            and np.array_equal(self.pixels, other.pixels)
        )

    def __repr__(self) -> str:
        return f"Frame(id={self.frame_id}, t={self.event_time}ms, {self.width}x{self.height})"


@dataclass(frozen=True)
class Region:
    """Half-open pixel rectangle ``[row_start, row_end) x [col_start, col_end)``."""

    row_start: int
    row_end: int
    col_start: int
    col_end: int

    def __post_init__(self) -> None:
        if not (0 <= self.row_start < self.row_end and 0 <= self.col_start < self.col_end):
            raise ValueError(f"empty or negative region {self}")

    @classmethod
    def full(cls, height: int, width: int) -> "Region":
        return cls(0, height, 0, width)

    @property
    def height(self) -> int:
        return self.row_end - self.row_start

    @property
    def width(self) -> int:
        return self.col_end - self.col_start

    @property
    def area(self) -> int:
        return self.height * self.width

    def fits(self, height: int, width: int) -> bool:
        return self.row_end <= height and self.col_end <= width

    def scaled(self, factor: int) -> "Region":
        return Region(
            self.row_start * factor,
            self.row_end * factor,
            self.col_start * factor,
            self.col_end * factor,
        )

    def aligned_outward(self, block: int) -> "Region":
        """Grow the region to the smallest enclosing block-aligned rectangle."""
        up = lambda v: -(-v // block) * block  # noqa: E731
        return Region(
            self.row_start // block * block,
            up(self.row_end),
            self.col_start // block * block,
            up(self.col_end),
        )

    def is_aligned(self, block: int) -> bool:
        return all(v % block == 0 for v in self.as_tuple())

    def intersection(self, other: "Region") -> "Region | None":
        r0, r1 = max(self.row_start, other.row_start), min(self.row_end, other.row_end)
        c0, c1 = max(self.col_start, other.col_start), min(self.col_end, other.col_end)
        if r0 >= r1 or c0 >= c1:
            return None
        return Region(r0, r1, c0, c1)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.row_start, self.row_end, self.col_start, self.col_end)

    def to_dict(self) -> dict:
        return {"rows": [self.row_start, self.row_end], "cols": [self.col_start, self.col_end]}

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        (r0, r1), (c0, c1) = d["rows"], d["cols"]
        return cls(int(r0), int(r1), int(c0), int(c1))


def crop(frame: Frame, region: Region) -> Frame:
    if not region.fits(frame.height, frame.width):
        raise ValueError(f"region {region.as_tuple()} outside {frame.height}x{frame.width} frame")
    px = frame.pixels[region.row_start : region.row_end, region.col_start : region.col_end]
    return frame.with_pixels(np.ascontiguousarray(px))


def downscale(frame: Frame, factor: int) -> Frame:
    """Block-mean downscale; each output channel is the half-up rounded mean of a b x b block.

    Equivalent to ``GROUP BY (row_id div b, column_id div b)`` with ``AVG`` per
    channel over the pixel-tuple relation.
    """
    b = int(factor)
    if b < 1:
        raise ValueError("downscale factor must be >= 1")
    if frame.height % b or frame.width % b:
        raise ValueError(f"factor {b} does not divide {frame.height}x{frame.width}")
    if b == 1:
        return frame
    h, w = frame.height // b, frame.width // b
    n = b * b
    acc = np.uint16 if n * 255 + n // 2 <= np.iinfo(np.uint16).max else np.uint32
    # sum the b rows of each block first (contiguous), then the b columns
    rows = frame.pixels.reshape(h, b, w * b, 3)
    s = rows[:, 0].astype(acc)
    for i in range(1, b):
        s += rows[:, i]
    cols = s.reshape(h, w, b, 3)
    sums = cols[:, :, 0].copy()
    for j in range(1, b):
        sums += cols[:, :, j]
    # half-up rounding of sum / n without floats
    sums += n // 2
    if n & (n - 1) == 0:
        sums >>= n.bit_length() - 1
    else:
        sums //= n
    return frame.with_pixels(sums.astype(np.uint8))


def greyscale(frame: Frame) -> Frame:
    px = frame.pixels.astype(np.int64)
    # round-half-up of 0.299 R + 0.587 G + 0.114 B
    y = (299 * px[..., 0] + 587 * px[..., 1] + 114 * px[..., 2] + 500) // 1000
    return frame.with_pixels(np.repeat(y[..., None], 3, axis=2).astype(np.uint8))


def red_mask(pixels: np.ndarray) -> np.ndarray:
    """Red-ish classifier: R >= 2G and R >= 2B and R >= 100."""
    px = pixels.astype(np.uint16)
    r = px[..., 0]
    return (r >= 100) & (r >= 2 * px[..., 1]) & (r >= 2 * px[..., 2])


def red_fraction(frame: Frame) -> float:
    return float(red_mask(frame.pixels).mean())


def to_pixel_tuples(frame: Frame) -> list[PixelTuple]:
    w = frame.width
    flat = frame.pixels.reshape(-1, 3).tolist()
    return [PixelTuple(i // w, i % w, *rgb) for i, rgb in enumerate(flat)]


def from_pixel_tuples(
    tuples: Iterable[PixelTuple], frame_id: int = 0, event_time: int = 0
) -> Frame:
    rows = list(tuples)
    if not rows:
        raise ValueError("no pixel tuples")
    h = max(t.row_id for t in rows) + 1
    w = max(t.column_id for t in rows) + 1
    if len(rows) != h * w:
        raise ValueError("pixel tuples do not cover a full raster")
    px = np.zeros((h, w, 3), dtype=np.uint8)
    seen = np.zeros((h, w), dtype=bool)
    for t in rows:
        if seen[t.row_id, t.column_id]:
            raise ValueError(f"duplicate key ({t.row_id}, {t.column_id})")
        seen[t.row_id, t.column_id] = True
        px[t.row_id, t.column_id] = (t.red, t.green, t.blue)
    return Frame(frame_id, event_time, px)


def write_ppm(frame: Frame, path: str | Path) -> None:
    """Binary PPM (P6) dump for debugging."""
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + frame.pixels.tobytes())


def read_ppm(path: str | Path, frame_id: int = 0, event_time: int = 0) -> Frame:
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    pos += 1  # single whitespace byte before the raster
    if fields[0] != b"P6" or int(fields[3]) != 255:
        raise ValueError("not an 8-bit binary PPM")
    w, h = int(fields[1]), int(fields[2])
    px = np.frombuffer(data[pos : pos + w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    return Frame(frame_id, event_time, px)
