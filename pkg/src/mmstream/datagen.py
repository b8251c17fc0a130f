"""Deterministic synthetic video streams with ground-truth annotations.

Two generators stand in for real camera feeds:

* :class:`TollBoothStream` -- a fixed camera over a toll lane.  Cars are solid
  rectangles in the bottom third of the frame, separated by empty gaps.  The
  schedule guarantees that every gap lasts at least ``G`` frames and every car
  stays visible for at least ``dwell_frames_min`` frames, where ``G`` follows
  from the frame rate and the true maximum speed.
* :class:`VolleyballStream` -- a jittering camera over twelve players whose
  actions follow a run-length model with a minimum run of
  ``min_action_frames``.

Annotations travel next to each frame in :class:`StreamEvent`.  Only the mock
models and the metric code look at them.
"""
from __future__ import annotations

import json
import string
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping

import numpy as np

from .kinematics import compute_skip_amount
from .pixels import Frame, Region, red_mask, write_ppm

__all__ = [
    "COLORS",
    "COLOR_RGB",
    "BRANDS",
    "ACTIONS",
    "TollBoothConfig",
    "VolleyballConfig",
    "PlayerTruth",
    "GroundTruth",
    "StreamEvent",
    "SampleSummary",
    "TollBoothStream",
    "VolleyballStream",
    "gen_tollbooth",
    "gen_volleyball",
    "make_stream",
    "sample_stream",
    "expected_empty_fraction",
    "dump_stream",
    "PLATE_PATTERN",
]

COLOR_RGB: dict[str, tuple[int, int, int]] = {
    "white": (225, 225, 225),
    "silver": (165, 168, 172),
    "black": (30, 30, 35),
    "red": (200, 30, 35),
    "blue": (35, 70, 190),
    "green": (40, 130, 60),
    "yellow": (225, 195, 40),
    "orange": (235, 110, 25),
}
COLORS = tuple(COLOR_RGB)
BRANDS = ("chevrolet", "fiat", "ford", "honda", "hyundai", "renault", "toyota", "volkswagen")
ACTIONS = ("spike", "block", "set", "dig", "jump", "stand")
TEAMS = ("A", "B")
TEAM_RGB = {"A": (40, 60, 180), "B": (230, 205, 60)}
PLATE_PATTERN = r"^[A-Z]{3}[0-9][A-Z0-9][0-9]{2}$"

_SKY = (150, 170, 190)
_BOOTH = (120, 120, 125)
_ASPHALT = (92, 92, 98)
_LANE = (215, 215, 205)
_COURT = (190, 160, 112)
_NET = (235, 235, 235)


# --------------------------------------------------------------------------- configs


@dataclass(frozen=True)
class TollBoothConfig:
    fps: int = 30
    duration_frames: int = 3000
    v_max_kmh: float = 30.0
    d_entry_m: float = 1.0
    arrival_rate: float = 40.0  # cars per minute
    dwell_frames_min: int = 8
    dwell_frames_max: int = 24
    color_distribution: Mapping[str, float] = field(default_factory=lambda: {
        "white": 0.20, "silver": 0.16, "black": 0.14, "red": 0.18,
        "blue": 0.12, "green": 0.07, "yellow": 0.06, "orange": 0.07,
    })
    brand_distribution: Mapping[str, float] = field(default_factory=lambda: {
        "chevrolet": 0.16, "fiat": 0.15, "volkswagen": 0.15, "toyota": 0.13,
        "hyundai": 0.12, "ford": 0.11, "renault": 0.10, "honda": 0.08,
    })
    plate_prefix_bias: float = 0.3
    width: int = 320
    height: int = 240
    seed: int = 0
    # true top speed of traffic; ``None`` means the metadata value is honest
    actual_v_max_kmh: float | None = None
    repeat_prob: float = 0.15
    car_height: tuple[int, int] = (50, 70)
    car_width: tuple[int, int] = (90, 140)

    @property
    def true_v_max_kmh(self) -> float:
        return self.actual_v_max_kmh if self.actual_v_max_kmh is not None else self.v_max_kmh

    @property
    def guaranteed_gap(self) -> int:
        """G: minimum number of empty frames before any car enters."""
        return compute_skip_amount(self.fps, self.true_v_max_kmh, self.d_entry_m)

    def validate(self) -> None:
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be positive")
        if self.duration_frames < 0:
            raise ValueError("duration_frames must be non-negative")
        g = self.guaranteed_gap
        if self.dwell_range[0] < g + 1:
            raise ValueError(f"dwell_frames_min={self.dwell_range[0]} below skip-safety bound G+1={g + 1}")
        if self.dwell_frames_max < self.dwell_frames_min:
            raise ValueError("dwell_frames_max < dwell_frames_min")
        if self.car_height[1] > self.height // 3 or self.car_width[1] > self.width:
            raise ValueError("cars must fit in the bottom third of the frame")
        for dist in (self.color_distribution, self.brand_distribution):
            if not dist or any(w < 0 for w in dist.values()) or sum(dist.values()) <= 0:
                raise ValueError("categorical weights must be non-negative with positive sum")
        unknown = set(self.color_distribution) - set(COLORS)
        if unknown:
            raise ValueError(f"unknown colors {sorted(unknown)}")
        if not 0 <= self.plate_prefix_bias <= 1 or not 0 <= self.repeat_prob <= 1:
            raise ValueError("probabilities must lie in [0, 1]")

    def metadata(self) -> dict[str, Any]:
        return {
            "domain": "tollbooth",
            "fps": self.fps,
            "width": self.width,
            "height": self.height,
            "v_max_kmh": self.v_max_kmh,
            "d_entry_m": self.d_entry_m,
        }

    @property
    def dwell_range(self) -> tuple[int, int]:
        """Dwell bounds at the true speed (faster traffic stays in view for fewer frames)."""
        ratio = self.v_max_kmh / self.true_v_max_kmh
        lo = max(1, int(round(self.dwell_frames_min * ratio)))
        return lo, max(lo, int(round(self.dwell_frames_max * ratio)))

    @property
    def mean_dwell(self) -> float:
        lo, hi = self.dwell_range
        return (lo + hi) / 2

    @property
    def mean_extra_gap(self) -> float:
        cycle = self.fps * 60.0 / self.arrival_rate
        return max(0.0, cycle - self.mean_dwell - self.guaranteed_gap)


@dataclass(frozen=True)
class VolleyballConfig:
    fps: int = 30
    duration_frames: int = 3000
    n_players: int = 12
    width: int = 320
    height: int = 240
    min_action_frames: int = 4
    mean_action_frames: float = 24.0
    action_weights: Mapping[str, float] = field(default_factory=lambda: {
        "stand": 0.40, "jump": 0.14, "dig": 0.13, "set": 0.12, "spike": 0.11, "block": 0.10,
    })
    camera_jitter_px: int = 6
    player_height: tuple[int, int] = (36, 44)
    player_width: tuple[int, int] = (14, 20)
    seed: int = 0

    def validate(self) -> None:
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.n_players < 2 or self.n_players % 2:
            raise ValueError("n_players must be an even number >= 2")
        if self.min_action_frames < 1:
            raise ValueError("min_action_frames must be >= 1")
        if self.mean_action_frames < self.min_action_frames:
            raise ValueError("mean_action_frames < min_action_frames")
        unknown = set(self.action_weights) - set(ACTIONS)
        if unknown:
            raise ValueError(f"unknown actions {sorted(unknown)}")
        if any(w < 0 for w in self.action_weights.values()) or sum(self.action_weights.values()) <= 0:
            raise ValueError("action weights must be non-negative with positive sum")

    def metadata(self) -> dict[str, Any]:
        return {
            "domain": "volleyball",
            "fps": self.fps,
            "width": self.width,
            "height": self.height,
            "min_action_frames": self.min_action_frames,
            "moving_camera": self.camera_jitter_px > 0,
        }


# --------------------------------------------------------------------------- annotations


@dataclass(frozen=True)
class PlayerTruth:
    player_id: int
    team: str
    action: str
    bbox: Region


@dataclass(frozen=True)
class GroundTruth:
    car_present: bool = False
    color: str | None = None
    brand: str | None = None
    plate: str | None = None
    bbox: Region | None = None
    coverage: float = 0.0
    car_id: int | None = None
    players: tuple[PlayerTruth, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["bbox"] = self.bbox.to_dict() if self.bbox else None
        d["players"] = [
            {"player_id": p.player_id, "team": p.team, "action": p.action, "bbox": p.bbox.to_dict()}
            for p in self.players
        ]
        return d


@dataclass(frozen=True)
class StreamEvent:
    frame: Frame
    truth: GroundTruth

    @property
    def frame_id(self) -> int:
        return self.frame.frame_id

    @property
    def event_time(self) -> int:
        return self.frame.event_time


def _event_time(frame_id: int, fps: int) -> int:
    return frame_id * 1000 // fps


def _choice(rng: np.random.Generator, dist: Mapping[str, float]) -> str:
    keys = sorted(dist)
    w = np.array([dist[k] for k in keys], dtype=float)
    return keys[int(rng.choice(len(keys), p=w / w.sum()))]


# --------------------------------------------------------------------------- toll booth


@dataclass
class _Car:
    car_id: int
    color: str
    brand: str
    plate: str
    h: int
    w: int
    top: int
    left: int
    drift: int
    dwell: int


class TollBoothStream:
    """Pull-based toll-booth stream.  Iterating twice replays identical events."""

    def __init__(self, config: TollBoothConfig):
        config.validate()
        self.config = config
        self.metadata = config.metadata()
        c = config
        bg = np.empty((c.height, c.width, 3), dtype=np.uint8)
        half = c.height // 2
        bg[:half] = _SKY
        bg[half // 2 : half, c.width // 8 : c.width // 8 + c.width // 10] = _BOOTH
        bg[half:] = _ASPHALT
        lane_row = c.height - c.height // 3 - 4
        bg[lane_row : lane_row + 2, :] = _LANE
        self._background = bg

    def __len__(self) -> int:
        return self.config.duration_frames

    def _plate(self, rng: np.random.Generator) -> str:
        letters = string.ascii_uppercase
        if rng.random() < self.config.plate_prefix_bias:
            head = "MTT"
        else:
            while True:
                head = "".join(letters[i] for i in rng.integers(0, 26, 3))
                if head != "MTT":
                    break
        digit = str(int(rng.integers(0, 10)))
        mid = letters[int(rng.integers(0, 26))] if rng.random() < 0.5 else str(int(rng.integers(0, 10)))
        tail = "".join(str(int(d)) for d in rng.integers(0, 10, 2))
        return head + digit + mid + tail

    def _schedule(self) -> Iterator[tuple[int, _Car | None]]:
        """Yields (run length, car or None for an empty gap) forever."""
        c = self.config
        rng = np.random.default_rng([c.seed, 0x70_11])
        g = c.guaranteed_gap
        extra_mean = c.mean_extra_gap
        dwell_lo, dwell_hi = c.dwell_range
        recent: list[_Car] = []
        car_id = 0
        while True:
            extra = int(rng.geometric(1.0 / (1.0 + extra_mean))) - 1 if extra_mean > 0 else 0
            yield max(1, g + extra), None
            h = int(rng.integers(c.car_height[0], c.car_height[1] + 1))
            w = int(rng.integers(c.car_width[0], c.car_width[1] + 1))
            dwell = int(rng.integers(dwell_lo, dwell_hi + 1))
            top = int(rng.integers(c.height - c.height // 3, c.height - h + 1))
            left = int(rng.integers(0, c.width - w + 1))
            drift = int(rng.integers(-1, 2))
            # a returning car never directly follows its own previous visit
            if len(recent) > 1 and rng.random() < c.repeat_prob:
                prev = recent[int(rng.integers(0, len(recent) - 1))]
                color, brand, plate = prev.color, prev.brand, prev.plate
            else:
                color = _choice(rng, c.color_distribution)
                brand = _choice(rng, c.brand_distribution)
                plate = self._plate(rng)
            car = _Car(car_id, color, brand, plate, h, w, top, left, drift, dwell)
            car_id += 1
            recent = (recent + [car])[-10:]
            yield dwell, car

    def __iter__(self) -> Iterator[StreamEvent]:
        c = self.config
        area = c.width * c.height
        frame_id = 0
        for length, car in self._schedule():
            for k in range(length):
                if frame_id >= c.duration_frames:
                    return
                px = self._background.copy()
                if car is None:
                    truth = GroundTruth()
                else:
                    left = min(max(0, car.left + car.drift * k), c.width - car.w)
                    box = Region(car.top, car.top + car.h, left, left + car.w)
                    px[box.row_start : box.row_end, box.col_start : box.col_end] = COLOR_RGB[car.color]
                    truth = GroundTruth(
                        True, car.color, car.brand, car.plate, box, box.area / area, car.car_id
                    )
                yield StreamEvent(Frame(frame_id, _event_time(frame_id, c.fps), px), truth)
                frame_id += 1


# --------------------------------------------------------------------------- volleyball


class VolleyballStream:
    """Pull-based volleyball stream with per-player action annotations."""

    def __init__(self, config: VolleyballConfig):
        config.validate()
        self.config = config
        self.metadata = config.metadata()
        c = config
        pad = c.camera_jitter_px
        bg = np.empty((c.height + 2 * pad, c.width + 2 * pad, 3), dtype=np.uint8)
        bg[:] = _COURT
        mid = bg.shape[1] // 2
        bg[:, mid - 1 : mid + 1] = _NET
        self._background = bg

    def __len__(self) -> int:
        return self.config.duration_frames

    def _next_action(self, rng: np.random.Generator) -> tuple[str, int]:
        c = self.config
        action = _choice(rng, c.action_weights)
        extra_mean = c.mean_action_frames - c.min_action_frames
        extra = int(rng.geometric(1.0 / (1.0 + extra_mean))) - 1 if extra_mean > 0 else 0
        return action, c.min_action_frames + extra

    def __iter__(self) -> Iterator[StreamEvent]:
        c = self.config
        rng = np.random.default_rng([c.seed, 0x0B_A11])
        pad = c.camera_jitter_px
        half = c.n_players // 2
        players = []
        for pid in range(c.n_players):
            team = TEAMS[pid // half]
            h = int(rng.integers(c.player_height[0], c.player_height[1] + 1))
            w = int(rng.integers(c.player_width[0], c.player_width[1] + 1))
            x_lo = 0 if team == "A" else c.width // 2
            x = float(rng.uniform(x_lo, x_lo + c.width // 2 - w))
            y = float(rng.uniform(pad, c.height - h - pad))
            action, left = self._next_action(rng)
            players.append({"id": pid, "team": team, "h": h, "w": w, "x": x, "y": y,
                            "x_lo": x_lo, "action": action, "left": left})
        for frame_id in range(c.duration_frames):
            dx, dy = (rng.integers(-pad, pad + 1, 2) if pad else (0, 0))
            canvas = self._background.copy()
            truths = []
            for p in players:
                if p["left"] == 0:
                    p["action"], p["left"] = self._next_action(rng)
                p["left"] -= 1
                p["x"] = float(np.clip(p["x"] + rng.normal(0, 1.0), p["x_lo"], p["x_lo"] + c.width // 2 - p["w"]))
                p["y"] = float(np.clip(p["y"] + rng.normal(0, 1.0), pad, c.height - p["h"] - pad))
                top, left = int(p["y"]), int(p["x"])
                box = Region(top, top + p["h"], left, left + p["w"])
                canvas[pad + box.row_start : pad + box.row_end, pad + box.col_start : pad + box.col_end] = TEAM_RGB[p["team"]]
                truths.append(PlayerTruth(p["id"], p["team"], p["action"], box))
            oy, ox = pad + int(dy), pad + int(dx)
            px = canvas[oy : oy + c.height, ox : ox + c.width]
            # boxes are reported in frame coordinates after the camera shift
            shifted = []
            for t in truths:
                r0 = min(max(t.bbox.row_start + pad - oy, 0), c.height - 1)
                c0 = min(max(t.bbox.col_start + pad - ox, 0), c.width - 1)
                r1 = min(max(t.bbox.row_end + pad - oy, r0 + 1), c.height)
                c1 = min(max(t.bbox.col_end + pad - ox, c0 + 1), c.width)
                shifted.append(PlayerTruth(t.player_id, t.team, t.action, Region(r0, r1, c0, c1)))
            yield StreamEvent(
                Frame(frame_id, _event_time(frame_id, c.fps), px),
                GroundTruth(players=tuple(shifted)),
            )


# --------------------------------------------------------------------------- entry points


def gen_tollbooth(config: TollBoothConfig | None = None) -> TollBoothStream:
    return TollBoothStream(config or TollBoothConfig())


def gen_volleyball(config: VolleyballConfig | None = None) -> VolleyballStream:
    return VolleyballStream(config or VolleyballConfig())


def make_stream(config: TollBoothConfig | VolleyballConfig):
    if isinstance(config, TollBoothConfig):
        return TollBoothStream(config)
    if isinstance(config, VolleyballConfig):
        return VolleyballStream(config)
    raise TypeError(f"unsupported stream config {type(config).__name__}")


def expected_empty_fraction(config: TollBoothConfig) -> float:
    """Long-run fraction of car-free frames implied by the schedule."""
    gap = max(1.0, config.guaranteed_gap + config.mean_extra_gap)
    return gap / (gap + config.mean_dwell)


@dataclass(frozen=True)
class SampleSummary:
    """What the optimizer is allowed to know about a stream: metadata plus sample statistics."""

    n_frames: int
    fps: float
    width: int
    height: int
    empty_fraction: float
    bbox_histogram: tuple[float, float, float]  # object pixel mass in top / middle / bottom third
    half_mass: Mapping[str, float]  # object pixel mass inside each half of the frame
    color_marginals: Mapping[str, float]
    action_marginals: Mapping[str, float]
    object_height_min: int
    object_height_median: float
    red_fraction_mean: float
    metadata: Mapping[str, Any]

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["bbox_histogram"] = list(self.bbox_histogram)
        d["half_mass"] = dict(self.half_mass)
        d["color_marginals"] = dict(self.color_marginals)
        d["action_marginals"] = dict(self.action_marginals)
        d["metadata"] = dict(self.metadata)
        return d


def _boxes(truth: GroundTruth) -> list[Region]:
    if truth.car_present and truth.bbox is not None:
        return [truth.bbox]
    return [p.bbox for p in truth.players]


def sample_stream(stream, k: int) -> tuple[list[StreamEvent], SampleSummary]:
    """First ``k`` events of ``stream`` plus summary statistics over them."""
    if k < 1:
        raise ValueError("k must be >= 1")
    events: list[StreamEvent] = []
    for ev in stream:
        events.append(ev)
        if len(events) >= k:
            break
    if not events:
        raise ValueError("stream produced no events")
    meta = dict(getattr(stream, "metadata", {}))
    h, w = events[0].frame.height, events[0].frame.width
    thirds = np.zeros(3)
    halves = {"top": 0.0, "bottom": 0.0, "left": 0.0, "right": 0.0}
    colors: dict[str, int] = {}
    actions: dict[str, int] = {}
    heights: list[int] = []
    empty = 0
    red = 0.0
    bounds = [0, h // 3, 2 * h // 3, h]
    for ev in events:
        boxes = _boxes(ev.truth)
        if not boxes:
            empty += 1
        if ev.truth.car_present:
            colors[ev.truth.color] = colors.get(ev.truth.color, 0) + 1
        for p in ev.truth.players:
            actions[p.action] = actions.get(p.action, 0) + 1
        for b in boxes:
            heights.append(b.height)
            for i in range(3):
                lo, hi = max(b.row_start, bounds[i]), min(b.row_end, bounds[i + 1])
                thirds[i] += max(0, hi - lo) * b.width
            rows_top = max(0, min(b.row_end, h // 2) - b.row_start)
            cols_left = max(0, min(b.col_end, w // 2) - b.col_start)
            halves["top"] += rows_top * b.width
            halves["bottom"] += (b.height - rows_top) * b.width
            halves["left"] += cols_left * b.height
            halves["right"] += (b.width - cols_left) * b.height
        red += float(red_mask(ev.frame.pixels).mean())
    total = thirds.sum()
    mass = tuple(float(x / total) if total else 0.0 for x in thirds)
    half_mass = {k2: (v / total if total else 0.0) for k2, v in halves.items()}
    n_col = sum(colors.values())
    n_act = sum(actions.values())
    summary = SampleSummary(
        n_frames=len(events),
        fps=float(meta.get("fps", 30)),
        width=w,
        height=h,
        empty_fraction=empty / len(events),
        bbox_histogram=mass,  # type: ignore[arg-type]
        half_mass=half_mass,
        color_marginals={k2: v / n_col for k2, v in sorted(colors.items())} if n_col else {},
        action_marginals={k2: v / n_act for k2, v in sorted(actions.items())} if n_act else {},
        object_height_min=int(min(heights)) if heights else 0,
        object_height_median=float(np.median(heights)) if heights else 0.0,
        red_fraction_mean=red / len(events),
        metadata=meta,
    )
    return events, summary


def dump_stream(stream, n_frames: int, out_dir: str | Path) -> Path:
    """Write ``n_frames`` PPM frames and ``annotations.jsonl`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ann = out / "annotations.jsonl"
    with ann.open("w", encoding="utf-8") as fh:
        for i, ev in enumerate(stream):
            if i >= n_frames:
                break
            write_ppm(ev.frame, out / f"frame_{ev.frame_id:06d}.ppm")
            fh.write(json.dumps({"frame_id": ev.frame_id, "truth": ev.truth.to_dict()}) + "\n")
    return ann
