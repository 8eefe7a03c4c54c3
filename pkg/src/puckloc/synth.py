"""Synthetic broadcast-like clips with clip-level puck and event annotation.

The camera is a fixed top-down projection of the whole rink onto the frame;
``w`` maps left to right and ``h`` bottom to top. Puck placement follows the
event: faceoffs at the dots, shots in the end zones, advances in the neutral
zone, play anywhere. Players cluster around the puck and may occlude it.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import rink
from .data import (
    DatasetSplit,
    EventLabel,
    ClipRecord,
    split_sizes,
    write_frames,
    write_manifest,
)
from .rink import RINK_LENGTH, RINK_WIDTH, RinkPoint

DEFAULT_CLASS_WEIGHTS: Dict[EventLabel, float] = {
    EventLabel.PLAY: 0.55,
    EventLabel.SHOT: 0.20,
    EventLabel.FACEOFF: 0.15,
    EventLabel.ADVANCE: 0.10,
}

FACEOFF_JITTER_FT = 2.0

_ICE = (228, 234, 240)
_RED = (200, 30, 40)
_BLUE = (30, 60, 190)
_PUCK = (15, 15, 15)
_TEAMS = ((215, 60, 50), (40, 90, 200))


@dataclass
class GeneratorConfig:
    width: int = 256
    height: int = 256
    duration_s: float = 2.0
    fps: float = 30.0
    min_players: int = 4
    max_players: int = 10
    player_radius_ft: float = 25.0
    puck_radius_px: float = 0.0  # 0 -> scale with frame width
    noise_std: float = 0.02
    occlusion_prob: float = 0.3
    frame_format: str = "png"

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValueError(f"frame size must be at least 16x16, got {self.width}x{self.height}")
        if self.duration_s <= 0 or self.fps <= 0:
            raise ValueError("duration_s and fps must be positive")
        if not (0 <= self.min_players <= self.max_players):
            raise ValueError(f"invalid player count range [{self.min_players}, {self.max_players}]")
        if self.player_radius_ft <= 0:
            raise ValueError("player_radius_ft must be positive")
        if self.noise_std < 0 or not (0 <= self.occlusion_prob <= 1):
            raise ValueError("noise_std must be >= 0 and occlusion_prob in [0, 1]")
        if self.frame_format not in ("png", "rawvid"):
            raise ValueError(f"unknown frame format {self.frame_format!r}")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * self.fps))

    @classmethod
    def preset(cls, name: str, **overrides) -> "GeneratorConfig":
        sizes = {"paper": (256, 256), "broadcast": (1280, 720), "test": (64, 64)}
        if name not in sizes:
            raise ValueError(f"unknown generator preset {name!r}")
        w, h = sizes[name]
        return cls(**{"width": w, "height": h, **overrides})


def clip_seed(global_seed: int, clip_id: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(global_seed) & 0xFFFFFFFF, zlib.crc32(clip_id.encode())])


# -- geometry -----------------------------------------------------------------


def to_pixels(w, h, width: int, height: int):
    return np.asarray(w) / RINK_LENGTH * width, (1.0 - np.asarray(h) / RINK_WIDTH) * height


def _clamp_w(w):
    return np.clip(w, 0.0, RINK_LENGTH)


def _clamp_h(h):
    return np.clip(h, 0.0, RINK_WIDTH)


def sample_puck_location(event: EventLabel, rng: np.random.Generator) -> RinkPoint:
    if event is EventLabel.FACEOFF:
        spots = rink.faceoff_spots()
        spot = spots[rng.integers(len(spots))]
        r = FACEOFF_JITTER_FT * np.sqrt(rng.uniform())
        a = rng.uniform(0, 2 * np.pi)
        return RinkPoint(_clamp_w(spot.w + r * np.cos(a)), _clamp_h(spot.h + r * np.sin(a)))
    if event is EventLabel.ADVANCE:
        lo, hi = rink.BLUE_LINES
        w = rng.uniform(lo, hi)
        return RinkPoint(w, rng.uniform(3.0, RINK_WIDTH - 3.0))
    if event is EventLabel.SHOT:
        # between the blue line and the end boards, either end
        w = rng.uniform(rink.GOAL_LINES[0] - 6.0, rink.BLUE_LINES[0] - 1e-6)
        if rng.uniform() < 0.5:
            w = RINK_LENGTH - w
        return RinkPoint(w, rng.uniform(10.0, RINK_WIDTH - 10.0))
    return RinkPoint(rng.uniform(2.0, RINK_LENGTH - 2.0), rng.uniform(2.0, RINK_WIDTH - 2.0))


def _puck_velocity(event: EventLabel, puck: RinkPoint, rng: np.random.Generator) -> np.ndarray:
    """Feet per second."""
    if event is EventLabel.FACEOFF:
        speed = rng.uniform(0.0, 1.0)
    elif event is EventLabel.ADVANCE:
        speed = rng.uniform(5.0, 15.0)
    elif event is EventLabel.SHOT:
        speed = rng.uniform(8.0, 20.0)
    else:
        speed = rng.uniform(0.0, 10.0)
    if event is EventLabel.SHOT:
        goal_w = rink.GOAL_LINES[1] if puck.w > rink.CENTER_LINE else rink.GOAL_LINES[0]
        d = np.array([goal_w - puck.w, RINK_WIDTH / 2 - puck.h])
        d /= max(np.linalg.norm(d), 1e-6)
    else:
        a = rng.uniform(0, 2 * np.pi)
        d = np.array([np.cos(a), np.sin(a)])
    return speed * d


# -- rendering ----------------------------------------------------------------


def render_background(width: int, height: int) -> np.ndarray:
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:] = _ICE
    lw = max(1, int(round(width / 100)))

    def vline(w_ft, color, thick):
        x = int(round(w_ft / RINK_LENGTH * width))
        img[:, max(0, x - thick // 2) : min(width, x - thick // 2 + thick)] = color

    vline(rink.CENTER_LINE, _RED, lw)
    for b in rink.BLUE_LINES:
        vline(b, _BLUE, 2 * lw)
    for g in rink.GOAL_LINES:
        vline(g, _RED, max(1, lw // 2))
    yy, xx = np.mgrid[0:height, 0:width]
    r_dot = max(1.0, width / 200.0)
    for spot in rink.faceoff_spots():
        px, py = to_pixels(spot.w, spot.h, width, height)
        img[(xx + 0.5 - px) ** 2 + (yy + 0.5 - py) ** 2 <= r_dot**2] = _RED
    return img


def _draw_disc(img, cx, cy, r, color):
    h, w = img.shape[:2]
    x0, x1 = int(max(0, np.floor(cx - r - 1))), int(min(w, np.ceil(cx + r + 1)))
    y0, y1 = int(max(0, np.floor(cy - r - 1))), int(min(h, np.ceil(cy + r + 1)))
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    mask = (xx + 0.5 - cx) ** 2 + (yy + 0.5 - cy) ** 2 <= r * r
    img[y0:y1, x0:x1][mask] = color


def _draw_box(img, x, y, bw, bh, color):
    h, w = img.shape[:2]
    x0, x1 = int(max(0, round(x))), int(min(w, round(x + bw)))
    y0, y1 = int(max(0, round(y))), int(min(h, round(y + bh)))
    if x0 < x1 and y0 < y1:
        img[y0:y1, x0:x1] = color


@dataclass
class SceneTrack:
    """Per-frame positions in rink feet; ``puck_visible`` marks unoccluded frames."""

    puck: np.ndarray  # (n, 2)
    puck_visible: np.ndarray  # (n,) bool
    players: np.ndarray  # (n, k, 2)
    teams: np.ndarray  # (k,)


def box_size(cfg: GeneratorConfig) -> Tuple[float, float]:
    return max(2.0, 0.03 * cfg.width), max(4.0, 0.08 * cfg.height)


def player_boxes_at(track: SceneTrack, frame: int, cfg: GeneratorConfig) -> List[Tuple[float, float, float, float]]:
    bw, bh = box_size(cfg)
    px, py = to_pixels(track.players[frame, :, 0], track.players[frame, :, 1], cfg.width, cfg.height)
    return [(float(x - bw / 2), float(y - bh / 2), float(bw), float(bh)) for x, y in zip(px, py)]


def render_frames(track: SceneTrack, cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    n = len(track.puck)
    bg = render_background(cfg.width, cfg.height)
    r_puck = cfg.puck_radius_px or max(1.2, cfg.width / 100.0)
    bw, bh = box_size(cfg)
    frames = np.empty((n, cfg.height, cfg.width, 3), dtype=np.uint8)
    for i in range(n):
        img = bg.copy()
        if track.puck_visible[i]:
            px, py = to_pixels(track.puck[i, 0], track.puck[i, 1], cfg.width, cfg.height)
            _draw_disc(img, float(px), float(py), r_puck, _PUCK)
        px, py = to_pixels(track.players[i, :, 0], track.players[i, :, 1], cfg.width, cfg.height)
        for x, y, team in zip(px, py, track.teams):
            _draw_box(img, x - bw / 2, y - bh / 2, bw, bh, _TEAMS[team])
        if cfg.noise_std > 0:
            noise = rng.normal(0.0, cfg.noise_std * 255.0, size=img.shape)
            img = np.clip(img.astype(np.float64) + noise, 0, 255).astype(np.uint8)
        frames[i] = img
    return frames


def simulate_track(
    puck: RinkPoint,
    event: EventLabel,
    n_frames: int,
    fps: float,
    cfg: GeneratorConfig,
    rng: np.random.Generator,
) -> SceneTrack:
    t = (np.arange(n_frames) - (n_frames - 1) / 2.0) / fps
    v = _puck_velocity(event, puck, rng)
    puck_xy = np.stack([_clamp_w(puck.w + v[0] * t), _clamp_h(puck.h + v[1] * t)], axis=1)

    visible = np.ones(n_frames, dtype=bool)
    if rng.uniform() < cfg.occlusion_prob:
        length = int(rng.integers(max(1, n_frames // 10), max(2, n_frames // 3)))
        start = int(rng.integers(0, max(1, n_frames - length)))
        visible[start : start + length] = False

    k = int(rng.integers(cfg.min_players, cfg.max_players + 1))
    r = cfg.player_radius_ft * np.sqrt(rng.uniform(size=k))
    a = rng.uniform(0, 2 * np.pi, size=k)
    base = np.stack([puck.w + r * np.cos(a), puck.h + r * np.sin(a)], axis=1)
    drift = rng.normal(0.0, 3.0, size=(k, 2))  # ft/s
    jitter = rng.normal(0.0, 0.3, size=(n_frames, k, 2))
    players = base[None] + drift[None] * t[:, None, None] + jitter
    players[..., 0] = _clamp_w(players[..., 0])
    players[..., 1] = _clamp_h(players[..., 1])
    teams = rng.integers(0, 2, size=k)
    return SceneTrack(puck=puck_xy, puck_visible=visible, players=players, teams=teams)


# -- clips & datasets ---------------------------------------------------------


def generate_clip(
    scenario: Union[EventLabel, str],
    config: Optional[GeneratorConfig] = None,
    seed=0,
    clip_id: str = "clip",
) -> Tuple[ClipRecord, np.ndarray]:
    """Render one annotated clip; returns the record and ``(n, H, W, 3)`` uint8 frames.

    ``frames_path`` of the record is left empty until the frames are written.
    """
    cfg = config or GeneratorConfig()
    event = EventLabel.parse(scenario)
    rng = np.random.default_rng(seed)
    puck = sample_puck_location(event, rng)
    n = cfg.n_frames
    track = simulate_track(puck, event, n, cfg.fps, cfg, rng)
    frames = render_frames(track, cfg, rng)
    rec = ClipRecord(
        clip_id=clip_id,
        frames_path="",
        n_frames=n,
        fps=cfg.fps,
        width=cfg.width,
        height=cfg.height,
        puck=puck,
        event=event,
        player_boxes=player_boxes_at(track, n // 2, cfg),
    )
    return rec, frames


def class_quotas(n: int, weights: Dict[EventLabel, float]) -> Dict[EventLabel, int]:
    """Largest-remainder allocation of ``n`` clips to classes."""
    raw = {k: n * w for k, w in weights.items()}
    counts = {k: int(np.floor(v)) for k, v in raw.items()}
    order = sorted(weights, key=lambda k: (-(raw[k] - counts[k]), EVENT_ORDER[k]))
    for k in order[: n - sum(counts.values())]:
        counts[k] += 1
    return counts


EVENT_ORDER = {e: i for i, e in enumerate(EventLabel)}


def _normalize_weights(class_weights) -> Dict[EventLabel, float]:
    if class_weights is None:
        return dict(DEFAULT_CLASS_WEIGHTS)
    weights = {EventLabel.parse(k): float(v) for k, v in dict(class_weights).items()}
    if any(v < 0 for v in weights.values()) or abs(sum(weights.values()) - 1.0) > 1e-6:
        raise ValueError(f"class weights must be nonnegative and sum to 1, got {weights}")
    return weights


MIN_CLIPS = 10


def generate_dataset(
    n_clips: int,
    out_dir: Union[str, Path],
    class_weights=None,
    seed: int = 0,
    config: Optional[GeneratorConfig] = None,
    split_fractions: Sequence[float] = (0.8, 0.1, 0.1),
) -> DatasetSplit:
    """Render ``n_clips`` clips under ``out_dir`` and write the manifest."""
    if n_clips < MIN_CLIPS:
        raise ValueError(f"n_clips must be at least {MIN_CLIPS}, got {n_clips}")
    cfg = config or GeneratorConfig()
    weights = _normalize_weights(class_weights)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc

    rng = np.random.default_rng(seed)
    quotas = class_quotas(n_clips, weights)
    labels = [e for e in EventLabel for _ in range(quotas.get(e, 0))]
    labels = [labels[i] for i in rng.permutation(n_clips)]

    ids = [f"clip_{i:05d}" for i in range(n_clips)]
    n_train, n_val, _ = split_sizes(n_clips, split_fractions)
    order = rng.permutation(n_clips)
    split_of = {}
    for rank, i in enumerate(order):
        split_of[ids[i]] = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")

    records = []
    for clip_id, event in zip(ids, labels):
        rec, frames = generate_clip(event, cfg, clip_seed(seed, clip_id), clip_id=clip_id)
        written = write_frames(out / clip_id, frames, cfg.frame_format)
        rec.frames_path = Path(written).name
        rec.split = split_of[clip_id]
        rec.root = out
        records.append(rec)
    write_manifest(out, records)
    with open(out / "generator.json", "w") as fh:
        json.dump(
            {"seed": seed, "n_clips": n_clips, "class_weights": {k.value: v for k, v in weights.items()},
             "config": asdict(cfg)},
            fh,
            indent=2,
        )
    return DatasetSplit(
        tuple(i for i in ids if split_of[i] == "train"),
        tuple(i for i in ids if split_of[i] == "val"),
        tuple(i for i in ids if split_of[i] == "test"),
    )


# -- untrimmed videos ---------------------------------------------------------


@dataclass
class VideoRecord:
    """An untrimmed sequence with per-frame oracle annotation."""

    video_id: str
    frames_path: str
    n_frames: int
    fps: float
    width: int
    height: int
    puck_track: List[Tuple[float, float]] = field(default_factory=list)
    boxes_per_frame: List[List[Tuple[float, float, float, float]]] = field(default_factory=list)
    root: Optional[Path] = field(default=None, compare=False, repr=False)

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.fps

    def frames_location(self) -> Path:
        p = Path(self.frames_path)
        if not p.is_absolute() and self.root is not None:
            p = Path(self.root) / p
        return p

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        obj = {k: v for k, v in asdict(self).items() if k != "root"}
        with open(path, "w") as fh:
            json.dump(obj, fh)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "VideoRecord":
        path = Path(path)
        with open(path) as fh:
            obj = json.load(fh)
        obj["puck_track"] = [tuple(p) for p in obj.get("puck_track", [])]
        obj["boxes_per_frame"] = [[tuple(b) for b in f] for f in obj.get("boxes_per_frame", [])]
        return cls(root=path.parent, **obj)


def generate_video(
    duration_s: float,
    out_dir: Union[str, Path],
    config: Optional[GeneratorConfig] = None,
    seed: int = 0,
    video_id: str = "video",
    puck: Optional[RinkPoint] = None,
    stationary: bool = False,
) -> VideoRecord:
    """Render an untrimmed video as a chain of 2 s segments with varying events.

    With ``stationary`` the puck rests at ``puck`` (or a random faceoff spot)
    for the whole video.
    """
    cfg = config or GeneratorConfig()
    rng = np.random.default_rng(clip_seed(seed, video_id))
    n_total = int(round(duration_s * cfg.fps))
    seg = cfg.n_frames
    pucks, boxes, frames = [], [], []
    start = 0
    while start < n_total:
        n = min(seg, n_total - start)
        if stationary:
            event = EventLabel.FACEOFF
            p = puck or rink.faceoff_spots()[0]
        else:
            event = list(EventLabel)[rng.integers(4)]
            p = sample_puck_location(event, rng)
        track = simulate_track(p, event, n, cfg.fps, cfg, rng)
        if stationary:
            track.puck[:] = (p.w, p.h)
            track.puck_visible[:] = True
        frames.append(render_frames(track, cfg, rng))
        pucks.extend(map(tuple, track.puck.tolist()))
        boxes.extend(player_boxes_at(track, i, cfg) for i in range(n))
        start += n
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = write_frames(out / video_id, np.concatenate(frames), cfg.frame_format)
    rec = VideoRecord(
        video_id=video_id,
        frames_path=Path(written).name,
        n_frames=n_total,
        fps=cfg.fps,
        width=cfg.width,
        height=cfg.height,
        puck_track=pucks,
        boxes_per_frame=boxes,
        root=out,
    )
    rec.save(out / f"{video_id}.video.json")
    return rec
