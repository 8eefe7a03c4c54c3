"""Sliding-window puck localization over untrimmed video."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from .data import EVENT_CLASSES, EventLabel, eval_indices, read_frames, resize_frames
from .encoding import build_player_heatmap
from .metrics import decode_location
from .model import PuckNet
from .model.network import frames_to_tensor, heatmap_to_tensor
from .rink import RinkPoint

log = logging.getLogger(__name__)

MIN_CLEAN_STRIDE_S = 0.5
_EPS = 1e-9

# frame index, decoded frame (H, W, 3) -> boxes (x, y, bw, bh) in frame pixels
Detector = Callable[[int, np.ndarray], Sequence[Sequence[float]]]

TRAJECTORY_COLUMNS = ("window_index", "t_start_s", "t_center_s", "w_ft", "h_ft", "event", "conf_w", "conf_h")


@dataclass
class SlidingWindowConfig:
    window_s: float = 2.0
    stride_s: float = 1.0
    fps: Optional[float] = None  # None -> take from the video
    smooth: int = 0  # moving-average width in windows; 0 disables

    def __post_init__(self):
        if self.window_s <= 0 or not (0 < self.stride_s <= self.window_s + _EPS):
            raise ValueError(f"need 0 < stride_s <= window_s, got stride {self.stride_s}, window {self.window_s}")
        if self.smooth < 0:
            raise ValueError("smooth must be >= 0")

    @property
    def noisy(self) -> bool:
        return self.stride_s < MIN_CLEAN_STRIDE_S - _EPS


@dataclass
class TrajectoryPoint:
    window_index: int
    t_start_s: float
    t_center_s: float
    location: RinkPoint
    event: Optional[EventLabel]
    peak_confidences: Tuple[float, float]


@dataclass
class Trajectory:
    points: List[TrajectoryPoint]
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)


def window_plan(duration_s: float, cfg: SlidingWindowConfig) -> List[Tuple[float, float]]:
    if duration_s + _EPS < cfg.window_s:
        raise ValueError(f"video of {duration_s:g} s is shorter than the {cfg.window_s:g} s window")
    n = int(np.floor((duration_s - cfg.window_s) / cfg.stride_s + _EPS)) + 1
    return [(k * cfg.stride_s, k * cfg.stride_s + cfg.window_s) for k in range(n)]


def oracle_detector(boxes_per_frame) -> Detector:
    """Detector backed by per-frame annotation boxes."""

    def detect(frame_index: int, frame: np.ndarray):
        if frame_index >= len(boxes_per_frame):
            return []
        return boxes_per_frame[frame_index]

    return detect


def _moving_average(xy: np.ndarray, k: int) -> np.ndarray:
    if k <= 1 or len(xy) < 2:
        return xy
    pad = k // 2
    padded = np.pad(xy, ((pad, k - 1 - pad), (0, 0)), mode="edge")
    kernel = np.ones(k) / k
    return np.stack([np.convolve(padded[:, j], kernel, mode="valid") for j in range(xy.shape[1])], axis=1)


@torch.no_grad()
def infer_trajectory(
    video,
    model: PuckNet,
    cfg: Optional[SlidingWindowConfig] = None,
    detector: Union[Detector, str, None] = "oracle",
    checkpoint_id: Optional[str] = None,
) -> Trajectory:
    """Run the clip model on every window of ``video`` and decode one location per window.

    ``video`` is a :class:`~puckloc.synth.VideoRecord`. ``detector`` may be a
    callable, ``"oracle"`` (annotation boxes stored with the video) or None.
    When no boxes can be obtained the window runs with an all-zero heatmap and
    a warning is recorded.
    """
    cfg = cfg or SlidingWindowConfig()
    fps = cfg.fps or video.fps
    mcfg = model.config
    model.eval()
    if detector == "oracle":
        detector = oracle_detector(video.boxes_per_frame) if video.boxes_per_frame else None
    elif isinstance(detector, str):
        raise ValueError(f"unknown detector source {detector!r}")

    warnings: List[str] = []
    if cfg.noisy:
        warnings.append(
            f"stride {cfg.stride_s:g} s is below {MIN_CLEAN_STRIDE_S:g} s; estimates are expected to be noisy"
        )
    plan = window_plan(video.n_frames / fps, cfg)
    n_win = int(round(cfg.window_s * fps))
    location = video.frames_location()
    raw_pts, confs, events = [], [], []
    for k, (start, _end) in enumerate(plan):
        f0 = int(round(start * fps))
        f0 = min(f0, video.n_frames - n_win)
        idx = f0 + eval_indices(n_win)
        raw = read_frames(location, idx, owner=video.video_id)
        frames = frames_to_tensor(resize_frames(raw, mcfg.input_size))
        mid = f0 + n_win // 2
        boxes = []
        if detector is None:
            warnings.append(f"window {k}: no detector available; using empty player heatmap")
        else:
            try:
                mid_frame = read_frames(location, [mid], owner=video.video_id)[0]
                boxes = list(detector(mid, mid_frame))
            except Exception as exc:  # noqa: BLE001 - any detector failure degrades to no players
                warnings.append(f"window {k}: detector failed ({exc}); using empty player heatmap")
                boxes = []
        heat = build_player_heatmap(boxes, (video.width, video.height), mcfg.heatmap_sigma_p, mcfg.input_size)
        pred = model(frames, heatmap_to_tensor(heat.grid))
        loc = decode_location(pred.logits_w[0].numpy(), pred.logits_h[0].numpy())
        raw_pts.append(loc.as_tuple())
        confs.append((float(pred.p_w[0].max()), float(pred.p_h[0].max())))
        events.append(EVENT_CLASSES[int(pred.logits_e[0].argmax())] if pred.logits_e is not None else None)

    xy = _moving_average(np.asarray(raw_pts, dtype=np.float64), cfg.smooth)
    points = [
        TrajectoryPoint(
            window_index=k,
            t_start_s=start,
            t_center_s=start + cfg.window_s / 2,
            location=RinkPoint(*xy[k]),
            event=events[k],
            peak_confidences=confs[k],
        )
        for k, (start, _) in enumerate(plan)
    ]
    meta = {
        "video_id": video.video_id,
        "config": asdict(cfg),
        "fps": fps,
        "n_windows": len(points),
        "noisy": cfg.noisy,
        "checkpoint_id": checkpoint_id,
        "model_config": mcfg.to_dict(),
        "warnings": warnings,
    }
    return Trajectory(points=points, metadata=meta)


def write_trajectory(traj: Trajectory, csv_path: Union[str, Path], sidecar_path: Optional[Union[str, Path]] = None):
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for p in traj.points:
            w.writerow([
                p.window_index,
                f"{p.t_start_s:.6g}",
                f"{p.t_center_s:.6g}",
                f"{p.location.w:.4f}",
                f"{p.location.h:.4f}",
                p.event.value if p.event is not None else "",
                f"{p.peak_confidences[0]:.6f}",
                f"{p.peak_confidences[1]:.6f}",
            ])
    sidecar_path = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
    with open(sidecar_path, "w") as fh:
        json.dump(traj.metadata, fh, indent=2)
    return csv_path, sidecar_path


def read_trajectory(csv_path: Union[str, Path]) -> List[dict]:
    with open(csv_path) as fh:
        return list(csv.DictReader(fh))
