"""Clip records, the on-disk clip store, dataset splits and frame sampling.

A dataset root holds ``manifest.jsonl`` (one clip per line) and a frame store
per clip: either ``<clip_id>/frame_%04d.png`` or a packed ``<clip_id>.rawvid``.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from .rink import RinkPoint

MANIFEST_NAME = "manifest.jsonl"
CLIP_FRAMES = 16

RAWVID_MAGIC = b"RAWVID01"
_RAWVID_HEADER = struct.Struct("<8sIIII")


class DataError(RuntimeError):
    """Unreadable or malformed dataset content."""


class EventLabel(str, enum.Enum):
    FACEOFF = "Faceoff"
    ADVANCE = "Advance"
    PLAY = "Play"
    SHOT = "Shot"

    @property
    def index(self) -> int:
        return EVENT_CLASSES.index(self)

    @classmethod
    def parse(cls, value: Union[str, "EventLabel"]) -> "EventLabel":
        if isinstance(value, cls):
            return value
        for member in cls:
            if member.value.lower() == str(value).lower() or member.name.lower() == str(value).lower():
                return member
        raise ValueError(f"unknown event label {value!r}")


EVENT_CLASSES: Tuple[EventLabel, ...] = tuple(EventLabel)


@dataclass
class ClipRecord:
    clip_id: str
    frames_path: str
    n_frames: int
    fps: float
    width: int
    height: int
    puck: RinkPoint
    event: EventLabel
    player_boxes: List[Tuple[float, float, float, float]]
    split: Optional[str] = None
    # directory that ``frames_path`` is relative to; not serialized
    root: Optional[Path] = field(default=None, compare=False, repr=False)

    @property
    def resolution(self) -> Tuple[int, int]:
        return (self.width, self.height)

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.fps

    def frames_location(self) -> Path:
        p = Path(self.frames_path)
        if not p.is_absolute() and self.root is not None:
            p = Path(self.root) / p
        return p

    def to_json(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "frames_path": self.frames_path,
            "n_frames": int(self.n_frames),
            "fps": float(self.fps),
            "width": int(self.width),
            "height": int(self.height),
            "puck_w_ft": self.puck.w,
            "puck_h_ft": self.puck.h,
            "event": self.event.value,
            "player_boxes": [[float(v) for v in b] for b in self.player_boxes],
            "split": self.split,
        }

    @classmethod
    def from_json(cls, obj: dict, root: Optional[Path] = None) -> "ClipRecord":
        try:
            return cls(
                clip_id=str(obj["clip_id"]),
                frames_path=str(obj["frames_path"]),
                n_frames=int(obj["n_frames"]),
                fps=float(obj["fps"]),
                width=int(obj["width"]),
                height=int(obj["height"]),
                puck=RinkPoint(obj["puck_w_ft"], obj["puck_h_ft"]),
                event=EventLabel.parse(obj["event"]),
                player_boxes=[tuple(float(v) for v in b) for b in obj["player_boxes"]],
                split=obj.get("split"),
                root=root,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed manifest record {obj.get('clip_id', '?')!r}: {exc}") from exc


@dataclass(frozen=True)
class DatasetSplit:
    train: Tuple[str, ...]
    val: Tuple[str, ...]
    test: Tuple[str, ...]

    def __post_init__(self):
        a, b, c = set(self.train), set(self.val), set(self.test)
        if a & b or a & c or b & c:
            raise ValueError("dataset splits overlap")

    def ids(self, name: str) -> Tuple[str, ...]:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)


def split_sizes(n: int, fractions: Sequence[float] = (0.8, 0.1, 0.1)) -> Tuple[int, int, int]:
    n_train = int(round(n * fractions[0]))
    n_val = int(round(n * fractions[1]))
    return n_train, n_val, n - n_train - n_val


@dataclass
class FrameSample:
    indices: np.ndarray
    pixels: np.ndarray  # (16, size, size, 3) float32 in [0, 1]

    def __post_init__(self):
        if len(self.indices) != CLIP_FRAMES:
            raise ValueError(f"expected {CLIP_FRAMES} frame indices, got {len(self.indices)}")
        if np.any(np.diff(self.indices) < 0):
            raise ValueError("frame indices must be nondecreasing")


# -- manifest -----------------------------------------------------------------


def write_manifest(root: Union[str, Path], records: Sequence[ClipRecord]) -> Path:
    root = Path(root)
    path = root / MANIFEST_NAME
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json()) + "\n")
    return path


def read_manifest(root: Union[str, Path]) -> List[ClipRecord]:
    root = Path(root)
    path = root / MANIFEST_NAME if root.is_dir() else root
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            records.append(ClipRecord.from_json(obj, root=path.parent))
    return records


def split_from_records(records: Sequence[ClipRecord]) -> DatasetSplit:
    groups: Dict[str, List[str]] = {"train": [], "val": [], "test": []}
    for rec in records:
        if rec.split in groups:
            groups[rec.split].append(rec.clip_id)
    return DatasetSplit(tuple(groups["train"]), tuple(groups["val"]), tuple(groups["test"]))


def load_dataset(root: Union[str, Path]) -> Tuple[Dict[str, ClipRecord], DatasetSplit]:
    records = read_manifest(root)
    return {r.clip_id: r for r in records}, split_from_records(records)


# -- frame store --------------------------------------------------------------


def write_frames(path: Union[str, Path], frames: np.ndarray, fmt: str = "png") -> str:
    """Write ``(n, H, W, 3)`` uint8 frames; returns the path actually used."""
    path = Path(path)
    frames = np.ascontiguousarray(frames, dtype=np.uint8)
    if fmt == "png":
        path.mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(frames):
            Image.fromarray(frame).save(path / f"frame_{i:04d}.png", compress_level=1)
        return str(path)
    if fmt == "rawvid":
        path = path.with_suffix(".rawvid")
        path.parent.mkdir(parents=True, exist_ok=True)
        n, h, w, c = frames.shape
        with open(path, "wb") as fh:
            fh.write(_RAWVID_HEADER.pack(RAWVID_MAGIC, n, h, w, c))
            fh.write(frames.tobytes())
        return str(path)
    raise ValueError(f"unknown frame format {fmt!r}")


def _open_rawvid(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_RAWVID_HEADER.size)
    if len(header) != _RAWVID_HEADER.size:
        raise DataError(f"truncated rawvid header: {path}")
    magic, n, h, w, c = _RAWVID_HEADER.unpack(header)
    if magic != RAWVID_MAGIC:
        raise DataError(f"bad rawvid magic in {path}")
    return np.memmap(path, dtype=np.uint8, mode="r", offset=_RAWVID_HEADER.size, shape=(n, h, w, c))


def read_frames(location: Union[str, Path], indices: Sequence[int], owner: str = "?") -> np.ndarray:
    """Decode the requested frames as a ``(len(indices), H, W, 3)`` uint8 array."""
    location = Path(location)
    try:
        if location.suffix == ".rawvid":
            store = _open_rawvid(location)
            return np.asarray(store[np.asarray(indices, dtype=np.int64)])
        out = []
        for i in indices:
            with Image.open(location / f"frame_{int(i):04d}.png") as im:
                out.append(np.asarray(im.convert("RGB")))
        return np.stack(out)
    except (OSError, ValueError, IndexError) as exc:
        raise DataError(f"cannot read frames of clip {owner!r} from {location}: {exc}") from exc


def frame_count(location: Union[str, Path]) -> int:
    location = Path(location)
    if location.suffix == ".rawvid":
        return _open_rawvid(location).shape[0]
    return len(list(location.glob("frame_*.png")))


# -- sampling -----------------------------------------------------------------


def eval_indices(n_frames: int, k: int = CLIP_FRAMES) -> np.ndarray:
    return (n_frames * np.arange(k)) // k


def train_indices(n_frames: int, rng: np.random.Generator, k: int = CLIP_FRAMES) -> np.ndarray:
    # i.i.d. with replacement, then sorted
    return np.sort(rng.integers(0, n_frames, size=k))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def resize_frames(frames: np.ndarray, size: int) -> np.ndarray:
    if frames.shape[1] == size and frames.shape[2] == size:
        return frames.astype(np.float32) / 255.0
    out = np.empty((len(frames), size, size, 3), dtype=np.float32)
    for i, f in enumerate(frames):
        out[i] = np.asarray(Image.fromarray(f).resize((size, size), Image.BILINEAR), dtype=np.float32)
    return out / 255.0


def sample_frames(
    clip: ClipRecord,
    mode: str = "eval",
    seed=None,
    size: int = 256,
    frames: Optional[np.ndarray] = None,
) -> FrameSample:
    """Pick 16 frames of ``clip`` and return them resized and scaled to [0, 1].

    ``train`` draws indices uniformly with replacement and sorts them; ``eval``
    takes ``floor(n_frames * k / 16)``. ``frames`` may hold the clip already
    decoded (used by inference over long videos).
    """
    n = clip.n_frames if frames is None else len(frames)
    if n < CLIP_FRAMES:
        raise DataError(f"clip {clip.clip_id!r} has {n} frames; need at least {CLIP_FRAMES}")
    if mode == "train":
        idx = train_indices(n, _as_rng(seed))
    elif mode == "eval":
        idx = eval_indices(n)
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if frames is None:
        raw = read_frames(clip.frames_location(), idx, owner=clip.clip_id)
    else:
        raw = np.asarray(frames)[idx]
    return FrameSample(indices=idx, pixels=resize_frames(raw, size))
