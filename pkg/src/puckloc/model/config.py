from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Tuple

# (temporal, spatial) stride of each backbone layer; layer 0 is the stem
LAYER_STRIDES: Tuple[Tuple[int, int], ...] = ((1, 2), (1, 1), (2, 2), (2, 2), (2, 2))
DEFAULT_WIDTHS: Tuple[int, ...] = (64, 64, 128, 256, 512)

PLAYER_CHANNELS = 8
N_EVENTS = 4


@dataclass
class ModelConfig:
    backbone_layers: int = 4
    channel_widths: Tuple[int, ...] = DEFAULT_WIDTHS
    blocks_per_stage: int = 2
    n_frames: int = 16
    input_size: int = 256
    gt_sigma: float = 30.0
    heatmap_sigma_p: float = 15.0
    use_player_branch: bool = True
    multitask: bool = True
    location_activation: str = "softmax"

    def __post_init__(self):
        self.channel_widths = tuple(int(c) for c in self.channel_widths)
        if self.backbone_layers not in (2, 3, 4, 5):
            raise ValueError(f"backbone_layers must be in 2..5, got {self.backbone_layers}")
        if len(self.channel_widths) < self.backbone_layers:
            raise ValueError(
                f"channel_widths has {len(self.channel_widths)} entries; need {self.backbone_layers}"
            )
        if any(c <= 0 for c in self.channel_widths):
            raise ValueError(f"channel widths must be positive, got {self.channel_widths}")
        if self.blocks_per_stage < 1:
            raise ValueError("blocks_per_stage must be >= 1")
        if self.input_size < 16 or self.n_frames < 1:
            raise ValueError("input_size must be >= 16 and n_frames >= 1")
        if self.gt_sigma <= 0 or self.heatmap_sigma_p <= 0:
            raise ValueError("gt_sigma and heatmap_sigma_p must be positive")
        if self.location_activation not in ("sigmoid", "softmax"):
            raise ValueError(f"location_activation must be sigmoid or softmax, got {self.location_activation!r}")

    @property
    def widths(self) -> Tuple[int, ...]:
        return self.channel_widths[: self.backbone_layers]

    @property
    def video_channels(self) -> int:
        return self.widths[-1]

    def video_feature_shape(self) -> Tuple[int, int, int, int]:
        """(C, T, H, W) of the video branch output."""
        t, s = self.n_frames, self.input_size
        for st, ss in LAYER_STRIDES[: self.backbone_layers]:
            t, s = math.ceil(t / st), math.ceil(s / ss)
        return self.video_channels, t, s, s

    def player_feature_size(self) -> int:
        s = self.input_size
        s = (s + 2 - 3) // 2 + 1
        s = (s - 2) // 2 + 1
        return (s - 2) // 2 + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel_widths"] = list(self.channel_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown ModelConfig keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def preset(cls, tier: str, **overrides) -> "ModelConfig":
        if tier == "paper":
            return cls(**overrides)
        if tier == "test":
            base = dict(
                backbone_layers=2,
                channel_widths=(16, 16, 32, 64, 128),
                blocks_per_stage=1,
                input_size=64,
                heatmap_sigma_p=15.0 * 64 / 256,
            )
            base.update(overrides)
            return cls(**base)
        raise ValueError(f"unknown tier {tier!r}")
