from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import torch
from torch import nn

from ..encoding import N_H_BINS, N_W_BINS
from .config import N_EVENTS, ModelConfig
from .layers import AttentionFusion, EventHead, LocationHead, PlayerBranch, VideoBranch, check_shape


@dataclass
class Prediction:
    p_w: torch.Tensor
    p_h: torch.Tensor
    p_e: Optional[torch.Tensor]
    logits_w: torch.Tensor
    logits_h: torch.Tensor
    logits_e: Optional[torch.Tensor]


@dataclass
class FeatureBundle:
    F_v: torch.Tensor
    F_p: Optional[torch.Tensor]
    F_cat: Optional[torch.Tensor]
    F_cat_prime: Optional[torch.Tensor]
    F_a: Optional[torch.Tensor]
    F_o: torch.Tensor

    def shapes(self) -> Dict[str, Optional[Tuple[int, ...]]]:
        """Per-sample shapes in ``T x H x W x C`` (``H x W x C`` for ``F_p``) order."""
        out = {}
        for name in ("F_v", "F_p", "F_cat", "F_cat_prime", "F_a", "F_o"):
            x = getattr(self, name)
            if x is None:
                out[name] = None
            elif x.dim() == 5:
                _, c, t, h, w = x.shape
                out[name] = (t, h, w, c)
            else:
                _, c, h, w = x.shape
                out[name] = (h, w, c)
        return out


class PuckNet(nn.Module):
    """Video branch, player branch, attention fusion, location heads and event head."""

    def __init__(self, config: Optional[ModelConfig] = None):
        super().__init__()
        self.config = cfg = config or ModelConfig()
        self.video = VideoBranch(cfg.widths, cfg.blocks_per_stage, cfg.n_frames, cfg.input_size)
        c, t, h, w = cfg.video_feature_shape()
        if cfg.use_player_branch:
            self.player = PlayerBranch(cfg.input_size)
            self.attention = AttentionFusion(c)
        else:
            self.player = None
            self.attention = None
        self.head_w = LocationHead(c, N_W_BINS, (t, h, w))
        self.head_h = LocationHead(c, N_H_BINS, (t, h, w))
        self.head_e = EventHead(c, (t, h, w), N_EVENTS) if cfg.multitask else None

    def _activate(self, logits):
        if self.config.location_activation == "softmax":
            return torch.softmax(logits, dim=-1)
        return torch.sigmoid(logits)

    def forward(
        self,
        frames: torch.Tensor,
        heatmap: Optional[torch.Tensor] = None,
        return_features: bool = False,
        gate: Optional[object] = None,
    ):
        """``frames`` is ``(B, 3, T, S, S)``; ``heatmap`` is ``(B, 1, S, S)``.

        Returns a :class:`Prediction`, plus a :class:`FeatureBundle` when
        ``return_features`` is set. ``gate`` overrides the attention map.
        """
        f_v = self.video(frames)
        f_p = f_cat = f_cat_prime = f_a = None
        if self.attention is not None:
            if heatmap is None:
                heatmap = frames.new_zeros((frames.shape[0], 1) + frames.shape[-2:])
            check_shape(heatmap, (frames.shape[0], 1, None, None), "heatmap")
            f_p = self.player(heatmap)
            f_o, inter = self.attention(f_v, f_p, gate=gate)
            f_cat, f_cat_prime, f_a = inter["F_cat"], inter["F_cat_prime"], inter["F_a"]
        else:
            f_o = f_v
        logits_w = self.head_w(f_o)
        logits_h = self.head_h(f_o)
        logits_e = self.head_e(f_o) if self.head_e is not None else None
        pred = Prediction(
            p_w=self._activate(logits_w),
            p_h=self._activate(logits_h),
            p_e=torch.softmax(logits_e, dim=-1) if logits_e is not None else None,
            logits_w=logits_w,
            logits_h=logits_h,
            logits_e=logits_e,
        )
        if return_features:
            return pred, FeatureBundle(f_v, f_p, f_cat, f_cat_prime, f_a, f_o)
        return pred

    def location_parameters(self):
        return list(self.head_w.parameters()) + list(self.head_h.parameters())


def frames_to_tensor(pixels: np.ndarray) -> torch.Tensor:
    """``(T, H, W, 3)`` or ``(B, T, H, W, 3)`` array -> ``(B, 3, T, H, W)`` float tensor."""
    x = torch.as_tensor(np.asarray(pixels, dtype=np.float32))
    if x.dim() == 4:
        x = x.unsqueeze(0)
    return x.permute(0, 4, 1, 2, 3).contiguous()


def heatmap_to_tensor(grid: np.ndarray) -> torch.Tensor:
    """``(S, S)`` or ``(B, S, S)`` -> ``(B, 1, S, S)``."""
    x = torch.as_tensor(np.asarray(grid, dtype=np.float32))
    if x.dim() == 2:
        x = x.unsqueeze(0)
    return x.unsqueeze(1)
