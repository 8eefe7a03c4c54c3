"""Network components.

All tensors are channels-first: video features are ``(B, C, T, H, W)``,
heatmaps ``(B, 1, H, W)``.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from .config import LAYER_STRIDES, PLAYER_CHANNELS


def check_shape(x: torch.Tensor, expected: Sequence[Optional[int]], what: str):
    actual = tuple(x.shape)
    ok = len(actual) == len(expected) and all(e is None or e == a for e, a in zip(expected, actual))
    if not ok:
        exp = "x".join("b" if e is None else str(e) for e in expected)
        raise ValueError(f"{what}: expected shape {exp}, got {'x'.join(map(str, actual))}")


# -- video branch -------------------------------------------------------------


def _mid_channels(c_in: int, c_out: int) -> int:
    # matches the parameter count of a full 3x3x3 convolution
    return max(1, (c_in * c_out * 27) // (c_in * 9 + 3 * c_out))


class Conv2Plus1D(nn.Sequential):
    """Spatial ``1x3x3`` conv, BN, ReLU, then temporal ``3x1x1`` conv."""

    def __init__(self, c_in: int, c_out: int, stride: Tuple[int, int] = (1, 1)):
        st, ss = stride
        mid = _mid_channels(c_in, c_out)
        super().__init__(
            nn.Conv3d(c_in, mid, (1, 3, 3), stride=(1, ss, ss), padding=(0, 1, 1), bias=False),
            nn.BatchNorm3d(mid),
            nn.ReLU(inplace=True),
            nn.Conv3d(mid, c_out, (3, 1, 1), stride=(st, 1, 1), padding=(1, 0, 0), bias=False),
        )


class R2Plus1DBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, stride: Tuple[int, int] = (1, 1)):
        super().__init__()
        self.conv1 = nn.Sequential(Conv2Plus1D(c_in, c_out, stride), nn.BatchNorm3d(c_out), nn.ReLU(inplace=True))
        self.conv2 = nn.Sequential(Conv2Plus1D(c_out, c_out), nn.BatchNorm3d(c_out))
        self.downsample = None
        if c_in != c_out or stride != (1, 1):
            st, ss = stride
            self.downsample = nn.Sequential(
                nn.Conv3d(c_in, c_out, 1, stride=(st, ss, ss), bias=False), nn.BatchNorm3d(c_out)
            )

    def forward(self, x):
        residual = x if self.downsample is None else self.downsample(x)
        return F.relu(self.conv2(self.conv1(x)) + residual)


class R2Plus1DStem(nn.Sequential):
    def __init__(self, c_out: int, stride: Tuple[int, int]):
        st, ss = stride
        mid = max(8, (c_out * 45) // 64)
        super().__init__(
            nn.Conv3d(3, mid, (1, 7, 7), stride=(1, ss, ss), padding=(0, 3, 3), bias=False),
            nn.BatchNorm3d(mid),
            nn.ReLU(inplace=True),
            nn.Conv3d(mid, c_out, (3, 1, 1), stride=(st, 1, 1), padding=(1, 0, 0), bias=False),
            nn.BatchNorm3d(c_out),
            nn.ReLU(inplace=True),
        )


class VideoBranch(nn.Module):
    """R(2+1)D backbone truncated after ``len(widths)`` layers (stem counts as one)."""

    def __init__(self, widths: Sequence[int], blocks_per_stage: int = 2, n_frames: int = 16, input_size: int = 256):
        super().__init__()
        self.n_frames, self.input_size = n_frames, input_size
        layers = [R2Plus1DStem(widths[0], LAYER_STRIDES[0])]
        for i in range(1, len(widths)):
            blocks = [R2Plus1DBlock(widths[i - 1], widths[i], LAYER_STRIDES[i])]
            blocks += [R2Plus1DBlock(widths[i], widths[i]) for _ in range(blocks_per_stage - 1)]
            layers.append(nn.Sequential(*blocks))
        self.layers = nn.Sequential(*layers)

    def forward(self, frames):
        check_shape(frames, (None, 3, self.n_frames, self.input_size, self.input_size), "video branch input")
        return self.layers(frames)


# -- player branch ------------------------------------------------------------


class _ResidualConv2d(nn.Module):
    def __init__(self, c_in, c_out, k, s, p):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, k, stride=s, padding=p, bias=False)
        self.bn = nn.BatchNorm2d(c_out)
        self.skip = nn.Conv2d(c_in, c_out, 1, stride=s, bias=False)

    def forward(self, x):
        y = self.bn(self.conv(x))
        skip = self.skip(x)[..., : y.shape[-2], : y.shape[-1]]
        return F.relu(y + skip)


class PlayerBranch(nn.Module):
    """Three strided conv layers, 1 -> 2 -> 4 -> 8 channels, spatial /8."""

    def __init__(self, input_size: int = 256):
        super().__init__()
        self.input_size = input_size
        self.layers = nn.Sequential(
            _ResidualConv2d(1, 2, 3, 2, 1),
            _ResidualConv2d(2, 4, 2, 2, 0),
            _ResidualConv2d(4, PLAYER_CHANNELS, 2, 2, 0),
        )

    def forward(self, heatmap):
        check_shape(heatmap, (None, 1, self.input_size, self.input_size), "player branch input")
        return self.layers(heatmap)


# -- attention ----------------------------------------------------------------


class AttentionFusion(nn.Module):
    """Squeeze-excitation style gate conditioned on player features.

    ``F_o = F_a * F_v + F_v`` where ``F_a = sigmoid(conv1x1(relu(conv3x3(F_cat))))``.
    """

    def __init__(self, video_channels: int, player_channels: int = PLAYER_CHANNELS):
        super().__init__()
        self.video_channels, self.player_channels = video_channels, player_channels
        c_cat = video_channels + player_channels
        self.squeeze = nn.Conv3d(c_cat, c_cat // 2, (1, 3, 3), padding=(0, 1, 1))
        self.excite = nn.Conv3d(c_cat // 2, video_channels, 1)

    def forward(self, f_v, f_p, gate: Optional[object] = None):
        """Returns ``(F_o, intermediates)``; ``gate`` replaces ``F_a`` when given."""
        if f_v.shape[1] != self.video_channels or f_p.shape[1] != self.player_channels:
            raise ValueError(
                f"attention expects {self.video_channels} video and {self.player_channels} player channels, "
                f"got {f_v.shape[1]} and {f_p.shape[1]}"
            )
        t, h, w = f_v.shape[2:]
        if f_p.shape[-2:] != (h, w):
            f_p = F.interpolate(f_p, size=(h, w), mode="nearest") if f_p.shape[-1] < w else F.adaptive_avg_pool2d(f_p, (h, w))
        f_cat = torch.cat([f_v, f_p.unsqueeze(2).expand(-1, -1, t, -1, -1)], dim=1)
        f_cat_prime = self.squeeze(f_cat)
        f_a = torch.sigmoid(self.excite(F.relu(f_cat_prime)))
        if gate is not None:
            f_a = torch.as_tensor(gate, dtype=f_v.dtype, device=f_v.device).expand_as(f_v)
        f_o = f_a * f_v + f_v
        return f_o, {"F_cat": f_cat, "F_cat_prime": f_cat_prime, "F_a": f_a}


# -- heads --------------------------------------------------------------------


def _fit(kernel: Sequence[int], stride: Sequence[int], size: Sequence[int]):
    """Shrink kernel/stride on axes too small for them."""
    k = tuple(min(kk, ss) for kk, ss in zip(kernel, size))
    s = tuple(st if ss >= kk else 1 for st, kk, ss in zip(stride, kernel, size))
    return k, s


def _conv_out(size, k, s):
    return tuple((n - kk) // ss + 1 for n, kk, ss in zip(size, k, s))


class RegBlock(nn.Module):
    """3D conv (k=2, s=2, p=0) + BN + ReLU with a strided 1x1x1 residual skip."""

    def __init__(self, c_in: int, c_out: int, in_size: Tuple[int, int, int]):
        super().__init__()
        k, s = _fit((2, 2, 2), (2, 2, 2), in_size)
        self.conv = nn.Conv3d(c_in, c_out, k, stride=s, bias=False)
        self.bn = nn.BatchNorm3d(c_out)
        self.skip = nn.Conv3d(c_in, c_out, 1, stride=s, bias=False)
        self.out_size = _conv_out(in_size, k, s)

    def forward(self, x):
        y = self.bn(self.conv(x))
        t, h, w = y.shape[2:]
        return F.relu(y + self.skip(x)[:, :, :t, :h, :w])


class LocationHead(nn.Module):
    """Two RegBlocks then global average pooling; returns per-bin logits."""

    def __init__(self, c_in: int, n_bins: int, in_size: Tuple[int, int, int]):
        super().__init__()
        self.block1 = RegBlock(c_in, n_bins, in_size)
        self.block2 = RegBlock(n_bins, n_bins, self.block1.out_size)

    def forward(self, f_o, return_intermediate: bool = False):
        x1 = self.block1(f_o)
        x2 = self.block2(x1)
        logits = x2.mean(dim=(2, 3, 4))
        if return_intermediate:
            return logits, (x1, x2)
        return logits


class EventHead(nn.Module):
    """Two ``2x3x3`` stride-2 convs (C -> C -> 2C), average pool, linear to 4 logits."""

    def __init__(self, c_in: int, in_size: Tuple[int, int, int], n_classes: int = 4):
        super().__init__()
        k1, s1 = _fit((2, 3, 3), (2, 2, 2), in_size)
        size1 = _conv_out(in_size, k1, s1)
        k2, s2 = _fit((2, 3, 3), (2, 2, 2), size1)
        self.conv1 = nn.Conv3d(c_in, c_in, k1, stride=s1, bias=False)
        self.bn1 = nn.BatchNorm3d(c_in)
        self.conv2 = nn.Conv3d(c_in, 2 * c_in, k2, stride=s2)
        self.fc = nn.Linear(2 * c_in, n_classes)
        self.sizes = (size1, _conv_out(size1, k2, s2))

    def forward(self, f_o, return_intermediate: bool = False):
        x1 = F.relu(self.bn1(self.conv1(f_o)))
        x2 = F.relu(self.conv2(x1))
        logits = self.fc(F.adaptive_avg_pool3d(x2, 1).flatten(1))
        if return_intermediate:
            return logits, (x1, x2)
        return logits
