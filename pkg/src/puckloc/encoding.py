"""Target and conditioning encoders.

Puck targets are two 1D Gaussians over one-foot bins (bin ``i`` centered at
``i + 0.5`` ft), normalized to sum to one. Player positions become a 2D
heatmap of unit-peak Gaussians drawn at bounding-box centers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rink import RINK_LENGTH, RINK_WIDTH, RinkPoint

log = logging.getLogger(__name__)

N_W_BINS = int(RINK_LENGTH)
N_H_BINS = int(RINK_WIDTH)


@dataclass(frozen=True)
class GroundTruthPair:
    w_gt: np.ndarray
    h_gt: np.ndarray
    sigma: float


@dataclass(frozen=True)
class PlayerHeatmap:
    grid: np.ndarray
    sigma_p: float


def gaussian_bins(coord: float, n_bins: int, sigma: float, normalize: bool = True) -> np.ndarray:
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    centers = np.arange(n_bins, dtype=np.float64) + 0.5
    g = np.exp(-((centers - coord) ** 2) / (2.0 * sigma**2))
    if normalize:
        g /= g.sum()
    return g


def build_puck_gt(p: RinkPoint, sigma: float = 30.0, normalize: bool = True) -> GroundTruthPair:
    """Gaussian targets for both rink axes.

    Equidistant ties between two bin centers (integer coordinates) keep equal
    values, so ``argmax`` resolves to the lower bin.
    """
    return GroundTruthPair(
        w_gt=gaussian_bins(p.w, N_W_BINS, sigma, normalize),
        h_gt=gaussian_bins(p.h, N_H_BINS, sigma, normalize),
        sigma=float(sigma),
    )


def build_player_heatmap(
    boxes: Sequence[Sequence[float]],
    resolution: tuple[int, int],
    sigma_p: float = 15.0,
    grid_size: int = 256,
) -> PlayerHeatmap:
    """Heatmap on a ``grid_size`` square grid from pixel boxes ``(x, y, bw, bh)``.

    ``resolution`` is the (width, height) of the frame the boxes live in.
    Box centers are mapped to pixel-index coordinates of the grid (pixel ``j``
    covers ``[j, j+1)``), so reflecting boxes about the frame center reflects
    the heatmap exactly.
    """
    if sigma_p <= 0:
        raise ValueError(f"sigma_p must be positive, got {sigma_p}")
    width, height = resolution
    grid = np.zeros((grid_size, grid_size), dtype=np.float64)
    if len(boxes) == 0:
        return PlayerHeatmap(grid=grid, sigma_p=float(sigma_p))

    idx = np.arange(grid_size, dtype=np.float64)
    for box in boxes:
        x, y, bw, bh = (float(v) for v in box)
        cx, cy = x + bw / 2.0, y + bh / 2.0
        if not (0.0 <= cx <= width and 0.0 <= cy <= height):
            log.warning("player box center (%.1f, %.1f) outside %dx%d frame; clamping", cx, cy, width, height)
            cx = min(max(cx, 0.0), float(width))
            cy = min(max(cy, 0.0), float(height))
        gx = cx * grid_size / width - 0.5
        gy = cy * grid_size / height - 0.5
        # separable Gaussian: outer product of the two 1D profiles
        gx_prof = np.exp(-((idx - gx) ** 2) / (2.0 * sigma_p**2))
        gy_prof = np.exp(-((idx - gy) ** 2) / (2.0 * sigma_p**2))
        np.maximum(grid, np.outer(gy_prof, gx_prof), out=grid)
    return PlayerHeatmap(grid=grid, sigma_p=float(sigma_p))
