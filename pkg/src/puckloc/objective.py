"""Localization, event and uncertainty-weighted multi-task losses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

LOG_CLIP = 1e-12

MODES = ("localize_only", "multitask", "event_baseline")


@dataclass
class LossBreakdown:
    L_w: torch.Tensor
    L_h: torch.Tensor
    L_puck: torch.Tensor
    L_e: Optional[torch.Tensor]
    L_multi: torch.Tensor
    log_sigmas: Optional[torch.Tensor] = None

    def as_floats(self) -> dict:
        out = {}
        for k in ("L_w", "L_h", "L_puck", "L_e", "L_multi"):
            v = getattr(self, k)
            out[k] = float("nan") if v is None else float(v.detach())
        return out


def axis_loss(p: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """``-(1/n) sum_i gt_i log p_i`` averaged over the batch; ``n`` is the bin count."""
    if p.shape != gt.shape:
        raise ValueError(f"prediction shape {tuple(p.shape)} does not match target {tuple(gt.shape)}")
    n = p.shape[-1]
    per_sample = -(gt * torch.log(p.clamp_min(LOG_CLIP))).sum(-1) / n
    return per_sample.mean()


def puck_loss(p_w, p_h, w_gt, h_gt):
    """Returns ``(L_w, L_h, L_puck)`` with ``L_puck = L_w + L_h``."""
    l_w = axis_loss(p_w, w_gt)
    l_h = axis_loss(p_h, h_gt)
    return l_w, l_h, l_w + l_h


def event_loss(p_e: torch.Tensor, label: torch.Tensor) -> torch.Tensor:
    """``-log p_e[label]`` averaged over the batch."""
    if p_e.dim() == 1:
        p_e, label = p_e.unsqueeze(0), torch.as_tensor(label).reshape(1)
    label = torch.as_tensor(label, device=p_e.device, dtype=torch.long)
    if p_e.shape[0] != label.shape[0]:
        raise ValueError(f"{p_e.shape[0]} predictions for {label.shape[0]} labels")
    picked = p_e.gather(1, label[:, None]).squeeze(1)
    return -torch.log(picked.clamp_min(LOG_CLIP)).mean()


def event_loss_from_logits(logits_e: torch.Tensor, label: torch.Tensor) -> torch.Tensor:
    # same value as event_loss(softmax(logits)), stable for saturated logits
    return nn.functional.cross_entropy(logits_e, torch.as_tensor(label, dtype=torch.long, device=logits_e.device))


def multitask_loss(l_w, l_h, l_e, log_sigmas: torch.Tensor) -> torch.Tensor:
    """``sum_i L_i / sigma_i^2 + log sigma_i`` with ``sigma_i = exp(s_i)``."""
    losses = torch.stack([torch.as_tensor(l_w), torch.as_tensor(l_h), torch.as_tensor(l_e)]).to(log_sigmas)
    return (losses * torch.exp(-2.0 * log_sigmas)).sum() + log_sigmas.sum()


class UncertaintyWeighting(nn.Module):
    """Learnable ``s_i = log sigma_i`` for the width, height and event losses."""

    def __init__(self):
        super().__init__()
        self.log_sigmas = nn.Parameter(torch.zeros(3))

    def forward(self, l_w, l_h, l_e):
        return multitask_loss(l_w, l_h, l_e, self.log_sigmas)


class Objective(nn.Module):
    """Total training loss for one of the three training modes.

    ``localize_only`` minimizes ``L_puck``; ``multitask`` the uncertainty-weighted
    sum; ``event_baseline`` gives the puck terms zero weight and minimizes ``L_e``.
    """

    def __init__(self, mode: str = "localize_only"):
        super().__init__()
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.mode = mode
        self.weighting = UncertaintyWeighting() if mode == "multitask" else None

    @property
    def puck_weight(self) -> float:
        return 0.0 if self.mode == "event_baseline" else 1.0

    def forward(self, pred, w_gt, h_gt, labels=None) -> LossBreakdown:
        l_w, l_h, l_puck = puck_loss(pred.p_w, pred.p_h, w_gt, h_gt)
        l_e = None
        if self.mode != "localize_only":
            if pred.logits_e is None:
                raise ValueError(f"mode {self.mode!r} requires a model with an event head")
            l_e = event_loss_from_logits(pred.logits_e, labels)
        if self.mode == "localize_only":
            total = l_puck
        elif self.mode == "multitask":
            total = self.weighting(l_w, l_h, l_e)
        else:
            total = l_e
        return LossBreakdown(
            L_w=l_w,
            L_h=l_h,
            L_puck=l_puck,
            L_e=l_e,
            L_multi=total,
            log_sigmas=None if self.weighting is None else self.weighting.log_sigmas,
        )
