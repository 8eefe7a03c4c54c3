"""Checkpoint container: named parameter arrays, model config, iteration counter."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

import torch

from .config import ModelConfig
from .network import PuckNet

FORMAT_VERSION = 1


class CheckpointMismatch(ValueError):
    def __init__(self, diff: dict):
        self.diff = diff
        lines = ", ".join(f"{k}: checkpoint={a!r} expected={b!r}" for k, (a, b) in sorted(diff.items()))
        super().__init__(f"checkpoint/config mismatch: {lines}")


def config_diff(a: ModelConfig, b: ModelConfig) -> dict:
    da, db = a.to_dict(), b.to_dict()
    return {k: (da[k], db[k]) for k in da if da[k] != db[k]}


def save_checkpoint(
    path: Union[str, Path],
    model: PuckNet,
    iteration: int = 0,
    extra: Optional[dict] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": FORMAT_VERSION,
        "model_config": model.config.to_dict(),
        "iteration": int(iteration),
        "state_dict": {k: v.detach().cpu().clone() for k, v in model.state_dict().items()},
        "extra": extra or {},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)
    return path


def read_checkpoint(path: Union[str, Path]) -> dict:
    payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    if payload.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {payload.get('format_version')!r} in {path}")
    return payload


def load_checkpoint(path: Union[str, Path], expected: Optional[ModelConfig] = None):
    """Returns ``(model, payload)``; raises :class:`CheckpointMismatch` on config drift."""
    payload = read_checkpoint(path)
    cfg = ModelConfig.from_dict(payload["model_config"])
    if expected is not None:
        diff = config_diff(cfg, expected)
        if diff:
            raise CheckpointMismatch(diff)
    model = PuckNet(cfg)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload
