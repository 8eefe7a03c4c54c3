"""Optimization loop, validation-driven model selection and the metrics log."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from .data import ClipRecord, DatasetSplit, EVENT_CLASSES, load_dataset, sample_frames
from .encoding import build_player_heatmap, build_puck_gt
from .metrics import auc, decode_location, event_prf
from .model import PuckNet, read_checkpoint, save_checkpoint
from .model.network import frames_to_tensor, heatmap_to_tensor
from .objective import MODES, Objective

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "L_w", "L_h", "L_e", "L_multi", "lr", "val_AUC", "val_F1")


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TrainConfig:
    batch_size: int = 15
    lr0: float = 1e-4
    lr_drop_iter: int = 5000
    lr_drop_factor: float = 0.2
    max_iters: int = 10_000
    seed: int = 0
    eval_every: int = 500
    checkpoint_dir: Optional[str] = None
    sampling: str = "random"  # or "constant"
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not (0 < self.lr_drop_factor < 1):
            raise ValueError("lr_drop_factor must be in (0, 1)")
        if self.max_iters < 0 or self.eval_every < 1:
            raise ValueError("max_iters must be >= 0 and eval_every >= 1")
        if self.sampling not in ("random", "constant"):
            raise ValueError(f"sampling must be 'random' or 'constant', got {self.sampling!r}")
        self.adam_betas = tuple(self.adam_betas)

    @classmethod
    def preset(cls, tier: str, **overrides) -> "TrainConfig":
        if tier == "paper":
            return cls(**overrides)
        if tier == "test":
            base = dict(batch_size=4, lr0=3e-3, lr_drop_iter=250, max_iters=500, eval_every=100)
            base.update(overrides)
            return cls(**base)
        raise ValueError(f"unknown tier {tier!r}")


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    return cfg.lr0 if iteration < cfg.lr_drop_iter else cfg.lr0 * cfg.lr_drop_factor


# -- batches ------------------------------------------------------------------


class ClipSource:
    """Model inputs for a set of clips, with per-clip targets cached."""

    def __init__(self, records: Sequence[ClipRecord], model_cfg, cache_eval: bool = True):
        self.records = list(records)
        self.cfg = model_cfg
        self._gt: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}
        self._heat: Dict[str, np.ndarray] = {}
        self._eval_pixels: Dict[str, np.ndarray] = {}
        size = model_cfg.input_size
        self.cache_eval = cache_eval and len(self.records) * 16 * size * size * 3 * 4 <= 512 * 2**20

    def __len__(self):
        return len(self.records)

    def targets(self, rec: ClipRecord):
        if rec.clip_id not in self._gt:
            gt = build_puck_gt(rec.puck, self.cfg.gt_sigma)
            self._gt[rec.clip_id] = (gt.w_gt.astype(np.float32), gt.h_gt.astype(np.float32))
        return self._gt[rec.clip_id]

    def heatmap(self, rec: ClipRecord) -> np.ndarray:
        if rec.clip_id not in self._heat:
            hm = build_player_heatmap(rec.player_boxes, rec.resolution, self.cfg.heatmap_sigma_p, self.cfg.input_size)
            self._heat[rec.clip_id] = hm.grid.astype(np.float32)
        return self._heat[rec.clip_id]

    def pixels(self, rec: ClipRecord, mode: str, rng=None) -> np.ndarray:
        if mode == "eval" and rec.clip_id in self._eval_pixels:
            return self._eval_pixels[rec.clip_id]
        px = sample_frames(rec, mode, rng, size=self.cfg.input_size).pixels
        if mode == "eval" and self.cache_eval:
            self._eval_pixels[rec.clip_id] = px
        return px

    def batch(self, indices: Sequence[int], mode: str, rng=None):
        recs = [self.records[i] for i in indices]
        frames = frames_to_tensor(np.stack([self.pixels(r, mode, rng) for r in recs]))
        heat = heatmap_to_tensor(np.stack([self.heatmap(r) for r in recs]))
        w_gt = torch.as_tensor(np.stack([self.targets(r)[0] for r in recs]))
        h_gt = torch.as_tensor(np.stack([self.targets(r)[1] for r in recs]))
        labels = torch.as_tensor([r.event.index for r in recs], dtype=torch.long)
        return recs, frames, heat, w_gt, h_gt, labels


class EpochSampler:
    """Shuffled passes over the clip indices; batches may wrap across passes."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n, self.rng = n, rng
        self._order: List[int] = []

    def next(self, k: int) -> List[int]:
        out = []
        while len(out) < k:
            if not self._order:
                self._order = list(self.rng.permutation(self.n))
            out.append(int(self._order.pop()))
        return out


# -- prediction ---------------------------------------------------------------


@dataclass
class ClipPrediction:
    clip_id: str
    location: object
    event: Optional[object]
    gt_location: object
    gt_event: object


@torch.no_grad()
def predict(model: PuckNet, source: ClipSource, batch_size: int = 8) -> List[ClipPrediction]:
    was_training = model.training
    model.eval()
    out = []
    try:
        for start in range(0, len(source), batch_size):
            idx = list(range(start, min(len(source), start + batch_size)))
            recs, frames, heat, *_ = source.batch(idx, "eval")
            pred = model(frames, heat)
            for j, rec in enumerate(recs):
                # logits share the argmax with the activations and never saturate
                loc = decode_location(pred.logits_w[j].numpy(), pred.logits_h[j].numpy())
                ev = None
                if pred.logits_e is not None:
                    ev = EVENT_CLASSES[int(torch.argmax(pred.logits_e[j]))]
                out.append(ClipPrediction(rec.clip_id, loc, ev, rec.puck, rec.event))
    finally:
        model.train(was_training)
    return out


def validation_metrics(preds: Sequence[ClipPrediction]) -> Dict[str, float]:
    m = {"val_AUC": auc([p.location for p in preds], [p.gt_location for p in preds])}
    if preds and preds[0].event is not None:
        m["val_F1"] = event_prf([p.event for p in preds], [p.gt_event for p in preds]).macro_f1
    return m


# -- training -----------------------------------------------------------------


@dataclass
class TrainResult:
    best_checkpoint: Optional[Path]
    last_checkpoint: Optional[Path]
    log_path: Optional[Path]
    history: List[dict] = field(default_factory=list)
    best_metric: float = float("-inf")
    iterations: int = 0


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.8g}"


def _freeze_modules(model: PuckNet, mode: str):
    """Modules that receive no loss signal in this mode; kept in eval mode so BN stats stay put."""
    if mode == "localize_only":
        return [model.head_e] if model.head_e is not None else []
    if mode == "event_baseline":
        return [model.head_w, model.head_h]
    return []


def _trainable_parameters(model: PuckNet, mode: str):
    frozen = {id(p) for m in _freeze_modules(model, mode) for p in m.parameters()}
    return [p for p in model.parameters() if id(p) not in frozen]


def _resolve_dataset(dataset) -> Tuple[Dict[str, ClipRecord], DatasetSplit]:
    if isinstance(dataset, (str, Path)):
        return load_dataset(dataset)
    return dataset


def train(
    model: PuckNet,
    dataset,
    cfg: TrainConfig,
    mode: str = "localize_only",
    resume: Optional[Union[str, Path]] = None,
    train_split: str = "train",
    val_split: str = "val",
) -> TrainResult:
    """Train ``model`` in place.

    ``dataset`` is a dataset root or a ``(records_by_id, DatasetSplit)`` pair.
    Checkpoints (``best.ckpt``, ``last.ckpt``) and ``metrics.csv`` go to
    ``cfg.checkpoint_dir`` when set.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode != "localize_only" and model.head_e is None:
        raise ValueError(f"mode {mode!r} needs a model built with multitask=True")
    records, split = _resolve_dataset(dataset)
    train_ids, val_ids = split.ids(train_split), split.ids(val_split)
    if not train_ids or not val_ids:
        raise ValueError(f"dataset needs nonempty {train_split!r} and {val_split!r} splits")

    torch.manual_seed(cfg.seed)
    train_src = ClipSource([records[i] for i in train_ids], model.config)
    val_src = ClipSource([records[i] for i in val_ids], model.config)
    objective = Objective(mode)
    params = _trainable_parameters(model, mode) + list(objective.parameters())
    opt = torch.optim.Adam(params, lr=cfg.lr0, betas=cfg.adam_betas, eps=cfg.adam_eps)

    start_iter = 0
    best_metric = float("-inf")
    if resume is not None:
        payload = read_checkpoint(resume)
        model.load_state_dict(payload["state_dict"])
        extra = payload.get("extra", {})
        if "objective" in extra:
            objective.load_state_dict(extra["objective"])
        if "optimizer" in extra:
            opt.load_state_dict(extra["optimizer"])
        best_metric = float(extra.get("best_metric", best_metric))
        start_iter = int(payload["iteration"])

    ckpt_dir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    log_path = None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        log_path = ckpt_dir / "metrics.csv"
        if resume is None or not log_path.exists():
            with open(log_path, "w") as fh:
                fh.write(",".join(LOG_COLUMNS) + "\n")
        with open(ckpt_dir / "train_config.json", "w") as fh:
            json.dump(
                {"train": asdict(cfg), "model": model.config.to_dict(), "mode": mode,
                 "loss_weights": {"puck": objective.puck_weight, "event": 0.0 if mode == "localize_only" else 1.0}},
                fh,
                indent=2,
            )

    sampler = EpochSampler(len(train_src), np.random.default_rng([cfg.seed, 1]))
    # replay the sampler so a resumed run sees the same batches
    for _ in range(start_iter):
        sampler.next(cfg.batch_size)
    frame_mode = "train" if cfg.sampling == "random" else "eval"
    frozen = _freeze_modules(model, mode)
    result = TrainResult(None, None, log_path, best_metric=best_metric, iterations=start_iter)

    def extra_state(it):
        return {
            "objective": objective.state_dict(),
            "optimizer": opt.state_dict(),
            "best_metric": result.best_metric,
            "mode": mode,
        }

    model.train()
    for m in frozen:
        m.eval()
    for it in range(start_iter, cfg.max_iters):
        lr = lr_at(it, cfg)
        for g in opt.param_groups:
            g["lr"] = lr
        recs, frames, heat, w_gt, h_gt, labels = train_src.batch(sampler.next(cfg.batch_size), frame_mode, np.random.default_rng([cfg.seed, 2, it]))
        pred = model(frames, heat)
        losses = objective(pred, w_gt, h_gt, labels)
        if not torch.isfinite(losses.L_multi):
            ids = ", ".join(r.clip_id for r in recs)
            raise NumericalError(f"non-finite loss at iteration {it} (batch clips: {ids})")
        opt.zero_grad(set_to_none=True)
        losses.L_multi.backward()
        opt.step()

        row = {"iter": it + 1, **losses.as_floats(), "lr": lr}
        done = it + 1
        if done % cfg.eval_every == 0 or done == cfg.max_iters:
            metrics = validation_metrics(predict(model, val_src))
            for m in frozen:
                m.eval()
            row.update(metrics)
            key = "val_AUC" if mode == "localize_only" else "val_F1"
            if metrics[key] > result.best_metric:
                result.best_metric = metrics[key]
                if ckpt_dir is not None:
                    result.best_checkpoint = save_checkpoint(ckpt_dir / "best.ckpt", model, done, extra_state(done))
            log.info("iter %d  L_multi=%.5g  lr=%.2g  %s", done, row["L_multi"], lr, metrics)
        result.history.append(row)
        result.iterations = done
        if log_path is not None:
            with open(log_path, "a") as fh:
                fh.write(",".join(_fmt(row.get(c)) for c in LOG_COLUMNS) + "\n")

    if ckpt_dir is not None:
        result.last_checkpoint = save_checkpoint(ckpt_dir / "last.ckpt", model, result.iterations, extra_state(result.iterations))
        if result.best_checkpoint is None and (ckpt_dir / "best.ckpt").exists():
            result.best_checkpoint = ckpt_dir / "best.ckpt"
    model.eval()
    return result


def read_metrics_log(path: Union[str, Path]) -> List[dict]:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (float(v) if v != "" else None) for k, v in r.items()} for r in rows]
