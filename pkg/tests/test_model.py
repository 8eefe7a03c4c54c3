import numpy as np
import pytest
import torch

from puckloc.encoding import build_puck_gt
from puckloc.model import (
    CheckpointMismatch,
    ModelConfig,
    PuckNet,
    load_checkpoint,
    save_checkpoint,
)
from puckloc.model.layers import EventHead, LocationHead, PlayerBranch, VideoBranch
from puckloc.objective import Objective
from puckloc.rink import RinkPoint

TEST = ModelConfig.preset("test")


def _inputs(cfg, b=2, seed=0):
    g = torch.Generator().manual_seed(seed)
    frames = torch.rand(b, 3, cfg.n_frames, cfg.input_size, cfg.input_size, generator=g)
    heat = torch.rand(b, 1, cfg.input_size, cfg.input_size, generator=g)
    return frames, heat


def test_video_branch_64px_four_layers():
    cfg = ModelConfig(input_size=64)
    branch = VideoBranch(cfg.widths, cfg.blocks_per_stage, 16, 64).eval()
    with torch.no_grad():
        out = branch(torch.rand(3, 3, 16, 64, 64))
    assert tuple(out.shape) == (3, 256, 4, 8, 8)
    assert cfg.video_feature_shape() == (256, 4, 8, 8)


def test_video_branch_rejects_wrong_shape():
    branch = VideoBranch(TEST.widths, 1, 16, 64)
    with pytest.raises(ValueError, match="expected"):
        branch(torch.rand(1, 3, 8, 64, 64))


@pytest.mark.parametrize("size,out", [(256, 32), (64, 8)])
def test_player_branch_shapes(size, out):
    branch = PlayerBranch(size).eval()
    with torch.no_grad():
        y = branch(torch.rand(2, 1, size, size))
        z1 = branch(torch.zeros(1, 1, size, size))
        z2 = branch(torch.zeros(1, 1, size, size))
    assert tuple(y.shape) == (2, 8, out, out)
    assert torch.equal(z1, z2)
    with pytest.raises(ValueError):
        branch(torch.rand(1, 1, size + 4, size + 4))


def test_location_head_intermediates_default_size():
    head = LocationHead(256, 200, (4, 32, 32)).eval()
    with torch.no_grad():
        logits, (x1, x2) = head(torch.rand(1, 256, 4, 32, 32), return_intermediate=True)
    assert tuple(x1.shape) == (1, 200, 2, 16, 16)
    assert tuple(x2.shape) == (1, 200, 1, 8, 8)
    assert tuple(logits.shape) == (1, 200)


def test_event_head_intermediates_default_size():
    head = EventHead(256, (4, 32, 32)).eval()
    with torch.no_grad():
        logits, (x1, x2) = head(torch.rand(1, 256, 4, 32, 32), return_intermediate=True)
    assert tuple(x1.shape) == (1, 256, 2, 15, 15)
    assert tuple(x2.shape) == (1, 512, 1, 7, 7)
    assert tuple(logits.shape) == (1, 4)


def test_test_tier_forward_shapes_and_ranges():
    model = PuckNet(TEST).eval()
    frames, heat = _inputs(TEST, b=3)
    with torch.no_grad():
        pred, feats = model(frames, heat, return_features=True)
    c, t, h, w = TEST.video_feature_shape()
    shapes = feats.shapes()
    assert shapes["F_v"] == (t, h, w, c)
    assert shapes["F_cat"] == (t, h, w, c + 8)
    assert shapes["F_cat_prime"] == (t, h, w, (c + 8) // 2)
    assert shapes["F_a"] == shapes["F_o"] == (t, h, w, c)
    assert pred.p_w.shape == (3, 200) and pred.p_h.shape == (3, 85) and pred.p_e.shape == (3, 4)
    for p in (pred.p_w, pred.p_h, pred.p_e):
        assert (p > 0).all() and (p < 1).all()
    torch.testing.assert_close(pred.p_e.sum(-1), torch.ones(3), atol=1e-6, rtol=0)


def test_forward_deterministic_in_eval_mode():
    # bitwise: CPU kernels are deterministic with a fixed thread count
    model = PuckNet(TEST).eval()
    frames, heat = _inputs(TEST)
    with torch.no_grad():
        a, b = model(frames, heat), model(frames, heat)
    assert torch.equal(a.p_w, b.p_w) and torch.equal(a.p_h, b.p_h) and torch.equal(a.p_e, b.p_e)


def test_gate_overrides_give_residual_identities():
    model = PuckNet(TEST).eval()
    frames, heat = _inputs(TEST)
    with torch.no_grad():
        _, f0 = model(frames, heat, return_features=True, gate=0.0)
        _, f1 = model(frames, heat, return_features=True, gate=1.0)
    assert torch.equal(f0.F_o, f0.F_v)
    torch.testing.assert_close(f1.F_o, 2 * f1.F_v, atol=1e-6, rtol=0)


def test_zeroed_excitation_weights_give_half_gate():
    # zero conv weight and bias -> F_a = sigmoid(0) = 1/2 -> F_o = 1.5 F_v
    model = PuckNet(TEST).eval()
    with torch.no_grad():
        model.attention.excite.weight.zero_()
        model.attention.excite.bias.zero_()
        _, f = model(*_inputs(TEST), return_features=True)
    assert torch.all(f.F_a == 0.5)
    torch.testing.assert_close(f.F_o, 1.5 * f.F_v, atol=1e-6, rtol=0)


def test_attention_channel_mismatch():
    model = PuckNet(TEST)
    with pytest.raises(ValueError, match="channels"):
        model.attention(torch.rand(1, 5, 2, 4, 4), torch.rand(1, 8, 4, 4))


def test_player_branch_off_ignores_heatmap():
    cfg = ModelConfig.preset("test", use_player_branch=False)
    model = PuckNet(cfg).eval()
    frames, heat = _inputs(cfg)
    with torch.no_grad():
        a = model(frames, heat)
        b = model(frames, torch.zeros_like(heat))
        _, f = model(frames, heat, return_features=True)
    assert torch.equal(a.p_w, b.p_w) and torch.equal(a.p_e, b.p_e)
    assert f.F_p is None and torch.equal(f.F_o, f.F_v)


def test_multitask_off_has_no_event_output():
    model = PuckNet(ModelConfig.preset("test", multitask=False)).eval()
    with torch.no_grad():
        pred = model(*_inputs(TEST, b=1))
    assert pred.p_e is None and model.head_e is None


def test_gradient_reaches_every_parameter():
    model = PuckNet(TEST).train()
    objective = Objective("multitask")
    frames, heat = _inputs(TEST, b=2)
    gts = [build_puck_gt(RinkPoint(40, 20), 30), build_puck_gt(RinkPoint(150, 70), 30)]
    w_gt = torch.tensor(np.stack([g.w_gt for g in gts]), dtype=torch.float32)
    h_gt = torch.tensor(np.stack([g.h_gt for g in gts]), dtype=torch.float32)
    loss = objective(model(frames, heat), w_gt, h_gt, torch.tensor([0, 3]))
    loss.L_multi.backward()
    dead = [n for n, p in model.named_parameters() if p.grad is None or not torch.any(p.grad != 0)]
    assert dead == []
    assert torch.all(objective.weighting.log_sigmas.grad != 0)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(backbone_layers=6)
    with pytest.raises(ValueError):
        ModelConfig(channel_widths=(64, 0, 128, 256))
    assert ModelConfig.from_dict(TEST.to_dict()) == TEST


def test_checkpoint_round_trip_and_mismatch(tmp_path):
    model = PuckNet(TEST).eval()
    path = save_checkpoint(tmp_path / "m.ckpt", model, iteration=7, extra={"note": "x"})
    loaded, payload = load_checkpoint(path, expected=TEST)
    assert payload["iteration"] == 7 and payload["extra"] == {"note": "x"}
    frames, heat = _inputs(TEST, b=1)
    with torch.no_grad():
        assert torch.equal(model(frames, heat).p_w, loaded(frames, heat).p_w)
    other = ModelConfig.preset("test", backbone_layers=3)
    with pytest.raises(CheckpointMismatch) as exc:
        load_checkpoint(path, expected=other)
    assert exc.value.diff == {"backbone_layers": (2, 3)}
