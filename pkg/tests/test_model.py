import numpy as np
import pytest
import torch

from tapemend.errors import IncompatibleCheckpoint, ShapeError
from tapemend.model import (
    ModelConfig, PatchEmbed3D, PatchMerging, PatchExpand,
    SwinBlock3D, depth_to_space, forward_restore, init_parameters, load_weights,
    relative_position_index_3d, save_weights, shift_attention_mask,
    window_partition_3d, window_reverse_3d,
)


class TestConfig:
    def test_defaults(self):
        cfg = ModelConfig()
        assert cfg.stage_heads() == (3, 6, 12)
        assert cfg.granularity == (128, 128)

    def test_toy_granularity(self, toy_model_config):
        assert toy_model_config.granularity == (32, 32)

    def test_temporal_window_must_divide_t(self):
        with pytest.raises(ShapeError):
            ModelConfig(t=5, window=(2, 4, 4))
        with pytest.raises(ShapeError):
            ModelConfig(t=5, window=(6, 4, 4))

    def test_heads_must_divide_dim(self):
        with pytest.raises(ShapeError):
            ModelConfig(embed_dim=16, depths=(1,), heads=(3,), window=(5, 4, 4))

    def test_json_round_trip(self, toy_model_config):
        doc = toy_model_config.to_json()
        assert ModelConfig.from_json(doc) == toy_model_config
        assert ModelConfig.from_json(doc).hash() == toy_model_config.hash()


class TestPatchEmbed:
    def test_shape_default_dim(self):
        embed = PatchEmbed3D(3, 96)
        out = embed(torch.rand(1, 5, 3, 256, 256))
        assert out.shape == (1, 5, 64, 64, 96)

    def test_shape_small(self):
        embed = PatchEmbed3D(3, 16)
        out = embed(torch.rand(2, 5, 3, 64, 64))
        assert out.shape == (2, 5, 16, 16, 16)

    def test_indivisible_raises(self):
        embed = PatchEmbed3D(3, 16)
        with pytest.raises(ShapeError):
            embed(torch.rand(1, 5, 3, 250, 256))

    def test_temporal_extent_preserved(self):
        embed = PatchEmbed3D(3, 8)
        for t in (1, 3, 7):
            assert embed(torch.rand(1, t, 3, 16, 16)).shape[1] == t


class TestWindows:
    def test_partition_reverse_round_trip(self):
        x = torch.rand(2, 4, 8, 8, 6)
        windows = window_partition_3d(x, (2, 4, 4))
        assert windows.shape == (2 * 2 * 2 * 2, 2 * 4 * 4, 6)
        back = window_reverse_3d(windows, (2, 4, 4), 4, 8, 8)
        assert torch.equal(back, x)

    def test_relative_position_index_bounds(self):
        window = (5, 4, 4)
        index = relative_position_index_3d(window)
        table = (2 * 5 - 1) * (2 * 4 - 1) * (2 * 4 - 1)
        assert index.shape == (80, 80)
        assert index.min() >= 0 and index.max() < table
        # zero offset maps every token to the same table entry
        assert len(torch.unique(torch.diagonal(index))) == 1

    def test_shift_mask_well_formed(self):
        mask = shift_attention_mask((5, 8, 8), (5, 4, 4), (0, 2, 2), torch.device("cpu"))
        assert mask is not None
        # entries are 0 (allowed) or -100 (blocked); every row keeps >= 1 allowed
        values = torch.unique(mask)
        assert all(v in (-100.0, 0.0) for v in values.tolist())
        assert bool((mask == 0).any(dim=-1).all())

    def test_no_shift_no_mask(self):
        assert shift_attention_mask((5, 8, 8), (5, 4, 4), (0, 0, 0),
                                    torch.device("cpu")) is None

    def test_block_preserves_shape_and_finite(self):
        block = SwinBlock3D(dim=16, heads=2, window=(5, 4, 4), shifted=True)
        x = torch.rand(1, 5, 8, 8, 16)
        out = block(x)
        assert out.shape == x.shape
        assert torch.isfinite(out).all()

    def test_block_batch_permutation(self):
        torch.manual_seed(0)
        block = SwinBlock3D(dim=8, heads=2, window=(1, 4, 4), shifted=True)
        x = torch.rand(3, 2, 8, 8, 8)
        out = block(x)
        perm = torch.tensor([2, 0, 1])
        out_perm = block(x[perm])
        assert torch.allclose(out_perm, out[perm], atol=1e-6)

    def test_window_larger_than_grid(self):
        block = SwinBlock3D(dim=8, heads=2, window=(1, 8, 8), shifted=False)
        with pytest.raises(ShapeError):
            block(torch.rand(1, 1, 4, 4, 8))


class TestMergeExpand:
    def test_merge_shape(self):
        merge = PatchMerging(16)
        assert merge(torch.rand(1, 5, 16, 16, 16)).shape == (1, 5, 8, 8, 32)

    def test_merge_minimum_grid(self):
        merge = PatchMerging(4)
        assert merge(torch.rand(1, 5, 2, 2, 4)).shape == (1, 5, 1, 1, 8)

    def test_merge_odd_grid_raises(self):
        merge = PatchMerging(4)
        with pytest.raises(ShapeError):
            merge(torch.rand(1, 5, 3, 4, 4))

    def test_expand_shape(self):
        expand = PatchExpand(32)
        assert expand(torch.rand(1, 5, 8, 8, 32)).shape == (1, 5, 16, 16, 16)

    def test_expand_shape_small(self):
        expand = PatchExpand(6)
        assert expand(torch.rand(1, 5, 8, 8, 6)).shape == (1, 5, 16, 16, 3)

    def test_depth_to_space_index_map(self):
        # on a 1x1 grid, channel block k = c*4 + (dy*2 + dx) lands at (dy, dx)
        for dy in range(2):
            for dx in range(2):
                for c in range(3):
                    x = torch.zeros(1, 1, 1, 1, 12)
                    x[..., c * 4 + dy * 2 + dx] = 1.0
                    out = depth_to_space(x, 2)
                    assert out.shape == (1, 1, 2, 2, 3)
                    expected = torch.zeros(1, 1, 2, 2, 3)
                    expected[0, 0, dy, dx, c] = 1.0
                    assert torch.equal(out, expected)

    def test_depth_to_space_bad_channels(self):
        with pytest.raises(ShapeError):
            depth_to_space(torch.rand(1, 1, 2, 2, 6), 2)


class TestForwardRestore:
    def test_toy_shape_contract(self, toy_model):
        x = torch.rand(1, 5, 3, 64, 64)
        assert forward_restore(toy_model, x).shape == x.shape

    def test_zero_head_is_identity(self, toy_model_config):
        model = init_parameters(toy_model_config, seed=5)
        model.eval()
        x = torch.rand(2, 5, 3, 64, 64)
        with torch.no_grad():
            assert torch.equal(forward_restore(model, x), x)

    def test_full_size_config_window_shape(self):
        # T fixed to 5 with the full-size config
        model = init_parameters(ModelConfig(), seed=0)
        model.eval()
        x = torch.rand(1, 5, 3, 256, 256)
        with torch.no_grad():
            assert forward_restore(model, x).shape == (1, 5, 3, 256, 256)

    def test_wrong_t_raises(self, toy_model):
        with pytest.raises(ShapeError):
            forward_restore(toy_model, torch.rand(1, 4, 3, 64, 64))

    def test_indivisible_spatial_raises(self, toy_model):
        with pytest.raises(ShapeError):
            forward_restore(toy_model, torch.rand(1, 5, 3, 48, 48))

    @pytest.mark.parametrize("config,shape", [
        (ModelConfig(t=5, embed_dim=8, depths=(1,), window=(5, 2, 2)), (1, 5, 3, 8, 8)),
        (ModelConfig(t=5, embed_dim=8, depths=(1, 1), window=(5, 2, 2)), (1, 5, 3, 16, 16)),
        (ModelConfig(t=5, embed_dim=16, depths=(1, 1), window=(5, 4, 4)), (2, 5, 3, 32, 32)),
        (ModelConfig(t=5, embed_dim=8, depths=(2, 1), window=(5, 2, 2)), (1, 5, 3, 32, 32)),
        (ModelConfig(t=2, embed_dim=8, depths=(1, 1), window=(2, 2, 2)), (1, 2, 3, 16, 16)),
        (ModelConfig(t=4, embed_dim=8, depths=(1,), window=(2, 4, 4)), (1, 4, 3, 16, 16)),
        (ModelConfig(t=1, embed_dim=8, depths=(1, 1, 1), window=(1, 2, 2)),
         (1, 1, 3, 32, 32)),
        (ModelConfig(t=3, embed_dim=12, depths=(1, 1), heads=(3, 6), window=(3, 2, 2)),
         (1, 3, 3, 64, 48)),
        (ModelConfig(t=5, embed_dim=8, depths=(1, 1), window=(5, 4, 2)), (1, 5, 3, 32, 16)),
        (ModelConfig(t=6, embed_dim=8, depths=(1,), window=(3, 4, 4)), (1, 6, 3, 16, 16)),
    ])
    def test_shape_preserved_across_configs(self, config, shape):
        model = init_parameters(config, seed=1)
        model.eval()
        x = torch.rand(*shape)
        with torch.no_grad():
            out = forward_restore(model, x)
        assert out.shape == x.shape
        assert torch.isfinite(out).all()

    def test_batch_independence(self, toy_model_config):
        model = init_parameters(toy_model_config, seed=2)
        with torch.no_grad():
            model.head.weight.normal_(0, 0.05)
        model.eval()
        x = torch.rand(3, 5, 3, 32, 32)
        with torch.no_grad():
            batched = forward_restore(model, x)
            singles = torch.cat([forward_restore(model, x[i:i + 1]) for i in range(3)])
        assert torch.allclose(batched, singles, atol=1e-5)

    def test_training_mode_not_clamped(self, toy_model_config):
        model = init_parameters(toy_model_config, seed=3)
        with torch.no_grad():
            model.head.bias.fill_(2.0)  # push residual far positive
        model.train()
        x = torch.rand(1, 5, 3, 32, 32)
        out = forward_restore(model, x)
        assert out.max() > 1.0
        model.eval()
        with torch.no_grad():
            clamped = forward_restore(model, x)
        assert clamped.max() <= 1.0

    def test_gradients_reach_every_parameter(self, toy_model_config):
        model = init_parameters(toy_model_config, seed=4)
        with torch.no_grad():
            model.head.weight.normal_(0, 0.02)  # re-open the residual branch
        model.train()
        x = torch.rand(1, 5, 3, 32, 32)
        forward_restore(model, x).mean().backward()
        for name, p in model.named_parameters():
            assert p.grad is not None, name
            assert float(p.grad.abs().sum()) > 0, f"dead branch: {name}"


class TestCheckpoint:
    def test_init_deterministic(self, toy_model_config):
        a = init_parameters(toy_model_config, seed=7)
        b = init_parameters(toy_model_config, seed=7)
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb and torch.equal(pa, pb)

    def test_different_seeds_differ(self, toy_model_config):
        a = init_parameters(toy_model_config, seed=1)
        b = init_parameters(toy_model_config, seed=2)
        assert any(not torch.equal(pa, pb)
                   for pa, pb in zip(a.parameters(), b.parameters()))

    def test_save_load_round_trip(self, toy_model_config, tmp_path):
        model = init_parameters(toy_model_config, seed=9)
        with torch.no_grad():
            model.head.weight.normal_(0, 0.05)
        save_weights(model, tmp_path / "ckpt.npz")
        loaded = load_weights(tmp_path / "ckpt.npz")
        assert loaded.config == model.config
        for pa, pb in zip(model.parameters(), loaded.parameters()):
            assert torch.equal(pa, pb)
        model.eval(), loaded.eval()
        x = torch.rand(1, 5, 3, 32, 32)
        with torch.no_grad():
            assert torch.equal(forward_restore(model, x), forward_restore(loaded, x))

    def test_tampered_hash_rejected(self, toy_model_config, tmp_path):
        model = init_parameters(toy_model_config, seed=9)
        save_weights(model, tmp_path / "ckpt.npz")
        with np.load(tmp_path / "ckpt.npz") as arrays:
            payload = {k: arrays[k] for k in arrays.files}
        payload["__config_hash__"] = np.frombuffer(b"0" * 64, dtype=np.uint8)
        np.savez(tmp_path / "bad.npz", **payload)
        with pytest.raises(IncompatibleCheckpoint):
            load_weights(tmp_path / "bad.npz")
