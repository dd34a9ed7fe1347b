"""Network configuration, fusion blocks, forward heads, and checkpoints."""

import numpy as np
import pytest

from eanet.autodiff import Adam, Tensor, linear
from eanet.errors import ConfigError, FormatError, ShapeError
from eanet.hand import default_template
from eanet.network import (
    CA_VARIANTS,
    EANet,
    ModelConfig,
    baseline_param_count,
    block_forward,
    block_param_count,
    fusion_forward,
    init_block,
    init_fusion,
    load_checkpoint,
    load_model,
    matched_hidden,
    save_checkpoint,
)

from conftest import finite_difference, relative_error


def desk_config(**kw):
    return ModelConfig(**kw)


def make_targets(rng, flags=(1.0, 1.0), cfg=None):
    cfg = cfg or desk_config()
    g = cfg.grid_size
    out = {"flags": np.array(flags), "rel": rng.normal(size=3) * 0.05}
    for hand in ("left", "right"):
        out[hand] = {
            "theta": rng.normal(size=48) * 0.3,
            "beta": rng.uniform(-1, 1, size=10),
            "joints25": np.stack(
                [
                    rng.uniform(0, g - 1, size=21),
                    rng.uniform(0, g - 1, size=21),
                    rng.uniform(0, cfg.depth_bins - 1, size=21),
                ],
                axis=1,
            ),
            "verts_rel": rng.normal(size=(64, 3)) * 0.05,
        }
    return out


class TestConfig:
    def test_desk_defaults(self):
        cfg = desk_config()
        assert cfg.grid_size == 4
        assert cfg.hand_channels == 32
        assert cfg.fused_channels == 40
        assert cfg.token_count == 33

    def test_light_halves_hand_channels(self):
        assert desk_config(light=True).hand_channels == 16

    def test_full_scale_numbers(self):
        cfg = ModelConfig(
            image_size=256,
            encoder_channels=(64, 256, 1024, 2048),
            encoder_strides=(4, 2, 2, 2),
        )
        assert cfg.grid_size == 8
        assert cfg.hand_channels == 512
        assert cfg.fused_channels == 640
        assert cfg.token_count == 129

    def test_rejects_bad_block_kind(self):
        with pytest.raises(ConfigError):
            desk_config(block_kind="mlp_only")

    def test_rejects_bad_ca_variant(self):
        with pytest.raises(ConfigError):
            desk_config(ca_variant="ts_feats")

    def test_rejects_indivisible_image(self):
        with pytest.raises(ConfigError):
            desk_config(image_size=60)

    def test_rejects_channel_width_not_divisible(self):
        with pytest.raises(ConfigError):
            desk_config(encoder_channels=(16, 32, 100))

    def test_dict_round_trip(self):
        cfg = desk_config(light=True, ca_variant="ts_tj", lambda_vert=3.5)
        import json

        restored = ModelConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert restored == cfg

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ConfigError):
            ModelConfig.from_dict({"image_sizes": 64})


class TestFusionStage:
    @pytest.fixture()
    def stage(self, rng):
        params = {}
        init_fusion(params, "f", 32, 128, rng)
        rows_a = Tensor(rng.normal(size=(16, 32)))
        rows_b = Tensor(rng.normal(size=(16, 32)))
        return params, rows_a, rows_b

    @pytest.mark.parametrize("variant", CA_VARIANTS)
    def test_output_rows_match_grid_cells(self, stage, variant):
        params, rows_a, rows_b = stage
        fused, diag = fusion_forward(params, "f", rows_a, rows_b, variant)
        assert fused.shape == (16, 32)
        assert diag["sim_left"].shape == (16, 32)
        assert diag["sim_right"].shape == (16, 32)
        assert diag["join"].shape == (16, 32)

    def test_none_variant_is_the_join_route(self, stage):
        params, rows_a, rows_b = stage
        fused, diag = fusion_forward(params, "f", rows_a, rows_b, "none")
        assert np.array_equal(fused.data, diag["join"].data)
        joined = linear(
            np.concatenate([rows_a.data, rows_b.data], axis=1),
            params["f.join.w"], params["f.join.b"],
        )
        assert np.array_equal(fused.data, joined.data)

    def test_token_sequence_row_law(self, rng):
        # 8x8 grid: 64 rows per hand, 129-row concatenated sequence
        params = {}
        init_fusion(params, "f", 32, 64, rng)
        rows = Tensor(rng.normal(size=(64, 32)))
        _, diag = fusion_forward(params, "f", rows, rows, "tj_ts")
        assert diag["sa_attn"].shape == (129, 129)

    def test_query_route_sets_attention_rows(self, stage):
        params, rows_a, rows_b = stage
        _, d1 = fusion_forward(params, "f", rows_a, rows_b, "tj_ts")
        assert d1["ca_attn"].shape == (16, 33)  # queries from join, keys from sequence
        _, d2 = fusion_forward(params, "f", rows_a, rows_b, "ts_tj")
        assert d2["ca_attn"].shape == (33, 16)
        _, d3 = fusion_forward(params, "f", rows_a, rows_b, "tj_feats")
        assert d3["ca_attn"].shape == (16, 32)

    @pytest.mark.parametrize("variant", CA_VARIANTS)
    def test_gradients_reach_exactly_the_routed_weights(self, stage, variant):
        params, rows_a, rows_b = stage
        fused, _ = fusion_forward(params, "f", rows_a, rows_b, variant)
        fused.sum().backward()
        alive = {n for n, t in params.items() if t.grad is not None}
        # a route's weights only learn when some cross-attention side (or the
        # output itself) reads that route; cross attention unless disabled
        uses_sequence = variant in ("tj_ts", "ts_ts", "ts_tj")
        expected = set()
        if variant != "ts_ts":
            expected |= {n for n in params if ".join." in n}
        if uses_sequence:
            expected |= {n for n in params if ".sa." in n or n.endswith(".cls")}
        if variant != "none":
            expected |= {n for n in params if ".ca." in n}
        assert alive == expected


class TestBudgetMatching:
    def count(self, params, prefix):
        return sum(t.data.size for n, t in params.items() if n.startswith(prefix))

    def test_analytic_count_matches_initialized_default_block(self, rng):
        cfg = desk_config()
        params = {}
        init_block(params, "block", cfg, rng)
        assert self.count(params, "block") == block_param_count(32, 4)

    @pytest.mark.parametrize("kind", ["sa_only", "ca_only"])
    def test_baselines_land_within_ten_percent(self, rng, kind):
        cfg = desk_config(block_kind=kind)
        params = {}
        init_block(params, "block", cfg, rng)
        actual = self.count(params, "block")
        target = block_param_count(32, 4)
        assert actual == baseline_param_count(32, matched_hidden(32, 4))
        assert abs(actual - target) / target < 0.10

    def test_budget_match_holds_across_widths(self):
        for c in (16, 32, 64, 512):
            target = block_param_count(c, 4)
            got = baseline_param_count(c, matched_hidden(c, 4))
            assert abs(got - target) / target < 0.10


class TestBlockForward:
    def test_default_block_composes_from_fusion_stages(self, rng):
        cfg = desk_config()
        params = {}
        init_block(params, "block", cfg, rng)
        f_l = Tensor(rng.normal(size=(4, 4, 32)))
        f_r = Tensor(rng.normal(size=(4, 4, 32)))
        out_l, out_r, _ = block_forward(params, "block", f_l, f_r, cfg)
        assert out_l.shape == (4, 4, 40)

        # hand-composed reference: extract, adapt each hand, reduce, append
        rows_l = f_l.data.reshape(16, 32)
        rows_r = f_r.data.reshape(16, 32)
        ex, _ = fusion_forward(params, "block.extract", Tensor(rows_l), Tensor(rows_r), "tj_ts")
        al, _ = fusion_forward(params, "block.adapt_left", Tensor(rows_l), ex, "tj_ts")
        ar, _ = fusion_forward(params, "block.adapt_right", Tensor(rows_r), ex, "tj_ts")
        red_l = linear(al, params["block.reduce.w"], params["block.reduce.b"])
        expect_l = np.concatenate([rows_l, red_l.data], axis=1).reshape(4, 4, 40)
        red_r = linear(ar, params["block.reduce.w"], params["block.reduce.b"])
        expect_r = np.concatenate([rows_r, red_r.data], axis=1).reshape(4, 4, 40)
        assert np.array_equal(out_l.data, expect_l)
        assert np.array_equal(out_r.data, expect_r)

    def test_zero_adaptation_stages_reduce_extraction_directly(self, rng):
        cfg = desk_config(adaptation_stages=0)
        params = {}
        init_block(params, "block", cfg, rng)
        f_l = Tensor(rng.normal(size=(4, 4, 32)))
        f_r = Tensor(rng.normal(size=(4, 4, 32)))
        out_l, out_r, _ = block_forward(params, "block", f_l, f_r, cfg)
        ex, _ = fusion_forward(
            params, "block.extract",
            Tensor(f_l.data.reshape(16, 32)), Tensor(f_r.data.reshape(16, 32)), "tj_ts",
        )
        red = linear(ex, params["block.reduce.w"], params["block.reduce.b"])
        expect_l = np.concatenate([f_l.data.reshape(16, 32), red.data], axis=1).reshape(4, 4, 40)
        assert np.array_equal(out_l.data, expect_l)
        # both hands share the extracted tokens, so reduced tails agree
        assert np.array_equal(out_l.data[..., 32:], out_r.data[..., 32:])

    @pytest.mark.parametrize("kind", ["fuseformer", "sa_only", "ca_only"])
    def test_every_kind_keeps_the_output_contract(self, rng, kind):
        cfg = desk_config(block_kind=kind)
        params = {}
        init_block(params, "block", cfg, rng)
        f_l = Tensor(rng.normal(size=(4, 4, 32)))
        f_r = Tensor(rng.normal(size=(4, 4, 32)))
        out_l, out_r, diag = block_forward(params, "block", f_l, f_r, cfg)
        assert out_l.shape == out_r.shape == (4, 4, 40)
        assert np.array_equal(out_l.data[..., :32], f_l.data)  # raw rows pass through
        assert diag["raw_left"].shape == (16, 32)
        (out_l.sum() + out_r.sum()).backward()
        assert all(t.grad is not None for n, t in params.items() if n.startswith("block"))

    def test_channel_append_law_across_widths(self, rng):
        for c, grid in ((32, 4), (64, 2)):
            cfg = desk_config(encoder_channels=(16, 32, 4 * c), image_size=grid * 16)
            params = {}
            init_block(params, "b", cfg, rng)
            f = Tensor(rng.normal(size=(grid, grid, c)))
            out_l, _, _ = block_forward(params, "b", f, f, cfg)
            assert out_l.shape == (grid, grid, c + c // 4)


@pytest.fixture(scope="module")
def model():
    return EANet(desk_config(diagnostics=True), seed=3)


@pytest.fixture(scope="module")
def image():
    return np.random.default_rng(11).uniform(0, 1, size=(64, 64, 3))


class TestModelForward:
    def test_output_shapes(self, model, image):
        out = model.forward(image)
        for branch in (out.left, out.right):
            assert branch.theta.shape == (48,)
            assert branch.beta.shape == (10,)
            assert branch.coords.shape == (21, 3)
            assert branch.joint_feats.shape == (21, 40)
            assert branch.fused_map.shape == (4, 4, 40)
        assert out.rel.shape == (3,)

    def test_coords_stay_inside_the_grid_box(self, model, image):
        out = model.forward(image)
        for branch in (out.left, out.right):
            xy = branch.coords.data[:, :2]
            z = branch.coords.data[:, 2]
            assert (xy >= 0).all() and (xy <= 3).all()
            assert (z >= 0).all() and (z <= 7).all()

    def test_diagnostics_toggle(self, model, image):
        assert model.forward(image).tokens is not None
        quiet = EANet(desk_config(), seed=3)
        assert quiet.forward(image).tokens is None

    def test_token_diagnostics_shapes(self, model, image):
        tokens = model.forward(image).tokens
        for key in ("raw_left", "raw_right", "sim_left", "sim_right", "join", "fused"):
            assert tokens[key].shape == (16, 32)

    def test_same_seed_same_params_same_outputs(self, image):
        a = EANet(desk_config(), seed=7)
        b = EANet(desk_config(), seed=7)
        assert sorted(a.params) == sorted(b.params)
        for name in a.params:
            assert np.array_equal(a.params[name].data, b.params[name].data)
        out_a = a.forward(image)
        out_b = b.forward(image)
        assert np.array_equal(out_a.left.theta.data, out_b.left.theta.data)
        assert np.array_equal(out_a.rel.data, out_b.rel.data)

    def test_zero_weights_degrade_to_neutral_outputs(self, image):
        model = EANet(desk_config(), seed=0)
        model.load_params({n: np.zeros(t.shape) for n, t in model.params.items()})
        out = model.forward(image)
        for branch in (out.left, out.right):
            assert np.array_equal(branch.theta.data, np.zeros(48))
            assert np.array_equal(branch.beta.data, np.zeros(10))
            # uniform heatmaps put every joint at the box center
            np.testing.assert_allclose(branch.coords.data[:, :2], 1.5, atol=1e-12)
            np.testing.assert_allclose(branch.coords.data[:, 2], 3.5, atol=1e-12)
        assert np.array_equal(out.rel.data, np.zeros(3))

    def test_rejects_wrong_image_shape(self, model):
        with pytest.raises(ShapeError):
            model.forward(np.zeros((32, 32, 3)))

    def test_light_mode_shrinks_everything(self, image):
        model = EANet(desk_config(light=True), seed=0)
        out = model.forward(image)
        assert out.left.fused_map.shape == (4, 4, 20)
        assert model.param_count() < EANet(desk_config(), seed=0).param_count()


class TestLoss:
    def test_two_hand_loss_has_all_parts(self, rng):
        model = EANet(desk_config(), seed=1)
        out = model.forward(np.random.default_rng(2).uniform(size=(64, 64, 3)))
        total, parts = model.compute_loss(out, make_targets(rng), default_template())
        assert total.item() > 0
        for key in ("pose_left", "shape_left", "joint_left", "vert_left",
                    "pose_right", "shape_right", "joint_right", "vert_right", "rel", "total"):
            assert key in parts
        assert total.item() == pytest.approx(sum(v for k, v in parts.items() if k != "total"))

    def test_single_hand_sample_skips_missing_terms(self, rng):
        model = EANet(desk_config(), seed=1)
        out = model.forward(np.random.default_rng(2).uniform(size=(64, 64, 3)))
        total, parts = model.compute_loss(out, make_targets(rng, flags=(1.0, 0.0)), default_template())
        assert "pose_right" not in parts and "rel" not in parts
        assert "pose_left" in parts and total.item() > 0

    def test_no_hands_is_an_error(self, rng):
        model = EANet(desk_config(), seed=1)
        out = model.forward(np.random.default_rng(2).uniform(size=(64, 64, 3)))
        with pytest.raises(ShapeError):
            model.compute_loss(out, make_targets(rng, flags=(0.0, 0.0)), default_template())

    def test_backward_reaches_every_parameter(self, rng):
        model = EANet(desk_config(), seed=1)
        out = model.forward(np.random.default_rng(2).uniform(size=(64, 64, 3)))
        total, _ = model.compute_loss(out, make_targets(rng), default_template())
        total.backward()
        dead = [n for n, t in model.params.items() if t.grad is None]
        assert dead == []

    def test_end_to_end_gradient_probe(self, rng):
        model = EANet(desk_config(), seed=5)
        image = np.random.default_rng(6).uniform(size=(64, 64, 3))
        targets = make_targets(rng)
        template = default_template()

        def loss_value():
            total, _ = model.compute_loss(model.forward(image), targets, template)
            return total.item()

        model.zero_grads()
        total, _ = model.compute_loss(model.forward(image), targets, template)
        total.backward()

        # one weight per depth level, each with a gradient large enough for
        # finite differences to resolve against the loss's own ulp
        probes = ["encoder.0.w", "block.adapt_right.ca.v.w", "heat.left.w", "pose.right.out.w", "rel.w"]
        worst = 0.0
        for name in probes:
            t = model.params[name]
            # probe the strongest coordinate; weak ones drown in fd roundoff
            coord = np.unravel_index(int(np.argmax(np.abs(t.grad))), t.shape)
            step = 1e-5
            orig = t.data[coord]
            t.data[coord] = orig + step
            hi = loss_value()
            t.data[coord] = orig - step
            lo = loss_value()
            t.data[coord] = orig
            numeric = (hi - lo) / (2 * step)
            worst = max(worst, relative_error(numeric, t.grad[coord]))
        assert worst < 1e-5


class TestCheckpoint:
    def test_round_trip_is_bitwise(self, tmp_path, rng):
        model = EANet(desk_config(ca_variant="tj_tj", lambda_rel=2.0), seed=9)
        opt = Adam(model.params, lr=3e-4)
        image = np.random.default_rng(1).uniform(size=(64, 64, 3))
        total, _ = model.compute_loss(model.forward(image), make_targets(rng), default_template())
        total.backward()
        opt.step()

        path = tmp_path / "ckpt.zip"
        save_checkpoint(path, model, opt)
        config, params, optim, step = load_checkpoint(path)
        assert config == model.config
        assert step == 1
        assert sorted(params) == sorted(model.params)
        for name in params:
            assert np.array_equal(params[name], model.params[name].data)
        state = opt.state_arrays()
        assert sorted(optim) == sorted(state)
        for name in optim:
            assert np.array_equal(optim[name], state[name])

    def test_load_model_reproduces_forward(self, tmp_path):
        model = EANet(desk_config(), seed=4)
        path = tmp_path / "m.zip"
        save_checkpoint(path, model)
        restored = load_model(path)
        image = np.random.default_rng(0).uniform(size=(64, 64, 3))
        a = model.forward(image)
        b = restored.forward(image)
        assert np.array_equal(a.left.theta.data, b.left.theta.data)
        assert np.array_equal(a.right.coords.data, b.right.coords.data)
        assert np.array_equal(a.rel.data, b.rel.data)

    def test_without_optimizer_state(self, tmp_path):
        model = EANet(desk_config(), seed=4)
        path = tmp_path / "m.zip"
        save_checkpoint(path, model, step=17)
        _, _, optim, step = load_checkpoint(path)
        assert optim is None and step == 17

    def test_garbage_file_raises_format_error(self, tmp_path):
        path = tmp_path / "bad.zip"
        path.write_bytes(b"not a zip at all")
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_missing_manifest_raises(self, tmp_path):
        import zipfile

        path = tmp_path / "empty.zip"
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("readme.txt", "hello")
        with pytest.raises(FormatError):
            load_checkpoint(path)
