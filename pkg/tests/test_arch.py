import numpy as np
import pytest

from vargan.arch import (
    ArchConfig,
    ArchError,
    broadcast_condition,
    build_began_discriminator,
    build_cbigan_discriminator,
    build_cbigan_encoder,
    build_decoder,
    build_encoder,
    build_regressor,
    split_condition_grad,
)
from vargan.nn import Activation, Conv2D, Upsample2x2


def small_cfg():
    return ArchConfig(image_size=16, latent_dim=8, decoder_channels=4,
                      encoder_channels=(4, 6), seed_spatial=4,
                      regressor_channels=4, regressor_hidden=16)


class TestDecoder:
    def test_upsample_stage_count(self):
        dec = build_decoder(ArchConfig(image_size=32, seed_spatial=4))
        assert sum(1 for l in dec.layers if isinstance(l, Upsample2x2)) == 3

    def test_output_shape_batch(self):
        dec = build_decoder(ArchConfig())
        out = dec.forward(np.zeros((7, dec.input_shape[0])))
        assert out.shape == (7, 1, 32, 32)

    def test_full_scale_builds(self):
        cfg = ArchConfig.full_scale()
        assert cfg.latent_dim == 128
        dec = build_decoder(cfg)
        assert dec.input_shape == (128 + 98,)
        assert dec.output_shape == (1, 48, 48)

    def test_final_layer_no_nonlinearity(self):
        dec = build_decoder(ArchConfig(), final_activation=None)
        assert isinstance(dec.layers[-1], Conv2D)

    def test_unreachable_size(self):
        with pytest.raises(ArchError, match="doubling"):
            build_decoder(ArchConfig(image_size=24, seed_spatial=5))


class TestEncoder:
    def test_sigmoid_scalar_output(self):
        enc = build_encoder(small_cfg(), 1, "sigmoid")
        out = enc.forward(np.random.default_rng(0).normal(size=(3, 1, 16, 16)))
        assert out.shape == (3, 1)
        assert np.all((out > 0) & (out < 1))

    def test_channel_schedule(self):
        cfg = small_cfg()
        enc = build_encoder(cfg, 8)
        convs = [l for l in enc.layers if isinstance(l, Conv2D)]
        assert [c.out_ch for c in convs] == [4, 4, 6, 6]
        assert [c.stride for c in convs] == [1, 2, 1, 2]

    def test_tanh_range(self):
        cfg = small_cfg()
        enc = build_encoder(cfg, cfg.target_dim, "tanh")
        out = enc.forward(np.random.default_rng(1).normal(size=(2, 1, 16, 16)))
        assert out.shape == (2, 10)
        assert np.all((out > -1) & (out < 1))


class TestBeganDiscriminator:
    def test_autoencoder_contract(self):
        cfg = small_cfg()
        d = build_began_discriminator(cfg)
        x = np.random.default_rng(2).normal(size=(2, 1, 16, 16))
        out = d.forward(x)
        assert out.shape == x.shape
        assert np.all(np.isfinite(out))

    def test_parameter_count_is_sum_of_parts(self):
        cfg = small_cfg()
        enc = build_encoder(cfg, cfg.latent_dim)
        dec = build_decoder(cfg, conditioned=False)
        d = build_began_discriminator(cfg)
        assert d.param_count() == enc.param_count() + dec.param_count()


class TestRegressor:
    def test_full_scale_output(self):
        reg = build_regressor(ArchConfig.full_scale())
        assert reg.output_shape == (98,)

    def test_desk_scale_range(self):
        reg = build_regressor(ArchConfig())
        out = reg.forward(np.random.default_rng(3).normal(size=(2, 1, 32, 32)))
        assert out.shape == (2, 10)
        assert np.all((out > -1) & (out < 1))

    def test_layer_sequence(self):
        reg = build_regressor(ArchConfig())
        kinds = [l.kind for l in reg.layers]
        assert kinds == [
            "conv2d", "activation", "maxpool2x2",
            "conv2d", "activation", "maxpool2x2",
            "flatten", "dense", "activation", "dense", "activation",
        ]
        acts = [l.fn for l in reg.layers if isinstance(l, Activation)]
        assert acts == ["relu", "relu", "relu", "tanh"]

    def test_indivisible_size_rejected(self):
        with pytest.raises(ArchError):
            ArchConfig(image_size=18).validate()


@pytest.mark.parametrize("seed", range(5))
def test_role_shape_contracts_random_configs(seed):
    r = np.random.default_rng(seed)
    seed_spatial = int(r.choice([2, 4]))
    stages = int(r.integers(1, 3))
    size = seed_spatial * 2**stages
    if size % 4:
        size *= 2
        stages += 1
    n_enc = int(r.integers(1, stages + 1))
    cfg = ArchConfig(
        image_size=size,
        latent_dim=int(r.integers(2, 16)),
        landmark_count=int(r.integers(1, 6)),
        decoder_channels=int(r.integers(2, 6)),
        encoder_channels=tuple(int(r.integers(2, 6)) for _ in range(n_enc)),
        seed_spatial=seed_spatial,
        regressor_channels=2,
        regressor_hidden=8,
    )
    dec = build_decoder(cfg, rng=r)
    assert dec.output_shape == (1, size, size)
    enc = build_encoder(cfg, 3, "sigmoid", rng=r)
    assert enc.output_shape == (3,)
    reg = build_regressor(cfg, rng=r)
    assert reg.output_shape == (cfg.target_dim,)


class TestConditionBroadcast:
    def test_roundtrip(self):
        cond = np.arange(6.0).reshape(2, 3)
        img = np.random.default_rng(0).normal(size=(2, 1, 4, 4))
        joined = broadcast_condition(cond, img)
        assert joined.shape == (2, 4, 4, 4)
        np.testing.assert_array_equal(joined[:, 3], img[:, 0])
        np.testing.assert_array_equal(joined[1, 2], np.full((4, 4), 5.0))

    def test_split_grad_sums_planes(self):
        grad = np.ones((2, 4, 4, 4))
        gcond, gimg = split_condition_grad(grad, 3)
        assert gcond.shape == (2, 3)
        np.testing.assert_array_equal(gcond, np.full((2, 3), 16.0))
        assert gimg.shape == (2, 1, 4, 4)

    def test_cbigan_nets(self):
        cfg = small_cfg()
        d = build_cbigan_discriminator(cfg)
        assert d.input_shape == (1 + cfg.target_dim, 16, 16)
        e = build_cbigan_encoder(cfg)
        assert e.output_shape == (cfg.target_dim,)
