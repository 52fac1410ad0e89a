"""Builders for the four network roles: generator (decoder), autoencoding
discriminator, regressor, and the bidirectional baseline's encoder and
pairing discriminator.

All roles are parameterized by ArchConfig so the same code covers the
full-scale layout (48x48, 64-channel decoder, 64->128->192->256 encoder,
49 landmarks) and the small desk-scale layout used for CPU experiments.
"""

from dataclasses import dataclass, field

import numpy as np

from .nn import Activation, Conv2D, Dense, Flatten, MaxPool2x2, Net, Reshape, Upsample2x2


class ArchError(ValueError):
    pass


def _stages(image_size, seed_spatial):
    n = 0
    s = seed_spatial
    while s < image_size:
        s *= 2
        n += 1
    if s != image_size:
        raise ArchError(
            f"image_size {image_size} not reachable by doubling from seed {seed_spatial}"
        )
    return n


@dataclass
class ArchConfig:
    image_size: int = 32
    latent_dim: int = 32
    landmark_count: int = 5
    decoder_channels: int = 16
    encoder_channels: tuple = (16, 24, 32)
    seed_spatial: int = 4
    image_channels: int = 1
    regressor_channels: int = 32
    regressor_hidden: int = 256
    conditioning: str = "concat"  # condition vector concatenated to the latent input
    dtype: str = "float64"

    @property
    def target_dim(self):
        return 2 * self.landmark_count

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def validate(self):
        if self.image_size <= 0 or self.latent_dim <= 0 or self.landmark_count <= 0:
            raise ArchError("all dimensions must be positive")
        if self.image_size % 4 != 0:
            raise ArchError("image_size must be divisible by 4 (regressor pooling)")
        if self.image_size % (2 ** len(self.encoder_channels)) != 0:
            raise ArchError("image_size not divisible by encoder downscaling")
        _stages(self.image_size, self.seed_spatial)
        return self

    @classmethod
    def full_scale(cls):
        """Full-scale layout: 48x48 input, latent width 128, 49 landmarks."""
        return cls(
            image_size=48,
            latent_dim=128,
            landmark_count=49,
            decoder_channels=64,
            encoder_channels=(64, 128, 192, 256),
            seed_spatial=6,
            regressor_channels=64,
            regressor_hidden=1024,
        )


def build_decoder(cfg, conditioned=True, final_activation=None, rng=None):
    """Generator/decoder: dense to a spatial seed, conv(ELU) pairs with 2x
    upsampling after every second conv, final conv with no nonlinearity
    (optional sigmoid head for [0,1]-normalized pixels)."""
    cfg.validate()
    if rng is None:
        rng = np.random.default_rng(0)
    dt = cfg.np_dtype
    in_dim = cfg.latent_dim + (cfg.target_dim if conditioned else 0)
    ch = cfg.decoder_channels
    n_up = _stages(cfg.image_size, cfg.seed_spatial)
    layers = [
        Dense(in_dim, ch * cfg.seed_spatial**2, rng, dtype=dt),
        Activation("elu"),
        Reshape((ch, cfg.seed_spatial, cfg.seed_spatial)),
    ]
    for _ in range(n_up):
        layers += [
            Conv2D(ch, ch, rng, dtype=dt), Activation("elu"),
            Conv2D(ch, ch, rng, dtype=dt), Activation("elu"),
            Upsample2x2(),
        ]
    layers.append(Conv2D(ch, cfg.image_channels, rng, dtype=dt))
    if final_activation:
        layers.append(Activation(final_activation))
    return Net(layers, (in_dim,), name="decoder")


def build_encoder(cfg, out_dim, out_activation="none", in_channels=None, rng=None):
    """Conv(ELU) stack with a stride-2 downscale in every second conv and
    channels widening level by level, finished by a dense head."""
    cfg.validate()
    if out_activation not in ("none", "tanh", "sigmoid"):
        raise ArchError(f"unsupported output activation {out_activation!r}")
    if rng is None:
        rng = np.random.default_rng(0)
    dt = cfg.np_dtype
    if in_channels is None:
        in_channels = cfg.image_channels
    layers = []
    prev = in_channels
    size = cfg.image_size
    for ch in cfg.encoder_channels:
        layers += [
            Conv2D(prev, ch, rng, dtype=dt), Activation("elu"),
            Conv2D(ch, ch, rng, stride=2, dtype=dt), Activation("elu"),
        ]
        prev = ch
        size //= 2
        if size < 1:
            raise ArchError("spatial size underflow in encoder")
    layers += [Flatten(), Dense(prev * size * size, out_dim, rng, dtype=dt)]
    if out_activation != "none":
        layers.append(Activation(out_activation))
    return Net(layers, (in_channels, cfg.image_size, cfg.image_size), name="encoder")


def build_began_discriminator(cfg, final_activation=None, rng=None):
    """Autoencoder discriminator: image encoder to a latent code, then the
    same decoder architecture as the generator (without conditioning)."""
    cfg.validate()
    if rng is None:
        rng = np.random.default_rng(0)
    enc = build_encoder(cfg, cfg.latent_dim, "none", rng=rng)
    dec = build_decoder(cfg, conditioned=False, final_activation=final_activation, rng=rng)
    return Net(enc.layers + dec.layers, enc.input_shape, name="began_discriminator")


def build_regressor(cfg, rng=None):
    """Landmark regressor: conv/pool twice, dense hidden, tanh output head."""
    cfg.validate()
    if rng is None:
        rng = np.random.default_rng(0)
    dt = cfg.np_dtype
    ch = cfg.regressor_channels
    s = cfg.image_size // 4
    layers = [
        Conv2D(cfg.image_channels, ch, rng, dtype=dt), Activation("relu"),
        MaxPool2x2(),
        Conv2D(ch, ch, rng, dtype=dt), Activation("relu"),
        MaxPool2x2(),
        Flatten(),
        Dense(ch * s * s, cfg.regressor_hidden, rng, dtype=dt), Activation("relu"),
        Dense(cfg.regressor_hidden, cfg.target_dim, rng, dtype=dt), Activation("tanh"),
    ]
    return Net(layers, (cfg.image_channels, cfg.image_size, cfg.image_size), name="regressor")


def build_cbigan_discriminator(cfg, rng=None):
    """Pairing discriminator D(cond, image): the condition vector enters as
    constant spatial planes stacked onto the image channels; scalar
    sigmoid output."""
    return build_encoder(
        cfg, 1, "sigmoid", in_channels=cfg.image_channels + cfg.target_dim, rng=rng
    )


def build_cbigan_encoder(cfg, rng=None):
    """Image-to-condition encoder with tanh output in (-1, 1)^target_dim."""
    return build_encoder(cfg, cfg.target_dim, "tanh", rng=rng)


def broadcast_condition(cond, image):
    """Stack each condition coordinate as a constant plane in front of the
    image channels: (B, 2L) + (B, C, H, W) -> (B, 2L+C, H, W)."""
    b, c, h, w = image.shape
    planes = np.broadcast_to(cond[:, :, None, None], (b, cond.shape[1], h, w))
    return np.concatenate([planes.astype(image.dtype), image], axis=1)


def split_condition_grad(grad, cond_dim):
    """Inverse of broadcast_condition on gradients: returns
    (grad w.r.t. cond, grad w.r.t. image)."""
    gcond = grad[:, :cond_dim].sum(axis=(2, 3))
    return gcond, grad[:, cond_dim:]
