"""Training procedures for the three trainable schemes:

  * vargan — equilibrium-autoencoder GAN plus auxiliary regressor, with the
    regression error back-propagated through the generator,
  * cbigan — conditional bidirectional baseline (generator, encoder,
    pairing discriminator),
  * began  — unconditional equilibrium-autoencoder GAN (control model for
    the evaluation experiments).

All state (parameters, optimizer moments, equilibrium variable, RNG) lives
in TrainingState and serializes bit-exactly, so fixed (config, seed) yields
identical telemetry and checkpoints, and resumed runs match uninterrupted
ones.
"""

import dataclasses
import hashlib
import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arch import (
    ArchConfig,
    broadcast_condition,
    build_began_discriminator,
    build_cbigan_discriminator,
    build_cbigan_encoder,
    build_decoder,
    build_regressor,
    split_condition_grad,
)
from .data import load_dataset, make_condition_input, sample_latent
from .losses import (
    CbiganHyper,
    VarganHyper,
    began_losses,
    began_recon_loss,
    cbigan_losses,
    k_update,
    regression_loss,
)
from .nn import Adam, Nesterov

MAGIC = b"VGCK"
CKPT_VERSION = 1
METHODS = ("vargan", "cbigan", "began")


class TrainingError(RuntimeError):
    pass


def _coerce(raw, current):
    """Parse a config string against the type of the current value."""
    if not isinstance(raw, str):
        return raw
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        return tuple(int(x) for x in raw.split(","))
    return raw


@dataclass
class TrainerConfig:
    method: str = "vargan"
    arch: ArchConfig = field(default_factory=ArchConfig)
    vargan: VarganHyper = field(default_factory=VarganHyper)
    cbigan: CbiganHyper = field(default_factory=CbiganHyper)
    batch_size: int = 16
    total_steps: int = 2000
    seed: int = 0
    checkpoint_every: int = 500
    dataset: str = ""
    real_mix: float = 0.5           # fraction of genuine pairs in regressor updates
    generator_output: str = "sigmoid"  # or "none" for the raw final conv
    adam_lr: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    nesterov_lr: float = 0.01
    nesterov_momentum: float = 0.9

    def validate(self):
        if self.method not in METHODS:
            raise TrainingError(f"unknown method {self.method!r}")
        if self.batch_size < 1 or self.total_steps < 0:
            raise TrainingError("batch_size and total_steps must be positive")
        if not 0 <= self.real_mix <= 1:
            raise TrainingError("real_mix must be in [0,1]")
        self.arch.validate()
        return self

    def flat(self):
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                for sub in dataclasses.fields(v):
                    out[f"{f.name}.{sub.name}"] = getattr(v, sub.name)
            else:
                out[f.name] = v
        return out

    def digest(self):
        flat = self.flat()
        text = "".join(f"{k}={flat[k]!r}\n" for k in sorted(flat))
        return hashlib.sha256(text.encode()).hexdigest()

    def to_text(self):
        flat = self.flat()
        lines = []
        for k in sorted(flat):
            v = flat[k]
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_flat(cls, flat):
        """Build a config from flat "section.key" -> string mappings (config
        files and CLI flags share this namespace)."""
        cfg = cls()
        subobjs = {"arch": cfg.arch, "vargan": cfg.vargan, "cbigan": cfg.cbigan}
        fields = {f.name: f for f in dataclasses.fields(cls)}
        for key, raw in flat.items():
            section, _, sub = key.partition(".")
            if sub:
                obj = subobjs.get(section)
                if obj is None:
                    raise TrainingError(f"unknown config section {section!r}")
                subfields = {f.name: f for f in dataclasses.fields(obj)}
                if sub not in subfields:
                    raise TrainingError(f"unknown config key {key!r}")
                setattr(obj, sub, _coerce(raw, getattr(obj, sub)))
            else:
                if section not in fields or dataclasses.is_dataclass(getattr(cfg, section)):
                    raise TrainingError(f"unknown config key {key!r}")
                setattr(cfg, section, _coerce(raw, getattr(cfg, section)))
        return cfg

    @classmethod
    def from_text(cls, text):
        flat = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, _, v = line.partition("=")
            flat[k.strip()] = v.strip()
        return cls.from_flat(flat)


@dataclass
class TrainingState:
    config: TrainerConfig
    nets: dict
    optimizers: dict
    rng: np.random.Generator
    step: int = 0
    k: float = 0.0
    dataset_digest: str = ""

    def generator(self):
        return self.nets["G"]


def _role_rngs(seed):
    seqs = np.random.SeedSequence(seed).spawn(5)
    return [np.random.default_rng(s) for s in seqs]


def init_state(config, dataset_digest=""):
    config.validate()
    cfg = config.arch
    rng_g, rng_d, rng_r, rng_e, rng_run = _role_rngs(config.seed)
    final = config.generator_output if config.generator_output != "none" else None
    adam = lambda: Adam(config.adam_lr, config.adam_beta1, config.adam_beta2)
    nets, opts = {}, {}
    conditioned = config.method != "began"
    nets["G"] = build_decoder(cfg, conditioned=conditioned, final_activation=final, rng=rng_g)
    opts["G"] = adam()
    if config.method in ("vargan", "began"):
        nets["D"] = build_began_discriminator(cfg, final_activation=final, rng=rng_d)
        opts["D"] = adam()
        if config.method == "vargan":
            nets["R"] = build_regressor(cfg, rng=rng_r)
            opts["R"] = Nesterov(config.nesterov_lr, config.nesterov_momentum)
    else:
        nets["D"] = build_cbigan_discriminator(cfg, rng=rng_d)
        opts["D"] = adam()
        nets["E"] = build_cbigan_encoder(cfg, rng=rng_e)
        opts["E"] = adam()
    return TrainingState(config, nets, opts, rng_run, dataset_digest=dataset_digest)


def _check_finite_losses(values, state):
    for name, v in values.items():
        if not np.isfinite(v):
            raise TrainingError(
                f"non-finite loss {name}={v} at step {state.step} (k={state.k})"
            )


def vargan_step(state, x, y):
    """One iteration: D update, R update, G update, k update (in that order).

    With method "began" the regressor sub-step is skipped and the generator
    sees no regression term (equivalent to zeta = 0 and no conditioning).
    """
    cfg = state.config
    hyper = cfg.vargan
    g_net, d_net = state.nets["G"], state.nets["D"]
    r_net = state.nets.get("R")
    batch = x.shape[0]
    z = sample_latent(state.rng, cfg.arch.latent_dim, batch, dtype=x.dtype)
    gin = make_condition_input(z, y) if r_net is not None else z
    x_fake = g_net.forward(gin)

    # discriminator: minimize L(x) - k * L(G(z|y)); generator held fixed
    d_net.zero_grads()
    l_x, g_dx = began_recon_loss(x, d_net.forward(x))
    d_net.backward(g_dx)
    l_gz_d, g_dxf = began_recon_loss(x_fake, d_net.forward(x_fake))
    d_net.backward(-state.k * g_dxf)
    state.optimizers["D"].step(d_net.named_params(), d_net.named_grads())

    # regressor: genuine/generated mix, generator held fixed
    l_r_train = 0.0
    if r_net is not None:
        r_net.zero_grads()
        mix = cfg.real_mix
        l_real, gr = regression_loss(y, r_net.forward(x), hyper.eps_log)
        r_net.backward(mix * gr)
        l_fake, gf = regression_loss(y, r_net.forward(x_fake), hyper.eps_log)
        r_net.backward((1 - mix) * gf)
        state.optimizers["R"].step(r_net.named_params(), r_net.named_grads())
        l_r_train = mix * l_real + (1 - mix) * l_fake

    # generator: vartheta * L(G(z|y)) + zeta * L_R through D and R
    d_net.zero_grads()
    l_gz, up = began_recon_loss(x_fake, d_net.forward(x_fake))
    # d/dx_fake of mean((D(x)-x)^2): through D plus the direct -up term
    dxf = hyper.vartheta * (d_net.backward(up) - up)
    l_r_gen = 0.0
    if r_net is not None and hyper.zeta != 0.0:
        r_net.zero_grads()
        l_r_gen, gr = regression_loss(y, r_net.forward(x_fake), hyper.eps_log)
        dxf = dxf + hyper.zeta * r_net.backward(gr)
    g_net.zero_grads()
    g_net.backward(dxf.astype(x.dtype))
    state.optimizers["G"].step(g_net.named_params(), g_net.named_grads())
    d_net.zero_grads()
    if r_net is not None:
        r_net.zero_grads()

    l_d, l_g = began_losses(l_x, l_gz_d, l_r_gen, state.k, hyper)
    state.k = k_update(state.k, l_x, l_gz_d, hyper)
    state.step += 1
    row = {"L_d": l_d, "L_g": l_g, "L_R": l_r_train, "k": state.k}
    _check_finite_losses(row, state)
    return row


def _dlog(p, eps=1e-12):
    return 1.0 / np.maximum(p, eps)


def _dlog1m(p, eps=1e-12):
    return 1.0 / np.maximum(1.0 - p, eps)


def cbigan_step(state, x, y):
    """One baseline iteration: D, G, E updates using the pairings
    p_r = D(y,x), p_I = D(y,G(z|y)), p_s = D(E(x),x)."""
    cfg = state.config
    hyper = cfg.cbigan
    g_net, d_net, e_net = state.nets["G"], state.nets["D"], state.nets["E"]
    batch = x.shape[0]
    tdim = cfg.arch.target_dim
    z = sample_latent(state.rng, cfg.arch.latent_dim, batch, dtype=x.dtype)
    x_fake = g_net.forward(make_condition_input(z, y))
    s_minus = e_net.forward(x)

    # discriminator: maximize log p_r + log(1-p_I) + log(1-p_s)
    d_net.zero_grads()
    p_r = d_net.forward(broadcast_condition(y, x))
    d_net.backward(-_dlog(p_r) / batch)
    p_i = d_net.forward(broadcast_condition(y, x_fake))
    d_net.backward(_dlog1m(p_i) / batch)
    p_s = d_net.forward(broadcast_condition(s_minus, x))
    d_net.backward(_dlog1m(p_s) / batch)
    state.optimizers["D"].step(d_net.named_params(), d_net.named_grads())

    # generator: maximize log p_I through the (updated) discriminator
    d_net.zero_grads()
    p_i2 = d_net.forward(broadcast_condition(y, x_fake))
    din = d_net.backward(-_dlog(p_i2) / batch)
    _, g_img = split_condition_grad(din, tdim)
    g_net.zero_grads()
    g_net.backward(g_img.astype(x.dtype))
    state.optimizers["G"].step(g_net.named_params(), g_net.named_grads())

    # encoder: maximize log p_s, minimize theta * ||s_minus - y||^2
    d_net.zero_grads()
    p_s2 = d_net.forward(broadcast_condition(s_minus, x))
    din = d_net.backward(-_dlog(p_s2) / batch)
    g_cond, _ = split_condition_grad(din, tdim)
    g_cond = g_cond + hyper.theta * 2.0 * (s_minus - y) / s_minus.size
    e_net.zero_grads()
    e_net.backward(g_cond.astype(x.dtype))
    state.optimizers["E"].step(e_net.named_params(), e_net.named_grads())
    d_net.zero_grads()

    l_d, l_g, l_e = cbigan_losses(p_r, p_i, p_s, s_minus, y, hyper)
    state.step += 1
    row = {"L_D": l_d, "L_G": l_g, "L_E": l_e, "k": 0.0}
    _check_finite_losses(row, state)
    return row


def training_step(state, x, y):
    if state.config.method == "cbigan":
        return cbigan_step(state, x, y)
    return vargan_step(state, x, y)


TELEMETRY_FIELDS = {
    "vargan": ("L_d", "L_g", "L_R", "k"),
    "began": ("L_d", "L_g", "L_R", "k"),
    "cbigan": ("L_D", "L_G", "L_E", "k"),
}


def telemetry_header(method):
    return ("step",) + TELEMETRY_FIELDS[method] + ("wall_ms",)


def telemetry_digest(rows, method):
    """Digest over the deterministic telemetry columns (wall_ms excluded)."""
    h = hashlib.sha256()
    for row in rows:
        h.update(f"{row['step']}".encode())
        for f in TELEMETRY_FIELDS[method]:
            h.update(struct.pack("<d", row[f]))
    return h.hexdigest()


def train(config, out_dir=None, dataset=None, log=None):
    """Run the configured stepper for total_steps; returns (state, rows)."""
    config.validate()
    if dataset is None:
        if not config.dataset:
            raise TrainingError("no dataset configured")
        dataset = load_dataset(config.dataset)
    state = init_state(config, dataset_digest=dataset.digest())
    return resume(state, config.total_steps, out_dir=out_dir, dataset=dataset, log=log)


def resume(state, until_step, out_dir=None, dataset=None, log=None):
    config = state.config
    if dataset is None:
        dataset = load_dataset(config.dataset)
    if state.dataset_digest and state.dataset_digest != dataset.digest():
        raise TrainingError("dataset digest does not match the training state")
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(config.to_text())
    dtype = config.arch.np_dtype
    rows = []
    telemetry_path = out / "telemetry.csv" if out else None
    if telemetry_path and not telemetry_path.exists():
        telemetry_path.write_text(",".join(telemetry_header(config.method)) + "\n")
    while state.step < until_step:
        idx = state.rng.integers(0, dataset.n, size=config.batch_size)
        x = dataset.images_float(idx, dtype=dtype)
        y = dataset.targets[idx].astype(dtype)
        t0 = time.perf_counter()
        row = training_step(state, x, y)
        row["step"] = state.step
        row["wall_ms"] = (time.perf_counter() - t0) * 1e3
        rows.append(row)
        if log and state.step % 100 == 0:
            log(f"step {state.step}: " + " ".join(
                f"{k}={row[k]:.4f}" for k in TELEMETRY_FIELDS[config.method]))
        if telemetry_path:
            with telemetry_path.open("a") as fh:
                fields = ("step",) + TELEMETRY_FIELDS[config.method]
                fh.write(",".join(f"{row[f]:.9g}" for f in fields)
                         + f",{row['wall_ms']:.3f}\n")
        if out and config.checkpoint_every and state.step % config.checkpoint_every == 0:
            checkpoint_save(state, out / f"ckpt_{state.step:07d}.vgck")
    if out:
        checkpoint_save(state, out / "ckpt_final.vgck")
    return state, rows


# ---------------------------------------------------------------------------
# checkpoint serialization

def _pack_str(s):
    b = s.encode()
    return struct.pack("<I", len(b)) + b


def _read_str(fh):
    (n,) = struct.unpack("<I", fh.read(4))
    return fh.read(n).decode()


def _pack_array(name, arr):
    arr = np.ascontiguousarray(arr)
    parts = [_pack_str(name), _pack_str(str(arr.dtype)), struct.pack("<I", arr.ndim)]
    parts += [struct.pack("<q", d) for d in arr.shape]
    parts.append(arr.tobytes())
    return b"".join(parts)


def _read_array(fh):
    name = _read_str(fh)
    dtype = np.dtype(_read_str(fh))
    (ndim,) = struct.unpack("<I", fh.read(4))
    shape = tuple(struct.unpack("<q", fh.read(8))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(fh.read(count * dtype.itemsize), dtype=dtype).reshape(shape).copy()
    return name, arr


def _opt_arrays(opt):
    if opt.rule == "adam":
        return [("m", opt.m), ("v", opt.v)]
    return [("v", opt.vel)]


def checkpoint_save(state, path):
    cfg = state.config
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(_pack_str(cfg.digest()))
        fh.write(_pack_str(cfg.method))
        fh.write(struct.pack("<q", state.step))
        fh.write(struct.pack("<d", state.k))
        fh.write(_pack_str(state.dataset_digest))
        fh.write(_pack_str(json.dumps(state.rng.bit_generator.state)))
        fh.write(struct.pack("<I", len(state.nets)))
        for role in sorted(state.nets):
            fh.write(_pack_str(role))
            params = state.nets[role].named_params()
            fh.write(struct.pack("<I", len(params)))
            for pname in sorted(params):
                fh.write(_pack_array(pname, params[pname]))
            opt = state.optimizers[role]
            fh.write(_pack_str(opt.rule))
            fh.write(struct.pack("<q", opt.t))
            groups = _opt_arrays(opt)
            fh.write(struct.pack("<I", len(groups)))
            for gname, group in groups:
                fh.write(_pack_str(gname))
                fh.write(struct.pack("<I", len(group)))
                for pname in sorted(group):
                    fh.write(_pack_array(pname, group[pname]))
    return Path(path)


def checkpoint_load(path, config):
    """Rebuild a TrainingState from a checkpoint; config must match the one
    the checkpoint was written with (verified via digest)."""
    config.validate()
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise TrainingError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CKPT_VERSION:
            raise TrainingError(f"unsupported checkpoint version {version}")
        digest = _read_str(fh)
        if digest != config.digest():
            raise TrainingError("checkpoint config digest mismatch")
        method = _read_str(fh)
        if method != config.method:
            raise TrainingError("checkpoint method mismatch")
        (step,) = struct.unpack("<q", fh.read(8))
        (k,) = struct.unpack("<d", fh.read(8))
        dataset_digest = _read_str(fh)
        rng_state = json.loads(_read_str(fh))
        state = init_state(config, dataset_digest=dataset_digest)
        state.step = step
        state.k = k
        state.rng.bit_generator.state = rng_state
        (n_nets,) = struct.unpack("<I", fh.read(4))
        for _ in range(n_nets):
            role = _read_str(fh)
            if role not in state.nets:
                raise TrainingError(f"unexpected net role {role!r} in checkpoint")
            (n_params,) = struct.unpack("<I", fh.read(4))
            params = dict(_read_array(fh) for _ in range(n_params))
            state.nets[role].set_params(params)
            rule = _read_str(fh)
            opt = state.optimizers[role]
            if rule != opt.rule:
                raise TrainingError(f"optimizer rule mismatch for {role!r}")
            (opt.t,) = struct.unpack("<q", fh.read(8))
            (n_groups,) = struct.unpack("<I", fh.read(4))
            loaded = {}
            for _ in range(n_groups):
                gname = _read_str(fh)
                (n,) = struct.unpack("<I", fh.read(4))
                loaded[gname] = dict(_read_array(fh) for _ in range(n))
            if rule == "adam":
                opt.m, opt.v = loaded.get("m", {}), loaded.get("v", {})
            else:
                opt.vel = loaded.get("v", {})
        trailing = fh.read(1)
        if trailing:
            raise TrainingError("trailing bytes in checkpoint (truncated write?)")
    return state


def load_run(checkpoint_path):
    """Load a checkpoint using the config.txt stored beside it by train()."""
    ckpt = Path(checkpoint_path)
    cfg_path = ckpt.parent / "config.txt"
    if not cfg_path.exists():
        raise TrainingError(f"no config.txt next to checkpoint {ckpt}")
    config = TrainerConfig.from_text(cfg_path.read_text())
    return checkpoint_load(ckpt, config)
