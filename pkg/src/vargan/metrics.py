"""Evaluation suite: conditioning fidelity, sample diversity, entropy and
inter-condition separation, plus the side-by-side comparison report.

Entropy and separation are computed in a low-dimensional feature space: the
oracle regressor's penultimate activations reduced by PCA (pixel-space
nearest-neighbor and histogram estimators are degenerate at desk-scale
sample counts). Every report records the feature space used.
"""

import csv
import struct
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln

from .arch import ArchConfig, build_regressor
from .data import make_condition_input, sample_latent
from .nn import Adam, Net, penultimate_features
from .theory import jsd as discrete_jsd

MAGIC_ORACLE = b"VGOR"


class EvalError(RuntimeError):
    pass


def landmark_error(pred, target):
    """Mean per-landmark Euclidean distance in normalized units."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    d = (pred - target).reshape(pred.shape[0], -1, 2)
    return float(np.mean(np.linalg.norm(d, axis=2)))


def train_oracle_regressor(dataset, arch=None, seed=0, target_error=0.05,
                           max_steps=4000, batch_size=64, lr=1e-3, log=None):
    """Train an independent measurement regressor on genuine data only.

    Returns (net, holdout_error). Raises EvalError if the target holdout
    error is unreachable within the step budget.
    """
    if dataset.n < 1000:
        raise EvalError("oracle training needs at least 1000 records")
    if arch is None:
        arch = ArchConfig(image_size=dataset.image_size,
                          landmark_count=dataset.landmark_count)
    rng = np.random.default_rng(seed)
    net = build_regressor(arch, rng=rng)
    opt = Adam(lr=lr, beta1=0.9, beta2=0.999)
    n_hold = max(100, dataset.n // 10)
    perm = rng.permutation(dataset.n)
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    x_hold = dataset.images_float(hold_idx)
    y_hold = dataset.targets[hold_idx]

    hold_err = float("inf")
    for step in range(max_steps):
        idx = train_idx[rng.integers(0, train_idx.size, size=batch_size)]
        x = dataset.images_float(idx)
        y = dataset.targets[idx]
        net.zero_grads()
        pred = net.forward(x)
        net.backward(2.0 * (pred - y) / pred.size)
        opt.step(net.named_params(), net.named_grads())
        if (step + 1) % 200 == 0:
            hold_err = landmark_error(_predict(net, x_hold), y_hold)
            if log:
                log(f"oracle step {step + 1}: holdout error {hold_err:.4f}")
            if hold_err < target_error:
                return net, hold_err
    hold_err = landmark_error(_predict(net, x_hold), y_hold)
    if hold_err < target_error:
        return net, hold_err
    raise EvalError(
        f"oracle holdout error {hold_err:.4f} did not reach {target_error} "
        f"in {max_steps} steps"
    )


def _predict(net, x, batch=256):
    outs = [net.forward(x[i : i + batch]) for i in range(0, x.shape[0], batch)]
    return np.concatenate(outs, axis=0)


def _features(net, x, batch=256):
    outs = [penultimate_features(net, x[i : i + batch]) for i in range(0, x.shape[0], batch)]
    return np.concatenate(outs, axis=0).reshape(x.shape[0], -1)


def generate_samples(state, targets, n_per_target, seed):
    """Generated images per target: (T, n_per_target, 1, H, W) in float64.

    For unconditional generators the targets only set the batch layout."""
    gen = state.nets["G"]
    cfg = state.config
    conditioned = cfg.method != "began"
    rng = np.random.default_rng(seed)
    dtype = cfg.arch.np_dtype
    out = []
    for y in np.atleast_2d(targets):
        z = sample_latent(rng, cfg.arch.latent_dim, n_per_target, dtype=dtype)
        gin = make_condition_input(z, np.tile(y, (n_per_target, 1))) if conditioned else z
        out.append(gen.forward(gin).astype(np.float64))
    return np.stack(out)


def landmark_fidelity(state, oracle, targets, n_per_target, seed):
    """Mean landmark error of oracle(G(z|y)) against the requested y."""
    samples = generate_samples(state, targets, n_per_target, seed)
    targets = np.atleast_2d(targets)
    errs = []
    for y, imgs in zip(targets, samples):
        pred = _predict(oracle, imgs)
        errs.append(landmark_error(pred, np.tile(y, (imgs.shape[0], 1))))
    return float(np.mean(errs))


def diversity_score(samples):
    """Mean pairwise per-pixel squared L2 distance among flattened images."""
    flat = np.asarray(samples, dtype=np.float64).reshape(len(samples), -1)
    n = flat.shape[0]
    if n < 2:
        raise EvalError("diversity needs at least 2 samples")
    sq = np.sum(flat * flat, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2 * flat @ flat.T
    iu = np.triu_indices(n, 1)
    return float(np.maximum(d2[iu], 0).mean() / flat.shape[1])


def knn_entropy(samples, k=3):
    """Kozachenko-Leonenko differential entropy estimate in nats."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if not n > k >= 1:
        raise EvalError("need n > k >= 1")
    tree = cKDTree(x)
    dist, _ = tree.query(x, k=k + 1)
    r = dist[:, k]
    if np.any(r == 0):
        warnings.warn("duplicate points in entropy estimate; applying jitter")
        jit = np.random.default_rng(0).normal(scale=1e-9, size=x.shape)
        tree = cKDTree(x + jit)
        dist, _ = tree.query(x + jit, k=k + 1)
        r = dist[:, k]
    log_vd = (d / 2) * np.log(np.pi) - gammaln(d / 2 + 1)
    return float(digamma(n) - digamma(k) + log_vd + d * np.mean(np.log(r)))


def pca_project(samples, dim=1, reference=None):
    """Deterministic PCA projection (sign fixed by the largest component)."""
    x = np.asarray(samples, dtype=np.float64)
    ref = x if reference is None else np.asarray(reference, dtype=np.float64)
    mean = ref.mean(axis=0)
    centered = ref - mean
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:dim]
    signs = np.sign(comps[np.arange(dim), np.argmax(np.abs(comps), axis=1)])
    comps = comps * signs[:, None]
    return (x - mean) @ comps.T


def sample_set_jsd(samples_a, samples_b, bins=48):
    """Histogram JSD between two sample sets; multi-dimensional inputs are
    first projected onto the leading principal component of the pooled set."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EvalError("empty sample set")
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[1] != b.shape[1]:
        raise EvalError("feature dimension mismatch")
    if a.shape[1] > 1:
        pooled = np.concatenate([a, b], axis=0)
        a = pca_project(a, 1, reference=pooled)
        b = pca_project(b, 1, reference=pooled)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        hi = lo + 1e-12
    edges = np.linspace(lo, hi, bins + 1)
    pa, _ = np.histogram(a[:, 0], bins=edges)
    pb, _ = np.histogram(b[:, 0], bins=edges)
    return discrete_jsd(pa / pa.sum(), pb / pb.sum())


def emit_grid(samples, cols, path):
    """Write samples tiled into a binary PGM (P5) with 1-pixel separators."""
    if len(samples) == 0:
        raise EvalError("no samples to tile")
    imgs = np.asarray(samples, dtype=np.float64).reshape(len(samples), -1)
    size = int(round(np.sqrt(imgs.shape[1])))
    imgs = np.clip(imgs.reshape(-1, size, size), 0, 1)
    n = imgs.shape[0]
    cols = min(cols, n)
    rows = (n + cols - 1) // cols
    h = rows * size + (rows - 1)
    w = cols * size + (cols - 1)
    canvas = np.zeros((h, w), dtype=np.uint8)
    for i, img in enumerate(imgs):
        r, c = divmod(i, cols)
        canvas[r * (size + 1) : r * (size + 1) + size,
               c * (size + 1) : c * (size + 1) + size] = np.round(img * 255)
    header = f"P5\n{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + canvas.tobytes())
    return Path(path)


@dataclass
class EvalReport:
    fidelity: float
    diversity: float
    entropy_estimate: float
    separation: float
    n_targets: int
    n_per_target: int
    seed: int
    feature_space: str = "oracle penultimate activations, PCA dim 4"

    def lines(self):
        return [f"{k}={v}" for k, v in asdict(self).items()]


def evaluate_model(state, oracle, targets, n_per_target=24, seed=0, feature_dim=4):
    """Full metric set for one trained model over a common target list."""
    targets = np.atleast_2d(targets)
    fidelity = landmark_fidelity(state, oracle, targets, n_per_target, seed)
    samples = generate_samples(state, targets, n_per_target, seed + 1)
    diversity = float(np.mean([diversity_score(s) for s in samples]))
    all_imgs = samples.reshape(-1, *samples.shape[2:])
    feats = _features(oracle, all_imgs)
    feats_low = pca_project(feats, min(feature_dim, feats.shape[1]))
    entropy = knn_entropy(feats_low, k=3)
    fa = _features(oracle, samples[0])
    fb = _features(oracle, samples[-1])
    separation = sample_set_jsd(fa, fb)
    return EvalReport(fidelity, diversity, entropy, separation,
                      targets.shape[0], n_per_target, seed,
                      feature_space=f"oracle penultimate activations, PCA dim {feature_dim}")


METRIC_DIRECTIONS = {
    # metric -> +1 if higher is better for the proposed method's claims
    "fidelity": -1,
    "diversity": +1,
    "entropy_estimate": -1,
    "separation": +1,
}


@dataclass
class CompareResult:
    reports_a: list
    reports_b: list
    verdicts: dict = field(default_factory=dict)   # metric -> list of "a"/"b"/"tie"
    majority: dict = field(default_factory=dict)   # metric -> "a"/"b"/"tie"

    def verdict_csv(self, name_a="vargan", name_b="cbigan"):
        buf = [f"metric,{name_a}_wins,{name_b}_wins,ties,majority"]
        for metric, verd in self.verdicts.items():
            wa, wb = verd.count("a"), verd.count("b")
            ties = verd.count("tie")
            maj = {"a": name_a, "b": name_b, "tie": "tie"}[self.majority[metric]]
            buf.append(f"{metric},{wa},{wb},{ties},{maj}")
        return "\n".join(buf) + "\n"


def compare_report(state_a, state_b, oracle, targets, seeds, n_per_target=24,
                   tolerance=1e-12):
    """Per-seed metric comparison between two trained models; the verdict
    table marks the winner per metric per seed and the majority outcome."""
    if state_a.dataset_digest != state_b.dataset_digest:
        raise EvalError("checkpoints were trained on different datasets")
    reports_a, reports_b = [], []
    for seed in seeds:
        reports_a.append(evaluate_model(state_a, oracle, targets, n_per_target, seed))
        reports_b.append(evaluate_model(state_b, oracle, targets, n_per_target, seed))
    result = CompareResult(reports_a, reports_b)
    for metric, direction in METRIC_DIRECTIONS.items():
        verd = []
        for ra, rb in zip(reports_a, reports_b):
            va, vb = getattr(ra, metric), getattr(rb, metric)
            if abs(va - vb) <= tolerance:
                verd.append("tie")
            elif (va - vb) * direction > 0:
                verd.append("a")
            else:
                verd.append("b")
        result.verdicts[metric] = verd
        wa, wb = verd.count("a"), verd.count("b")
        result.majority[metric] = "a" if wa > wb else ("b" if wb > wa else "tie")
    return result


# ---------------------------------------------------------------------------
# oracle persistence

def oracle_save(net, arch, path):
    from .training import _pack_array, _pack_str  # shared binary helpers

    with open(path, "wb") as fh:
        fh.write(MAGIC_ORACLE)
        fh.write(_pack_str(f"{arch.image_size},{arch.landmark_count},"
                           f"{arch.regressor_channels},{arch.regressor_hidden}"))
        params = net.named_params()
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            fh.write(_pack_array(name, params[name]))
    return Path(path)


def oracle_load(path):
    from .training import _read_array, _read_str

    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC_ORACLE:
            raise EvalError("bad oracle file magic")
        size, count, ch, hidden = (int(v) for v in _read_str(fh).split(","))
        arch = ArchConfig(image_size=size, landmark_count=count,
                          regressor_channels=ch, regressor_hidden=hidden)
        net = build_regressor(arch, rng=np.random.default_rng(0))
        (n,) = struct.unpack("<I", fh.read(4))
        params = dict(_read_array(fh) for _ in range(n))
        net.set_params(params)
    return net, arch
