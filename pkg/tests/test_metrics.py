from types import SimpleNamespace

import numpy as np
import pytest

from vargan.arch import ArchConfig
from vargan.data import FaceParams, generate_dataset, render_face
from vargan.metrics import (
    EvalError,
    METRIC_DIRECTIONS,
    compare_report,
    diversity_score,
    emit_grid,
    evaluate_model,
    knn_entropy,
    landmark_error,
    landmark_fidelity,
    oracle_load,
    oracle_save,
    pca_project,
    sample_set_jsd,
    train_oracle_regressor,
)
from vargan.training import TrainerConfig, init_state


def predict(net, x, batch=256):
    return np.concatenate([net.forward(x[i:i + batch]) for i in range(0, len(x), batch)])


def render_from_target(t, image_size=32):
    params = FaceParams(
        left_eye=tuple(t[0:2]), right_eye=tuple(t[2:4]), nose=tuple(t[4:6]),
        mouth_left=tuple(t[6:8]), mouth_right=tuple(t[8:10]),
        eye_radius=2.0, nose_radius=2.0, mouth_thickness=2.0,
        foreground=1.0, background=0.0, noise_amp=0.0,
    )
    return render_face(params, image_size)


class _RenderingGen:
    """Generator stand-in that rasterizes landmarks read from its input."""

    def __init__(self, latent_dim, targets=None):
        self.latent_dim = latent_dim
        self.targets = targets  # when set, the condition input is ignored

    def forward(self, gin):
        if self.targets is None:
            ys = gin[:, self.latent_dim:]
        else:  # draw pseudo-random rows from the pool, keyed by the latent
            idx = ((gin[:, 0] + 1) / 2 * (len(self.targets) - 1)).astype(int)
            ys = self.targets[idx]
        return np.stack([render_from_target(y)[None] for y in ys])


def stub_state(gen, method="vargan", latent_dim=4):
    arch = SimpleNamespace(latent_dim=latent_dim, np_dtype=np.float64)
    config = SimpleNamespace(method=method, arch=arch)
    return SimpleNamespace(nets={"G": gen}, config=config, dataset_digest="stub")


def tiny_state(method="vargan", seed=0):
    arch = ArchConfig(image_size=32, latent_dim=6, decoder_channels=4,
                      encoder_channels=(4, 4), seed_spatial=4,
                      regressor_channels=4, regressor_hidden=16)
    return init_state(TrainerConfig(method=method, arch=arch, seed=seed))


class TestOracle:
    def test_noise_free_holdout_error(self, clean_oracle):
        _, err = clean_oracle
        assert err < 0.03

    def test_optimism_on_training_inputs(self, clean_oracle, clean_dataset):
        net, holdout = clean_oracle
        full = landmark_error(predict(net, clean_dataset.images_float()),
                              clean_dataset.targets)
        assert full <= holdout

    def test_permuted_targets_negative_control(self, clean_oracle, clean_dataset):
        net, _ = clean_oracle
        pred = predict(net, clean_dataset.images_float(np.arange(300)))
        shuffled = np.random.default_rng(0).permutation(clean_dataset.targets[:300])
        assert landmark_error(pred, shuffled) > 0.2

    def test_small_dataset_rejected(self):
        with pytest.raises(EvalError):
            train_oracle_regressor(generate_dataset(50, seed=0))

    def test_persistence_round_trip(self, clean_oracle, clean_dataset, tmp_path):
        net, _ = clean_oracle
        arch = ArchConfig(image_size=32, landmark_count=5)
        oracle_save(net, arch, tmp_path / "o.vgor")
        back, arch2 = oracle_load(tmp_path / "o.vgor")
        x = clean_dataset.images_float(np.arange(16))
        np.testing.assert_array_equal(back.forward(x), net.forward(x))
        assert arch2.image_size == 32


class TestFidelity:
    def test_cheating_generator_matches_oracle_error(self, clean_oracle, clean_dataset):
        net, holdout = clean_oracle
        state = stub_state(_RenderingGen(4))
        targets = clean_dataset.targets[:12]
        fid = landmark_fidelity(state, net, targets, 8, seed=0)
        assert fid <= holdout + 0.01

    def test_unconditional_generator_scores_random_pair_error(
            self, clean_oracle, clean_dataset):
        net, _ = clean_oracle
        pool = clean_dataset.targets
        state = stub_state(_RenderingGen(4, targets=pool), method="began")
        fid = landmark_fidelity(state, net, pool[:12], 16, seed=0)
        rng = np.random.default_rng(1)
        random_pairs = landmark_error(pool[rng.integers(0, len(pool), 4000)],
                                      pool[rng.integers(0, len(pool), 4000)])
        assert fid == pytest.approx(random_pairs, abs=0.05)
        assert fid > 5 * 0.03

    def test_deterministic(self, clean_oracle, clean_dataset):
        net, _ = clean_oracle
        state = tiny_state()
        targets = clean_dataset.targets[:4]
        a = landmark_fidelity(state, net, targets, 6, seed=3)
        b = landmark_fidelity(state, net, targets, 6, seed=3)
        assert a == b


class TestDiversity:
    def test_identical_samples_zero(self):
        s = np.ones((5, 1, 8, 8))
        assert diversity_score(s) == 0.0

    def test_unit_difference_pair(self):
        a = np.zeros((8, 8))
        assert diversity_score([a, a + 1.0]) == 1.0

    def test_uniform_noise_expectation(self):
        # E|u - v|^2 per pixel = 2 Var(U[0,1]) = 1/6
        rng = np.random.default_rng(0)
        s = rng.uniform(size=(24, 32, 32))
        assert diversity_score(s) == pytest.approx(1 / 6, abs=0.01)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        s = rng.uniform(size=(6, 4, 4))
        assert diversity_score(s) == pytest.approx(
            diversity_score(s[::-1]), abs=1e-12)

    def test_too_few_samples(self):
        with pytest.raises(EvalError):
            diversity_score(np.ones((1, 4, 4)))


class TestKnnEntropy:
    def test_gaussian_closed_form(self):
        x = np.random.default_rng(0).normal(size=10_000)
        expected = 0.5 * np.log(2 * np.pi * np.e)
        assert knn_entropy(x, k=3) == pytest.approx(expected, abs=0.05)

    def test_uniform_closed_form(self):
        x = np.random.default_rng(1).uniform(size=10_000)
        assert knn_entropy(x, k=3) == pytest.approx(0.0, abs=0.05)

    def test_scaling_law(self):
        x = np.random.default_rng(2).normal(size=10_000)
        assert knn_entropy(2 * x, k=3) - knn_entropy(x, k=3) == pytest.approx(
            np.log(2), abs=0.05)

    def test_duplicates_warn(self):
        x = np.array([0.0, 0.0, 0.0, 1.0, 2.0, 3.0])
        with pytest.warns(UserWarning, match="jitter"):
            knn_entropy(x, k=1)

    def test_needs_enough_samples(self):
        with pytest.raises(EvalError):
            knn_entropy(np.zeros(3), k=3)


class TestSampleSetJsd:
    def test_identical_sets(self):
        x = np.random.default_rng(0).normal(size=500)
        assert sample_set_jsd(x, x) < 0.01

    def test_disjoint_supports(self):
        a = np.random.default_rng(0).normal(0.0, 0.1, size=2000)
        b = np.random.default_rng(1).normal(10.0, 0.1, size=2000)
        assert sample_set_jsd(a, b) == pytest.approx(np.log(2), abs=1e-9)

    def test_matches_integrated_gaussian_jsd(self):
        rng = np.random.default_rng(7)
        a = rng.normal(0.0, 1.0, size=20_000)
        b = rng.normal(3.0, 1.0, size=20_000)
        grid = np.linspace(-8.0, 11.0, 20_001)
        p = np.exp(-0.5 * grid**2) / np.sqrt(2 * np.pi)
        q = np.exp(-0.5 * (grid - 3.0) ** 2) / np.sqrt(2 * np.pi)
        m = (p + q) / 2
        with np.errstate(divide="ignore", invalid="ignore"):
            integrand = 0.5 * np.where(p > 0, p * np.log(p / m), 0.0) \
                + 0.5 * np.where(q > 0, q * np.log(q / m), 0.0)
        expected = np.trapezoid(integrand, grid)
        assert sample_set_jsd(a, b) == pytest.approx(expected, abs=0.02)

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            a = rng.normal(size=300)
            b = rng.normal(rng.uniform(0, 4), 1.0, size=300)
            v = sample_set_jsd(a, b)
            assert v == pytest.approx(sample_set_jsd(b, a), abs=1e-12)
            assert -1e-12 <= v <= np.log(2) + 1e-12

    def test_multidimensional_input_projected(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(200, 6))
        b = rng.normal(size=(200, 6)) + 2.0
        v = sample_set_jsd(a, b)
        assert 0.0 <= v <= np.log(2) + 1e-12


class TestPca:
    def test_projection_shape_and_determinism(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(100, 20))
        p1, p2 = pca_project(x, 4), pca_project(x, 4)
        assert p1.shape == (100, 4)
        np.testing.assert_array_equal(p1, p2)

    def test_first_component_captures_dominant_axis(self):
        rng = np.random.default_rng(1)
        x = np.zeros((200, 3))
        x[:, 1] = rng.normal(scale=10.0, size=200)
        x += rng.normal(scale=0.1, size=x.shape)
        p = pca_project(x, 1)
        assert abs(np.corrcoef(p[:, 0], x[:, 1])[0, 1]) > 0.99


class TestEmitGrid:
    def test_single_sample(self, tmp_path):
        img = np.random.default_rng(0).uniform(size=(1, 16, 16))
        path = emit_grid(img, 1, tmp_path / "g.pgm")
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n16 16\n255\n")
        body = np.frombuffer(raw[len(b"P5\n16 16\n255\n"):], dtype=np.uint8)
        np.testing.assert_array_equal(body.reshape(16, 16),
                                      np.round(img[0] * 255).astype(np.uint8))

    def test_tiling_dimensions(self, tmp_path):
        imgs = np.zeros((6, 32, 32))
        path = emit_grid(imgs, 3, tmp_path / "g.pgm")
        header = path.read_bytes().split(b"\n", 3)
        w, h = (int(v) for v in header[1].split())
        assert (w, h) == (3 * 32 + 2, 2 * 32 + 1)

    def test_deterministic_bytes(self, tmp_path):
        imgs = np.random.default_rng(2).uniform(size=(4, 8, 8))
        a = emit_grid(imgs, 2, tmp_path / "a.pgm").read_bytes()
        b = emit_grid(imgs, 2, tmp_path / "b.pgm").read_bytes()
        assert a == b

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(EvalError):
            emit_grid(np.zeros((0, 8, 8)), 2, tmp_path / "g.pgm")


class TestCompare:
    def test_self_comparison_all_ties(self, clean_oracle, clean_dataset):
        net, _ = clean_oracle
        state = tiny_state()
        state.dataset_digest = clean_dataset.digest()
        targets = clean_dataset.targets[:3]
        result = compare_report(state, state, net, targets, seeds=[0, 1, 2],
                                n_per_target=6)
        for metric in METRIC_DIRECTIONS:
            assert result.verdicts[metric] == ["tie"] * 3
            assert result.majority[metric] == "tie"
        csv_text = result.verdict_csv()
        assert csv_text.startswith("metric,vargan_wins,cbigan_wins,ties,majority")
        assert ",tie" in csv_text

    def test_digest_mismatch_rejected(self, clean_oracle, clean_dataset):
        net, _ = clean_oracle
        a, b = tiny_state(seed=0), tiny_state(seed=1)
        a.dataset_digest, b.dataset_digest = "x", "y"
        with pytest.raises(EvalError, match="different datasets"):
            compare_report(a, b, net, clean_dataset.targets[:2], seeds=[0])

    def test_report_fields_recorded(self, clean_oracle, clean_dataset):
        net, _ = clean_oracle
        report = evaluate_model(tiny_state(), net, clean_dataset.targets[:3],
                                n_per_target=6, seed=0)
        assert report.fidelity >= 0 and report.diversity >= 0
        assert report.n_targets == 3 and report.n_per_target == 6
        assert "PCA" in report.feature_space
