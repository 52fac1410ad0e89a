"""Shared fixtures. Slow artifacts (datasets, the oracle regressor) are
cached on disk keyed by their generation parameters so repeated runs are
cheap; delete tests/.cache to force regeneration."""

from pathlib import Path

import numpy as np
import pytest

CACHE = Path(__file__).parent / ".cache"


@pytest.fixture(scope="session")
def cache_dir():
    CACHE.mkdir(exist_ok=True)
    return CACHE


@pytest.fixture(scope="session")
def clean_dataset(cache_dir):
    """Noise-free 1200-record dataset used for measurement calibration."""
    from vargan.data import generate_dataset, load_dataset, save_dataset

    path = cache_dir / "clean1200"
    if path.exists():
        return load_dataset(path)
    ds = generate_dataset(1200, seed=23, noise=False)
    save_dataset(ds, path)
    return ds


@pytest.fixture(scope="session")
def clean_oracle(cache_dir, clean_dataset):
    """Oracle regressor trained on the clean dataset; returns (net, holdout_error)."""
    from vargan.arch import ArchConfig
    from vargan.metrics import oracle_load, oracle_save, train_oracle_regressor

    path = cache_dir / f"oracle_{clean_dataset.digest()[:16]}.vgor"
    err_path = path.with_suffix(".err")
    if path.exists() and err_path.exists():
        net, _ = oracle_load(path)
        return net, float(err_path.read_text())
    arch = ArchConfig(image_size=clean_dataset.image_size,
                      landmark_count=clean_dataset.landmark_count)
    net, err = train_oracle_regressor(clean_dataset, arch, seed=0,
                                      target_error=0.03, max_steps=4000)
    oracle_save(net, arch, path)
    err_path.write_text(f"{err!r}\n")
    return net, err
