"""Shared fixtures: one small synthetic dataset, extracted once per session."""

import numpy as np
import pytest

from scenebow.pipeline import build_region_table, extract_dataset
from scenebow.sift import SiftParams
from scenebow.synth import synth_dataset


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    return synth_dataset(root, images=9, seed=3)


@pytest.fixture(scope="session")
def extracted(small_dataset, tmp_path_factory):
    cache = tmp_path_factory.mktemp("cache")
    return extract_dataset(small_dataset, SiftParams(), cache_dir=cache)


@pytest.fixture(scope="session")
def region_table(small_dataset):
    return build_region_table(small_dataset)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
