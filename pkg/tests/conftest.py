import os
import tempfile

import numpy as np
import pytest

from comrom.library import load_library, save_library
from comrom.materials import AluminumConductivity, ConstantConductivity
from comrom.thermal_fin import NODE_MAP_REGISTRY, build_catalog
from comrom.training import TrainingConfig, train_library

TINY_SEED = 1234
TINY_N_SAMPLE = 12


@pytest.fixture(scope="session")
def catalog():
    return build_catalog()


@pytest.fixture(scope="session")
def aluminum():
    return AluminumConductivity()


@pytest.fixture(scope="session")
def unit_stub():
    return ConstantConductivity(1.0)


@pytest.fixture(scope="session")
def tiny_library(aluminum):
    """Small trained library shared by the online-phase unit tests.

    Cached on disk between sessions (config-checked); set COMROM_TEST_NO_CACHE
    to force retraining.
    """
    cfg = TrainingConfig(seed=TINY_SEED, n_sample=TINY_N_SAMPLE)
    cache = os.path.join(tempfile.gettempdir(), "comrom_tiny_library.npz")
    if not os.environ.get("COMROM_TEST_NO_CACHE") and os.path.exists(cache):
        try:
            lib = load_library(cache, NODE_MAP_REGISTRY)
            if lib.provenance.get("config") == cfg.to_dict():
                return lib
        except Exception:
            pass
    cat = build_catalog()
    train_library(cat, cfg, aluminum, log=None)
    save_library(cat, cache)
    return cat


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
