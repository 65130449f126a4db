import numpy as np
import pytest

from tempersmc.forward_model import toy_generate_data
from tempersmc.parallel import limit_blas_threads
from tempersmc.param_space import load_preset
from tempersmc.targets import ToyPosterior

TOY_DATA_SEED = 7

# small-matrix factorizations across many worker threads: per-call BLAS
# threading only adds contention
limit_blas_threads(1)


@pytest.fixture(scope="session")
def toy_space():
    return load_preset("toy")


@pytest.fixture(scope="session")
def narrow_space():
    return load_preset("psu3dice_narrow_priors")


@pytest.fixture(scope="session")
def wide_space():
    return load_preset("psu3dice_wide_priors")


@pytest.fixture(scope="session")
def small_toy_dataset():
    """A reduced simulated dataset for fast engine tests."""
    rng = np.random.default_rng(TOY_DATA_SEED)
    return toy_generate_data(60, 1.7, 0.5, rng)


@pytest.fixture(scope="session")
def small_toy_target(toy_space, small_toy_dataset):
    locations, observations = small_toy_dataset
    return ToyPosterior(toy_space, locations, observations, metric=0)
