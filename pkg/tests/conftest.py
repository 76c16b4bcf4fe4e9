import numpy as np
import pytest
import torch

torch.manual_seed(0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture()
def image64(rng):
    return rng.random((3, 64, 64), dtype=np.float32)


@pytest.fixture(scope="session")
def natural240():
    from maskanynet.data import natural_corpus

    return natural_corpus(240, size=64, seed=0)
