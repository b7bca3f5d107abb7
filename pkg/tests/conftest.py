import numpy as np
import pytest

from tdid.backend import MockBackend, MockWorldConfig
from tdid.enrollment import EnrollmentConfig


@pytest.fixture
def clean_cfg():
    return MockWorldConfig(num_classes=4, dim=16, noise_sigma=0.0, seed=7)


@pytest.fixture
def clean_backend(clean_cfg):
    return MockBackend(clean_cfg)


@pytest.fixture
def noisy_backend():
    return MockBackend(MockWorldConfig(num_classes=6, dim=24, noise_sigma=0.2, seed=11))


@pytest.fixture
def enroll_cfg():
    return EnrollmentConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
