from pathlib import Path

import pytest

from neuronfuzz.coverage import profile_dataset
from neuronfuzz.model import load_model
from neuronfuzz.netpbm import load_corpus

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def toy_model():
    return load_model(FIXTURES / "lenet_toy")


@pytest.fixture(scope="session")
def toy_corpus():
    return load_corpus(FIXTURES / "corpus")


@pytest.fixture(scope="session")
def toy_profile(toy_model, toy_corpus):
    images, _, _ = toy_corpus
    return profile_dataset(toy_model, images)


@pytest.fixture(scope="session")
def boundary_model():
    return load_model(FIXTURES / "boundary")


@pytest.fixture(scope="session")
def boundary_tests():
    return load_corpus(FIXTURES / "boundary" / "tests")
