import pytest

from privess import groups
from privess.rng import StreamRng


@pytest.fixture(scope="session")
def tiny():
    return groups.get_profile("tiny")


@pytest.fixture(scope="session")
def test64():
    return groups.get_profile("test64")


@pytest.fixture()
def rng():
    return StreamRng(b"test-suite")


def naive_mod_exp(base: int, exp: int, modulus: int) -> int:
    """Independent oracle: exponentiation by repeated multiplication."""
    acc = 1
    for _ in range(exp):
        acc = acc * base % modulus
    return acc
