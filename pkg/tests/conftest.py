"""Shared fixtures: seeded generators and keys reused across a test module."""
import random

import pytest

from lcplab import benaloh, credentials
from lcplab.lcp_model import DISCRETE, INTERVAL, DimensionSpec


@pytest.fixture
def rng():
    return random.Random(42)


@pytest.fixture(scope='module')
def toy_keys():
    """p=7, q=5, r=3, y=2: small enough to check by hand."""
    return benaloh.keypair_from_primes(7, 5, 3, 2)


@pytest.fixture(scope='module')
def keys():
    return benaloh.keygen(11, 256, random.Random(7))


@pytest.fixture(scope='module')
def rsa_keys():
    return credentials.generate_signature_keys(1024, random.Random(11))


@pytest.fixture
def age():
    return DimensionSpec(name='age', kind=INTERVAL, boundaries=(0, 18, 30, 45, 65, 120))


@pytest.fixture
def gender():
    return DimensionSpec(name='gender', kind=DISCRETE,
                         boundaries=('female', 'male', ('other', 'unstated')))


def scenario(users, k=3, s=5, adversaries=(), venues=None, name='test', **extra):
    document = {
        'name': name,
        'params': {'k': k, 's': s, 'modulus_bits': 256},
        'dimensions': [{'name': 'age', 'type': 'interval',
                        'boundaries': [0, 18, 30, 45, 65, 120]}],
        'actors': {'venues': venues or [{'id': 'cafe', 'venue_id': 1}], 'users': users},
        'adversaries': list(adversaries),
    }
    document.update(extra)
    return document


@pytest.fixture
def make_scenario():
    return scenario
