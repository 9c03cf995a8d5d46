import random

import numpy as np
import pytest

from lcplab.config import ProtocolParams
from lcplab.errors import DomainError, ParameterError
from lcplab.safety_index import UPPER, SafetyBuckets, UserSafetyLabel, plaintext_venue_safety, \
    snapshot_safety, user_label_from_blocks, venue_safety


def test_equal_buckets():
    buckets = SafetyBuckets.equal(5)
    assert buckets.count == 5
    np.testing.assert_allclose(buckets.weights(), [0.1, 0.3, 0.5, 0.7, 0.9])
    np.testing.assert_allclose(SafetyBuckets.equal(5, UPPER).weights(), [0.2, 0.4, 0.6, 0.8, 1.0])
    assert buckets.bucket(0.0) == 1
    assert buckets.bucket(1.0) == 5


@pytest.mark.parametrize('edges', [(0.0,), (0.1, 1.0), (0.0, 0.5, 0.5, 1.0), (0.0, 0.9)])
def test_bucket_validation(edges):
    with pytest.raises(ParameterError):
        SafetyBuckets(edges=edges)


def test_label_range():
    with pytest.raises(DomainError):
        UserSafetyLabel(1.2)
    with pytest.raises(DomainError):
        SafetyBuckets.equal().bucket(-0.1)


def test_user_label_is_frequency_weighted():
    assert user_label_from_blocks([0.2, 0.8]).value == pytest.approx(0.5)
    assert user_label_from_blocks([0.2, 0.8], [3, 1]).value == pytest.approx(0.35)
    with pytest.raises(DomainError):
        user_label_from_blocks([])
    with pytest.raises(DomainError):
        user_label_from_blocks([0.2, 0.8], [1])
    with pytest.raises(DomainError):
        user_label_from_blocks([0.2], [0])


def test_venue_safety_from_histogram():
    buckets = SafetyBuckets.equal(5)
    assert venue_safety([0, 0, 1, 1, 1], buckets) == pytest.approx(0.7)
    with pytest.raises(DomainError):
        venue_safety([0, 0, 0, 0, 0], buckets)
    with pytest.raises(DomainError):
        venue_safety([1, 1], buckets)


@pytest.mark.parametrize('histogram, expected', [
    ((0, 0, 0, 0, 7), 0.9),
    ((1, 0, 0, 0, 1), 0.5),
    ((3, 0, 0, 0, 0), 0.1),
])
def test_venue_safety_examples(histogram, expected):
    assert venue_safety(histogram, SafetyBuckets.equal()) == pytest.approx(expected)


def test_snapshot_matches_plaintext():
    buckets = SafetyBuckets.equal(5)
    labels = [0.7, 0.9, 0.5]
    params = ProtocolParams(k=3, s=6, modulus_bits=256)
    score = snapshot_safety(labels, buckets, params, random.Random(3))
    assert score == pytest.approx(plaintext_venue_safety(labels, buckets))
    assert score == pytest.approx(0.7)


def test_snapshot_refuses_bad_labels():
    with pytest.raises(DomainError):
        snapshot_safety([0.5, 1.5], SafetyBuckets.equal(), ProtocolParams(modulus_bits=256),
                        random.Random(1))
