import itertools

import pytest
from Crypto.Util.number import isPrime

from lcplab import threshold
from lcplab.errors import DomainError, DuplicateShareError, InsufficientSharesError, \
    ParameterError
from lcplab.threshold import Share, ShareParams


def test_known_polynomial():
    params = ShareParams(threshold=2, total=3, field_prime=11)
    shares = threshold.split_with_coefficients([5, 3], params)
    assert [s.value for s in shares] == [8, 0, 3]
    assert threshold.reconstruct(shares[1:], params) == 5


def test_any_k_subset_reconstructs(rng):
    params = ShareParams(threshold=3, total=5, field_prime=threshold.field_prime_for(256))
    secret = rng.getrandbits(128)
    shares = threshold.split(secret, params, rng)
    for subset in itertools.combinations(shares, 3):
        assert threshold.reconstruct(subset, params) == secret
    assert threshold.reconstruct(shares, params) == secret


def test_fewer_than_k_shares_raise(rng):
    params = ShareParams(threshold=4, total=4, field_prime=threshold.field_prime_for(128))
    shares = threshold.split(123, params, rng)
    with pytest.raises(InsufficientSharesError):
        threshold.reconstruct(shares[:3], params)


def test_duplicate_indices_raise(rng):
    params = ShareParams(threshold=2, total=3, field_prime=threshold.field_prime_for(128))
    shares = threshold.split(99, params, rng)
    with pytest.raises(DuplicateShareError):
        threshold.reconstruct([shares[0], shares[0]], params)


def test_single_share_is_consistent_with_any_secret():
    # for k=2 every candidate secret has a line through (0, s) and the observed share
    params = ShareParams(threshold=2, total=2, field_prime=13)
    observed = Share(index=1, value=7)
    for candidate in range(13):
        slope = (observed.value - candidate) % 13
        shares = threshold.split_with_coefficients([candidate, slope], params)
        assert shares[0] == observed


def test_share_params_validate():
    with pytest.raises(ParameterError):
        ShareParams(threshold=3, total=2, field_prime=11)
    with pytest.raises(ParameterError):
        ShareParams(threshold=0, total=2, field_prime=11)


def test_field_prime_exceeds_half_modulus():
    prime = threshold.field_prime_for(512)
    assert prime > 1 << 256
    assert isPrime(prime)


def test_cycle_share_params_issue_one_share_per_checkin():
    params = threshold.cycle_share_params(5, 512)
    assert (params.threshold, params.total) == (5, 5)


def test_secret_must_fit_the_field(rng):
    params = ShareParams(threshold=2, total=2, field_prime=11)
    with pytest.raises(ParameterError):
        threshold.split(11, params, rng)


def test_share_encoding(rng):
    params = threshold.cycle_share_params(3, 256)
    share = threshold.split(42, params, rng)[2]
    data = threshold.share_to_bytes(share, params)
    assert threshold.share_from_bytes(data, params) == share
    with pytest.raises(DomainError):
        threshold.share_from_bytes(data[:-1], params)
