import math
import random

import pytest

from lcplab import benaloh
from lcplab.benaloh import Ciphertext
from lcplab.errors import DecryptionError, DomainError, ParameterError


def test_toy_key_encrypts_by_hand(toy_keys):
    pk, sk = toy_keys
    assert pk.n == 35
    z = benaloh.encrypt(pk, 1, 2)
    # 2^1 * 2^3 mod 35
    assert z.value == 16
    assert benaloh.decrypt(pk, sk, z) == 1


def test_toy_key_decrypts_every_plaintext(toy_keys):
    pk, sk = toy_keys
    units = [u for u in range(2, pk.n) if math.gcd(u, pk.n) == 1]
    for m in range(pk.r):
        for u in units:
            assert benaloh.decrypt(pk, sk, benaloh.encrypt(pk, m, u)) == m


def test_keygen_satisfies_key_conditions(keys):
    pk, sk = keys
    benaloh.validate_keys(pk, sk)
    assert pk.n.bit_length() == 256
    assert (sk.p - 1) % pk.r == 0
    assert math.gcd(pk.r, sk.q - 1) == 1


def test_keygen_is_deterministic_for_a_seed():
    first = benaloh.keygen(5, 128, random.Random(3))
    second = benaloh.keygen(5, 128, random.Random(3))
    assert first == second


def test_homomorphic_add_and_increment(keys, rng):
    pk, sk = keys
    z1 = benaloh.encrypt_random(pk, 4, rng)
    z2 = benaloh.encrypt_random(pk, 9, rng)
    assert benaloh.decrypt(pk, sk, benaloh.homomorphic_add(pk, z1, z2)) == (4 + 9) % pk.r
    assert benaloh.decrypt(pk, sk, benaloh.increment(pk, z1)) == 5
    assert benaloh.decrypt(pk, sk, benaloh.increment(pk, z1, times=3)) == 7


def test_reencrypt_keeps_plaintext_and_opens_with_its_randomizer(keys, rng):
    pk, sk = keys
    z = benaloh.encrypt_random(pk, 6, rng)
    v = 1234567
    z2 = benaloh.reencrypt(pk, z, v)
    assert z2 != z
    assert benaloh.decrypt(pk, sk, z2) == 6
    assert benaloh.open_equality(pk, z, z2, v)
    assert not benaloh.open_equality(pk, z, z2, v + 2)


def test_scale_by_inverse_cancels(keys, rng):
    pk, sk = keys
    z = benaloh.encrypt_random(pk, 3, rng)
    factor = 987654321
    blinded = benaloh.scale(pk, z, factor)
    restored = benaloh.scale(pk, blinded, benaloh.unit_inverse(pk, factor))
    assert restored == z


def test_encrypt_rejects_out_of_range_plaintext(toy_keys):
    pk, _ = toy_keys
    with pytest.raises(DomainError):
        benaloh.encrypt(pk, 3, 2)
    with pytest.raises(DomainError):
        benaloh.encrypt(pk, 0, 7)


def test_decrypt_rejects_non_unit(toy_keys):
    pk, sk = toy_keys
    with pytest.raises(DecryptionError):
        benaloh.decrypt(pk, sk, Ciphertext(7))
    with pytest.raises(DecryptionError):
        benaloh.decrypt(pk, sk, Ciphertext(0))


@pytest.mark.parametrize('r, bits', [
    (4, 256),    # not prime
    (2, 256),    # even
    (11, 32),    # modulus too small
    (2_147_483_647, 64),  # r too large for the primes
])
def test_keygen_rejects_bad_parameters(r, bits):
    with pytest.raises(ParameterError):
        benaloh.keygen(r, bits, random.Random(0))


def test_keypair_from_primes_validates():
    with pytest.raises(ParameterError):
        benaloh.keypair_from_primes(11, 5, 3, 2)  # 3 does not divide 10
    with pytest.raises(ParameterError):
        benaloh.keypair_from_primes(7, 5, 3, 1)  # y = 1 is a residue


def test_public_key_envelope(keys):
    pk, sk = keys
    assert benaloh.public_key_from_hex(benaloh.public_key_to_bytes(pk).hex()) == pk
    assert benaloh.secret_key_from_bytes(benaloh.secret_key_to_bytes(sk)) == sk
    with pytest.raises(DomainError):
        benaloh.public_key_from_bytes(b'XXXX' + benaloh.public_key_to_bytes(pk)[4:])


def test_ciphertext_fixed_width(keys, rng):
    pk, _ = keys
    z = benaloh.encrypt_random(pk, 1, rng)
    data = benaloh.ciphertext_to_bytes(pk, z)
    assert len(data) == 32
    with pytest.raises(DomainError):
        benaloh.ciphertext_from_bytes(pk, data[1:])


def test_default_block_size_exceeds_cycle_size():
    assert benaloh.default_block_size(1) == 3
    assert benaloh.default_block_size(5) == 7
    assert benaloh.default_block_size(20) == 23
