"""Benaloh cryptosystem: key generation, encryption, decryption and re-encryption.

Plaintexts live in Z_r for a small odd prime block size r. Ciphertexts are
elements of Z*_n of the form y^m * u^r mod n, so multiplying ciphertexts adds
plaintexts and multiplying by a fresh r-th power re-randomizes without
changing the plaintext.
"""
import logging
import math
import random
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Tuple

from Crypto.Util.number import getPrime, inverse, isPrime

from . import config
from .errors import DecryptionError, DomainError, ParameterError
from .utils import byte_width, fixed_to_int, int_to_fixed, random_unit, require_unit

logger = logging.getLogger(__name__)

_KEY_ENVELOPE_TAG = b'BNL1'


@dataclass(frozen=True)
class BenalohPublicKey:
    n: int
    y: int
    r: int
    modulus_bits: int

    @property
    def width(self) -> int:
        return byte_width(self.modulus_bits)


@dataclass(frozen=True)
class BenalohSecretKey:
    p: int
    q: int

    @property
    def phi(self) -> int:
        return (self.p - 1) * (self.q - 1)


@dataclass(frozen=True)
class Ciphertext:
    value: int


def next_prime(value: int) -> int:
    """Smallest prime strictly greater than value."""
    candidate = value + 1
    while not isPrime(candidate):
        candidate += 1
    return candidate


def default_block_size(cycle_size: int) -> int:
    """Smallest odd prime exceeding the cycle size."""
    return max(3, next_prime(cycle_size))


def _check_block_size(r: int):
    if r < 3 or r % 2 == 0 or not isPrime(r):
        raise ParameterError(f"block size r must be an odd prime, got {r}")


def _prime_with_block(r: int, bits: int, rng: random.Random) -> int:
    # p = r*a + 1 with gcd(r, a) = 1 so that gcd(r, (p-1)/r) = 1
    lo = (1 << (bits - 1)) // r + 1
    hi = ((1 << bits) - 2) // r
    while True:
        a = rng.randrange(lo, hi + 1)
        a += a % 2
        if a % r == 0:
            continue
        p = r * a + 1
        if p.bit_length() == bits and isPrime(p, randfunc=rng.randbytes):
            return p


def validate_keys(pk: BenalohPublicKey, sk: BenalohSecretKey):
    """Raise ParameterError unless the keys satisfy every key-generation condition."""
    p, q, r = sk.p, sk.q, pk.r
    if p == q or p * q != pk.n:
        raise ParameterError("secret primes do not factor the modulus")
    if (p - 1) % r != 0:
        raise ParameterError("r does not divide p-1")
    if math.gcd(r, (p - 1) // r) != 1:
        raise ParameterError("gcd(r, (p-1)/r) != 1")
    if math.gcd(r, q - 1) != 1:
        raise ParameterError("gcd(r, q-1) != 1")
    if pow(pk.y, sk.phi // r, pk.n) == 1:
        raise ParameterError("y is an r-th residue")


def keypair_from_primes(p: int, q: int, r: int, y: int,
                        modulus_bits: int = 0) -> Tuple[BenalohPublicKey, BenalohSecretKey]:
    """Assemble and validate a key pair from explicit primes and generator."""
    n = p * q
    pk = BenalohPublicKey(n=n, y=y, r=r, modulus_bits=modulus_bits or n.bit_length())
    sk = BenalohSecretKey(p=p, q=q)
    validate_keys(pk, sk)
    return pk, sk


def keygen(r: int, modulus_bits: int,
           rng: random.Random) -> Tuple[BenalohPublicKey, BenalohSecretKey]:
    """Generate a Benaloh key pair with block size r and an N-bit modulus."""
    _check_block_size(r)
    if modulus_bits < config.MIN_MODULUS_BITS:
        raise ParameterError(f"modulus_bits must be >= {config.MIN_MODULUS_BITS}")
    if modulus_bits > config.MAX_MODULUS_BITS:
        raise ParameterError(f"modulus_bits must be <= {config.MAX_MODULUS_BITS}")
    half = modulus_bits // 2
    if r.bit_length() + 8 > half:
        raise ParameterError(
            f"modulus of {modulus_bits} bits cannot host primes with {r} | p-1"
        )

    p = _prime_with_block(r, half, rng)
    while True:
        q = getPrime(modulus_bits - half, randfunc=rng.randbytes)
        if q != p and math.gcd(r, q - 1) == 1:
            break

    n = p * q
    phi = (p - 1) * (q - 1)
    while True:
        y = random_unit(rng, n)
        if pow(y, phi // r, n) != 1:
            break

    pk = BenalohPublicKey(n=n, y=y, r=r, modulus_bits=modulus_bits)
    sk = BenalohSecretKey(p=p, q=q)
    logger.debug(f"Generated Benaloh key: {modulus_bits} bits, r={r}")
    return pk, sk


def encrypt(pk: BenalohPublicKey, m: int, u: int) -> Ciphertext:
    if not 0 <= m < pk.r:
        raise DomainError(f"plaintext {m} outside Z_{pk.r}")
    require_unit(u, pk.n, 'randomizer u')
    return Ciphertext(pow(pk.y, m, pk.n) * pow(u, pk.r, pk.n) % pk.n)


def encrypt_random(pk: BenalohPublicKey, m: int, rng: random.Random) -> Ciphertext:
    return encrypt(pk, m, random_unit(rng, pk.n))


@lru_cache(maxsize=64)
def _residue_table(n: int, y: int, r: int, phi: int) -> Dict[int, int]:
    # z^(phi/r) == (y^(phi/r))^m  <=>  (y^-m z)^(phi/r) == 1
    base = pow(y, phi // r, n)
    table = {}
    acc = 1
    for m in range(r):
        table[acc] = m
        acc = acc * base % n
    return table


def decrypt(pk: BenalohPublicKey, sk: BenalohSecretKey, z: Ciphertext) -> int:
    """Recover m by testing which y^-m * z is an r-th residue."""
    if not 1 <= z.value < pk.n or math.gcd(z.value, pk.n) != 1:
        raise DecryptionError("ciphertext is not a unit modulo n")
    table = _residue_table(pk.n, pk.y, pk.r, sk.phi)
    m = table.get(pow(z.value, sk.phi // pk.r, pk.n))
    if m is None:
        raise DecryptionError("no plaintext passes the residuosity test")
    return m


def reencrypt(pk: BenalohPublicKey, z: Ciphertext, v: int) -> Ciphertext:
    require_unit(v, pk.n, 'randomizer v')
    return Ciphertext(z.value * pow(v, pk.r, pk.n) % pk.n)


def homomorphic_add(pk: BenalohPublicKey, z1: Ciphertext, z2: Ciphertext) -> Ciphertext:
    require_unit(z1.value, pk.n, 'ciphertext')
    require_unit(z2.value, pk.n, 'ciphertext')
    return Ciphertext(z1.value * z2.value % pk.n)


def increment(pk: BenalohPublicKey, z: Ciphertext, times: int = 1) -> Ciphertext:
    """Add `times` to the plaintext by multiplying with y^times."""
    return Ciphertext(z.value * pow(pk.y, times, pk.n) % pk.n)


def scale(pk: BenalohPublicKey, z: Ciphertext, factor: int) -> Ciphertext:
    """Multiply by an arbitrary unit (blinding and unblinding)."""
    require_unit(factor, pk.n, 'factor')
    return Ciphertext(z.value * factor % pk.n)


def open_equality(pk: BenalohPublicKey, z1: Ciphertext, z2: Ciphertext, w: int) -> bool:
    """True iff z2 is the re-encryption of z1 under w."""
    if not 1 <= w < pk.n or math.gcd(w, pk.n) != 1:
        return False
    return z1.value * pow(w, pk.r, pk.n) % pk.n == z2.value


def unit_inverse(pk: BenalohPublicKey, value: int) -> int:
    require_unit(value, pk.n)
    return inverse(value, pk.n)


# Serialization

def ciphertext_to_bytes(pk: BenalohPublicKey, z: Ciphertext) -> bytes:
    return int_to_fixed(z.value, pk.width)


def ciphertext_from_bytes(pk: BenalohPublicKey, data: bytes) -> Ciphertext:
    if len(data) != pk.width:
        raise DomainError(f"ciphertext must be {pk.width} bytes, got {len(data)}")
    return Ciphertext(fixed_to_int(data))


def _pack_ints(*values: int) -> bytes:
    out = [_KEY_ENVELOPE_TAG]
    for value in values:
        raw = value.to_bytes(max(1, byte_width(value.bit_length())), 'big')
        out.append(struct.pack('>I', len(raw)) + raw)
    return b''.join(out)


def _unpack_ints(data: bytes, count: int) -> Tuple[int, ...]:
    if data[:4] != _KEY_ENVELOPE_TAG:
        raise DomainError("not a Benaloh key envelope")
    values, pos = [], 4
    for _ in range(count):
        (length,) = struct.unpack_from('>I', data, pos)
        pos += 4
        values.append(int.from_bytes(data[pos:pos + length], 'big'))
        pos += length
    if pos != len(data):
        raise DomainError("trailing bytes in key envelope")
    return tuple(values)


def public_key_to_bytes(pk: BenalohPublicKey) -> bytes:
    return _pack_ints(pk.n, pk.y, pk.r, pk.modulus_bits)


def public_key_from_bytes(data: bytes) -> BenalohPublicKey:
    n, y, r, bits = _unpack_ints(data, 4)
    return BenalohPublicKey(n=n, y=y, r=r, modulus_bits=bits)


def public_key_from_hex(text: str) -> BenalohPublicKey:
    return public_key_from_bytes(bytes.fromhex(text.strip()))


def secret_key_to_bytes(sk: BenalohSecretKey) -> bytes:
    return _pack_ints(sk.p, sk.q)


def secret_key_from_bytes(data: bytes) -> BenalohSecretKey:
    p, q = _unpack_ints(data, 2)
    return BenalohSecretKey(p=p, q=q)
