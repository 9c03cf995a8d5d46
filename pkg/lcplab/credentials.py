"""Provider and venue signatures, presence tokens and blind-signed epoch pseudonyms.

Signatures are RSA with a full-domain hash (SHAKE256 expanded to the modulus
width). Pseudonyms are obtained with classic blind RSA so the provider never
sees the token it signs.
"""
import logging
import math
import random
import struct
from dataclasses import dataclass
from typing import Set, Tuple

from Crypto.Hash import SHAKE256
from Crypto.PublicKey import RSA
from Crypto.Util.number import inverse

from .errors import CredentialError
from .utils import fixed_to_int, int_to_fixed

logger = logging.getLogger(__name__)

TOKEN_RANDOM_BYTES = 32


@dataclass(frozen=True)
class SignatureKeyPair:
    public: RSA.RsaKey
    private: RSA.RsaKey


@dataclass(frozen=True)
class Pseudonym:
    epoch: int
    token: bytes
    signature: bytes

    def message(self) -> bytes:
        return pseudonym_message(self.epoch, self.token)

    @property
    def alias(self) -> str:
        return 'anon-' + self.token[:6].hex()


@dataclass(frozen=True)
class PresenceToken:
    venue_id: int
    epoch: int
    timestamp_us: int
    nonce: bytes
    signature: bytes = b''

    def message(self) -> bytes:
        return (struct.pack('>QQQ', self.venue_id, self.epoch, self.timestamp_us)
                + self.nonce)

    @property
    def timestamp_ms(self) -> float:
        return self.timestamp_us / 1000.0


def generate_signature_keys(bits: int, rng: random.Random) -> SignatureKeyPair:
    private = RSA.generate(bits, randfunc=rng.randbytes)
    return SignatureKeyPair(public=private.publickey(), private=private)


def _check_key(key, need_private: bool = False):
    if not isinstance(key, RSA.RsaKey):
        raise CredentialError("not an RSA key")
    if need_private and not key.has_private():
        raise CredentialError("signing requires a private key")


def full_domain_hash(message: bytes, key: RSA.RsaKey) -> int:
    digest = SHAKE256.new(message).read(key.size_in_bytes())
    return fixed_to_int(digest) % key.n


def sign(key: RSA.RsaKey, message: bytes) -> bytes:
    _check_key(key, need_private=True)
    signature = pow(full_domain_hash(message, key), key.d, key.n)
    return int_to_fixed(signature, key.size_in_bytes())


def verify(pubkey: RSA.RsaKey, message: bytes, signature: bytes) -> bool:
    _check_key(pubkey)
    if len(signature) != pubkey.size_in_bytes():
        return False
    value = fixed_to_int(signature)
    if value >= pubkey.n:
        return False
    return pow(value, pubkey.e, pubkey.n) == full_domain_hash(message, pubkey)


# Blind RSA

def random_blinding_factor(pubkey: RSA.RsaKey, rng: random.Random) -> int:
    while True:
        f = rng.randrange(2, pubkey.n)
        if math.gcd(f, pubkey.n) == 1:
            return f


def blind(pubkey: RSA.RsaKey, message: bytes, factor: int) -> int:
    _check_key(pubkey)
    if math.gcd(factor, pubkey.n) != 1 or not 0 < factor < pubkey.n:
        raise CredentialError("blinding factor is not invertible")
    return full_domain_hash(message, pubkey) * pow(factor, pubkey.e, pubkey.n) % pubkey.n


def blind_sign(key: RSA.RsaKey, blinded: int) -> int:
    _check_key(key, need_private=True)
    return pow(blinded, key.d, key.n)


def unblind(pubkey: RSA.RsaKey, blinded_signature: int, factor: int) -> bytes:
    if math.gcd(factor, pubkey.n) != 1:
        raise CredentialError("blinding factor is not invertible")
    signature = blinded_signature * inverse(factor, pubkey.n) % pubkey.n
    return int_to_fixed(signature, pubkey.size_in_bytes())


class PseudonymIssuer:
    """Provider side of pseudonym issuance: at most one blind signature per (user, epoch)."""

    def __init__(self, keys: SignatureKeyPair):
        self.keys = keys
        self.ledger: Set[Tuple[str, int]] = set()

    def issue(self, user_id: str, epoch: int, blinded: int) -> int:
        if (user_id, epoch) in self.ledger:
            logger.info(f"Refusing second pseudonym for {user_id} in epoch {epoch}")
            raise CredentialError(f"{user_id} already holds a pseudonym for epoch {epoch}")
        self.ledger.add((user_id, epoch))
        return blind_sign(self.keys.private, blinded)


def pseudonym_message(epoch: int, token: bytes) -> bytes:
    return struct.pack('>Q', epoch) + token


def request_pseudonym(provider_pub: RSA.RsaKey, epoch: int,
                      rng: random.Random) -> Tuple[bytes, int, int]:
    """User side: fresh token, blinding factor and the blinded message to send."""
    token = rng.randbytes(TOKEN_RANDOM_BYTES)
    factor = random_blinding_factor(provider_pub, rng)
    return token, factor, blind(provider_pub, pseudonym_message(epoch, token), factor)


def finish_pseudonym(provider_pub: RSA.RsaKey, epoch: int, token: bytes,
                     factor: int, blinded_signature: int) -> Pseudonym:
    signature = unblind(provider_pub, blinded_signature, factor)
    pseudonym = Pseudonym(epoch=epoch, token=token, signature=signature)
    if not verify_pseudonym(provider_pub, pseudonym):
        raise CredentialError("provider returned an invalid blind signature")
    return pseudonym


def verify_pseudonym(provider_pub: RSA.RsaKey, pseudonym: Pseudonym) -> bool:
    return verify(provider_pub, pseudonym.message(), pseudonym.signature)


def check_pseudonym_fresh(spent: Set[Tuple[bytes, int]], pseudonym: Pseudonym,
                          epoch: int) -> bool:
    """Record a pseudonym's use at a venue; False if already used this epoch."""
    key = (pseudonym.token, epoch)
    if key in spent:
        return False
    spent.add(key)
    return True


def sign_presence_token(key: RSA.RsaKey, token: PresenceToken) -> PresenceToken:
    return PresenceToken(venue_id=token.venue_id, epoch=token.epoch,
                         timestamp_us=token.timestamp_us, nonce=token.nonce,
                         signature=sign(key, token.message()))


def verify_presence_token(venue_pub: RSA.RsaKey, token: PresenceToken) -> bool:
    return verify(venue_pub, token.message(), token.signature)
