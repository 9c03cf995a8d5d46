"""(k, n) Shamir threshold secret sharing over a prime field."""
import logging
import random
import struct
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from Crypto.Util.number import inverse

from .benaloh import next_prime
from .errors import DomainError, DuplicateShareError, InsufficientSharesError, ParameterError
from .utils import byte_width, fixed_to_int, int_to_fixed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShareParams:
    threshold: int
    total: int
    field_prime: int

    def __post_init__(self):
        if not 1 <= self.threshold <= self.total:
            raise ParameterError(
                f"need 1 <= k <= n, got k={self.threshold}, n={self.total}"
            )

    @property
    def width(self) -> int:
        return byte_width(self.field_prime.bit_length())


@dataclass(frozen=True)
class Share:
    index: int
    value: int


def field_prime_for(modulus_bits: int) -> int:
    """Smallest prime above 2^(N/2); it exceeds either prime factor of an N-bit modulus."""
    return next_prime(1 << (modulus_bits - modulus_bits // 2))


def cycle_share_params(cycle_size: int, modulus_bits: int) -> ShareParams:
    # one share per check-in of a cycle: n = k
    return ShareParams(threshold=cycle_size, total=cycle_size,
                       field_prime=field_prime_for(modulus_bits))


def _evaluate(coefficients: Sequence[int], x: int, prime: int) -> int:
    accum = 0
    for coeff in reversed(coefficients):
        accum = (accum * x + coeff) % prime
    return accum


def split(secret: int, params: ShareParams, rng: random.Random) -> List[Share]:
    """Split secret into n shares of a random degree k-1 polynomial."""
    if not 0 <= secret < params.field_prime:
        raise ParameterError("secret must be smaller than the field prime")
    coefficients = [secret] + [
        rng.randrange(params.field_prime) for _ in range(params.threshold - 1)
    ]
    return [
        Share(index=i, value=_evaluate(coefficients, i, params.field_prime))
        for i in range(1, params.total + 1)
    ]


def split_with_coefficients(coefficients: Sequence[int], params: ShareParams) -> List[Share]:
    """Deterministic split for a given polynomial (constant term is the secret)."""
    if len(coefficients) != params.threshold:
        raise ParameterError("polynomial degree must be k-1")
    return [
        Share(index=i, value=_evaluate(coefficients, i, params.field_prime))
        for i in range(1, params.total + 1)
    ]


def interpolate_at(points: Sequence[Tuple[int, int]], x: int, prime: int) -> int:
    """Lagrange interpolation through distinct points, evaluated at x."""
    xs = [px for px, _ in points]
    if len(set(xs)) != len(xs):
        raise DuplicateShareError("interpolation points must be distinct")
    total = 0
    for i, (xi, yi) in enumerate(points):
        num, den = 1, 1
        for j, xj in enumerate(xs):
            if i != j:
                num = num * (x - xj) % prime
                den = den * (xi - xj) % prime
        total = (total + yi * num * inverse(den, prime)) % prime
    return total


def reconstruct(shares: Sequence[Share], params: ShareParams) -> int:
    """Recover the secret from at least k shares."""
    indices = [share.index for share in shares]
    if len(set(indices)) != len(indices):
        raise DuplicateShareError(f"duplicate share indices in {sorted(indices)}")
    if len(shares) < params.threshold:
        raise InsufficientSharesError(
            f"{len(shares)} shares given, {params.threshold} required"
        )
    points = [(share.index, share.value) for share in shares]
    return interpolate_at(points, 0, params.field_prime)


def share_to_bytes(share: Share, params: ShareParams) -> bytes:
    return struct.pack('>I', share.index) + int_to_fixed(share.value, params.width)


def share_from_bytes(data: bytes, params: ShareParams) -> Share:
    if len(data) != 4 + params.width:
        raise DomainError("share encoding has the wrong length")
    (index,) = struct.unpack_from('>I', data)
    value = fixed_to_int(data[4:])
    if value >= params.field_prime:
        raise DomainError("share value outside the field")
    return Share(index=index, value=value)
