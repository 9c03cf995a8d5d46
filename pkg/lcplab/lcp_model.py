"""Location-centric profile model: dimensions, sub-ranges and encrypted counter sets."""
import logging
import random
from collections import Counter
from dataclasses import dataclass
from typing import Any, List, Mapping, Optional, Sequence, Tuple

from . import benaloh, wire
from .benaloh import BenalohPublicKey, BenalohSecretKey, Ciphertext
from .errors import DecryptionError, DomainError, ParameterError
from .utils import random_unit, require_unit

logger = logging.getLogger(__name__)

INTERVAL = 'interval'
DISCRETE = 'discrete'


@dataclass(frozen=True)
class DimensionSpec:
    """A profile dimension split into b sub-ranges.

    Interval dimensions take sorted boundaries [x0, x1, ..., xb] and define the
    half-open sub-ranges [x_i, x_{i+1}); `closed_upper` makes the last one
    closed. Discrete dimensions take one entry per sub-range, each a value or a
    list of values.
    """

    name: str
    kind: str
    boundaries: Tuple[Any, ...]
    closed_upper: bool = False

    def __post_init__(self):
        if self.kind == INTERVAL:
            if len(self.boundaries) < 2:
                raise ParameterError(f"{self.name}: need at least two boundaries")
            if any(lo >= hi for lo, hi in zip(self.boundaries, self.boundaries[1:])):
                raise ParameterError(f"{self.name}: boundaries must increase strictly")
        elif self.kind == DISCRETE:
            if not self.boundaries:
                raise ParameterError(f"{self.name}: need at least one value set")
            seen = [v for group in self._groups() for v in group]
            if len(seen) != len(set(seen)):
                raise ParameterError(f"{self.name}: discrete sub-ranges overlap")
        else:
            raise ParameterError(f"{self.name}: unknown dimension type {self.kind!r}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> 'DimensionSpec':
        boundaries = tuple(
            tuple(b) if isinstance(b, list) else b for b in values['boundaries']
        )
        return cls(name=values['name'], kind=values.get('type', INTERVAL),
                   boundaries=boundaries,
                   closed_upper=bool(values.get('closed_upper', False)))

    def _groups(self) -> List[Tuple[Any, ...]]:
        return [b if isinstance(b, tuple) else (b,) for b in self.boundaries]

    @property
    def b(self) -> int:
        if self.kind == INTERVAL:
            return len(self.boundaries) - 1
        return len(self.boundaries)

    def labels(self) -> List[str]:
        if self.kind == DISCRETE:
            return ['|'.join(str(v) for v in group) for group in self._groups()]
        labels = [f"[{lo},{hi})" for lo, hi in zip(self.boundaries, self.boundaries[1:])]
        if self.closed_upper:
            labels[-1] = labels[-1][:-1] + ']'
        return labels

    def validate_for(self, r: int):
        if self.b >= r:
            raise ParameterError(
                f"{self.name}: {self.b} sub-ranges do not fit plaintext space Z_{r}"
            )


@dataclass(frozen=True)
class Profile:
    values: Mapping[str, Any]

    def value(self, dimension: str):
        return self.values[dimension]


@dataclass(frozen=True)
class EncryptedCounter:
    count_part: Ciphertext
    index_part: Ciphertext


@dataclass(frozen=True)
class CounterSet:
    dimension: str
    counters: Tuple[EncryptedCounter, ...]
    checkins: int = 0

    @property
    def b(self) -> int:
        return len(self.counters)

    def __getitem__(self, position: int) -> EncryptedCounter:
        return self.counters[position]


@dataclass(frozen=True)
class Witness:
    """Prover secrets linking C_prev to C_next: incremented index and per-record randoms."""

    j: int
    randoms: Tuple[Tuple[int, int], ...]
    blinding: Optional[int] = None


def classify(value, spec: DimensionSpec) -> int:
    """Return the 1-based sub-range index containing value."""
    if spec.kind == DISCRETE:
        for j, group in enumerate(spec._groups(), start=1):
            if value in group:
                return j
        raise DomainError(f"{value!r} is not a value of {spec.name}")
    bounds = spec.boundaries
    for j, (lo, hi) in enumerate(zip(bounds, bounds[1:]), start=1):
        if lo <= value < hi:
            return j
    if spec.closed_upper and value == bounds[-1]:
        return spec.b
    raise DomainError(f"{value!r} outside range of {spec.name}")


def init_counters(pk: BenalohPublicKey, spec: DimensionSpec,
                  rng: random.Random) -> CounterSet:
    """Fresh encryptions of count 0 and index l for every sub-range l."""
    spec.validate_for(pk.r)
    counters = tuple(
        EncryptedCounter(count_part=benaloh.encrypt_random(pk, 0, rng),
                         index_part=benaloh.encrypt_random(pk, l, rng))
        for l in range(1, spec.b + 1)
    )
    return CounterSet(dimension=spec.name, counters=counters, checkins=0)


def rerandomize(pk: BenalohPublicKey, record: EncryptedCounter, v: int, v_prime: int,
                increment: int = 0, blinding: Optional[int] = None) -> EncryptedCounter:
    """RE(v, v', record) with an optional count increment and blinding factor."""
    count = benaloh.reencrypt(pk, record.count_part, v)
    index = benaloh.reencrypt(pk, record.index_part, v_prime)
    if increment:
        count = benaloh.increment(pk, count, increment)
    if blinding is not None:
        count = benaloh.scale(pk, count, blinding)
        index = benaloh.scale(pk, index, blinding)
    return EncryptedCounter(count_part=count, index_part=index)


def reencrypt_and_increment(pk: BenalohPublicKey, c_prev: CounterSet, j: int,
                            rng: random.Random,
                            blinding: Optional[int] = None) -> Tuple[CounterSet, Witness]:
    """Re-encrypt every record, incrementing the count of record j; order is preserved."""
    if not 1 <= j <= c_prev.b:
        raise DomainError(f"index {j} outside 1..{c_prev.b}")
    randoms = tuple((random_unit(rng, pk.n), random_unit(rng, pk.n))
                    for _ in range(c_prev.b))
    counters = tuple(
        rerandomize(pk, record, v, v_prime,
                    increment=1 if position == j - 1 else 0, blinding=blinding)
        for position, (record, (v, v_prime)) in enumerate(zip(c_prev.counters, randoms))
    )
    c_next = CounterSet(dimension=c_prev.dimension, counters=counters,
                        checkins=c_prev.checkins + 1)
    return c_next, Witness(j=j, randoms=randoms, blinding=blinding)


def decrypt_counters(pk: BenalohPublicKey, sk: BenalohSecretKey,
                     counter_set: CounterSet) -> List[Tuple[int, int]]:
    """Decrypt every record to (index, count); indices must be a permutation of 1..b."""
    pairs = [
        (benaloh.decrypt(pk, sk, record.index_part), benaloh.decrypt(pk, sk, record.count_part))
        for record in counter_set.counters
    ]
    indices = sorted(index for index, _ in pairs)
    if indices != list(range(1, counter_set.b + 1)):
        raise DecryptionError(
            f"{counter_set.dimension}: index records decrypt to {indices}"
        )
    return pairs


def histogram(pairs: Sequence[Tuple[int, int]]) -> List[int]:
    """Counts ordered by sub-range index."""
    return [count for _, count in sorted(pairs)]


def plaintext_histogram(indices: Sequence[int], b: int) -> List[int]:
    tally = Counter(indices)
    return [tally.get(j, 0) for j in range(1, b + 1)]


def counter_set_fields(pk: BenalohPublicKey, counter_set: CounterSet) -> List[wire.Field]:
    values = []
    for record in counter_set.counters:
        values.extend((record.count_part.value, record.index_part.value))
    return wire.materials(values, pk.width)


def counter_set_from_values(dimension: str, values: Sequence[int], checkins: int = 0,
                            pk: Optional[BenalohPublicKey] = None) -> CounterSet:
    """Rebuild a counter set from wire values; with pk every value must lie in Z*_n."""
    if len(values) % 2:
        raise DomainError("counter set needs an even number of ciphertexts")
    if pk is not None:
        for value in values:
            require_unit(value, pk.n, f"{dimension} ciphertext")
    counters = tuple(
        EncryptedCounter(count_part=Ciphertext(values[i]), index_part=Ciphertext(values[i + 1]))
        for i in range(0, len(values), 2)
    )
    return CounterSet(dimension=dimension, counters=counters, checkins=checkins)


def counter_set_to_bytes(pk: BenalohPublicKey, counter_set: CounterSet) -> bytes:
    """Venue storage form: 2*b fixed-width ciphertexts."""
    return b''.join(f.data for f in counter_set_fields(pk, counter_set))
