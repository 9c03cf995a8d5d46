"""Venue safety index: bucketed user safety labels aggregated through an LCP."""
import logging
import random
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .config import ProtocolParams
from .errors import DomainError, ParameterError
from .lcp_model import INTERVAL, DimensionSpec, classify, plaintext_histogram
from .snapshot_protocol import run_snapshot, snapshot_pub_stats

logger = logging.getLogger(__name__)

MIDPOINT = 'midpoint'
UPPER = 'upper'
SAFETY_DIMENSION = 'safety'
DEFAULT_BUCKETS = 5


@dataclass(frozen=True)
class UserSafetyLabel:
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise DomainError(f"safety label {self.value} outside [0, 1]")


@dataclass(frozen=True)
class SafetyBuckets:
    """Disjoint sub-intervals covering [0, 1]; the last one is closed."""

    edges: Tuple[float, ...]
    weight_mode: str = MIDPOINT

    def __post_init__(self):
        if len(self.edges) < 2:
            raise ParameterError("need at least one bucket")
        if self.edges[0] != 0.0 or self.edges[-1] != 1.0:
            raise ParameterError("buckets must cover [0, 1]")
        if any(lo >= hi for lo, hi in zip(self.edges, self.edges[1:])):
            raise ParameterError("bucket edges must increase strictly")
        if self.weight_mode not in (MIDPOINT, UPPER):
            raise ParameterError(f"unknown weight mode {self.weight_mode!r}")

    @classmethod
    def equal(cls, count: int = DEFAULT_BUCKETS, weight_mode: str = MIDPOINT) -> 'SafetyBuckets':
        if count < 1:
            raise ParameterError("need at least one bucket")
        return cls(edges=tuple(i / count for i in range(count + 1)), weight_mode=weight_mode)

    @property
    def count(self) -> int:
        return len(self.edges) - 1

    def weights(self) -> np.ndarray:
        edges = np.asarray(self.edges, dtype=float)
        if self.weight_mode == UPPER:
            return edges[1:]
        return (edges[:-1] + edges[1:]) / 2

    def dimension(self, name: str = SAFETY_DIMENSION) -> DimensionSpec:
        return DimensionSpec(name=name, kind=INTERVAL, boundaries=self.edges, closed_upper=True)

    def bucket(self, label: float) -> int:
        return classify(UserSafetyLabel(label).value, self.dimension())


def user_label_from_blocks(block_labels: Sequence[float],
                           frequencies: Optional[Sequence[float]] = None) -> UserSafetyLabel:
    """Frequency-weighted mean of the safety labels of visited blocks."""
    labels = np.asarray(block_labels, dtype=float)
    if labels.size == 0:
        raise DomainError("no blocks visited")
    weights = np.ones_like(labels) if frequencies is None else np.asarray(frequencies, dtype=float)
    if weights.shape != labels.shape:
        raise DomainError("one frequency per block is required")
    if (weights < 0).any() or weights.sum() <= 0:
        raise DomainError("frequencies must be non-negative with a positive sum")
    if (labels < 0).any() or (labels > 1).any():
        raise DomainError("block labels must lie in [0, 1]")
    return UserSafetyLabel(float(np.average(labels, weights=weights)))


def venue_safety(histogram: Sequence[int], buckets: SafetyBuckets) -> float:
    """Weighted average of bucket weights by the published counts."""
    counts = np.asarray(histogram, dtype=float)
    if counts.size != buckets.count:
        raise DomainError(f"histogram has {counts.size} counts for {buckets.count} buckets")
    if (counts < 0).any():
        raise DomainError("counts must be non-negative")
    if counts.sum() == 0:
        raise DomainError("empty histogram")
    return float(np.dot(counts, buckets.weights()) / counts.sum())


def plaintext_venue_safety(labels: Sequence[float], buckets: SafetyBuckets) -> float:
    """Reference value computed directly from the labels."""
    indices = [buckets.bucket(label) for label in labels]
    return venue_safety(plaintext_histogram(indices, buckets.count), buckets)


def snapshot_safety(labels: Sequence[float], buckets: SafetyBuckets, params: ProtocolParams,
                    rng: random.Random) -> float:
    """Safety of the current location from a snapshot LCP over co-located users."""
    for label in labels:
        UserSafetyLabel(label)
    state, _ = run_snapshot(list(labels), buckets.dimension(), params, rng)
    histogram = snapshot_pub_stats(state)
    score = venue_safety(histogram, buckets)
    logger.info(f"Snapshot safety over {len(labels)} users: {score:.3f}")
    return score
