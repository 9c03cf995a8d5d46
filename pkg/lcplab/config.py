"""Configuration settings for the location-centric profile laboratory."""
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import ParameterError

# Base directories
BASE_DIR = Path('.')
DATA_DIR = BASE_DIR / 'data'
OUTPUT_DIR = BASE_DIR / 'output'

# Data directories
SCENARIO_DIR = DATA_DIR / 'scenarios'

# Output directories
REPORTS_DIR = OUTPUT_DIR / 'reports'
TRACES_DIR = OUTPUT_DIR / 'traces'

# Analysis settings
RANDOM_STATE = 42
CONFIDENCE_SIGMAS = 3.0
SIGNIFICANCE_LEVEL = 0.05

# Cryptographic defaults
DEFAULT_MODULUS_BITS = 512
MIN_MODULUS_BITS = 64
MAX_MODULUS_BITS = 4096
DEFAULT_RSA_BITS = 1024
DEFAULT_ZK_ROUNDS = 30
DEFAULT_CYCLE_SIZE = 5
SNAPSHOT_MIN_BLOCK = 1000

# Simulated latencies (ms)
LOCAL_ONE_WAY_MS = 1.5
DEVICE_HASH_MS = 0.6
VENUE_HASH_MS = 0.003
WIRED_ONE_WAY_MS = 19.0
RELAY_FORWARD_MS = 0.7
MIX_WINDOW_MS = 5.0
SPOTER_DELTA_MS = 10.0
TOKEN_TTL_MS = 5000.0
EPOCH_MS = 86_400_000.0
CYCLE_SUPERSEDE_MS = 2000.0

# Bench settings
BENCH_MODULUS_SWEEP = (64, 128, 256, 512, 1024, 2048)
BENCH_ROUNDS_SWEEP = (5, 10, 20, 30)
BENCH_REPEATS = 10
BENCH_SUBRANGES = 5
ACCOUNTING_SUBRANGES = (1, 5, 20)
ACCOUNTING_MODULI = (256, 1024)


@dataclass(frozen=True)
class ProtocolParams:
    """Protocol parameters shared by every actor of a run."""

    k: int = DEFAULT_CYCLE_SIZE
    s: int = DEFAULT_ZK_ROUNDS
    r: Optional[int] = None
    modulus_bits: int = DEFAULT_MODULUS_BITS
    rsa_bits: int = DEFAULT_RSA_BITS
    delta_ms: float = SPOTER_DELTA_MS
    epoch_ms: float = EPOCH_MS
    token_ttl_ms: float = TOKEN_TTL_MS

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError(f"cycle size k must be >= 1, got {self.k}")
        if self.s < 1:
            raise ParameterError(f"ZK rounds s must be >= 1, got {self.s}")
        if not MIN_MODULUS_BITS <= self.modulus_bits <= MAX_MODULUS_BITS:
            raise ParameterError(
                f"modulus_bits must lie in [{MIN_MODULUS_BITS}, {MAX_MODULUS_BITS}]"
            )
        if self.r is not None and self.r <= self.k:
            raise ParameterError(
                f"block size r={self.r} must exceed cycle size k={self.k}"
            )
        if self.delta_ms <= 0 or self.epoch_ms <= 0:
            raise ParameterError("delta_ms and epoch_ms must be positive")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> 'ProtocolParams':
        """Build parameters from a scenario `params` section."""
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ParameterError(f"unknown protocol params: {sorted(unknown)}")
        return cls(**dict(values))

    def with_overrides(self, **overrides) -> 'ProtocolParams':
        return replace(self, **overrides)


def verify_directory_structure():
    """Verify that all required directories exist."""
    directories = [
        SCENARIO_DIR,
        REPORTS_DIR,
        TRACES_DIR,
    ]

    for directory in directories:
        if not directory.exists():
            directory.mkdir(parents=True)
