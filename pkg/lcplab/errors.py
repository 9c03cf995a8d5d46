"""Exception hierarchy for the laboratory."""


class LcpLabError(Exception):
    """Base class for every error raised by lcplab."""


class ParameterError(LcpLabError, ValueError):
    """Invalid protocol or primitive parameters."""


class DomainError(LcpLabError, ValueError):
    """A value lies outside the algebraic domain of an operation."""


class DecryptionError(LcpLabError):
    """A ciphertext or counter set is not well formed under the key."""


class InsufficientSharesError(LcpLabError):
    """Fewer shares than the reconstruction threshold."""


class DuplicateShareError(LcpLabError):
    """Two shares carry the same index."""


class CredentialError(LcpLabError):
    """Malformed key, refused blind signature or bad signature material."""


class ReplayError(LcpLabError):
    """A one-shot protocol step was invoked twice."""


class TimingViolation(LcpLabError):
    """Spoter response arrived after the latency threshold (wormhole suspected)."""


class DuplicateTokenError(LcpLabError):
    """A presence token was redeemed twice or has expired."""


class PseudonymReuseError(LcpLabError):
    """A pseudonym already checked in at this venue during this epoch."""


class ProtocolAbort(LcpLabError):
    """A protocol run was aborted; `reason` names the failed step."""

    def __init__(self, reason: str, message: str = ''):
        super().__init__(message or reason)
        self.reason = reason


class IntegrityAlarm(LcpLabError):
    """Reconstructed secret is inconsistent with the public modulus."""


class ScenarioError(LcpLabError):
    """Scenario file could not be parsed or is inconsistent."""


class DeadlockError(LcpLabError):
    """The simulation ran out of events before the protocol completed."""
