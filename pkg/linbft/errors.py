"""Exception hierarchy for the LinBFT library.

Replica handlers do not raise on adversarial input (they drop and report an
``Ignored`` action). These exceptions are for misuse of the API, invalid
configuration, and the few fatal conditions a run can hit.
"""


class LinbftError(Exception):
    """Base class for every error raised by the library."""


class ConfigInvalid(LinbftError):
    """A scenario configuration failed validation."""


class SafetyViolation(LinbftError):
    """Two honest replicas finalized different blocks at one height."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegenerateSweep(LinbftError):
    """A complexity fit was asked for with too few distinct sizes."""


# ---------- crypto ----------


class CryptoError(LinbftError):
    pass


class NoKey(CryptoError):
    """The node holds no key share in the given keyset."""


class InsufficientShares(CryptoError):
    """Fewer than t+1 distinct valid shares were supplied."""


class MixedDigests(CryptoError):
    """Shares handed to a combine operation sign different digests."""


class EmptyShares(CryptoError):
    """A combine operation received no shares at all."""


class DkgFailed(CryptoError):
    """The epoch keyset came out of a failed DKG and cannot combine."""


# ---------- slashing ----------


class SlashError(LinbftError):
    pass


class InvalidEvidence(SlashError):
    """Slash evidence does not verify from its own signatures."""


class NotAMember(SlashError):
    """The accused node is not in the participant set."""


# ---------- protocol ----------


class ProtocolError(LinbftError):
    """A protocol condition. Replica handlers report these as ``Ignored`` instead of raising."""


class NotLeader(ProtocolError):
    """The node does not lead the round it was asked to act in."""


class NotCollector(ProtocolError):
    """A vote reached a node that does not collect for its round."""


class WrongLeader(ProtocolError):
    """A proposal or certificate came from a node that does not lead its round."""


class StaleRound(ProtocolError):
    pass


class InvalidCert(ProtocolError):
    """A certificate or proof does not verify against the current keys."""


class InvalidTs(ProtocolError):
    """A threshold signature the provider did not produce."""


class InvalidBlockContent(ProtocolError):
    pass


class InvalidTransaction(InvalidBlockContent):
    pass


class InvalidSignature(ProtocolError):
    pass


class DuplicateMessage(ProtocolError):
    pass


class Equivocation(ProtocolError):
    pass


class UnexpectedMessage(ProtocolError):
    """Input the replica has no use for in its current state."""


# ---------- epochs ----------


class EpochError(LinbftError):
    pass


class SetTooSmall(EpochError):
    """The next participant set cannot satisfy n >= 3f+1 with f >= 1."""
