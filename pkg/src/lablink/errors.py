"""Exception hierarchy shared across the package."""


class LabLinkError(Exception):
    """Base class for all package-specific errors."""


# -- timebase ---------------------------------------------------------------

class NegativeRtt(LabLinkError):
    """A four-timestamp exchange produced a negative round-trip time."""


class InsufficientData(LabLinkError):
    """Not enough measurements to perform the requested computation."""


class DegenerateFit(LabLinkError):
    """Clock model fit is ill-conditioned or physically implausible."""


# -- streams ----------------------------------------------------------------

class ShapeMismatch(LabLinkError):
    """Chunk does not match the outlet's declared channel count / format."""


class Closed(LabLinkError):
    """Operation on a closed outlet or inlet."""


class SourceLost(LabLinkError):
    """Publisher is gone and the inlet buffer is drained."""


class InvalidSpec(LabLinkError):
    """Synthetic signal specification is invalid."""


# -- transport / codec ------------------------------------------------------

class DecodeError(LabLinkError):
    """Base class for wire decode failures."""


class BadMagic(DecodeError):
    pass


class BadVersion(DecodeError):
    pass


class UnknownType(DecodeError):
    pass


class Truncated(DecodeError):
    pass


class TrailingData(DecodeError):
    """Buffer holds more bytes than one complete frame."""


class UnknownStream(DecodeError):
    """CHUNK frame for a stream uid with no registered format."""


class Timeout(LabLinkError):
    """Peer did not answer within the allotted time."""


# -- netsim -----------------------------------------------------------------

class NoLink(LabLinkError):
    """No link configured between the two simulated nodes."""


class UnknownNode(LabLinkError):
    """Simulated node id is not part of the network."""


# -- session ----------------------------------------------------------------

class IllegalTransition(LabLinkError):
    """Session state machine received an event not allowed in this state."""


class NonNumericChannel(LabLinkError):
    """Feedback rule bound to a channel that does not carry numbers."""


# -- recorder ---------------------------------------------------------------

class NoInlets(LabLinkError):
    pass


class ClockModelMissing(LabLinkError):
    """Recording inlet has no clock model mapping it to the common timeline."""


class MalformedDocument(LabLinkError):
    pass


class UnsupportedVersion(LabLinkError):
    pass


class UnknownNamespace(LabLinkError):
    """Annotation tier references an ontology namespace with no registry."""


class NonNumericTrack(LabLinkError):
    pass


class EmptyDocument(LabLinkError):
    pass


# -- cli / scenarios --------------------------------------------------------

class UnknownScenario(LabLinkError):
    pass
