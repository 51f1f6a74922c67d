"""Exception hierarchy shared across dsfuse."""


class DsFuseError(Exception):
    """Base class for all dsfuse errors."""


# --- belief algebra ---

class FrameMismatch(DsFuseError):
    """Operands live on different frames."""


class NotNormalized(DsFuseError):
    """Masses do not sum to 1 within tolerance."""


class EmptyFocal(DsFuseError):
    """Positive mass assigned to the empty set."""


class NegativeMass(DsFuseError):
    """A mass value is negative."""


class TotalConflict(DsFuseError):
    """Dempster combination has a (near-)zero normalization constant."""


class NotAPartition(DsFuseError):
    """Refining images overlap, leave a gap, or are empty."""


# --- autodiff ---

class ShapeMismatch(DsFuseError):
    """Operand shapes are incompatible."""


class DomainError(DsFuseError):
    """Value outside an operation's domain (log of non-positive, zero denominator)."""


class NotScalar(DsFuseError):
    """backward() requires a scalar output node."""


# --- classifiers / training ---

class NonFiniteInput(DsFuseError):
    """Input contains NaN or infinity."""


class EmptyDataset(DsFuseError):
    """Operation requires a non-empty dataset."""


class Divergence(DsFuseError):
    """Training loss became non-finite; carries the last good parameters."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


# --- data / config ---

class UnknownClass(DsFuseError):
    """A class name does not resolve against its frame."""


class DuplicateFrameId(DsFuseError):
    """Two source frames share an id."""


class MissingRefining(DsFuseError):
    """No refining was supplied for a source frame."""


class InvalidSpec(DsFuseError):
    """Synthetic benchmark specification is malformed."""


class ParseError(DsFuseError):
    """A file failed to parse; message carries the line number."""


class EmptyTestSet(DsFuseError):
    """Evaluation requires at least one test sample."""
