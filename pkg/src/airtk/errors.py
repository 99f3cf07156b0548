"""Exception hierarchy shared by all airtk modules."""


class AirtkError(Exception):
    """Base class for all toolkit errors."""


# --- audio_io ---------------------------------------------------------------

class UnsupportedFormat(AirtkError):
    """WAV codec or bit depth outside the supported set."""


class CorruptFile(AirtkError):
    """WAV header inconsistent with file contents."""


class EmptyAudio(AirtkError):
    """Decoded audio contains zero samples."""


class OutOfRange(AirtkError):
    """Trim bounds fall outside the clip."""


# --- dsp --------------------------------------------------------------------

class ClipTooShort(AirtkError):
    """Clip has fewer samples than one analysis window."""


class IoError(AirtkError):
    """File could not be written or read."""


# --- dataset ----------------------------------------------------------------

class MalformedRow(AirtkError):
    """Manifest row has bad arity or an unparseable number."""


class UnknownClassStrict(AirtkError):
    """Strict mode: a label does not resolve to any ontology class."""


class EmptyInput(AirtkError):
    """An operation received an empty collection it cannot act on."""


class InvalidRecipe(AirtkError):
    """Augmentation recipe contains invalid parameters."""


class EmptyClass(AirtkError):
    """A class with zero original samples cannot be augmented."""


# --- embedding --------------------------------------------------------------

class GridMismatch(AirtkError):
    """External embedding rows disagree with the expected patch grid."""


class DimensionMismatch(AirtkError):
    """Feature vector dimension differs from what the consumer expects."""


class MalformedFile(AirtkError):
    """A model or embedding file does not follow its documented format."""


# --- forest -----------------------------------------------------------------

class DegenerateClass(AirtkError):
    """A class is all-positive or all-negative in the training labels."""


class BadMagic(AirtkError):
    """Model file does not start with the expected magic bytes."""


class VersionMismatch(AirtkError):
    """Model file version differs from the one this build reads."""


# --- metrics ----------------------------------------------------------------

class LengthMismatch(AirtkError):
    """Two arrays that must align have different lengths."""


class OneClassOnly(AirtkError):
    """ROC AUC needs at least one positive and one negative sample."""


# --- retrieval --------------------------------------------------------------

class CoverageGap(AirtkError):
    """Some timeline cells are covered by no patch prediction."""


class NoMatch(AirtkError):
    """Query text resolves to no ontology class."""


class FrontendMismatch(AirtkError):
    """Model was trained under a different frontend configuration."""
