"""Exception types shared across the engine."""


class LatentSearchError(Exception):
    """Base class for all engine errors."""


class SymbolRangeError(LatentSearchError, ValueError):
    """A symbol fell outside the entropy model's coded range."""


class CorruptStream(LatentSearchError):
    """A bitstream failed structural or integrity validation."""


class TruncatedStream(CorruptStream):
    """The stream ended before the expected number of bytes."""


class ChecksumMismatch(CorruptStream):
    """Stored checksum does not match the stream contents."""


class MagicMismatch(CorruptStream):
    """The stream does not start with the expected magic bytes."""


class VersionMismatch(CorruptStream):
    """The stream was written by an unsupported format version."""


class ModelMismatch(CorruptStream):
    """The stream was produced by a different weight set than the one loaded."""


class UnknownTableVersion(CorruptStream):
    """An entropy payload references a frequency table this session has not built."""


class RecordNotFound(LatentSearchError, KeyError):
    """Requested record id does not exist in the database."""
