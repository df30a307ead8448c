"""Exception hierarchy shared across the pipeline.

Every error raised on purpose by this package derives from PatsigError so
the CLI can map failure categories onto distinct exit codes.
"""

from __future__ import annotations


class PatsigError(Exception):
    """Base class for all patsig failures."""


class ConfigError(PatsigError):
    """A parameter is outside its valid domain."""


class CorpusError(PatsigError):
    """Malformed or inconsistent corpus data (carries line numbers where known)."""


class FormatError(PatsigError):
    """Base class for artifact (de)serialization failures."""


class BadMagicError(FormatError):
    """The file does not start with the expected magic bytes."""


class VersionError(FormatError):
    """The file carries an unsupported format version."""


class TruncatedError(FormatError):
    """The file ended before the declared payload was complete."""


class ChecksumError(FormatError):
    """The trailing checksum does not match the file contents."""


class SimilarityUndefinedError(PatsigError):
    """Cosine similarity requested against a zero-signature vector."""
