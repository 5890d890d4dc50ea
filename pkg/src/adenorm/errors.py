"""Exception hierarchy shared by all adenorm modules.

Every data or validation failure raised by this package derives from
:class:`AdeNormError`, which the CLI maps to exit code 2. Usage errors
(bad flags, missing files) are not represented here; the CLI maps those
to exit code 1.
"""

from __future__ import annotations


class AdeNormError(Exception):
    """Base class for all data/validation errors in this package."""


# --- terminology ----------------------------------------------------------


class MissingHeaderError(AdeNormError):
    """The terminology TSV does not start with the mandatory header line."""


class MalformedRowError(AdeNormError):
    """A terminology TSV row has the wrong field count or an empty field."""

    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


class DuplicateLltError(AdeNormError):
    """Two terminology rows share the same llt_code."""

    def __init__(self, llt_code: str):
        super().__init__(f"duplicate llt_code {llt_code!r}")
        self.llt_code = llt_code


class InconsistentPtError(AdeNormError):
    """Two terminology rows give the same pt_code different pt_texts."""

    def __init__(self, pt_code: str):
        super().__init__(f"pt_code {pt_code!r} maps to more than one pt_text")
        self.pt_code = pt_code


class EmptyTerminologyError(AdeNormError):
    """A terminology must contain at least one record."""


class UnknownLltError(AdeNormError):
    """Lookup of an llt_code that is not in the terminology."""

    def __init__(self, llt_code: str):
        super().__init__(f"unknown llt_code {llt_code!r}")
        self.llt_code = llt_code


class UnknownPtError(AdeNormError):
    """Lookup of a pt_code that is not in the terminology."""

    def __init__(self, pt_code: str):
        super().__init__(f"unknown pt_code {pt_code!r}")
        self.pt_code = pt_code


# --- embeddings -----------------------------------------------------------


class BadMetaError(AdeNormError):
    """The first line of an embedding file is not a valid meta object."""


class DimMismatchError(AdeNormError):
    """A vector's length disagrees with the declared dimension."""


class NonFiniteError(AdeNormError):
    """A vector contains NaN or infinite components."""

    def __init__(self, entry_id: str):
        super().__init__(f"vector {entry_id!r} has non-finite components")
        self.entry_id = entry_id


class ZeroVectorError(AdeNormError):
    """A vector with zero L2 norm cannot be normalized."""

    def __init__(self, entry_id: str):
        super().__init__(f"vector {entry_id!r} has zero norm")
        self.entry_id = entry_id


class DuplicateIdError(AdeNormError):
    """Two embedding entries share the same id."""

    def __init__(self, entry_id: str):
        super().__init__(f"duplicate embedding id {entry_id!r}")
        self.entry_id = entry_id


# --- retrieval ------------------------------------------------------------


class ZeroNormError(AdeNormError):
    """Cosine similarity is undefined against a zero-norm vector."""


class EmptyInputError(AdeNormError):
    """Fusion requires at least one input ranking."""


class EmptyFusionError(AdeNormError):
    """Linking requires a fused ranking with at least one entry."""


# --- spans ----------------------------------------------------------------


class UnorderedTokensError(AdeNormError):
    """Tokens must be sorted by start offset and non-overlapping."""

    def __init__(self, index: int):
        super().__init__(f"token {index} is out of order or overlaps its predecessor")
        self.index = index


class OrphanIError(AdeNormError):
    """Strict decoding found an I label not preceded by B or I."""

    def __init__(self, index: int):
        super().__init__(f"token {index} has label I with no open span")
        self.index = index


class MisalignedSpanError(AdeNormError):
    """A span boundary does not coincide with token boundaries."""

    def __init__(self, start: int, end: int):
        super().__init__(f"span ({start}, {end}) is not aligned to token boundaries")
        self.start = start
        self.end = end


class OverlappingSpansError(AdeNormError):
    """Spans to encode must not overlap."""

    def __init__(self, start: int, end: int):
        super().__init__(f"span ({start}, {end}) overlaps its predecessor")
        self.start = start
        self.end = end


# --- wire formats / pipeline ----------------------------------------------


class MalformedLineError(AdeNormError):
    """A JSON Lines record could not be parsed or fails field validation."""

    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


class EncoderPairingError(AdeNormError):
    """Term and mention embedding files do not pair up by encoder id."""


class MissingEmbeddingError(AdeNormError):
    """A required id is absent from an embedding set."""

    def __init__(self, entry_id: str, encoder_id: str):
        super().__init__(f"id {entry_id!r} missing from encoder {encoder_id!r}")
        self.entry_id = entry_id
        self.encoder_id = encoder_id
