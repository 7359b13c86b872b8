"""Exception hierarchy shared by every layer of the assistant."""


class BitaError(Exception):
    """Base class for all domain errors raised by this package."""


# --- corpus -----------------------------------------------------------------


class MissingFrontMatter(BitaError):
    """Document file lacks a well-formed front-matter block."""


class UnknownKind(BitaError):
    """Document kind is not one of the supported corpus categories."""


class EmptyBody(BitaError):
    """Document body is empty after whitespace normalization."""


class DuplicateDocIdWithDifferentChecksum(BitaError):
    """A document with this id already exists with different content."""


# --- index ------------------------------------------------------------------


class EmptyText(BitaError):
    """Text has no usable tokens after normalization."""


class EmptyIndex(BitaError):
    """No indexed chunk passes the query filter."""


class UnknownChunk(BitaError):
    """Chunk id is not present in the index."""


# --- prompting --------------------------------------------------------------


class BudgetTooSmall(BitaError):
    """The mandatory prompt core alone exceeds the token budget."""


# --- provider ---------------------------------------------------------------


class UnknownProviderKind(BitaError):
    """Configured provider kind is not supported."""


class MissingCredentials(BitaError):
    """Remote provider selected but its credential env var is unset."""


class ProviderTimeout(BitaError):
    """Remote provider did not answer within the configured timeout."""


class ProviderRejected(BitaError):
    """Remote provider refused the request (non-transient failure)."""


class ContextOverflow(BitaError):
    """Prompt exceeds the provider context limit."""


# --- tasks ------------------------------------------------------------------


class SchemaParseFailure(BitaError):
    """Provider output could not be parsed into the task schema."""


class UnknownCaseReference(SchemaParseFailure):
    """A plan gap references a case id absent from the reviewed plan."""


class UngroundedOutput(BitaError):
    """Task output cites evidence outside the invocation's retrieval set."""

    def __init__(self, offending_ids: list[str]):
        self.offending_ids = list(offending_ids)
        super().__init__(
            "output cites evidence not in the retrieval set: "
            + ", ".join(self.offending_ids)
        )


class CountOutOfRange(BitaError):
    """Requested charter count is outside the allowed 1..10 range."""


class GuardrailRefused(BitaError):
    """Scope guardrail rejected the request."""


class InvalidArtifact(BitaError):
    """System description or test plan failed validation."""


# --- session ----------------------------------------------------------------


class UnknownSession(BitaError):
    """No session exists with the given id."""


class StorageFailure(BitaError):
    """The relational store could not complete a read or write."""


# --- service ----------------------------------------------------------------


class BindFailure(BitaError):
    """Server could not bind the configured address."""


class ConfigInvalid(BitaError):
    """Runtime configuration is unusable."""
