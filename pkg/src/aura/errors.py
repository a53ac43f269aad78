"""Exception taxonomy shared across the engine.

Every error carries a stable ``code`` string; the HTTP facade maps codes
to status lines 1:1, and the CLI maps them onto exit codes (2 for
usage/config/schema problems, 1 for runtime/provider failures).
"""

from __future__ import annotations


class AuraError(Exception):
    """Base class for all engine errors."""

    code = "internal_error"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.__doc__ or self.code)
        self.details = details


# --- configuration / input shape -------------------------------------------

class InvalidConfig(AuraError):
    """Configuration value out of contract (e.g. overlap >= chunk_size)."""

    code = "invalid_config"


class DecodeError(AuraError):
    """Payload is not decodable as the declared format."""

    code = "decode_error"


class EmptyDocument(AuraError):
    """Document body is empty after normalization."""

    code = "empty_document"


class DuplicateId(AuraError):
    """Report id already present in the target corpus."""

    code = "duplicate_id"


class EmptyText(AuraError):
    """Text input is empty after normalization."""

    code = "empty_text"


# --- vectors / index ---------------------------------------------------------

class DimensionMismatch(AuraError):
    """Vector dimensionality differs from what the receiver expects."""

    code = "dimension_mismatch"


class ZeroVector(AuraError):
    """All-zero vector where a direction is required."""

    code = "zero_vector"


class EmptyIndex(AuraError):
    """Search against an index with no vectors."""

    code = "empty_index"


class IndexIoError(AuraError):
    """Snapshot read/write failed at the filesystem level."""

    code = "index_io_error"


class ManifestVersionMismatch(AuraError):
    """Snapshot manifest is missing, corrupt, or from an unknown version."""

    code = "manifest_version_mismatch"


# --- provider ----------------------------------------------------------------

class ProviderError(AuraError):
    """Backend call failed; ``retryable`` drives the retry policy."""

    code = "provider_error"
    retryable = False


class AuthError(ProviderError):
    """Backend rejected the configured credentials."""

    code = "auth_error"
    retryable = False


class RateLimited(ProviderError):
    """Backend rate limit persisted past the retry budget."""

    code = "rate_limited"
    retryable = True


class ProviderTimeout(ProviderError):
    """Backend did not answer within the configured timeout."""

    code = "timeout"
    retryable = True


class MalformedModelOutput(ProviderError):
    """Model output failed schema validation after the repair retry."""

    code = "malformed_model_output"
    retryable = False


class ScriptExhausted(ProviderError):
    """Mock script has no responses left for the matched key."""

    code = "script_exhausted"


class UnmatchedRequest(ProviderError):
    """No mock script key matches the request; details carry a fingerprint."""

    code = "unmatched_request"


# --- agents / pipeline -------------------------------------------------------

class EmptyContext(AuraError):
    """Attribution was asked to run with no context and no low-confidence flag."""

    code = "empty_context"


class SearchDisabled(AuraError):
    """Web search invoked while the searcher is disabled (eval mode)."""

    code = "search_disabled"


class SearchProviderError(AuraError):
    """External search backend failed; details carry retry metadata."""

    code = "search_provider_error"


class StageError(AuraError):
    """A pipeline stage failed; wraps the cause and names the stage."""

    code = "stage_error"

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}", stage=stage)
        self.stage = stage
        self.cause = cause


# --- evaluation ---------------------------------------------------------------

class UnknownActor(AuraError):
    """Ground-truth actor absent from the alias table; never scored silently."""

    code = "unknown_actor"


class InsufficientGenerations(AuraError):
    """pass@k asked for more generations than a record holds."""

    code = "insufficient_generations"


class EmptySequence(AuraError):
    """Perplexity over an empty logprob sequence."""

    code = "empty_sequence"


class InvalidLogprob(AuraError):
    """Logprob positive or non-finite."""

    code = "invalid_logprob"


class TooFewSentences(AuraError):
    """Coherence needs at least two sentences."""

    code = "too_few_sentences"


class OutOfRangeScore(AuraError):
    """Judge score outside the 1-10 integer range."""

    code = "out_of_range_score"


class EmptyTestSet(AuraError):
    """Evaluation invoked with no test records."""

    code = "empty_test_set"
