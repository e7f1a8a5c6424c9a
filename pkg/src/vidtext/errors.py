"""Exception hierarchy for the pipeline.

Two broad families matter for the CLI exit-code contract: BackendError
(an upstream service failed; exit 2) and DataError (an input file,
vocabulary, or artifact violated its contract; exit 3).
"""


class VidtextError(Exception):
    """Base class for all package errors."""


class DataError(VidtextError):
    """Input data or artifact violates a contract."""


class BackendError(VidtextError):
    """An upstream backend (sidecar or reasoning API) failed."""


# label space

class DuplicateNormalizedLabel(DataError):
    """Two display names normalize to the same form; the vocabulary is unusable."""


# perception

class DimensionMismatch(DataError):
    """Vectors of different dimensions were combined."""


class ZeroVector(DataError):
    """Cosine similarity is undefined for a zero vector."""


class SidecarUnavailable(BackendError):
    """Sidecar could not be reached after retries."""


class SidecarContractViolation(DataError):
    """Sidecar response failed schema or ordering validation."""


class CacheCorrupt(DataError):
    """A descriptor cache record could not be read."""


class InvalidTagVocabulary(DataError):
    """Tag vocabulary file violates its invariants."""


# prompts

class EmptyBundle(DataError):
    """No clue section could be rendered for this video."""


# reasoning

class DialectMismatch(DataError):
    """PromptSpec dialect does not match the backend profile dialect."""


class BackendExhausted(BackendError):
    """Retries exhausted against a reasoning backend."""


class AuthMissing(BackendError):
    """Profile names a credential environment variable that is not set."""


class NonRetryableStatus(BackendError):
    """Backend returned a non-retryable client error."""


# evaluation / artifacts

class EmptyResults(DataError):
    """No results to evaluate."""


class MissingGroundTruth(DataError):
    """A catalog record used for evaluation has no ground-truth label."""


class FingerprintMismatch(DataError):
    """Artifacts from different run configurations were mixed."""
