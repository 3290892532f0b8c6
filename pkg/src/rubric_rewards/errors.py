"""Exception types shared across the package."""


class RubricRewardsError(Exception):
    """Base class for every error raised by this package."""


class ParseError(RubricRewardsError):
    """A judge response could not be parsed under the strict contract."""


class FormatViolation(ParseError):
    """The response container (JSON array, XML document, ...) is malformed."""


class UnknownToken(ParseError):
    """A parsed token is outside the label vocabulary."""


class CountMismatch(ParseError):
    """The number of parsed labels differs from the expected count."""


class BinaryViolation(ParseError):
    """A partial_support label appeared while judging in binary mode."""


class UnparseablePayload(ParseError):
    """A free-form payload (e.g. a True/False decision) is not understood."""


class UnparseableLine(ParseError):
    """A single line of a structured payload does not match its grammar."""


class CoverageViolation(ParseError):
    """A merge result does not partition the input nugget indices."""


class JudgeUnavailable(RubricRewardsError):
    """The judge endpoint failed after exhausting transport retries."""


class VerificationFailed(RubricRewardsError):
    """The judge kept violating the label contract after all retries."""


class MockRuleMiss(RubricRewardsError):
    """A scripted judge received a prompt no rule matches."""


class EmbeddingServiceUnavailable(RubricRewardsError):
    """The embedding endpoint failed after exhausting retries."""


class InsufficientLabels(RubricRewardsError):
    """Threshold calibration needs both relevant and irrelevant examples."""


class ProviderUnavailable(RubricRewardsError):
    """The web search provider failed outright."""


class EmptyGroundTruth(RubricRewardsError):
    """A short-form rubric cannot be built from an empty ground truth."""


class IncompleteCoverage(RubricRewardsError):
    """Judgments do not cover the full (rubric, block) cross product."""


class CoverageMismatch(RubricRewardsError):
    """Aggregated labels do not cover each rubric exactly once."""


class LengthMismatch(RubricRewardsError):
    """Predicted and gold label sequences have different lengths."""


class GroupTooSmall(RubricRewardsError):
    """Group advantage needs at least two rewards."""


class DegenerateInput(RubricRewardsError):
    """A statistic is undefined for this input (e.g. constant series)."""


class SchemaVersionError(RubricRewardsError):
    """A JSONL record declares a schema version this reader does not know."""


class ConfigError(RubricRewardsError):
    """The run configuration is invalid or points at missing inputs."""
