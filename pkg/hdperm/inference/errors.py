"""hdperm.inference errors."""


class InferenceError(Exception):
    """Base exception for hdperm.inference."""

    category: str = "inference_error"


class SingularGram(InferenceError):
    """Gram matrix of the projected-out covariates is numerically singular."""

    category = "singular_gram"


class IndexOutOfRange(InferenceError):
    """Index set does not fit the target dimension."""

    category = "index_out_of_range"


class InvalidB(InferenceError):
    """Number of sign-flipping transformations must be at least 1."""

    category = "invalid_b"


class CapacityExceeded(InferenceError):
    """Selected set would exceed the sparsity capacity."""

    category = "capacity_exceeded"


class NoConvergence(InferenceError):
    """Coordinate descent did not converge."""

    category = "no_convergence"


class EmptySubset(InferenceError):
    """Subset of variables is empty."""

    category = "empty_subset"


class SubsetTooLarge(InferenceError):
    """Subset too large for brute-force enumeration."""

    category = "subset_too_large"


class NonPositiveDf(InferenceError):
    """OLS fit has no residual degrees of freedom."""

    category = "non_positive_df"


class InvalidRho(InferenceError):
    """Toeplitz correlation outside [0, 1)."""

    category = "invalid_rho"


class ZeroSignal(InferenceError):
    """Signal vector has zero empirical variance."""

    category = "zero_signal"


class ParseError(InferenceError):
    """Input file could not be parsed."""

    category = "parse_error"


class DimensionMismatch(InferenceError):
    """Inputs have inconsistent dimensions."""

    category = "dimension_mismatch"


class NonFiniteValue(InferenceError):
    """Input contains NaN or infinite values."""

    category = "non_finite_value"


class TooManyFailures(InferenceError):
    """Too many replications failed during an experiment."""

    category = "too_many_failures"


class InvalidConfig(InferenceError):
    """Experiment configuration is invalid."""

    category = "invalid_config"


DEFAULT_EXIT_CODES = {
    InvalidConfig: 2,
    ParseError: 3,
    DimensionMismatch: 3,
    NonFiniteValue: 3,
    IndexOutOfRange: 4,
    EmptySubset: 4,
    SubsetTooLarge: 4,
    InvalidB: 4,
    InvalidRho: 4,
    CapacityExceeded: 4,
    SingularGram: 5,
    NonPositiveDf: 5,
    NoConvergence: 5,
    ZeroSignal: 5,
    TooManyFailures: 6,
}


def exit_code_for(exc: BaseException) -> int:
    """Return the process exit code for an exception."""
    for klass in type(exc).__mro__:
        if klass in DEFAULT_EXIT_CODES:
            return DEFAULT_EXIT_CODES[klass]

    return 1
