"""Exception hierarchy for the mobility laboratory.

Invalid inputs raise ``ValidationError`` subclasses; statistical failures on
valid inputs raise ``EstimationError`` subclasses. Non-fatal conditions such
as weak first stages are reported as flags on result objects instead.
"""

from __future__ import annotations

from collections.abc import Iterable


class MobilityLabError(Exception):
    """Base class for all library errors."""


class ValidationError(MobilityLabError, ValueError):
    """Input violates a documented precondition or schema."""


class ConfigError(ValidationError):
    """Experiment configuration is malformed."""


class SchemaError(ValidationError):
    """A data file does not match its schema."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class UnknownCategoryError(ValidationError):
    """A schooling label is absent from the harmonization scheme."""

    def __init__(self, label: str, row: int | None = None) -> None:
        self.label = label
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"Unknown education category {label!r}{where}")


class UnknownRegionError(ValidationError):
    """Rows reference region ids missing from the registry."""

    def __init__(self, region_ids: Iterable[str]) -> None:
        self.region_ids = tuple(sorted(set(region_ids)))
        super().__init__(f"Unknown region ids: {', '.join(self.region_ids)}")


class PoolImbalanceError(ValidationError):
    """Male and female marriage pools differ in size."""

    def __init__(self, n_male: int, n_female: int) -> None:
        self.n_male = n_male
        self.n_female = n_female
        self.deficit = abs(n_male - n_female)
        short = "female" if n_male > n_female else "male"
        super().__init__(
            f"Unbalanced pools: {n_male} men, {n_female} women "
            f"({self.deficit} {short} partners missing)"
        )


class DuplicateKeyError(ValidationError):
    """A key that must be unique appears more than once."""

    def __init__(self, what: str, keys: Iterable[object]) -> None:
        self.keys = tuple(keys)
        shown = ", ".join(str(k) for k in self.keys[:10])
        super().__init__(f"Duplicate {what}: {shown}")


class EstimationError(MobilityLabError, ArithmeticError):
    """A statistic cannot be computed on the given sample."""


class InsufficientSampleError(EstimationError):
    """Too few observations for the requested statistic."""


class DegenerateVarianceError(EstimationError):
    """A variable has zero variance where positive variance is required."""


class UndefinedCVError(EstimationError):
    """Coefficient of variation requested for a zero mean."""


class EmptySampleError(EstimationError):
    """No observations qualify for the statistic."""


class CollinearityError(EstimationError):
    """The design matrix is rank deficient."""

    def __init__(self, columns: Iterable[str]) -> None:
        self.columns = tuple(columns)
        super().__init__(f"Rank-deficient design; collinear columns: {self.columns}")
