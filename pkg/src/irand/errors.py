"""Exception hierarchy.

Three broad classes map onto CLI exit codes: :class:`UsageError` -> 1,
:class:`DataError` -> 2, :class:`NumericError` -> 3.
"""


class IrandError(Exception):
    """Base class for every error raised by this package."""


class UsageError(IrandError):
    """The API or CLI was called with invalid or inconsistent arguments."""


class DataError(IrandError):
    """Input data violates a documented precondition."""


class NumericError(IrandError):
    """A numeric procedure failed beyond recovery."""


class MissingColumn(DataError):
    """A column named by the schema or analysis is absent from the data."""


class DuplicateTimePoint(DataError):
    """An individual has two rows at the same time point."""


class OrphanIndividual(DataError):
    """An individual does not have exactly one baseline and one follow-up row."""


class NonBinaryTreatment(DataError):
    """Treatment values outside {0, 1} where a binary treatment is required."""


class NonNumericVariable(DataError):
    """A variable that must be differenced or averaged is not numeric."""


class InvalidPanel(DataError):
    """The panel violates a structural invariant not covered by a finer error."""


class LengthMismatch(DataError):
    """A per-individual vector does not match the panel's individual count."""


class InvalidSummary(DataError):
    """A synthesis summary is malformed (negative sd, min > max, ...)."""


class EmptyGroup(DataError):
    """A treatment or control group is empty where both are required."""


class SingleClass(DataError):
    """All classification labels are identical; the model cannot be fit."""


class EmptyData(DataError):
    """No usable rows remain after dropping missing values."""


class DimensionMismatch(DataError):
    """Row width does not match the fitted coefficient count."""


class ZeroVariance(DataError):
    """A dispersion-normalised statistic was requested on a constant sample."""


class PlanMismatch(UsageError):
    """Two estimates that must share a subsample plan were built from different plans."""
