"""Exception hierarchy shared by all lincwm modules."""


class CwmError(Exception):
    """Base class for every error raised by this package."""


# --- model family construction ---------------------------------------------

class EEConstraint(CwmError):
    """Both the marginal and conditional constraint are Equal.

    The four EE combinations collapse to a single cluster for every G and
    are rejected at construction.
    """


# --- density evaluation -----------------------------------------------------

class DimensionMismatch(CwmError):
    """Vector/matrix dimensions do not agree."""


class NonFiniteInput(CwmError):
    """A density kernel received a NaN or infinite input."""


class DomainError(CwmError):
    """Argument outside the mathematical domain of a special function."""


class SingularCovariance(CwmError):
    """Cholesky factorization failed even after the ridge fallback."""


class InconsistentParameters(CwmError):
    """Parameter multiplicities do not match the model specification."""


# --- EM engine ---------------------------------------------------------------

class AllComponentsUnderflow(CwmError):
    """Every component log-density underflowed for some observation."""


class DegenerateComponent(CwmError):
    """A component's posterior mass fell below the minimum for a stable M-step."""


class SingularDesign(CwmError):
    """The weighted covariate scatter matrix is not invertible."""


class DegenerateVariance(CwmError):
    """A conditional variance collapsed to (numerical) zero."""


# --- initialization ----------------------------------------------------------

class PartitionFailure(CwmError):
    """Could not draw a random partition with every component non-empty."""


class AllStartsFailed(CwmError):
    """Every EM start of a multi-start run aborted."""


# --- selection ---------------------------------------------------------------

class LengthMismatch(CwmError):
    """Two label vectors have different lengths."""


# --- CLI / IO ----------------------------------------------------------------

class MissingColumn(CwmError):
    """A requested column is absent from the CSV header."""


class NonNumericCell(CwmError):
    """A numeric column contains a cell that does not parse as a float."""

    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(
            f"non-numeric value {value!r} in column {column!r} at data row {row}"
        )


class EmptyFile(CwmError):
    """The CSV file has no data rows."""


class IndexOutOfRange(CwmError, IndexError):
    """Covariate index outside [0, d)."""
