"""Exception hierarchy shared across the package.

CLI exit codes map onto these classes: ValidationError -> 2,
IOFailure -> 3, NumericalError -> 4.
"""


class UpliftError(Exception):
    """Base class for all package errors."""


class ValidationError(UpliftError):
    """Invalid inputs: bad shapes, out-of-range values, broken invariants."""


class SchemaError(ValidationError):
    """CSV schema problems: missing columns, unknown column mappings."""


class ParseError(ValidationError):
    """Malformed cell content; carries row/column context in the message."""


class DegenerateEvaluationError(ValidationError):
    """A self-normalized term has an empty matched group (zero denominator)."""


class UnsupportedConfigurationError(ValidationError):
    """Operation called on a dataset shape it does not support."""


class FormatError(ValidationError):
    """Malformed or incompatible serialized artifact (model file, spec file)."""


class NumericalError(UpliftError):
    """Non-finite values encountered where finite ones are required."""


class IOFailure(UpliftError):
    """Filesystem problems distinct from content problems."""
