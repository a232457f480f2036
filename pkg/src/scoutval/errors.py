"""Exception types shared across the pipeline."""


class ScoutvalError(Exception):
    """Base class for all pipeline errors."""


class SchemaError(ScoutvalError):
    """Input file does not match the documented schema."""


class DuplicateKeyError(ScoutvalError):
    """A key that must be unique appeared more than once."""


class AmbiguityError(ScoutvalError):
    """Two distinct names normalize to the same registry key."""


class EmptyDatasetError(ScoutvalError):
    """Assembly was attempted with no players."""


class InsufficientHistoryError(ScoutvalError):
    """No market snapshot exists at or before the requested cutoff."""


class InsufficientDataError(ScoutvalError):
    """Not enough rows to fit the requested transform."""


class DimensionError(ScoutvalError):
    """Vector dimensions do not agree."""


class TrainingError(ScoutvalError):
    """Model training preconditions were violated."""


class ModelFormatError(ScoutvalError):
    """Model file is unreadable or structurally invalid."""


class ModelVersionError(ModelFormatError):
    """Model file carries an unsupported format version."""


class SplitError(ScoutvalError):
    """Chronological split would leave one side empty."""


class StateError(ScoutvalError):
    """Serving state directory is missing or corrupt."""
