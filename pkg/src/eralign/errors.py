"""Exception hierarchy shared by all engine modules.

Every error carries a stable machine-readable ``code`` so the CLI and the
HTTP service can surface failures uniformly.
"""


class EngineError(Exception):
    code = "error"


class InsufficientDataError(EngineError):
    code = "insufficient-data"


class InvalidDimensionError(EngineError):
    code = "invalid-dimension"


class InvalidInputError(EngineError):
    code = "invalid-input"


class DegenerateSpectrumError(EngineError):
    code = "degenerate-spectrum"


class DegenerateDataError(EngineError):
    code = "degenerate-data"


class MissingLabelsError(EngineError):
    code = "missing-labels"


class MissingModelError(EngineError):
    code = "missing-model"


class SchemaError(EngineError):
    code = "schema-error"


class CorruptStoreError(EngineError):
    code = "corrupt-store"


class UnsupportedVersionError(EngineError):
    code = "unsupported-version"


class InvalidFeedbackError(EngineError):
    code = "invalid-feedback"


class InvalidEigenvaluesError(EngineError):
    code = "invalid-eigenvalues"


class NotReadyError(EngineError):
    code = "not-ready"


class AdaptationFailedError(EngineError):
    code = "adaptation-failed"
