"""Exception types shared across the toolkit.

Every error carries the context it was raised with as attributes so callers
can report precisely (line numbers, offending labels, class indices).
"""


class ZidsError(Exception):
    """Base class for all toolkit errors."""


class MalformedLineError(ZidsError):
    """A KDD99 line does not have exactly 42 comma-separated fields."""

    def __init__(self, line_no: int, field_count: int):
        self.line_no = line_no
        self.field_count = field_count
        super().__init__(
            f"line {line_no}: expected 42 fields, found {field_count}"
        )


class FieldTypeError(ZidsError):
    """A continuous field failed to parse as a finite non-negative number."""

    def __init__(self, line_no: int, column: int, value: str = ""):
        self.line_no = line_no
        self.column = column
        self.value = value
        super().__init__(
            f"line {line_no}, column {column}: not a finite non-negative "
            f"number: {value!r}"
        )


class EmptyInputError(ZidsError):
    """An operation that needs at least one record received none."""


class UnknownLabelError(ZidsError):
    """A record label is not covered by the taxonomy or class list."""

    def __init__(self, label: str):
        self.label = label
        super().__init__(f"unknown label: {label!r}")


class UnknownCategoryError(ZidsError):
    """A categorical value is absent from the schema vocabulary."""

    def __init__(self, feature: str, value: str):
        self.feature = feature
        self.value = value
        super().__init__(f"feature {feature!r}: value {value!r} not in vocabulary")


class DegenerateClassError(ZidsError):
    """A class has zero samples where at least one is required."""

    def __init__(self, class_index: int):
        self.class_index = class_index
        super().__init__(f"class {class_index} has no samples")


class MissingClassError(ZidsError):
    """A class index in 0..K-1 never occurs in the label vector."""

    def __init__(self, class_index: int):
        self.class_index = class_index
        super().__init__(f"class {class_index} does not occur in labels")


class OutOfRangeError(ZidsError):
    """A count or index argument fell outside its valid range."""


class CorruptContainerError(ZidsError):
    """A dataset container file failed structural validation."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"corrupt dataset container: {reason}")


class BadDimsError(ZidsError):
    """Layer dimensions are unusable (fewer than two, or non-positive)."""


class ShapeMismatchError(ZidsError):
    """Array shapes are inconsistent with the model or with each other."""


class NonFiniteLossError(ZidsError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"non-finite loss at epoch {epoch}")


class CorruptModelError(ZidsError):
    """A model file failed checksum or structural validation."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"corrupt model file: {reason}")


class VersionMismatchError(ZidsError):
    """A serialized artifact has an unsupported format version."""

    def __init__(self, found: int, supported: int):
        self.found = found
        self.supported = supported
        super().__init__(
            f"unsupported format version {found} (supported: {supported})"
        )


class LabelOutOfRangeError(ZidsError):
    """A label fell outside 0..K-1 when computing a confusion matrix."""


class EmptyMatrixError(ZidsError):
    """A classification report was requested for an all-zero matrix."""


class BadBudgetError(ZidsError):
    """The coalition budget is too small to carry any information."""


class TooManyFeaturesError(ZidsError):
    """Exact Shapley enumeration was requested for more than 15 features."""


class SingularSystemError(ZidsError):
    """The coalition regression system is rank-deficient."""

    def __init__(self, class_index: int):
        self.class_index = class_index
        super().__init__(
            f"singular coalition system for class {class_index}; "
            "increase the coalition budget"
        )
