"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
stable contract: 1 for domain errors, 2 for I/O errors.
"""


class RelsynthError(Exception):
    exit_code = 1


class IoError(RelsynthError):
    exit_code = 2


class FileNotFound(IoError):
    pass


class ParseError(RelsynthError):
    def __init__(self, file, line, column, message):
        self.file = str(file)
        self.line = line
        self.column = column
        super().__init__(f"{self.file}:{line}: column {column!r}: {message}")


class SchemaError(RelsynthError):
    pass


class ValidationFailed(RelsynthError):
    def __init__(self, report):
        self.report = list(report)
        lines = "\n".join(str(v) for v in self.report)
        super().__init__(f"dataset is not relational:\n{lines}")


class InvalidDataset(RelsynthError):
    pass


class UnknownTable(RelsynthError):
    pass


class VersionMismatch(RelsynthError):
    pass


class SchemaFingerprintMismatch(RelsynthError):
    pass


class UnseenCategory(RelsynthError):
    pass


class ShapeMismatch(RelsynthError):
    pass


class GraphRowMismatch(RelsynthError):
    pass


class MissingOriginTag(RelsynthError):
    pass


class NonFiniteGradient(RelsynthError):
    pass


class NonFiniteLoss(RelsynthError):
    pass


class ConfigMismatch(RelsynthError):
    pass


class TargetNotCategorical(RelsynthError):
    pass


class EmptyTable(RelsynthError):
    pass


class SingleClassLabels(RelsynthError):
    pass
