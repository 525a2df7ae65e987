"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ``DataError`` subclasses exit with 2 and
``NumericError`` subclasses with 3.
"""


class MorphTagError(Exception):
    pass


class DataError(MorphTagError):
    pass


class NumericError(MorphTagError):
    pass


class MalformedAnalysis(DataError):
    def __init__(self, message, offset=None, path=None, line=None):
        self.offset = offset
        self.path = path
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class EmptyCorpus(DataError):
    pass


class UnknownTag(DataError):
    pass


class AlignmentError(DataError):
    pass


class KindMismatch(DataError):
    pass


class CheckpointError(DataError):
    pass


class EmptyInput(DataError):
    pass


class ShapeMismatch(NumericError, ValueError):
    pass


class NotScalar(NumericError, ValueError):
    pass


class NonFiniteGradient(NumericError):
    def __init__(self, name, message=None):
        self.name = name
        super().__init__(message or f"non-finite gradient in parameter {name!r}")
