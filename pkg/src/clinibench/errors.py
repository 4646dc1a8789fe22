"""Exception types shared across the engine."""


class ClinibenchError(Exception):
    """Base class for all engine errors."""


class MalformedRecord(ClinibenchError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class UnknownCode(ClinibenchError):
    def __init__(self, code: str, note_id: str):
        self.code = code
        self.note_id = note_id
        super().__init__(f"unknown code {code!r} in note {note_id!r}")


class ForbiddenSection(ClinibenchError):
    def __init__(self, section: str, note_id: str):
        self.section = section
        self.note_id = note_id
        super().__init__(f"section {section!r} not allowed at admission time (note {note_id!r})")


class CodeTableError(ClinibenchError):
    pass


class EmptyCorpus(ClinibenchError):
    pass


class DimensionMismatch(ClinibenchError):
    pass


class KTooLarge(ClinibenchError):
    pass


class DemoCountMismatch(ClinibenchError):
    pass


class RegexParseError(ClinibenchError):
    pass


class VocabCoverageError(ClinibenchError):
    pass


class NoAllowedToken(ClinibenchError):
    """Decoding dead end: no vocabulary token continues the automaton."""


class BudgetExhaustedInvalid(ClinibenchError):
    """Token budget ran out while the automaton was not in an accepting state."""


class DecodeDeadEnd(ClinibenchError):
    """Raised by the inference client when the remote decode hits a dead end."""


class TransportError(ClinibenchError):
    pass


class ProtocolError(ClinibenchError):
    pass


class InvalidVector(ClinibenchError):
    pass


class ClassMismatch(ClinibenchError):
    pass


class IdMismatch(ClinibenchError):
    pass
