"""Exception hierarchy shared by all modules."""


class SturmError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ConfigError(SturmError, ValueError):
    exit_code = 4


class CFParseError(ConfigError):
    pass


class ListExhausted(ConfigError, IndexError):
    pass


class EpsilonOutOfRange(ConfigError):
    pass


class PrecisionExhausted(SturmError, ArithmeticError):
    exit_code = 3


class NegativeDiscriminant(SturmError, ArithmeticError):
    pass


class DepthTooLarge(SturmError):
    pass


class IndexOutOfTable(SturmError, IndexError):
    pass


class DepthUnavailable(SturmError):
    pass


class NoWitness(SturmError, LookupError):
    pass


class WordsNotInTree(SturmError, LookupError):
    pass


class BandError(SturmError):
    """Root isolation failure; carries the word path of the parent band."""

    exit_code = 3

    def __init__(self, message, word=None):
        self.word = word
        if word is not None:
            message = f"{message} (parent word {format_word(word)})"
        super().__init__(message)


class CountMismatch(BandError):
    pass


class TangencySuspected(BandError):
    pass


class BoundViolated(SturmError):
    exit_code = 2

    def __init__(self, message, word=None):
        self.word = word
        if word is not None:
            message = f"{message} at word {format_word(word)}"
        super().__init__(message)


class NoRootInUnitInterval(SturmError):
    pass


def format_word(word):
    if not word:
        return "[]"
    parts = []
    for sym in word:
        e, t, l = (sym.edge, sym.tau, sym.l) if hasattr(sym, "edge") else sym
        parts.append(f"({e},{t},{l})")
    return "".join(parts)
