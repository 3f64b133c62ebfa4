"""Exception hierarchy shared by every libredense module."""


class LibreDenseError(Exception):
    """Base class for all library errors."""


class WordError(LibreDenseError, ValueError):
    pass


class RankMismatchError(WordError):
    def __init__(self, left, right):
        super().__init__(f"rank mismatch: {left} != {right}")
        self.left = left
        self.right = right


class PermutationError(LibreDenseError, ValueError):
    pass


class SearchExhaustedError(LibreDenseError):
    """A bounded search ran out of candidates before finding a hit."""

    def __init__(self, what, bound):
        super().__init__(f"{what}: search exhausted at bound {bound}")
        self.what = what
        self.bound = bound


class HSearchExhaustedError(SearchExhaustedError):
    pass


class ProfileExhaustedError(LibreDenseError):
    """No unassigned coordinate of sufficient degree is left for a word."""

    def __init__(self, word, required_degree):
        super().__init__(
            f"profile exhausted: no free coordinate of degree >= {required_degree} "
            f"left for word '{word}'"
        )
        self.word = word
        self.required_degree = required_degree


class NotFreeBasisError(LibreDenseError, ValueError):
    pass


class EmptyNeighborhoodError(LibreDenseError, ValueError):
    pass


class ConfigError(LibreDenseError, ValueError):
    pass


class TrialTimeoutError(LibreDenseError):
    pass


class OracleError(LibreDenseError, ValueError):
    pass
