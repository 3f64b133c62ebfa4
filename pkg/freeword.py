"""
Free-group elements as freely reduced words over a ranked generator set.

Generators are 0-indexed; an inverse letter is the same index with sign -1.
The text format is 1-based and signed ("1 -2 1" is x1 x2^-1 x1), with "e"
for the empty word.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

from errors import RankMismatchError, SearchExhaustedError, WordError
from logger import audit_logger


class GeneratorSymbol(NamedTuple):
    index: int
    sign: int

    def inverse(self) -> "GeneratorSymbol":
        return GeneratorSymbol(self.index, -self.sign)

    @property
    def key(self) -> tuple[int, int]:
        # x_i sorts before x_i^-1, both before x_{i+1}
        return (self.index, 0 if self.sign > 0 else 1)

    def __str__(self) -> str:
        return str(self.sign * (self.index + 1))


def alphabet(rank: int) -> list[GeneratorSymbol]:
    """All 2*rank letters in the fixed enumeration order."""
    return [GeneratorSymbol(i, s) for i in range(rank) for s in (1, -1)]


def _cancels(a: GeneratorSymbol, b: GeneratorSymbol) -> bool:
    return a.index == b.index and a.sign == -b.sign


@dataclass(frozen=True)
class ReducedWord:
    rank: int
    letters: tuple[GeneratorSymbol, ...] = ()

    def __post_init__(self):
        if self.rank < 1:
            raise WordError(f"rank must be positive, got {self.rank}")
        prev = None
        for s in self.letters:
            if not 0 <= s.index < self.rank:
                raise WordError(f"generator index {s.index + 1} out of range for rank {self.rank}")
            if s.sign not in (1, -1):
                raise WordError(f"letter sign must be +1 or -1, got {s.sign}")
            if prev is not None and _cancels(prev, s):
                raise WordError(f"letters are not freely reduced at '{prev} {s}'")
            prev = s

    @classmethod
    def _trusted(cls, rank: int, letters: tuple[GeneratorSymbol, ...]) -> "ReducedWord":
        # Skips validation; callers guarantee reduced letters in range.
        w = object.__new__(cls)
        object.__setattr__(w, "rank", rank)
        object.__setattr__(w, "letters", letters)
        return w

    @classmethod
    def identity(cls, rank: int) -> "ReducedWord":
        return cls(rank, ())

    @classmethod
    def generator(cls, index: int, rank: int, sign: int = 1) -> "ReducedWord":
        return cls(rank, (GeneratorSymbol(index, sign),))

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self) -> Iterator[GeneratorSymbol]:
        return iter(self.letters)

    def is_identity(self) -> bool:
        return not self.letters

    @property
    def sort_key(self) -> tuple:
        return (len(self.letters), tuple(s.key for s in self.letters))

    def __mul__(self, other: "ReducedWord") -> "ReducedWord":
        return concat(self, other)

    def __invert__(self) -> "ReducedWord":
        return invert(self)

    def __pow__(self, n: int) -> "ReducedWord":
        return power(self, n)

    # Group-carrier protocol shared with the permutation types
    def inverse(self) -> "ReducedWord":
        return invert(self)

    def identity_like(self) -> "ReducedWord":
        return ReducedWord._trusted(self.rank, ())

    def __str__(self) -> str:
        return format_word(self)

    def __repr__(self) -> str:
        return f"ReducedWord('{format_word(self)}', rank={self.rank})"


@dataclass(frozen=True)
class CyclicDecomposition:
    conjugator: ReducedWord
    core: ReducedWord


# ---------------------------------------------------------------------------
# Construction and text format
# ---------------------------------------------------------------------------

def reduce(raw: Iterable[GeneratorSymbol | tuple[int, int]], rank: int) -> ReducedWord:
    """
    Freely reduces a raw letter sequence.

    Args:
        raw: letters as GeneratorSymbol or (index, sign) pairs.
        rank: ambient rank; every index must be below it.

    Returns:
        ReducedWord: the reduced representative of the same element.
    """
    if rank < 1:
        raise WordError(f"rank must be positive, got {rank}")
    stack: list[GeneratorSymbol] = []
    for item in raw:
        s = item if isinstance(item, GeneratorSymbol) else GeneratorSymbol(*item)
        if not 0 <= s.index < rank:
            raise WordError(f"generator index {s.index + 1} out of range for rank {rank}")
        if s.sign not in (1, -1):
            raise WordError(f"letter sign must be +1 or -1, got {s.sign}")
        if stack and _cancels(stack[-1], s):
            stack.pop()
        else:
            stack.append(s)
    return ReducedWord._trusted(rank, tuple(stack))


def format_word(w: ReducedWord) -> str:
    if not w.letters:
        return "e"
    return " ".join(str(s) for s in w.letters)


def parse_word(text: str, rank: int | None = None) -> ReducedWord:
    """
    Parses the signed 1-based text format. When rank is None it is taken as
    the largest generator number mentioned (at least 1). The parsed letters
    are reduced.
    """
    text = text.strip()
    if text in ("", "e", "ε"):
        return ReducedWord.identity(rank or 1)
    raw = []
    for token in text.split():
        try:
            value = int(token)
        except ValueError:
            raise WordError(f"invalid letter '{token}' in word '{text}'") from None
        if value == 0:
            raise WordError(f"generator numbers are 1-based, got 0 in '{text}'")
        raw.append(GeneratorSymbol(abs(value) - 1, 1 if value > 0 else -1))
    if rank is None:
        rank = max(s.index for s in raw) + 1
    return reduce(raw, rank)


def parse_words(text: str, rank: int | None = None) -> tuple[ReducedWord, ...]:
    """Comma-separated word list; all words share one rank."""
    parts = [p for p in text.split(",") if p.strip()]
    words = [parse_word(p) for p in parts]
    if rank is None:
        rank = max((w.rank for w in words), default=1)
    return tuple(lift(w, rank) for w in words)


def lift(w: ReducedWord, rank: int) -> ReducedWord:
    """Re-reads w inside a free group of larger (or equal) rank."""
    if rank < w.rank and any(s.index >= rank for s in w.letters):
        raise RankMismatchError(w.rank, rank)
    return ReducedWord._trusted(rank, w.letters)


# ---------------------------------------------------------------------------
# Group law
# ---------------------------------------------------------------------------

def _check_rank(w1: ReducedWord, w2: ReducedWord):
    if w1.rank != w2.rank:
        raise RankMismatchError(w1.rank, w2.rank)


def concat(w1: ReducedWord, w2: ReducedWord) -> ReducedWord:
    _check_rank(w1, w2)
    a, b = w1.letters, w2.letters
    i = 0
    limit = min(len(a), len(b))
    while i < limit and _cancels(a[len(a) - 1 - i], b[i]):
        i += 1
    return ReducedWord._trusted(w1.rank, a[:len(a) - i] + b[i:])


def invert(w: ReducedWord) -> ReducedWord:
    return ReducedWord._trusted(w.rank, tuple(s.inverse() for s in reversed(w.letters)))


def power(w: ReducedWord, n: int) -> ReducedWord:
    if n < 0:
        return power(invert(w), -n)
    result = w.identity_like()
    base = w
    while n:
        if n & 1:
            result = concat(result, base)
        base = concat(base, base)
        n >>= 1
    return result


def commutator(w1: ReducedWord, w2: ReducedWord) -> ReducedWord:
    return concat(concat(w1, w2), concat(invert(w1), invert(w2)))


def substitute(w: ReducedWord, images: Sequence[ReducedWord]) -> ReducedWord:
    """
    Evaluates w with generator i replaced by images[i].

    All images must share one rank, which becomes the rank of the result.
    """
    if not images:
        raise WordError("substitution needs at least one image")
    target_rank = images[0].rank
    for img in images:
        if img.rank != target_rank:
            raise RankMismatchError(img.rank, target_rank)
    result = ReducedWord._trusted(target_rank, ())
    inverses: dict[int, ReducedWord] = {}
    for s in w.letters:
        if s.index >= len(images):
            raise WordError(f"no image given for generator {s.index + 1}")
        if s.sign > 0:
            piece = images[s.index]
        else:
            if s.index not in inverses:
                inverses[s.index] = invert(images[s.index])
            piece = inverses[s.index]
        result = concat(result, piece)
    return result


# ---------------------------------------------------------------------------
# Cyclic structure and roots
# ---------------------------------------------------------------------------

def cyclic_reduce(w: ReducedWord) -> CyclicDecomposition:
    """Splits w = u c u^-1 with c cyclically reduced and |u| minimal."""
    letters = w.letters
    lo, hi = 0, len(letters) - 1
    while lo < hi and _cancels(letters[lo], letters[hi]):
        lo += 1
        hi -= 1
    return CyclicDecomposition(
        conjugator=ReducedWord._trusted(w.rank, letters[:lo]),
        core=ReducedWord._trusted(w.rank, letters[lo:hi + 1]),
    )


def is_cyclically_reduced(w: ReducedWord) -> bool:
    return len(w.letters) < 2 or not _cancels(w.letters[0], w.letters[-1])


def primitive_root(w: ReducedWord) -> tuple[ReducedWord, int]:
    """
    Returns (root, exponent) with root^exponent = w and exponent maximal.

    Raises:
        WordError: if w is the empty word.
    """
    if w.is_identity():
        raise WordError("the empty word has no primitive root")
    decomposition = cyclic_reduce(w)
    core = decomposition.core.letters
    n = len(core)
    for d in range(1, n + 1):
        if n % d == 0 and core[:d] * (n // d) == core:
            period = d
            break
    u = decomposition.conjugator.letters
    u_inv = tuple(s.inverse() for s in reversed(u))
    # u r u^-1 is already reduced: r is a prefix and a suffix of the core
    root = ReducedWord._trusted(w.rank, u + core[:period] + u_inv)
    return root, n // period


def commute(w1: ReducedWord, w2: ReducedWord) -> bool:
    """
    Nontrivial elements of a free group commute exactly when they are
    powers of one primitive root (up to inversion).
    """
    _check_rank(w1, w2)
    if w1.is_identity() or w2.is_identity():
        return True
    r1, _ = primitive_root(w1)
    r2, _ = primitive_root(w2)
    return r1 == r2 or r1 == invert(r2)


def commute_direct(w1: ReducedWord, w2: ReducedWord) -> bool:
    return concat(w1, w2) == concat(w2, w1)


def _key_tuple(letters: Sequence[GeneratorSymbol]) -> tuple:
    return tuple(s.key for s in letters)


def is_class_representative(w: ReducedWord) -> bool:
    """
    True when w is nontrivial, cyclically reduced, and the smallest word in
    its class under cyclic rotation and inversion.
    """
    letters = w.letters
    n = len(letters)
    if n == 0 or not is_cyclically_reduced(w):
        return False
    key = _key_tuple(letters)
    inverse = tuple(s.inverse() for s in reversed(letters))
    for candidate in (letters, inverse):
        for shift in range(n):
            if _key_tuple(candidate[shift:] + candidate[:shift]) < key:
                return False
    return True


def class_representative(w: ReducedWord) -> ReducedWord:
    """Smallest rotation of the cyclic core of w or of its inverse."""
    core = cyclic_reduce(w).core.letters
    if not core:
        return w.identity_like()
    inverse = tuple(s.inverse() for s in reversed(core))
    best = min(
        (c[k:] + c[:k] for c in (core, inverse) for k in range(len(core))),
        key=_key_tuple,
    )
    return ReducedWord._trusted(w.rank, best)


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------

ENUMERATION_MODES = ("all", "cyclic")


def _extend(prefix: list[GeneratorSymbol], length: int, letters: list[GeneratorSymbol]):
    if len(prefix) == length:
        yield tuple(prefix)
        return
    last = prefix[-1] if prefix else None
    for a in letters:
        if last is not None and _cancels(last, a):
            continue
        prefix.append(a)
        yield from _extend(prefix, length, letters)
        prefix.pop()


def words_of_length(rank: int, length: int) -> Iterator[ReducedWord]:
    """Reduced words of exactly this length, lexicographic by (index, sign)."""
    for letters in _extend([], length, alphabet(rank)):
        yield ReducedWord._trusted(rank, letters)


def class_representatives_of_length(rank: int, length: int) -> Iterator[ReducedWord]:
    if length < 1:
        return
    letters = alphabet(rank)
    for first in letters:
        # Every letter of a representative, and every inverse letter, sorts
        # at or after its first letter.
        allowed = [a for a in letters if a.key >= first.key and a.inverse().key >= first.key]
        if first not in allowed:
            continue
        for tail in _extend([first], length, allowed):
            w = ReducedWord._trusted(rank, tail)
            if is_class_representative(w):
                yield w


def enumerate_words(rank: int, max_len: int, mode: str = "all") -> Iterator[ReducedWord]:
    """
    Streams words by length, then lexicographically by (index, sign).

    mode "all" yields every reduced word including the empty word; mode
    "cyclic" yields one nontrivial representative per class of cyclically
    reduced words under rotation and inversion.
    """
    if mode not in ENUMERATION_MODES:
        raise WordError(f"unknown enumeration mode '{mode}'")
    for length in range(0, max_len + 1):
        if mode == "all":
            yield from words_of_length(rank, length)
        else:
            yield from class_representatives_of_length(rank, length)


def count_reduced_words(rank: int, length: int) -> int:
    if length == 0:
        return 1
    return 2 * rank * (2 * rank - 1) ** (length - 1)


def word_index(w: ReducedWord) -> int:
    """1-based position of w in the "all" enumeration order of its rank."""
    rank, n = w.rank, len(w.letters)
    index = 1 + sum(count_reduced_words(rank, k) for k in range(n))
    branch = 2 * rank - 1
    prev = None
    for p, s in enumerate(w.letters):
        smaller = sum(
            1 for a in alphabet(rank)
            if a.key < s.key and not (prev is not None and _cancels(prev, a))
        )
        index += smaller * branch ** (n - 1 - p)
        prev = s
    return index


def word_at(rank: int, index: int) -> ReducedWord:
    """Inverse of word_index."""
    if index < 1:
        raise WordError(f"word positions are 1-based, got {index}")
    offset = index - 1
    length = 0
    while offset >= count_reduced_words(rank, length):
        offset -= count_reduced_words(rank, length)
        length += 1
    branch = 2 * rank - 1
    letters: list[GeneratorSymbol] = []
    for p in range(length):
        block = branch ** (length - 1 - p)
        choices = [a for a in alphabet(rank) if not (letters and _cancels(letters[-1], a))]
        letters.append(choices[offset // block])
        offset %= block
    return ReducedWord._trusted(rank, tuple(letters))


# ---------------------------------------------------------------------------
# Constructions used by the density arguments
# ---------------------------------------------------------------------------

def f2_embed(i: int) -> ReducedWord:
    """h_i = a^-i b a^i in F(a, b); the h_i freely generate a free subgroup."""
    if i < 1:
        raise WordError(f"embedding index must be positive, got {i}")
    a = ReducedWord.generator(0, 2)
    b = ReducedWord.generator(1, 2)
    return concat(concat(power(a, -i), b), power(a, i))


def combine_product_relation(w_g: ReducedWord, w_h: ReducedWord,
                             auxiliary_search_len: int = 4) -> ReducedWord:
    """
    Builds a nontrivial word that vanishes on every component-paired tuple
    ((g_1, h_1), ..., (g_n, h_n)) whenever w_g vanishes on the g's and w_h
    vanishes on the h's.

    Raises:
        WordError: if an input is trivial or the ranks differ.
        SearchExhaustedError: if no auxiliary word of length at most
            auxiliary_search_len avoids commuting with both inputs.
    """
    _check_rank(w_g, w_h)
    if w_g.is_identity() or w_h.is_identity():
        raise WordError("product relation needs two nontrivial words")

    c = commutator(w_g, w_h)
    if not c.is_identity():
        return c

    n = w_g.rank
    if n == 1:
        _, e_g = primitive_root(w_g)
        _, e_h = primitive_root(w_h)
        return power(ReducedWord.generator(0, 1), math.lcm(e_g, e_h))

    for w in enumerate_words(n, auxiliary_search_len):
        if w.is_identity() or commute(w, w_g) or commute(w, w_h):
            continue
        replaced = commutator(w, w_h)
        combined = commutator(w_g, replaced)
        if not combined.is_identity():
            return combined

    audit_logger.log_event("WORD_SEARCH_EXHAUSTED", {
        "search": "product_relation_auxiliary",
        "w_g": format_word(w_g),
        "w_h": format_word(w_h),
        "bound": auxiliary_search_len,
    })
    raise SearchExhaustedError("product relation auxiliary word", auxiliary_search_len)


def extend_with_fresh(words: Sequence[ReducedWord], total_rank: int,
                      count: int | None = None) -> tuple[ReducedWord, ...]:
    """
    Appends single-letter words for generators that no input word uses.

    Args:
        words: a free basis of its subgroup (the caller checks this).
        total_rank: rank of the ambient group of the result.
        count: how many fresh generators to append (default: all unused).
    """
    for w in words:
        if w.rank > total_rank and any(s.index >= total_rank for s in w.letters):
            raise RankMismatchError(w.rank, total_rank)
    used = {s.index for w in words for s in w.letters}
    fresh = [i for i in range(total_rank) if i not in used]
    if count is None:
        count = len(fresh)
    if count > len(fresh):
        raise WordError(
            f"rank {total_rank} has only {len(fresh)} unused generators, {count} requested"
        )
    lifted = tuple(lift(w, total_rank) for w in words)
    return lifted + tuple(ReducedWord.generator(i, total_rank) for i in fresh[:count])


# ---------------------------------------------------------------------------
# Random inputs
# ---------------------------------------------------------------------------

def random_word(rank: int, length: int, rng) -> ReducedWord:
    """Uniform reduced word of exactly the given length (numpy Generator)."""
    letters = alphabet(rank)
    out: list[GeneratorSymbol] = []
    for _ in range(length):
        choices = [a for a in letters if not (out and _cancels(out[-1], a))]
        out.append(choices[int(rng.integers(len(choices)))])
    return ReducedWord._trusted(rank, tuple(out))


NIELSEN_MOVES = ("swap", "invert", "multiply")


def nielsen_move(words: Sequence[ReducedWord], rng) -> tuple[ReducedWord, ...]:
    """Applies one random elementary Nielsen move to a tuple of words."""
    out = list(words)
    n = len(out)
    move = NIELSEN_MOVES[int(rng.integers(len(NIELSEN_MOVES)))] if n > 1 else "invert"
    if move == "invert":
        i = int(rng.integers(n))
        out[i] = invert(out[i])
        return tuple(out)
    i, j = (int(k) for k in rng.choice(n, size=2, replace=False))
    if move == "swap":
        out[i], out[j] = out[j], out[i]
    else:
        factor = out[j] if rng.integers(2) else invert(out[j])
        out[i] = concat(out[i], factor) if rng.integers(2) else concat(factor, out[i])
    return tuple(out)
