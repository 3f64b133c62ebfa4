"""
Bounded freeness testing for tuples in any represented group.

`l_free_check` walks one representative per class of cyclically reduced
words (rotation and inversion preserve "evaluates to the identity"), and
`l_free_naive` walks every reduced word. Both share the same prefix-cached
depth-first walk; the naive one exists to cross-check the pruning.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Any, Iterator, Protocol, Sequence

import numpy as np

from errors import OracleError, PermutationError, TrialTimeoutError
from freeword import (
    GeneratorSymbol,
    ReducedWord,
    alphabet,
    cyclic_reduce,
    format_word,
    is_class_representative,
    parse_word,
)
from perm import FinPerm, SuppPerm


class GroupCarrier(Protocol):
    """What the oracle needs from a group: identity, law, inverse, equality."""

    def encode(self, element) -> Any: ...

    def identity(self) -> Any: ...

    def compose(self, a, b) -> Any: ...

    def invert(self, a) -> Any: ...

    def equal(self, a, b) -> bool: ...


class MethodCarrier:
    """Uses the elements' own `*`, `inverse()`, `identity_like()` and `==`."""

    def __init__(self, template):
        self._identity = template.identity_like()

    def encode(self, element):
        return element

    def identity(self):
        return self._identity

    def compose(self, a, b):
        return a * b

    def invert(self, a):
        return a.inverse()

    def equal(self, a, b) -> bool:
        return a == b


class FlatPermCarrier:
    """
    Permutations flattened to 0-based numpy image arrays over one point set.

    Products of symmetric groups are laid out block-diagonally: only the
    coordinates where some element of the tuple is nontrivial get points.
    """

    def __init__(self, size: int, encoder):
        self.size = size
        self._encoder = encoder
        self._identity = np.arange(size, dtype=np.int64)

    @classmethod
    def for_elements(cls, elements: Sequence) -> "FlatPermCarrier":
        first = elements[0]
        if isinstance(first, FinPerm):
            degree = first.degree
            if any(p.degree != degree for p in elements):
                raise PermutationError("tuple mixes permutations of different degrees")
            return cls(degree, lambda p: p.to_array())
        if isinstance(first, SuppPerm):
            points = sorted(set().union(*(p.support() for p in elements)))
            local = {x: k for k, x in enumerate(points)}

            def encode_supp(p: SuppPerm) -> np.ndarray:
                return np.fromiter((local[p(x)] for x in points), dtype=np.int64, count=len(points))

            return cls(len(points), encode_supp)
        if hasattr(first, "coordinate_blocks"):
            degree_of = first.profile.degrees
            coords = sorted(set().union(*(e.coordinate_blocks().keys() for e in elements)))
            offsets = {}
            size = 0
            for c in coords:
                offsets[c] = size
                size += degree_of[c]

            def encode_product(e) -> np.ndarray:
                out = np.arange(size, dtype=np.int64)
                for c, p in e.coordinate_blocks().items():
                    lo = offsets[c]
                    out[lo:lo + degree_of[c]] = p.to_array() + lo
                return out

            return cls(size, encode_product)
        raise OracleError(f"no flat layout for elements of type {type(first).__name__}")

    def encode(self, element) -> np.ndarray:
        return self._encoder(element)

    def identity(self) -> np.ndarray:
        return self._identity

    def compose(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        # (a o b)(x) = a(b(x))
        return a[b]

    def invert(self, a: np.ndarray) -> np.ndarray:
        out = np.empty_like(a)
        out[a] = self._identity
        return out

    def equal(self, a: np.ndarray, b: np.ndarray) -> bool:
        return bool(np.array_equal(a, b))


def carrier_for(elements: Sequence) -> GroupCarrier:
    if not elements:
        raise OracleError("cannot pick a carrier for an empty tuple")
    first = elements[0]
    if isinstance(first, (FinPerm, SuppPerm)) or hasattr(first, "coordinate_blocks"):
        return FlatPermCarrier.for_elements(elements)
    return MethodCarrier(first)


@dataclass(frozen=True)
class FreenessVerdict:
    bound: int
    witness: ReducedWord | None = None

    @property
    def free(self) -> bool:
        return self.witness is None

    def to_json(self) -> dict:
        return {
            "bound": self.bound,
            "free": self.free,
            "witness": None if self.witness is None else format_word(self.witness),
        }

    @classmethod
    def from_json(cls, data: dict, rank: int) -> "FreenessVerdict":
        witness = data.get("witness")
        return cls(int(data["bound"]), None if witness is None else parse_word(witness, rank))

    def __str__(self) -> str:
        if self.free:
            return f"FreeUpTo({self.bound})"
        return f"Witness({format_word(self.witness)})"


# ---------------------------------------------------------------------------
# Word walk
# ---------------------------------------------------------------------------

_DEADLINE_STRIDE = 512


def iter_word_values(elements: Sequence, max_len: int, carrier: GroupCarrier | None = None,
                     pruned: bool = False, deadline: float | None = None
                     ) -> Iterator[tuple[tuple[GeneratorSymbol, ...], Any]]:
    """
    Yields (letters, value) for nontrivial reduced words in the fixed
    enumeration order (length, then (index, sign) lexicographic), where
    value is the word evaluated on the tuple.

    With pruned=True only class representatives under rotation and
    inversion are yielded; the walk never enters a prefix that contains a
    letter (or inverse letter) sorting before its first letter.

    Args:
        deadline: time.perf_counter() value after which TrialTimeoutError
            is raised.
    """
    if not elements:
        raise OracleError("cannot walk words over an empty tuple")
    carrier = carrier or carrier_for(elements)
    rank = len(elements)
    letters = alphabet(rank)
    value_of = {}
    for i, e in enumerate(elements):
        encoded = carrier.encode(e)
        value_of[GeneratorSymbol(i, 1)] = encoded
        value_of[GeneratorSymbol(i, -1)] = carrier.invert(encoded)
    compose = carrier.compose
    visited = 0

    def walk(prefix: list, value, length: int, allowed: list):
        nonlocal visited
        visited += 1
        if deadline is not None and visited % _DEADLINE_STRIDE == 0 and time.perf_counter() > deadline:
            raise TrialTimeoutError(f"word walk passed its deadline after {visited} nodes")
        if len(prefix) == length:
            if pruned and not is_class_representative(ReducedWord._trusted(rank, tuple(prefix))):
                return
            yield tuple(prefix), value
            return
        last = prefix[-1]
        for a in allowed:
            if a.index == last.index and a.sign == -last.sign:
                continue
            prefix.append(a)
            yield from walk(prefix, compose(value, value_of[a]), length, allowed)
            prefix.pop()

    for length in range(1, max_len + 1):
        for first in letters:
            allowed = letters
            if pruned:
                allowed = [a for a in letters if a.key >= first.key and a.inverse().key >= first.key]
                if first not in allowed:
                    continue
            yield from walk([first], value_of[first], length, allowed)


def _check_inputs(elements: Sequence, bound: int):
    if bound < 1:
        raise OracleError(f"word bound must be at least 1, got {bound}")
    if not elements:
        raise OracleError("freeness of an empty tuple is not tested")


def l_free_check(elements: Sequence, bound: int, carrier: GroupCarrier | None = None,
                 deadline: float | None = None) -> FreenessVerdict:
    """
    Looks for a nontrivial word of length <= bound that evaluates to the
    identity, visiting one word per rotation/inversion class.

    Returns:
        FreenessVerdict: the first witness in enumeration order, or free up
        to the bound.
    """
    _check_inputs(elements, bound)
    carrier = carrier or carrier_for(elements)
    identity = carrier.identity()
    for letters, value in iter_word_values(elements, bound, carrier, pruned=True, deadline=deadline):
        if carrier.equal(value, identity):
            return FreenessVerdict(bound, ReducedWord._trusted(len(elements), letters))
    return FreenessVerdict(bound)


def l_free_naive(elements: Sequence, bound: int, carrier: GroupCarrier | None = None,
                 deadline: float | None = None) -> FreenessVerdict:
    """Unpruned cross-check of l_free_check; reports the witness's cyclic core."""
    _check_inputs(elements, bound)
    carrier = carrier or carrier_for(elements)
    identity = carrier.identity()
    for letters, value in iter_word_values(elements, bound, carrier, pruned=False, deadline=deadline):
        if carrier.equal(value, identity):
            word = ReducedWord._trusted(len(elements), letters)
            return FreenessVerdict(bound, cyclic_reduce(word).core)
    return FreenessVerdict(bound)
