"""
Permutations of {1..m} and finitely supported permutations of the positive
integers, word evaluation, and the function topology on Sym(Z+).

Composition convention, used everywhere in this package:
    (f * g)(x) = f(g(x))
so a word is evaluated by composing its letters left to right.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from errors import PermutationError


@dataclass(frozen=True)
class FinPerm:
    images: tuple[int, ...]

    def __post_init__(self):
        if not self.images:
            raise PermutationError("a permutation needs degree at least 1")
        if sorted(self.images) != list(range(1, len(self.images) + 1)):
            raise PermutationError(f"images {self.images} are not a bijection of 1..{len(self.images)}")

    @classmethod
    def _trusted(cls, images: tuple[int, ...]) -> "FinPerm":
        p = object.__new__(cls)
        object.__setattr__(p, "images", images)
        return p

    @classmethod
    def identity(cls, degree: int) -> "FinPerm":
        return cls(tuple(range(1, degree + 1)))

    @classmethod
    def from_array(cls, array) -> "FinPerm":
        """From a 0-based numpy image array."""
        return cls(tuple(int(x) + 1 for x in array))

    @classmethod
    def from_cycles(cls, text: str, degree: int) -> "FinPerm":
        return SuppPerm.from_cycles(text).to_finperm(degree)

    @property
    def degree(self) -> int:
        return len(self.images)

    def __call__(self, x: int) -> int:
        # S_m sits inside Sym(Z+) fixing every point above m
        if 1 <= x <= len(self.images):
            return self.images[x - 1]
        return x

    def __mul__(self, other: "FinPerm") -> "FinPerm":
        if not isinstance(other, FinPerm):
            return NotImplemented
        if other.degree != self.degree:
            raise PermutationError(f"degree mismatch: {self.degree} != {other.degree}")
        mine = self.images
        return FinPerm._trusted(tuple(mine[y - 1] for y in other.images))

    def inverse(self) -> "FinPerm":
        out = [0] * len(self.images)
        for x, y in enumerate(self.images, start=1):
            out[y - 1] = x
        return FinPerm._trusted(tuple(out))

    def identity_like(self) -> "FinPerm":
        return FinPerm.identity(self.degree)

    def is_identity(self) -> bool:
        return all(y == x for x, y in enumerate(self.images, start=1))

    def support(self) -> frozenset[int]:
        return frozenset(x for x, y in enumerate(self.images, start=1) if x != y)

    def extend(self, degree: int) -> "FinPerm":
        """The same permutation inside S_degree (new points fixed)."""
        if degree < self.degree:
            raise PermutationError(f"cannot shrink degree {self.degree} to {degree}")
        return FinPerm._trusted(self.images + tuple(range(self.degree + 1, degree + 1)))

    def to_array(self) -> np.ndarray:
        return np.asarray(self.images, dtype=np.int64) - 1

    def to_supp(self) -> "SuppPerm":
        return SuppPerm.from_map({x: y for x, y in enumerate(self.images, start=1)})

    def cycles(self) -> list[tuple[int, ...]]:
        return _cycles_of(self.__call__, sorted(self.support()))

    def order(self) -> int:
        return math.lcm(*(len(c) for c in self.cycles())) if not self.is_identity() else 1

    def __str__(self) -> str:
        return " ".join(str(y) for y in self.images)


@dataclass(frozen=True)
class SuppPerm:
    """A permutation of Z+ moving finitely many points, stored without fixed points."""
    mapping: tuple[tuple[int, int], ...] = ()
    _lookup: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        lookup = dict(self.mapping)
        if len(lookup) != len(self.mapping):
            raise PermutationError("a point is mapped twice")
        if any(p < 1 or q < 1 for p, q in self.mapping):
            raise PermutationError("points must be positive integers")
        if any(p == q for p, q in self.mapping):
            raise PermutationError("fixed points are not stored; use SuppPerm.from_map")
        if set(lookup) != set(lookup.values()):
            raise PermutationError("moved points and their images differ; not a permutation")
        if tuple(sorted(self.mapping)) != self.mapping:
            raise PermutationError("mapping pairs must be sorted")
        object.__setattr__(self, "_lookup", lookup)

    @classmethod
    def from_map(cls, mapping: Mapping[int, int]) -> "SuppPerm":
        return cls(tuple(sorted((p, q) for p, q in mapping.items() if p != q)))

    @classmethod
    def from_cycles(cls, text: str) -> "SuppPerm":
        result = cls()
        for cycle in parse_cycles(text):
            step = {}
            for k, p in enumerate(cycle):
                step[p] = cycle[(k + 1) % len(cycle)]
            result = result * cls.from_map(step)
        return result

    def __call__(self, x: int) -> int:
        return self._lookup.get(x, x)

    def __mul__(self, other: "SuppPerm") -> "SuppPerm":
        if not isinstance(other, SuppPerm):
            return NotImplemented
        points = self.support() | other.support()
        return SuppPerm.from_map({x: self(other(x)) for x in points})

    def inverse(self) -> "SuppPerm":
        return SuppPerm.from_map({q: p for p, q in self.mapping})

    def identity_like(self) -> "SuppPerm":
        return SuppPerm()

    def is_identity(self) -> bool:
        return not self.mapping

    def support(self) -> frozenset[int]:
        return frozenset(self._lookup)

    def max_point(self) -> int:
        return max(self._lookup, default=0)

    def to_finperm(self, degree: int | None = None) -> FinPerm:
        degree = max(degree or 0, self.max_point(), 1)
        if self.max_point() > degree:
            raise PermutationError(f"support reaches {self.max_point()} > degree {degree}")
        return FinPerm._trusted(tuple(self(x) for x in range(1, degree + 1)))

    def cycles(self) -> list[tuple[int, ...]]:
        return _cycles_of(self.__call__, sorted(self._lookup))

    def __str__(self) -> str:
        return format_cycles(self.cycles())


@dataclass(frozen=True)
class OpenBox:
    """Finite intersection of subbasic sets {f : f(alpha) = beta}."""
    constraints: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        alphas = [a for a, _ in self.constraints]
        betas = [b for _, b in self.constraints]
        if any(p < 1 for p in alphas + betas):
            raise PermutationError("box points must be positive integers")
        if len(set(alphas)) != len(alphas) or len(set(betas)) != len(betas):
            raise PermutationError(f"box {sorted(self.constraints)} is not a partial injection")

    @classmethod
    def of(cls, pairs: Iterable[tuple[int, int]]) -> "OpenBox":
        return cls(frozenset((int(a), int(b)) for a, b in pairs))

    def as_dict(self) -> dict[int, int]:
        return dict(self.constraints)

    def max_point(self) -> int:
        return max((max(a, b) for a, b in self.constraints), default=0)

    def __str__(self) -> str:
        return "{" + ", ".join(f"{a}->{b}" for a, b in sorted(self.constraints)) + "}"


# ---------------------------------------------------------------------------
# Cycle notation
# ---------------------------------------------------------------------------

_CYCLE = re.compile(r"\(([^()]*)\)")


def _cycles_of(f, points: Sequence[int]) -> list[tuple[int, ...]]:
    seen: set[int] = set()
    out = []
    for start in points:
        if start in seen:
            continue
        cycle = [start]
        seen.add(start)
        x = f(start)
        while x != start:
            cycle.append(x)
            seen.add(x)
            x = f(x)
        out.append(tuple(cycle))
    return out


def parse_cycles(text: str) -> list[tuple[int, ...]]:
    text = text.strip()
    if not text or text == "()":
        return []
    leftover = _CYCLE.sub("", text).strip()
    if leftover:
        raise PermutationError(f"unparsable cycle notation '{text}'")
    cycles = []
    for body in _CYCLE.findall(text):
        try:
            points = tuple(int(tok) for tok in body.replace(",", " ").split())
        except ValueError:
            raise PermutationError(f"non-integer point in cycle '({body})'") from None
        if len(set(points)) != len(points):
            raise PermutationError(f"repeated point in cycle '({body})'")
        if len(points) > 1:
            cycles.append(points)
    return cycles


def format_cycles(cycles: Sequence[Sequence[int]]) -> str:
    if not cycles:
        return "()"
    return "".join("(" + " ".join(str(p) for p in c) + ")" for c in cycles)


def parse_perm(text: str, degree: int | None = None) -> FinPerm | SuppPerm:
    """
    Cycle notation gives a SuppPerm, or a FinPerm when a degree is supplied;
    a one-line image list gives a FinPerm.
    """
    text = text.strip()
    if text.startswith("("):
        supp = SuppPerm.from_cycles(text)
        return supp.to_finperm(degree) if degree is not None else supp
    try:
        images = tuple(int(tok) for tok in text.split())
    except ValueError:
        raise PermutationError(f"unparsable permutation '{text}'") from None
    perm = FinPerm(images)
    return perm.extend(degree) if degree is not None and degree > perm.degree else perm


# ---------------------------------------------------------------------------
# Group operations and word evaluation
# ---------------------------------------------------------------------------

def compose(f, g):
    """(f o g)(x) = f(g(x))."""
    return f * g


def invert(f):
    return f.inverse()


def evaluate_word(w, perms: Sequence):
    """
    Substitutes perms[i] for generator i and composes left to right.

    Works for any element type with `*`, `inverse()` and `identity_like()`
    (FinPerm, SuppPerm, product elements, words).

    Raises:
        PermutationError: if the tuple is empty or shorter than the highest
            generator used by w.
    """
    if not perms:
        raise PermutationError("cannot evaluate a word on an empty tuple")
    needed = max((s.index for s in w.letters), default=-1) + 1
    if len(perms) < needed:
        raise PermutationError(f"word uses {needed} generators, tuple has {len(perms)}")
    result = perms[0].identity_like()
    inverses = {}
    for s in w.letters:
        if s.sign > 0:
            result = result * perms[s.index]
        else:
            if s.index not in inverses:
                inverses[s.index] = perms[s.index].inverse()
            result = result * inverses[s.index]
    return result


# ---------------------------------------------------------------------------
# Function topology
# ---------------------------------------------------------------------------

def box_member(f, box: OpenBox) -> bool:
    return all(f(a) == b for a, b in box.constraints)


COMPLETION_POLICIES = ("minimal", "random")


def complete_box(box: OpenBox, policy: str = "minimal", rng=None,
                 support_bound: int | None = None) -> SuppPerm:
    """
    Extends the box's partial injection to a finitely supported permutation.

    "minimal" closes every maximal constraint chain a1 -> ... -> ak into a
    cycle by sending ak back to a1 (a1 is not in the image of the partial
    map, ak is not in its domain). No new points are moved.
    "random" draws uniformly among the completions inside S_B, where B is
    the larger of support_bound and the largest constrained point.

    Args:
        box: the constraints to honor.
        policy: "minimal" or "random".
        rng: numpy Generator or integer seed for the random policy.
        support_bound: B for the random policy.
    """
    if policy not in COMPLETION_POLICIES:
        raise PermutationError(f"unknown completion policy '{policy}'")
    mapping = box.as_dict()
    if policy == "minimal":
        images = set(mapping.values())
        for start in sorted(a for a in mapping if a not in images):
            end = start
            while end in mapping:
                end = mapping[end]
            mapping[end] = start
        return SuppPerm.from_map(mapping)

    rng = np.random.default_rng(rng)
    bound = max(support_bound or 0, box.max_point())
    free_points = [x for x in range(1, bound + 1) if x not in mapping]
    free_images = [x for x in range(1, bound + 1) if x not in set(mapping.values())]
    order = rng.permutation(len(free_images))
    for x, k in zip(free_points, order):
        mapping[x] = free_images[int(k)]
    return SuppPerm.from_map(mapping)


def random_finperm(degree: int, rng) -> FinPerm:
    return FinPerm._trusted(tuple(int(x) + 1 for x in rng.permutation(degree)))


def _support(f) -> frozenset[int]:
    return f.support()


def metric_d(f, g) -> Fraction:
    """
    d(f, g) = 2^-n for the least n where f, g or their inverses disagree;
    0 when f = g. Both arguments must move finitely many points.
    """
    f_inv, g_inv = f.inverse(), g.inverse()
    for n in sorted(_support(f) | _support(g)):
        if f(n) != g(n) or f_inv(n) != g_inv(n):
            return Fraction(1, 2 ** n)
    return Fraction(0)


def agree_up_to(f, g, n: int) -> bool:
    """f, g agree on {1..n} and so do their inverses."""
    f_inv, g_inv = f.inverse(), g.inverse()
    return all(f(x) == g(x) and f_inv(x) == g_inv(x) for x in range(1, n + 1))


# ---------------------------------------------------------------------------
# Lexicographic indexing of S_m
# ---------------------------------------------------------------------------

def perm_rank(p: FinPerm) -> int:
    """0-based position of p among S_m in lexicographic one-line order."""
    remaining = list(range(1, p.degree + 1))
    rank = 0
    for k, y in enumerate(p.images):
        pos = remaining.index(y)
        rank += pos * math.factorial(p.degree - 1 - k)
        remaining.pop(pos)
    return rank


def perm_unrank(degree: int, rank: int) -> FinPerm:
    if not 0 <= rank < math.factorial(degree):
        raise PermutationError(f"rank {rank} out of range for S_{degree}")
    remaining = list(range(1, degree + 1))
    images = []
    for k in range(degree):
        block = math.factorial(degree - 1 - k)
        images.append(remaining.pop(rank // block))
        rank %= block
    return FinPerm._trusted(tuple(images))
