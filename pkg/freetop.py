"""
The profinite topology on a free group, made concrete through finite
symmetric quotients.

A FiniteQuotient q: F_n -> S_m is given by generator images; its kernel is a
finite-index normal subgroup, i.e. a basic neighborhood of 1, and the coset
{w : q(w) = t} is a basic open set. On top of that model this module builds
free tuples inside prescribed open sets: a free pair inside any kernel, the
fin-case perturbation f_i = z^-i y h_i1 g_i h_i2 y z^i, and the countable
extension inside <g_{n+1}, g_{n+2}>.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

from sympy.combinatorics import Permutation, PermutationGroup

from errors import (
    EmptyNeighborhoodError,
    HSearchExhaustedError,
    NotFreeBasisError,
    PermutationError,
    RankMismatchError,
    SearchExhaustedError,
    TrialTimeoutError,
    WordError,
)
from freeword import (
    ReducedWord,
    commute,
    concat,
    extend_with_fresh,
    f2_embed,
    format_word,
    lift,
    power,
    random_word,
    substitute,
    words_of_length,
)
from logger import audit_logger
from oracle import FlatPermCarrier, iter_word_values
from perm import FinPerm, evaluate_word
from stallings import is_free_basis


def direct_sum(perms: Sequence[FinPerm]) -> FinPerm:
    """Block-diagonal permutation: perms[k] acts on its own block of points."""
    images: list[int] = []
    for p in perms:
        offset = len(images)
        images.extend(y + offset for y in p.images)
    return FinPerm(tuple(images))


@dataclass(frozen=True)
class FiniteQuotient:
    images: tuple[FinPerm, ...]
    blocks: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.images:
            raise WordError("a quotient needs at least one generator image")
        degree = self.images[0].degree
        if any(p.degree != degree for p in self.images):
            raise PermutationError("quotient images must share one degree")
        if self.blocks is not None and sum(self.blocks) != degree:
            raise PermutationError(f"blocks {self.blocks} do not cover degree {degree}")

    @property
    def rank(self) -> int:
        return len(self.images)

    @property
    def degree(self) -> int:
        return self.images[0].degree

    @classmethod
    def trivial(cls, rank: int) -> "FiniteQuotient":
        return cls(tuple(FinPerm.identity(1) for _ in range(rank)))

    @classmethod
    def parse(cls, text: str) -> "FiniteQuotient":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")]
        if not lines:
            raise PermutationError("empty quotient description")
        header = lines[0].split()
        if len(header) != 4 or header[0] != "rank" or header[2] != "degree":
            raise PermutationError(f"quotient header must read 'rank n degree m', got '{lines[0]}'")
        rank, degree = int(header[1]), int(header[3])
        if len(lines) - 1 != rank:
            raise PermutationError(f"header promises {rank} images, found {len(lines) - 1}")
        images = tuple(FinPerm(tuple(int(tok) for tok in ln.split())) for ln in lines[1:])
        if any(p.degree != degree for p in images):
            raise PermutationError(f"every image must have degree {degree}")
        return cls(images)

    @classmethod
    def from_file(cls, path: str | Path) -> "FiniteQuotient":
        return cls.parse(Path(path).read_text())

    def to_text(self) -> str:
        body = "\n".join(str(p) for p in self.images)
        return f"rank {self.rank} degree {self.degree}\n{body}\n"

    def lift(self, rank: int) -> "FiniteQuotient":
        """The same map on a larger free group, extra generators sent to 1."""
        if rank < self.rank:
            raise RankMismatchError(self.rank, rank)
        extra = tuple(FinPerm.identity(self.degree) for _ in range(rank - self.rank))
        return FiniteQuotient(self.images + extra, self.blocks)

    @cached_property
    def image_group(self) -> PermutationGroup:
        return PermutationGroup([_to_sympy(p) for p in self.images])

    def covers(self, target: FinPerm) -> bool:
        """Whether target lies in the subgroup generated by the images."""
        if target.degree != self.degree:
            return False
        return bool(self.image_group.contains(_to_sympy(target)))

    def kernel(self) -> "CosetNeighborhood":
        return CosetNeighborhood(self, FinPerm.identity(self.degree))


def _to_sympy(p: FinPerm) -> Permutation:
    return Permutation([y - 1 for y in p.images])


@dataclass(frozen=True)
class CosetNeighborhood:
    """{w : q(w) = target}; constructed only when nonempty."""
    quotient: FiniteQuotient
    target: FinPerm

    def __post_init__(self):
        if self.target.degree != self.quotient.degree:
            raise EmptyNeighborhoodError(
                f"target degree {self.target.degree} != quotient degree {self.quotient.degree}"
            )
        if not self.quotient.covers(self.target):
            raise EmptyNeighborhoodError(f"target [{self.target}] is not in the image subgroup")

    @property
    def rank(self) -> int:
        return self.quotient.rank

    def contains(self, w: ReducedWord) -> bool:
        return quotient_apply(self.quotient, w) == self.target

    def lift(self, rank: int) -> "CosetNeighborhood":
        return CosetNeighborhood(self.quotient.lift(rank), self.target)


def quotient_apply(q: FiniteQuotient, w: ReducedWord) -> FinPerm:
    if w.rank != q.rank:
        raise RankMismatchError(w.rank, q.rank)
    return evaluate_word(w, q.images)


def intersect_neighborhoods(neighborhoods: Sequence[CosetNeighborhood],
                            rank: int | None = None) -> FiniteQuotient:
    """
    The product quotient q*(w) = (q_1(w), ..., q_k(w)), laid out
    block-diagonally; its kernel is the intersection of the kernels.

    Because that kernel N is normal, N^(m-j) g N^j = gN for every m and j,
    so gN sits inside every neighborhood containing g.
    """
    if not neighborhoods:
        if rank is None:
            raise WordError("intersecting no neighborhoods needs an explicit rank")
        return FiniteQuotient.trivial(rank)
    rank = neighborhoods[0].rank if rank is None else rank
    for u in neighborhoods:
        if u.rank != rank:
            raise RankMismatchError(u.rank, rank)
    if len(neighborhoods) == 1:
        return neighborhoods[0].quotient
    images = tuple(
        direct_sum([u.quotient.images[a] for u in neighborhoods]) for a in range(rank)
    )
    return FiniteQuotient(images, tuple(u.quotient.degree for u in neighborhoods))


def _deadline_left(deadline: float | None):
    if deadline is not None and time.perf_counter() > deadline:
        raise TrialTimeoutError("search passed its deadline")


def coset_representative(u: CosetNeighborhood, max_len: int | None = None,
                         nontrivial: bool = False,
                         deadline: float | None = None) -> ReducedWord:
    """
    Shortest word of u in the fixed enumeration order.

    Args:
        max_len: search bound (default 2 * degree^2).
        nontrivial: skip the empty word even when u contains it.
    """
    q = u.quotient
    max_len = 2 * q.degree ** 2 if max_len is None else max_len
    if not nontrivial and u.target.is_identity():
        return ReducedWord.identity(q.rank)
    carrier = FlatPermCarrier.for_elements(q.images)
    target = u.target.to_array()
    for letters, value in iter_word_values(q.images, max_len, carrier, deadline=deadline):
        if carrier.equal(value, target):
            return ReducedWord._trusted(q.rank, letters)
    audit_logger.log_event("WORD_SEARCH_EXHAUSTED", {
        "search": "coset_representative",
        "target": str(u.target),
        "bound": max_len,
    })
    raise SearchExhaustedError("coset representative", max_len)


def random_kernel_word(q: FiniteQuotient, rng, max_root_len: int = 3) -> ReducedWord:
    """r^k for a random nontrivial r of length <= max_root_len, k the order of q(r)."""
    length = int(rng.integers(1, max_root_len + 1))
    r = random_word(q.rank, length, rng)
    return power(r, quotient_apply(q, r).order())


def check_power_containment(u: CosetNeighborhood, g: ReducedWord, kernel_of: FiniteQuotient,
                            m: int, samples: int, rng) -> bool:
    """
    Samples N^(m-j) g N^j inside u for 0 <= j <= m, N the kernel of kernel_of.
    """
    if not u.contains(g):
        return False
    for _ in range(samples):
        for j in range(m + 1):
            word = g
            for _ in range(m - j):
                word = concat(random_kernel_word(kernel_of, rng), word)
            for _ in range(j):
                word = concat(word, random_kernel_word(kernel_of, rng))
            if not u.contains(word):
                return False
    return True


def find_free_pair_in_kernel(q: FiniteQuotient, max_len: int,
                             deadline: float | None = None) -> tuple[ReducedWord, ReducedWord]:
    """
    First non-commuting pair of kernel words: kernel words are met in
    enumeration order and each is paired with the earlier ones in order.
    Two elements of a free group generate it freely iff they do not commute.

    Raises:
        SearchExhaustedError: when no such pair has length <= max_len.
    """
    if q.rank < 2:
        raise WordError("a free pair needs rank >= 2")
    if max_len < 1:
        raise WordError(f"search bound must be positive, got {max_len}")
    carrier = FlatPermCarrier.for_elements(q.images)
    identity = carrier.identity()
    kernel_words: list[ReducedWord] = []
    for letters, value in iter_word_values(q.images, max_len, carrier, deadline=deadline):
        if not carrier.equal(value, identity):
            continue
        z = ReducedWord._trusted(q.rank, letters)
        for y in kernel_words:
            if not commute(y, z):
                audit_logger.log_event("KERNEL_PAIR_FOUND", {
                    "degree": q.degree,
                    "y": format_word(y),
                    "z": format_word(z),
                })
                return y, z
        kernel_words.append(z)
    audit_logger.log_event("WORD_SEARCH_EXHAUSTED", {
        "search": "kernel_free_pair",
        "degree": q.degree,
        "kernel_words_seen": len(kernel_words),
        "bound": max_len,
    })
    raise SearchExhaustedError("free pair in kernel", max_len)


def fin_case_length_bound(words: Sequence[ReducedWord]) -> int:
    """An integer m > 2 L(g_i) + 2n + 2 for every g_i."""
    n = len(words)
    return max((2 * len(g) + 2 * n + 2 for g in words), default=2 * n + 2) + 1


def _h_candidates(max_total: int):
    """(u1, u2) over the letters of <y, z> by total length, then lexicographically."""
    for total in range(max_total + 1):
        for first_len in range(total + 1):
            for u1 in words_of_length(2, first_len):
                for u2 in words_of_length(2, total - first_len):
                    yield u1, u2


def fin_case_perturb(targets: Sequence[tuple[ReducedWord, CosetNeighborhood]],
                     h_search_len: int, pair_search_len: int | None = None,
                     deadline: float | None = None) -> tuple[ReducedWord, ...]:
    """
    A free basis (f_1, ..., f_n) with f_i in U_i, close to the given g_i.

    With (y, z) a free pair in the kernel N of the product quotient,
    f_i = z^-i y h_i1 g_i h_i2 y z^i for h_i1, h_i2 in <y, z>, chosen so
    that the reduced f_i reads P_i w_i S_i letter for letter, where
    P_i = z^-i y and S_i = y z^i (each reduced on its own) and
    w_i = h_i1 g_i h_i2 (reduced, nonempty). Since y, z and the h's are in
    N, f_i is in g_i N, which lies inside U_i. The first (h_i1, h_i2) in
    search order whose f_i fits the pattern is taken; the finished tuple is
    then checked once with Stallings folding.

    m = fin_case_length_bound(g_1..g_n) bounds the powers N^(m-j) g_i N^j
    that U_i has to hold; it goes into the FIN_CASE_CONSTRUCTED event and
    check_power_containment samples it.

    Args:
        targets: pairs (g_i, U_i) with g_i in U_i.
        h_search_len: bound on the total <y, z>-length of (h_i1, h_i2).
        pair_search_len: bound for the kernel pair search (default
            2 * degree of the product quotient).

    Raises:
        HSearchExhaustedError: no (h_i1, h_i2) within h_search_len fits.
        SearchExhaustedError: no kernel pair within pair_search_len.
        NotFreeBasisError: the pattern words fail the folding check.
    """
    if not targets:
        return ()
    rank = targets[0][0].rank
    for g, u in targets:
        if g.rank != rank or u.rank != rank:
            raise RankMismatchError(g.rank if g.rank != rank else u.rank, rank)
        if not u.contains(g):
            raise WordError(f"target word {format_word(g)} is outside its neighborhood")
    if rank < 2:
        raise WordError("the perturbation needs rank >= 2")

    n = len(targets)
    m = fin_case_length_bound([g for g, _ in targets])
    q_star = intersect_neighborhoods([u for _, u in targets])
    pair_search_len = 2 * q_star.degree if pair_search_len is None else pair_search_len
    y, z = find_free_pair_in_kernel(q_star, pair_search_len, deadline=deadline)

    out: list[ReducedWord] = []
    for i, (g, _) in enumerate(targets, start=1):
        prefix = concat(power(z, -i), y)
        suffix = concat(y, power(z, i))
        chosen = None
        for u1, u2 in _h_candidates(h_search_len):
            _deadline_left(deadline)
            h1, h2 = substitute(u1, (y, z)), substitute(u2, (y, z))
            middle = concat(concat(h1, g), h2)
            if middle.is_identity():
                continue
            f = concat(concat(prefix, middle), suffix)
            if f.letters != prefix.letters + middle.letters + suffix.letters:
                continue
            chosen = f
            break
        if chosen is None:
            audit_logger.log_event("WORD_SEARCH_EXHAUSTED", {
                "search": "fin_case_h_products",
                "target": format_word(g),
                "index": i,
                "bound": h_search_len,
            })
            raise HSearchExhaustedError(f"h-products for target {i}", h_search_len)
        out.append(chosen)
    if not is_free_basis(out):
        raise NotFreeBasisError(f"pattern words {[format_word(f) for f in out]} are not a free basis")

    audit_logger.log_event("FIN_CASE_CONSTRUCTED", {
        "n": n,
        "m": m,
        "y": format_word(y),
        "z": format_word(z),
        "degree": q_star.degree,
        "words": [format_word(f) for f in out],
    })
    return tuple(out)


def density_witness_free_group(rank: int, constraints: Sequence[CosetNeighborhood], total_rank: int,
                               h_search_len: int = 8,
                               deadline: float | None = None) -> tuple[ReducedWord, ...]:
    """
    A tuple of total_rank words, freely generating, whose first entries lie
    in the constraints.

    Coset representatives seed fin_case_perturb. Up to `rank` the constraint
    list is padded with the whole group, so the perturbed words fill F_rank's
    share of the tuple; the rest are generators no perturbed word uses.
    """
    k = len(constraints)
    if not total_rank >= rank >= k:
        raise WordError(f"need total_rank >= rank >= constraints, got {total_rank}, {rank}, {k}")
    for u in constraints:
        if u.rank != rank:
            raise RankMismatchError(u.rank, rank)

    if k == 0:
        words: tuple[ReducedWord, ...] = ()
    elif rank == 1:
        words = (coset_representative(constraints[0], nontrivial=True, deadline=deadline),)
    else:
        whole = FiniteQuotient.trivial(rank).kernel()
        padded = list(constraints) + [whole] * (rank - k)
        seeds = [(coset_representative(u, deadline=deadline), u) for u in padded]
        words = fin_case_perturb(seeds, h_search_len, deadline=deadline)

    result = extend_with_fresh([lift(w, total_rank) for w in words], total_rank,
                               count=total_rank - len(words))
    audit_logger.log_event("DENSITY_WITNESS_BUILT", {
        "rank": rank,
        "total_rank": total_rank,
        "constraints": k,
        "words": [format_word(w) for w in result],
    })
    return result


def countable_extension(free_tuple: Sequence[ReducedWord], k: int) -> tuple[ReducedWord, ...]:
    """
    (g_1..g_n, H_1..H_k) with H_j = a^-j b a^j for a = g_(n+1), b = g_(n+2).

    Raises:
        NotFreeBasisError: if the input does not freely generate.
    """
    if len(free_tuple) < 3:
        raise WordError("countable extension needs at least three words")
    if k < 0:
        raise WordError(f"k must be non-negative, got {k}")
    if not is_free_basis(free_tuple):
        raise NotFreeBasisError("input tuple is not a free basis")
    a, b = free_tuple[-2], free_tuple[-1]
    extension = tuple(substitute(f2_embed(j), (a, b)) for j in range(1, k + 1))
    return tuple(free_tuple[:-2]) + extension


def first_nontrivial_kernel_word(q: FiniteQuotient, max_len: int | None = None) -> ReducedWord:
    """Bounded search behind the non-discreteness of the model."""
    return coset_representative(q.kernel(), max_len=max_len, nontrivial=True)
