"""
Products of finite symmetric groups G = prod_i S_phi(i) over a truncated
degree profile, and the planted constructions that make tuples of G free up
to a word bound:

* prod1_witness: a permutation tuple on which one given word is nontrivial;
* prod2_family: one planted coordinate per class of short words;
* prod4_perturb: overriding coordinates and reporting which planted words
  the override touches;
* prod_main_family / dense_witness: a family meeting every basic box on the
  visible coordinates whose small subsets stay free on the reserve.
"""
from __future__ import annotations

import bisect
import heapq
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from errors import PermutationError, ProfileExhaustedError, SearchExhaustedError
from freeword import ReducedWord, alphabet, concat, enumerate_words, format_word, word_index
from logger import audit_logger
from perm import FinPerm, OpenBox, SuppPerm, complete_box, perm_rank, perm_unrank


@dataclass(frozen=True)
class DegreeProfile:
    degrees: tuple[int, ...]
    reserve_count: int = 0
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.degrees:
            raise PermutationError("a degree profile needs at least one coordinate")
        if any(d < 1 for d in self.degrees):
            raise PermutationError("profile degrees must be positive")
        if not 0 <= self.reserve_count <= len(self.degrees):
            raise PermutationError(
                f"reserve count {self.reserve_count} outside 0..{len(self.degrees)}"
            )

    @property
    def size(self) -> int:
        return len(self.degrees)

    @property
    def visible_count(self) -> int:
        return len(self.degrees) - self.reserve_count

    def visible_indices(self) -> range:
        return range(self.visible_count)

    def reserve_indices(self) -> range:
        return range(self.visible_count, len(self.degrees))

    def shadow(self) -> dict[int, int]:
        """For each l, how many coordinates have degree >= l."""
        return {l: sum(1 for d in self.degrees if d >= l) for l in range(1, max(self.degrees) + 1)}

    @classmethod
    def for_dense_family(cls, visible: Sequence[int], bound: int) -> "DegreeProfile":
        """Visible degrees plus a reserve sized for prod_main_family(., bound)."""
        family_size = sum(_subset_order(visible, subset) for subset in _visible_subsets(len(visible)))
        blocks = len(_functionals(_digit_count(family_size)))
        per_block = sum(1 for _ in enumerate_words(3, bound, "cyclic"))
        reserve = blocks * per_block
        return cls(tuple(visible) + (bound + 1,) * reserve, reserve)

    @classmethod
    def from_file(cls, path: str | Path) -> "DegreeProfile":
        """One integer per line after a "reserve=<k>" header."""
        lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("reserve="):
            raise PermutationError(f"{path}: first line must be 'reserve=<k>'")
        reserve = int(lines[0].split("=", 1)[1])
        return cls(tuple(int(ln) for ln in lines[1:]), reserve, source=str(path))

    @classmethod
    def parse_inline(cls, text: str) -> "DegreeProfile":
        """"reserve=<k>:d0,d1,..." (the reserve prefix is optional)."""
        reserve = 0
        if text.startswith("reserve="):
            head, text = text.split(":", 1)
            reserve = int(head.split("=", 1)[1])
        return cls(tuple(int(d) for d in text.split(",") if d.strip()), reserve)

    def to_text(self) -> str:
        return f"reserve={self.reserve_count}\n" + "\n".join(str(d) for d in self.degrees) + "\n"

    def describe(self) -> str:
        return self.source or f"reserve={self.reserve_count}:" + ",".join(str(d) for d in self.degrees)


@dataclass(frozen=True)
class ProductElement:
    profile: DegreeProfile = field(compare=False, hash=False, repr=False)
    coords: tuple[tuple[int, FinPerm], ...] = ()

    def __post_init__(self):
        for i, p in self.coords:
            if not 0 <= i < self.profile.size:
                raise PermutationError(f"coordinate {i} outside the profile")
            if p.degree != self.profile.degrees[i]:
                raise PermutationError(
                    f"coordinate {i} needs degree {self.profile.degrees[i]}, got {p.degree}"
                )
            if p.is_identity():
                raise PermutationError(f"identity stored at coordinate {i}")

    @classmethod
    def from_map(cls, profile: DegreeProfile, mapping: Mapping[int, FinPerm]) -> "ProductElement":
        return cls(profile, tuple(sorted((i, p) for i, p in mapping.items() if not p.is_identity())))

    def coordinate_blocks(self) -> dict[int, FinPerm]:
        return dict(self.coords)

    def projection(self, i: int) -> FinPerm:
        return self.coordinate_blocks().get(i) or FinPerm.identity(self.profile.degrees[i])

    def __mul__(self, other: "ProductElement") -> "ProductElement":
        if not isinstance(other, ProductElement):
            return NotImplemented
        if other.profile != self.profile:
            raise PermutationError("elements of different products")
        mine, theirs = self.coordinate_blocks(), other.coordinate_blocks()
        out = {}
        for i in mine.keys() | theirs.keys():
            if i in mine and i in theirs:
                out[i] = mine[i] * theirs[i]
            else:
                out[i] = mine.get(i) or theirs[i]
        return ProductElement.from_map(self.profile, out)

    def inverse(self) -> "ProductElement":
        return ProductElement(self.profile, tuple((i, p.inverse()) for i, p in self.coords))

    def identity_like(self) -> "ProductElement":
        return ProductElement(self.profile, ())

    def is_identity(self) -> bool:
        return not self.coords

    def to_json(self) -> dict:
        return {
            "coords": {str(i): str(p) for i, p in self.coords},
            "profile": self.profile.describe(),
        }

    @classmethod
    def from_json(cls, data: dict, profile: DegreeProfile | None = None) -> "ProductElement":
        if profile is None:
            ref = data["profile"]
            profile = DegreeProfile.from_file(ref) if Path(ref).exists() else DegreeProfile.parse_inline(ref)
        mapping = {
            int(i): FinPerm(tuple(int(x) for x in images.split()))
            for i, images in data["coords"].items()
        }
        return cls.from_map(profile, mapping)


@dataclass(frozen=True)
class ProductBox:
    profile: DegreeProfile = field(compare=False, hash=False, repr=False)
    required: tuple[tuple[int, FinPerm], ...] = ()

    def __post_init__(self):
        for i, p in self.required:
            if not 0 <= i < self.profile.visible_count:
                raise PermutationError(f"box constrains coordinate {i}, which is not visible")
            if p.degree != self.profile.degrees[i]:
                raise PermutationError(
                    f"box coordinate {i} needs degree {self.profile.degrees[i]}, got {p.degree}"
                )

    @classmethod
    def of(cls, profile: DegreeProfile, mapping: Mapping[int, FinPerm]) -> "ProductBox":
        return cls(profile, tuple(sorted(mapping.items())))

    def keys(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.required)


def box_membership(element: ProductElement, box: ProductBox) -> bool:
    return all(element.projection(i) == p for i, p in box.required)


# ---------------------------------------------------------------------------
# prod1: one word, one permutation tuple
# ---------------------------------------------------------------------------

PROD1_LAYOUTS = ("compact", "regular")


def _left_multiply(letter, u: ReducedWord) -> ReducedWord:
    return concat(ReducedWord._trusted(u.rank, (letter,)), u)


@lru_cache(maxsize=4096)
def prod1_witness(w: ReducedWord, layout: str = "compact") -> tuple[int, tuple[FinPerm, ...]]:
    """
    Permutations f_1..f_n of some S_m with w(f_1, ..., f_n) != 1.

    The generators act on F_n by left multiplication, so evaluating w at the
    empty word walks the suffixes of w (the path Gamma) from e to w. Each
    f_a copies that action on the points it needs and is completed with the
    minimal-support policy.

    Layouts:
        "compact": Gamma's elements are numbered 1..|w|+1 in word order and
            only the steps on the path are constrained; m = |w| + 1.
        "regular": points are positions in the global word enumeration, every
            generator is constrained on all of Gamma in both directions, and
            m is the largest position in Gamma and its neighbours.
    """
    if w.is_identity():
        raise PermutationError("the empty word is trivial in every group")
    if layout not in PROD1_LAYOUTS:
        raise PermutationError(f"unknown prod1 layout '{layout}'")
    n, letters = w.rank, w.letters
    path = [ReducedWord._trusted(n, letters[t:]) for t in range(len(letters), -1, -1)]
    constraints: list[set[tuple[int, int]]] = [set() for _ in range(n)]

    if layout == "compact":
        point = {u: k for k, u in enumerate(sorted(path, key=lambda u: u.sort_key), start=1)}
        degree = len(path)
        for t in range(len(letters) - 1, -1, -1):
            h = letters[t]
            before = ReducedWord._trusted(n, letters[t + 1:])
            after = ReducedWord._trusted(n, letters[t:])
            if h.sign > 0:
                constraints[h.index].add((point[before], point[after]))
            else:
                constraints[h.index].add((point[after], point[before]))
    else:
        degree = 1
        for u in path:
            for a in alphabet(n):
                v = _left_multiply(a, u)
                pair = (word_index(u), word_index(v)) if a.sign > 0 else (word_index(v), word_index(u))
                constraints[a.index].add(pair)
                degree = max(degree, word_index(u), word_index(v))

    tuple_out = tuple(
        complete_box(OpenBox.of(pairs), "minimal").to_finperm(degree) for pairs in constraints
    )
    return degree, tuple_out


# ---------------------------------------------------------------------------
# prod2: planting every short word on its own coordinate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlantedFamily:
    """A tuple of product elements plus where each class word was planted."""
    elements: tuple[ProductElement, ...]
    plantings: tuple[tuple[ReducedWord, int], ...]
    bound: int

    def __iter__(self) -> Iterator[ProductElement]:
        return iter(self.elements)

    def __len__(self) -> int:
        return len(self.elements)

    def __getitem__(self, k):
        return self.elements[k]

    def witness_coordinates(self, max_len: int | None = None) -> set[int]:
        return {c for w, c in self.plantings if max_len is None or len(w) <= max_len}

    def used_coordinates(self) -> set[int]:
        return {c for _, c in self.plantings}


class _CoordinatePool:
    """Unassigned coordinates, handing out the smallest index of sufficient degree."""

    def __init__(self, profile: DegreeProfile, coordinates):
        self._heaps: dict[int, list[int]] = {}
        for c in coordinates:
            self._heaps.setdefault(profile.degrees[c], []).append(c)
        for heap in self._heaps.values():
            heapq.heapify(heap)

    def take(self, min_degree: int) -> int | None:
        best_degree = None
        for d, heap in self._heaps.items():
            if d >= min_degree and heap and (best_degree is None or heap[0] < self._heaps[best_degree][0]):
                best_degree = d
        if best_degree is None:
            return None
        return heapq.heappop(self._heaps[best_degree])


def prod2_family(profile: DegreeProfile, n: int, bound: int,
                 coordinates: Sequence[int] | None = None,
                 layout: str = "compact") -> PlantedFamily:
    """
    n product elements free up to the word bound.

    Each class representative w (rank n, length <= bound), in enumeration
    order, gets the smallest-index unassigned coordinate whose degree fits
    prod1_witness(w); element a carries the a-th witness permutation there
    and the identity on every coordinate nobody planted.

    Args:
        coordinates: restrict planting to these coordinates (default: all).

    Raises:
        ProfileExhaustedError: naming the first word with no coordinate left.
    """
    if n < 1 or bound < 1:
        raise PermutationError("prod2 needs n >= 1 and bound >= 1")
    pool = _CoordinatePool(profile, range(profile.size) if coordinates is None else coordinates)
    per_element: list[dict[int, FinPerm]] = [{} for _ in range(n)]
    plantings: list[tuple[ReducedWord, int]] = []

    for w in enumerate_words(n, bound, "cyclic"):
        degree, witness = prod1_witness(w, layout)
        c = pool.take(degree)
        if c is None:
            audit_logger.warn("PROFILE_EXHAUSTED", {
                "word": format_word(w),
                "required_degree": degree,
                "planted": len(plantings),
                "shadow": profile.shadow().get(degree, 0),
            })
            raise ProfileExhaustedError(format_word(w), degree)
        plantings.append((w, c))
        for a, p in enumerate(witness):
            if not p.is_identity():
                per_element[a][c] = p.extend(profile.degrees[c])

    elements = tuple(ProductElement.from_map(profile, m) for m in per_element)
    audit_logger.log_event("PLANTING_COMPLETED", {
        "n": n,
        "bound": bound,
        "words": len(plantings),
        "coordinates_used": len(plantings),
    })
    return PlantedFamily(elements, tuple(plantings), bound)


# ---------------------------------------------------------------------------
# prod4: perturbation away from planted coordinates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityReport:
    overridden: tuple[int, ...]
    affected_words: tuple[tuple[str, int], ...]
    planting_known: bool
    guaranteed: bool

    def to_json(self) -> dict:
        return {
            "overridden": list(self.overridden),
            "affected_words": [{"word": w, "coordinate": c} for w, c in self.affected_words],
            "planting_known": self.planting_known,
            "guaranteed": self.guaranteed,
        }


def prod4_perturb(family: PlantedFamily | Sequence[ProductElement],
                  overrides: Mapping[tuple[int, int], FinPerm],
                  bound: int) -> tuple[PlantedFamily, StabilityReport]:
    """
    Replaces coordinate values of the tuple and reports stability.

    Freeness up to the bound is guaranteed to survive when the overridden
    coordinates avoid every coordinate planted for a word of length <= bound:
    those coordinates alone already keep each such word nontrivial.
    """
    elements = list(family.elements if isinstance(family, PlantedFamily) else family)
    plantings = family.plantings if isinstance(family, PlantedFamily) else ()
    planted_bound = family.bound if isinstance(family, PlantedFamily) else 0
    if not elements:
        return PlantedFamily((), plantings, planted_bound), StabilityReport((), (), False, False)
    profile = elements[0].profile

    maps = [e.coordinate_blocks() for e in elements]
    for (k, c), p in overrides.items():
        if not 0 <= k < len(elements):
            raise PermutationError(f"override names element {k}, tuple has {len(elements)}")
        if not 0 <= c < profile.size or p.degree != profile.degrees[c]:
            raise PermutationError(f"override at coordinate {c} has the wrong degree")
        maps[k][c] = p
    new_elements = tuple(ProductElement.from_map(profile, m) for m in maps)

    touched = tuple(sorted({c for _, c in overrides}))
    affected = tuple((format_word(w), c) for w, c in plantings if c in touched and len(w) <= bound)
    known = bool(plantings) and planted_bound >= bound
    report = StabilityReport(touched, affected, known, known and not affected)
    audit_logger.log_event("PERTURBATION_APPLIED", {"bound": bound, **report.to_json()})
    return PlantedFamily(new_elements, plantings, planted_bound), report


# ---------------------------------------------------------------------------
# The dense family
# ---------------------------------------------------------------------------

def _visible_subsets(visible_count: int) -> list[tuple[int, ...]]:
    return [c for size in range(visible_count + 1) for c in itertools.combinations(range(visible_count), size)]


def _subset_order(degrees: Sequence[int], subset: Sequence[int]) -> int:
    return math.prod(math.factorial(degrees[i]) for i in subset)


def _digit_count(family_size: int) -> int:
    d = 1
    while 3 ** d < family_size:
        d += 1
    return d


def _functionals(digits: int) -> list[tuple[int, ...]]:
    """Nonzero vectors over GF(3) whose first nonzero entry is 1."""
    out = []
    for v in itertools.product(range(3), repeat=digits):
        nonzero = [x for x in v if x]
        if nonzero and nonzero[0] == 1:
            out.append(v)
    return out


def _label(k: int, v: Sequence[int]) -> int:
    total = 0
    for coefficient in v:
        total += coefficient * (k % 3)
        k //= 3
    return total % 3


class DenseFamily:
    """
    The family h_(I,j): I runs over subsets of the visible coordinates
    (by size, then lexicographically) and j over 1..|G_I|.

    h_(I,j) equals the j-th element of G_I = prod_{i in I} S_phi(i) on I, the
    identity on the other visible coordinates, and the backing element
    f_(I,j) on the reserve. Member k (0-based) takes, on the block of each
    functional v over GF(3)^D, entry v . digits(k) mod 3 of that block's
    planted free triple; any three members are separated by some v, so
    every subset of at most three members restricts on that block to a
    relabelled free triple.
    """

    SUBSET_LIMIT = 3

    def __init__(self, profile: DegreeProfile, bound: int,
                 functionals: list[tuple[int, ...]], blocks: list[PlantedFamily]):
        self.profile = profile
        self.bound = bound
        self.subsets = _visible_subsets(profile.visible_count)
        self.orders = [_subset_order(profile.degrees, s) for s in self.subsets]
        self.offsets = list(itertools.accumulate([0] + self.orders[:-1]))
        self.functionals = functionals
        self.blocks = blocks
        self._subset_position = {s: k for k, s in enumerate(self.subsets)}
        self.member_at = lru_cache(maxsize=256)(self._build_member)

    def __len__(self) -> int:
        return sum(self.orders)

    def keys(self) -> Iterator[tuple[tuple[int, ...], int]]:
        for subset, order in zip(self.subsets, self.orders):
            for j in range(1, order + 1):
                yield subset, j

    def index_of(self, subset: Sequence[int], j: int) -> int:
        position = self._subset_position[tuple(subset)]
        if not 1 <= j <= self.orders[position]:
            raise PermutationError(f"j = {j} outside 1..{self.orders[position]}")
        return self.offsets[position] + j - 1

    def key_of(self, k: int) -> tuple[tuple[int, ...], int]:
        position = bisect.bisect_right(self.offsets, k) - 1
        return self.subsets[position], k - self.offsets[position] + 1

    def visible_element(self, subset: Sequence[int], j: int) -> dict[int, FinPerm]:
        """The j-th element of G_I (mixed radix, first coordinate most significant)."""
        rank = j - 1
        out = {}
        for i in reversed(tuple(subset)):
            size = math.factorial(self.profile.degrees[i])
            out[i] = perm_unrank(self.profile.degrees[i], rank % size)
            rank //= size
        return out

    def backing(self, k: int) -> dict[int, FinPerm]:
        """f for member k: its reserve coordinates."""
        out = {}
        for v, block in zip(self.functionals, self.blocks):
            out.update(block.elements[_label(k, v)].coordinate_blocks())
        return out

    def _build_member(self, k: int) -> ProductElement:
        subset, j = self.key_of(k)
        mapping = self.backing(k)
        mapping.update(self.visible_element(subset, j))
        return ProductElement.from_map(self.profile, mapping)

    def member(self, subset: Sequence[int], j: int) -> ProductElement:
        return self.member_at(self.index_of(subset, j))

    def __getitem__(self, k: int) -> ProductElement:
        if not 0 <= k < len(self):
            raise IndexError(k)
        return self.member_at(k)

    def __iter__(self) -> Iterator[ProductElement]:
        for k in range(len(self)):
            yield self.member_at(k)


def prod_main_family(profile: DegreeProfile, bound: int) -> DenseFamily:
    """
    Builds the dense family over the visible coordinates, with backing
    blocks planted on the reserve by prod2_family (rank 3, the bound).

    Raises:
        ProfileExhaustedError: when the reserve cannot host every block.
    """
    if profile.reserve_count < 1:
        raise PermutationError("the dense family needs reserve coordinates")
    family_size = sum(_subset_order(profile.degrees, s) for s in _visible_subsets(profile.visible_count))
    functionals = _functionals(_digit_count(family_size))

    remaining = set(profile.reserve_indices())
    blocks = []
    for _ in functionals:
        block = prod2_family(profile, DenseFamily.SUBSET_LIMIT, bound, coordinates=sorted(remaining))
        remaining -= block.used_coordinates()
        blocks.append(block)

    family = DenseFamily(profile, bound, functionals, blocks)
    audit_logger.log_event("DENSE_FAMILY_BUILT", {
        "visible": list(profile.degrees[:profile.visible_count]),
        "size": len(family),
        "blocks": len(blocks),
        "reserve_used": profile.reserve_count - len(remaining),
        "bound": bound,
    })
    return family


def _box_index(family: DenseFamily, box: ProductBox) -> tuple[tuple[int, ...], int]:
    subset = box.keys()
    rank = 0
    for i, p in box.required:
        rank = rank * math.factorial(family.profile.degrees[i]) + perm_rank(p)
    return subset, rank + 1


def dense_witness(family: DenseFamily, box: ProductBox) -> ProductElement:
    """The member h_(I,j) with I the box's coordinates and j its required tuple."""
    subset, j = _box_index(family, box)
    return family.member(subset, j)


def dense_witnesses(family: DenseFamily, boxes: Sequence[ProductBox]) -> tuple[ProductElement, ...]:
    """
    Distinct members, one inside each box. A box whose exact member is
    already taken is refined by fixing one more visible coordinate.
    """
    used: set[int] = set()
    out = []
    for box in boxes:
        subset, j = _box_index(family, box)
        candidates = [family.index_of(subset, j)]
        required = dict(box.required)
        for c in family.profile.visible_indices():
            if c in required:
                continue
            for r in range(math.factorial(family.profile.degrees[c])):
                refined = ProductBox.of(family.profile, {**required, c: perm_unrank(family.profile.degrees[c], r)})
                candidates.append(family.index_of(*_box_index(family, refined)))
        k = next((k for k in candidates if k not in used), None)
        if k is None:
            raise SearchExhaustedError("distinct dense family members", len(candidates))
        used.add(k)
        out.append(family[k])
    return tuple(out)


# ---------------------------------------------------------------------------
# Sym(Z+): the same planting on disjoint blocks of fresh points
# ---------------------------------------------------------------------------

def plant_free_blocks(boxes: Sequence[OpenBox], bound: int,
                      degree_limit: int | None = None) -> tuple[SuppPerm, ...]:
    """
    One permutation per box, each inside its box, jointly free up to bound.

    Each box is completed with the minimal-support policy; then every class
    word of rank len(boxes) and length <= bound gets its own block of fresh
    points past everything constrained, carrying prod1_witness(w).

    Raises:
        ProfileExhaustedError: when degree_limit leaves too few points.
    """
    n = len(boxes)
    base = [complete_box(box, "minimal") for box in boxes]
    offset = max([box.max_point() for box in boxes] + [p.max_point() for p in base] + [0])
    parts: list[dict[int, int]] = [dict(p.mapping) for p in base]
    for w in enumerate_words(n, bound, "cyclic"):
        degree, witness = prod1_witness(w)
        if degree_limit is not None and offset + degree > degree_limit:
            audit_logger.warn("PROFILE_EXHAUSTED", {"word": format_word(w), "points_needed": offset + degree})
            raise ProfileExhaustedError(format_word(w), offset + degree)
        for a, p in enumerate(witness):
            for x, y in enumerate(p.images, start=1):
                if x != y:
                    parts[a][offset + x] = offset + y
        offset += degree
    return tuple(SuppPerm.from_map(m) for m in parts)


def save_family_json(path: str | Path, elements: Sequence[ProductElement], extra: dict | None = None):
    payload = {"elements": [e.to_json() for e in elements], **(extra or {})}
    Path(path).write_text(json.dumps(payload, indent=2))
