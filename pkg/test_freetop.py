import itertools
import math

import pytest

from errors import EmptyNeighborhoodError, NotFreeBasisError, PermutationError, RankMismatchError, SearchExhaustedError, WordError
from freeword import ReducedWord, enumerate_words, lift, parse_word, parse_words, power, substitute
from freetop import (
    CosetNeighborhood,
    FiniteQuotient,
    _h_candidates,
    check_power_containment,
    coset_representative,
    countable_extension,
    density_witness_free_group,
    direct_sum,
    fin_case_length_bound,
    fin_case_perturb,
    find_free_pair_in_kernel,
    first_nontrivial_kernel_word,
    intersect_neighborhoods,
    quotient_apply,
    random_kernel_word,
)
from perm import FinPerm, perm_unrank, random_finperm
from stallings import build_graph, contains, is_free_basis


def fp(text, degree):
    return FinPerm.from_cycles(text, degree)


@pytest.fixture
def s3_pair():
    """x -> (1 2), y -> (2 3) in S_3."""
    return FiniteQuotient((fp("(1 2)", 3), fp("(2 3)", 3)))


def coset(q, word):
    return CosetNeighborhood(q, quotient_apply(q, word))


def symmetric_group(degree):
    return [perm_unrank(degree, r) for r in range(math.factorial(degree))]


# --- quotients and neighborhoods ---------------------------------------------

def test_quotient_apply_examples(s3_pair):
    assert quotient_apply(s3_pair, ReducedWord.identity(2)).is_identity()
    assert quotient_apply(s3_pair, parse_word("1 1", 2)).is_identity()
    image = quotient_apply(s3_pair, parse_word("1 2"))
    assert image == fp("(1 2 3)", 3)
    assert image.order() == 3


def test_quotient_apply_rank_mismatch(s3_pair):
    with pytest.raises(RankMismatchError):
        quotient_apply(s3_pair, parse_word("1 3"))


def test_quotient_text_round_trip(s3_pair, tmp_path):
    path = tmp_path / "q.txt"
    path.write_text("# transpositions\n" + s3_pair.to_text())
    assert FiniteQuotient.from_file(path) == s3_pair
    assert s3_pair.to_text().splitlines()[0] == "rank 2 degree 3"


@pytest.mark.parametrize("text", [
    "",
    "rank 2\n2 1\n1 2\n",
    "rank 2 degree 2\n2 1\n",
    "rank 1 degree 3\n2 1\n",
])
def test_quotient_parse_errors(text):
    with pytest.raises(PermutationError):
        FiniteQuotient.parse(text)


def test_neighborhood_must_be_nonempty():
    q = FiniteQuotient((fp("(1 2)", 3),))
    assert q.covers(fp("(1 2)", 3))
    with pytest.raises(EmptyNeighborhoodError):
        CosetNeighborhood(q, fp("(1 2 3)", 3))
    with pytest.raises(EmptyNeighborhoodError):
        CosetNeighborhood(q, FinPerm.identity(2))


def test_neighborhood_membership(s3_pair):
    u = coset(s3_pair, parse_word("1", 2))
    assert u.contains(parse_word("1", 2))
    assert u.contains(parse_word("1 2 2"))
    assert not u.contains(parse_word("2"))


def test_lifted_quotient_ignores_new_generators(s3_pair):
    lifted = s3_pair.lift(4)
    assert lifted.rank == 4
    assert quotient_apply(lifted, parse_word("1 3 4 2")) == quotient_apply(s3_pair, parse_word("1 2"))
    with pytest.raises(RankMismatchError):
        s3_pair.lift(1)


def test_direct_sum_blocks():
    assert direct_sum([fp("(1 2)", 2), fp("(1 3)", 3)]) == FinPerm((2, 1, 5, 4, 3))


# --- intersect_neighborhoods -------------------------------------------------

def test_single_neighborhood_keeps_its_quotient(s3_pair):
    u = coset(s3_pair, parse_word("1", 2))
    assert intersect_neighborhoods([u]) == s3_pair


def test_intersection_needs_rank_when_empty():
    assert intersect_neighborhoods([], rank=3).rank == 3
    with pytest.raises(WordError):
        intersect_neighborhoods([])


def test_intersection_rank_mismatch(s3_pair):
    other = FiniteQuotient((fp("(1 2)", 2),))
    with pytest.raises(RankMismatchError):
        intersect_neighborhoods([s3_pair.kernel(), other.kernel()])


def test_product_quotient_of_s2_and_s3(rng):
    q2 = FiniteQuotient((fp("(1 2)", 2), FinPerm.identity(2)))
    q3 = FiniteQuotient((fp("(1 2 3)", 3), fp("(1 2)", 3)))
    q_star = intersect_neighborhoods([q2.kernel(), q3.kernel()])
    assert q_star.blocks == (2, 3)
    assert q_star.degree == 5
    for _ in range(20):
        u = random_kernel_word(q_star, rng)
        assert quotient_apply(q2, u).is_identity()
        assert quotient_apply(q3, u).is_identity()


def test_kernel_conjugates_stay_in_every_neighborhood(s3_pair, rng):
    q2 = FiniteQuotient((FinPerm.identity(2), fp("(1 2)", 2)))
    targets = [(parse_word("1", 2), coset(s3_pair, parse_word("1", 2))),
               (parse_word("2 1"), coset(q2, parse_word("2 1")))]
    q_star = intersect_neighborhoods([u for _, u in targets])
    for g, u in targets:
        for _ in range(50):
            left, right = random_kernel_word(q_star, rng), random_kernel_word(q_star, rng)
            assert u.contains(left * g * right)
        for m in (1, 2, 5):
            assert check_power_containment(u, g, q_star, m, samples=3, rng=rng)


def test_power_containment_needs_g_inside(s3_pair, rng):
    u = coset(s3_pair, parse_word("1", 2))
    assert not check_power_containment(u, parse_word("2"), s3_pair, 2, samples=1, rng=rng)


# --- coset representatives and kernel words ----------------------------------

def test_coset_representative_is_shortest(s3_pair):
    assert coset_representative(coset(s3_pair, parse_word("1 2"))) == parse_word("1 2")
    assert coset_representative(s3_pair.kernel()).is_identity()
    assert coset_representative(s3_pair.kernel(), nontrivial=True) == parse_word("1 1", 2)


def test_coset_representative_search_exhausted():
    q = FiniteQuotient((fp("(1 2 3 4 5 6)", 6),))
    target = quotient_apply(q, parse_word("1 1 1"))
    with pytest.raises(SearchExhaustedError):
        coset_representative(CosetNeighborhood(q, target), max_len=2)


def test_rank1_kernel_word():
    q = FiniteQuotient((fp("(1 2 3)", 3),))
    assert first_nontrivial_kernel_word(q) == parse_word("1 1 1")


def test_kernels_of_cyclic_quotients_are_nontrivial():
    for degree in range(1, 7):
        for p in symmetric_group(degree):
            q = FiniteQuotient((p,))
            word = first_nontrivial_kernel_word(q, max_len=2 * degree)
            assert not word.is_identity()
            assert quotient_apply(q, word).is_identity()


def test_kernels_of_random_quotients_are_nontrivial(rng):
    for _ in range(100):
        degree = int(rng.integers(1, 7))
        rank = int(rng.integers(2, 4))
        q = FiniteQuotient(tuple(random_finperm(degree, rng) for _ in range(rank)))
        word = first_nontrivial_kernel_word(q, max_len=2 * degree)
        assert quotient_apply(q, word).is_identity()
        assert len(word) <= 2 * degree


# --- free pairs in kernels ---------------------------------------------------

def test_free_pair_for_transpositions(s3_pair):
    y, z = find_free_pair_in_kernel(s3_pair, 4)
    assert (y, z) == (parse_word("1 1", 2), parse_word("2 2"))
    assert is_free_basis([y, z])


def test_free_pair_for_trivial_quotient():
    y, z = find_free_pair_in_kernel(FiniteQuotient.trivial(2), 2)
    assert (y, z) == (parse_word("1", 2), parse_word("2"))


def test_free_pair_search_exhausted(s3_pair):
    with pytest.raises(SearchExhaustedError):
        find_free_pair_in_kernel(s3_pair, 1)


def test_free_pair_needs_rank_two():
    with pytest.raises(WordError):
        find_free_pair_in_kernel(FiniteQuotient((fp("(1 2)", 2),)), 4)


def test_free_pairs_lie_in_kernel(rng):
    for _ in range(30):
        degree = int(rng.integers(2, 5))
        q = FiniteQuotient(tuple(random_finperm(degree, rng) for _ in range(2)))
        y, z = find_free_pair_in_kernel(q, 3 * degree)
        assert quotient_apply(q, y).is_identity()
        assert quotient_apply(q, z).is_identity()
        assert is_free_basis([y, z])


# --- fin_case_perturb --------------------------------------------------------

def _assert_pattern(f, y, z, i):
    prefix = power(z, -i) * y
    suffix = y * power(z, i)
    assert f.letters[:len(prefix)] == prefix.letters
    assert f.letters[len(f) - len(suffix):] == suffix.letters
    assert len(f) > len(prefix) + len(suffix)


def test_length_bound_exceeds_the_requirement():
    words = parse_words("1 2 1, 2")
    assert fin_case_length_bound(words) > 2 * 3 + 2 * 2 + 2


def test_single_kernel_target_gives_a_kernel_word(s3_pair):
    (f,) = fin_case_perturb([(ReducedWord.identity(2), s3_pair.kernel())], 4)
    assert not f.is_identity()
    assert quotient_apply(s3_pair, f).is_identity()
    assert is_free_basis([f])


def test_transposition_targets(s3_pair):
    g1, g2 = parse_word("1", 2), parse_word("2")
    targets = [(g1, coset(s3_pair, g1)), (g2, coset(s3_pair, g2))]
    f1, f2 = fin_case_perturb(targets, 4)
    assert quotient_apply(s3_pair, f1) == fp("(1 2)", 3)
    assert quotient_apply(s3_pair, f2) == fp("(2 3)", 3)
    assert is_free_basis([f1, f2])
    y, z = find_free_pair_in_kernel(intersect_neighborhoods([u for _, u in targets]), 12)
    _assert_pattern(f1, y, z, 1)
    _assert_pattern(f2, y, z, 2)


def test_first_pattern_match_is_taken(s3_pair):
    g1, g2 = parse_word("1 2", 2), parse_word("2", 2)
    targets = [(g1, coset(s3_pair, g1)), (g2, coset(s3_pair, g2))]
    found = fin_case_perturb(targets, 4)
    y, z = find_free_pair_in_kernel(intersect_neighborhoods([u for _, u in targets]), 12)
    for i, (g, _) in enumerate(targets, start=1):
        prefix, suffix = power(z, -i) * y, y * power(z, i)
        first = None
        for u1, u2 in _h_candidates(4):
            middle = substitute(u1, (y, z)) * g * substitute(u2, (y, z))
            f = prefix * middle * suffix
            if not middle.is_identity() and f.letters == prefix.letters + middle.letters + suffix.letters:
                first = f
                break
        assert found[i - 1] == first
    assert is_free_basis(found)


def test_fin_case_rejects_targets_outside_their_neighborhood(s3_pair):
    with pytest.raises(WordError):
        fin_case_perturb([(parse_word("2", 2), coset(s3_pair, parse_word("1", 2)))], 4)
    q1 = FiniteQuotient((fp("(1 2)", 2),))
    with pytest.raises(WordError):
        fin_case_perturb([(parse_word("1 1"), q1.kernel())], 4)
    assert fin_case_perturb([], 4) == ()


def _quotients(degree):
    return [FiniteQuotient(pair) for pair in itertools.product(symmetric_group(degree), repeat=2)]


def test_fin_case_containment_single_target():
    short = [w for w in enumerate_words(2, 2)]
    for q in _quotients(2) + _quotients(3):
        for g in short:
            (f,) = fin_case_perturb([(g, coset(q, g))], 4)
            assert quotient_apply(q, f) == quotient_apply(q, g)


@pytest.mark.slow
def test_fin_case_containment_target_pairs():
    short = [w for w in enumerate_words(2, 2)]
    for q in _quotients(2) + _quotients(3):
        for g1, g2 in itertools.product(short, repeat=2):
            f1, f2 = fin_case_perturb([(g1, coset(q, g1)), (g2, coset(q, g2))], 4)
            assert quotient_apply(q, f1) == quotient_apply(q, g1)
            assert quotient_apply(q, f2) == quotient_apply(q, g2)
            assert is_free_basis([f1, f2])


def _random_instance(rng):
    n = int(rng.integers(1, 4))
    targets = []
    for _ in range(n):
        degree = int(rng.integers(2, 4))
        q = FiniteQuotient(tuple(random_finperm(degree, rng) for _ in range(2)))
        g = ReducedWord.identity(2)
        for _ in range(int(rng.integers(0, 4))):
            g = g * ReducedWord.generator(int(rng.integers(2)), 2, int(rng.choice([-1, 1])))
        targets.append((g, coset(q, g)))
    return targets


def test_fin_case_random_instances(rng):
    for _ in range(20):
        targets = _random_instance(rng)
        out = fin_case_perturb(targets, 4)
        assert is_free_basis(out)
        assert all(u.contains(f) for f, (_, u) in zip(out, targets))


@pytest.mark.slow
def test_fin_case_many_random_instances(rng):
    for _ in range(200):
        targets = _random_instance(rng)
        out = fin_case_perturb(targets, 6)
        assert is_free_basis(out)
        assert all(u.contains(f) for f, (_, u) in zip(out, targets))


# --- density witnesses -------------------------------------------------------

def test_density_witness_without_constraints():
    assert density_witness_free_group(2, [], 3) == parse_words("1, 2, 3")


def test_density_witness_meets_two_cosets(s3_pair):
    u1, u2 = coset(s3_pair, parse_word("1", 2)), coset(s3_pair, parse_word("2", 2))
    words = density_witness_free_group(2, [u1, u2], 4)
    assert len(words) == 4
    assert is_free_basis(words)
    assert u1.lift(4).contains(words[0])
    assert u2.lift(4).contains(words[1])


def test_density_witness_pads_missing_constraints(s3_pair):
    u1 = coset(s3_pair, parse_word("1 2"))
    words = density_witness_free_group(2, [u1], 3)
    assert len(words) == 3
    assert is_free_basis(words)
    assert u1.lift(3).contains(words[0])


def test_density_witness_rank_one_kernel():
    q = FiniteQuotient((fp("(1 2 3)", 3),))
    (word,) = density_witness_free_group(1, [q.kernel()], 1)
    assert word == parse_word("1 1 1")


def test_density_witness_argument_checks(s3_pair):
    with pytest.raises(WordError):
        density_witness_free_group(3, [], 2)
    with pytest.raises(WordError):
        density_witness_free_group(1, [s3_pair.kernel(), s3_pair.kernel()], 2)
    with pytest.raises(RankMismatchError):
        density_witness_free_group(3, [s3_pair.kernel()], 3)


# --- countable extension -----------------------------------------------------

def test_countable_extension_formula():
    out = countable_extension(parse_words("1, 2, 3"), 2)
    assert out == (parse_word("1", 3), parse_word("-2 3 2"), parse_word("-2 -2 3 2 2"))


def test_countable_extension_k_zero():
    assert countable_extension(parse_words("1, 2, 3"), 0) == (parse_word("1", 3),)


def test_countable_extension_stays_free():
    basis = parse_words("1, 2, 3, 4")
    out = countable_extension(basis, 6)
    assert len(out) == 8
    assert len(set(out)) == 8
    assert is_free_basis(out)
    graph = build_graph(basis[2:])
    assert all(contains(graph, h) for h in out[2:])


def test_countable_extension_of_a_perturbed_basis():
    basis = parse_words("1 2, 2 1 1, 3 -2")
    assert is_free_basis(basis)
    out = countable_extension(basis, 4)
    assert is_free_basis(out)
    graph = build_graph(basis[1:])
    assert all(contains(graph, h) for h in out[1:])


def test_countable_extension_errors():
    with pytest.raises(WordError):
        countable_extension(parse_words("1, 2"), 1)
    with pytest.raises(WordError):
        countable_extension(parse_words("1, 2, 3"), -1)
    with pytest.raises(NotFreeBasisError):
        countable_extension(parse_words("1, 2, 1 2"), 1)


def test_lift_keeps_kernel_membership(s3_pair):
    word = lift(parse_word("1 1", 2), 4)
    assert s3_pair.kernel().lift(4).contains(word)
