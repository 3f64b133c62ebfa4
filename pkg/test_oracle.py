import itertools
import time

import numpy as np
import pytest

from errors import OracleError, PermutationError, TrialTimeoutError
from freeword import ReducedWord, is_class_representative, is_cyclically_reduced, parse_word, parse_words
from oracle import FlatPermCarrier, FreenessVerdict, MethodCarrier, carrier_for, iter_word_values, l_free_check, l_free_naive
from perm import FinPerm, SuppPerm, evaluate_word, perm_unrank, random_finperm
from stallings import is_free_basis


def cyc(text, degree=None):
    p = SuppPerm.from_cycles(text)
    return p if degree is None else p.to_finperm(degree)


def assert_sound(elements, verdict):
    if verdict.free:
        return
    w = verdict.witness
    assert not w.is_identity()
    assert is_cyclically_reduced(w)
    assert len(w) <= verdict.bound
    assert evaluate_word(w, elements).is_identity()


# --- examples ----------------------------------------------------------------

def test_involution_has_square_witness():
    verdict = l_free_check([cyc("(1 2)", 2)], 2)
    assert verdict.witness == parse_word("1 1")
    assert str(verdict) == "Witness(1 1)"


def test_standard_basis_is_free():
    basis = parse_words("1, 2")
    verdict = l_free_check(basis, 10)
    assert verdict.free
    assert str(verdict) == "FreeUpTo(10)"


def test_s3_generators_have_a_witness():
    pair = [cyc("(1 2 3)", 3), cyc("(1 2)", 3)]
    pruned, naive = l_free_check(pair, 6), l_free_naive(pair, 6)
    assert not pruned.free and not naive.free
    assert_sound(pair, pruned)
    assert_sound(pair, naive)


def test_transposition_pair_witness():
    pair = [cyc("(1 2)", 3), cyc("(1 3)", 3)]
    assert l_free_check(pair, 6).witness == parse_word("1 1", 2)


def test_identity_is_its_own_witness():
    verdict = l_free_naive([FinPerm.identity(3)], 1)
    assert verdict.witness == parse_word("1")


def test_symbolic_basis_of_words():
    words = parse_words("1 2, 2 1")
    assert is_free_basis(words)
    assert l_free_naive(words, 8).free
    assert l_free_check(words, 8).free


def test_symbolic_dependent_words():
    verdict = l_free_check(parse_words("1 1, 1 1 1"), 6)
    # the commutator vanishes before a^3 b^-2 does
    assert verdict.witness == parse_word("1 2 -1 -2")


def test_supp_perms_use_their_joint_support():
    pair = [cyc("(5 9)"), cyc("(9 12 40)")]
    assert l_free_check(pair, 4).witness == parse_word("1 1", 2)


# --- errors ------------------------------------------------------------------

def test_bound_must_be_positive():
    with pytest.raises(OracleError):
        l_free_check([cyc("(1 2)", 2)], 0)


def test_empty_tuple_is_rejected():
    with pytest.raises(OracleError):
        l_free_naive([], 3)
    with pytest.raises(OracleError):
        carrier_for([])


def test_mixed_degrees_are_rejected():
    with pytest.raises(PermutationError):
        l_free_check([FinPerm.identity(2), FinPerm.identity(3)], 2)


def test_unknown_element_type_has_no_flat_layout():
    with pytest.raises(OracleError):
        FlatPermCarrier.for_elements([3, 4])


def test_deadline_stops_the_walk():
    with pytest.raises(TrialTimeoutError):
        l_free_check(parse_words("1, 2, 3"), 9, deadline=time.perf_counter() - 1.0)


# --- carriers and the walk ---------------------------------------------------

def test_flat_carrier_composes_like_finperm(rng):
    f, g = random_finperm(6, rng), random_finperm(6, rng)
    carrier = carrier_for([f, g])
    value = carrier.compose(carrier.encode(f), carrier.encode(g))
    assert np.array_equal(value, (f * g).to_array())
    assert np.array_equal(carrier.invert(carrier.encode(f)), f.inverse().to_array())


def test_method_carrier_for_words():
    carrier = carrier_for(parse_words("1, 2"))
    assert isinstance(carrier, MethodCarrier)
    assert carrier.identity() == ReducedWord.identity(2)


def test_walk_values_match_evaluation(rng):
    elements = [random_finperm(5, rng) for _ in range(2)]
    for letters, value in iter_word_values(elements, 4):
        w = ReducedWord._trusted(2, letters)
        assert np.array_equal(value, evaluate_word(w, elements).to_array())


def test_pruned_walk_visits_class_representatives_only():
    elements = parse_words("1, 2")
    words = [ReducedWord._trusted(2, letters) for letters, _ in iter_word_values(elements, 5, pruned=True)]
    assert all(is_class_representative(w) for w in words)
    assert words == sorted(words, key=lambda w: w.sort_key)


def test_verdict_json():
    verdict = FreenessVerdict(6, parse_word("1 -2 1", 2))
    data = verdict.to_json()
    assert data == {"bound": 6, "free": False, "witness": "1 -2 1"}
    assert FreenessVerdict.from_json(data, 2) == verdict
    assert FreenessVerdict(4).to_json() == {"bound": 4, "free": True, "witness": None}


# --- properties --------------------------------------------------------------

def _agree(elements, bound):
    pruned = l_free_check(elements, bound)
    naive = l_free_naive(elements, bound)
    assert pruned.free == naive.free
    assert_sound(elements, pruned)
    assert_sound(elements, naive)
    if not pruned.free:
        # the first vanishing word and the first vanishing representative
        # always have the same length
        assert len(pruned.witness) == len(naive.witness)
    return pruned


def test_oracles_agree_on_all_s4_pairs():
    s4 = [perm_unrank(4, r) for r in range(24)]
    for pair in itertools.product(s4, repeat=2):
        _agree(pair, 6)


def test_oracles_agree_on_s6_triples(rng):
    for _ in range(20):
        _agree([random_finperm(6, rng) for _ in range(3)], 5)


@pytest.mark.slow
def test_oracles_agree_on_many_s6_triples(rng):
    for _ in range(200):
        _agree([random_finperm(6, rng) for _ in range(3)], 5)


def test_free_verdicts_are_monotone(rng):
    for _ in range(30):
        pair = [random_finperm(9, rng) for _ in range(2)]
        top = l_free_check(pair, 5)
        for lower in range(1, 5):
            verdict = l_free_check(pair, lower)
            if top.free:
                assert verdict.free
            elif len(top.witness) <= lower:
                assert verdict.witness == top.witness
            else:
                assert verdict.free


def test_sub_tuples_of_free_tuples_are_free(rng):
    checked = 0
    for _ in range(40):
        triple = [random_finperm(10, rng) for _ in range(3)]
        if not l_free_check(triple, 3).free:
            continue
        checked += 1
        for size in (1, 2):
            for sub in itertools.combinations(triple, size):
                assert l_free_check(list(sub), 3).free
    assert checked > 0
