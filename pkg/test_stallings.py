import itertools
from pathlib import Path

import networkx as nx
import pytest

from errors import RankMismatchError
from freeword import ReducedWord, commute, concat, enumerate_words, nielsen_move, parse_word, parse_words, power, random_word
from oracle import l_free_check
from stallings import build_graph, contains, graph_rank, is_free_basis, to_networkx


def w(text, rank=None):
    return parse_word(text, rank)


def standard_basis(rank):
    return tuple(ReducedWord.generator(i, rank) for i in range(rank))


def nielsen_tuple(rank, moves, rng):
    words = standard_basis(rank)
    for _ in range(moves):
        words = nielsen_move(words, rng)
    return words


# --- build_graph and graph_rank ----------------------------------------------

def test_single_generator_is_one_loop():
    g = build_graph([w("1")])
    assert (g.vertex_count, g.edge_count) == (1, 1)
    assert graph_rank(g) == 1


def test_empty_tuple_is_bare_base_vertex():
    g = build_graph([], rank=2)
    assert (g.vertex_count, g.edge_count) == (1, 0)
    assert graph_rank(g) == 0


def test_two_loops_do_not_fold():
    g = build_graph([w("1 2"), w("2 1")])
    assert (g.vertex_count, g.edge_count) == (3, 4)
    assert graph_rank(g) == 2
    assert g.is_folded()


def test_powers_of_one_generator_fold_to_rank_one():
    assert graph_rank(build_graph([w("1 1"), w("1 1 1")])) == 1


def test_conjugates_trim_to_core():
    g = build_graph([w("2 1 -2")])
    assert graph_rank(g) == 1
    assert g.vertex_count == 2


def test_build_graph_rank_mismatch():
    with pytest.raises(RankMismatchError):
        build_graph([w("1", 1), w("2", 2)])


# --- is_free_basis -----------------------------------------------------------

@pytest.mark.parametrize("words,expected", [
    ("1, 2", True),
    ("1, 2, 1 2", False),
    ("1 2, 2 1", True),
    ("1, 1", False),
    ("1 1, 1 1 1", False),
    ("-1 2 1, -1 -1 2 1 1", True),
])
def test_is_free_basis_examples(words, expected):
    tuple_words = tuple(w(t, 2) for t in words.split(","))
    assert is_free_basis(tuple_words) is expected


def test_trivial_word_is_never_part_of_a_basis():
    assert not is_free_basis([ReducedWord.identity(2), w("1", 2)])


# --- contains ----------------------------------------------------------------

def test_contains_examples():
    single = build_graph([w("1", 2)])
    assert contains(single, w("1 1 1 1 1", 2))
    assert not contains(single, w("2", 2))
    pair = build_graph([w("1 2", 2), w("2 1", 2)])
    assert contains(pair, w("1 2 2 1", 2))
    assert not contains(pair, w("1", 2))


def test_contains_rank_mismatch():
    with pytest.raises(RankMismatchError):
        contains(build_graph([w("1", 2)]), w("1 2 3"))


def test_subgroup_contains_products_of_its_generators(rng):
    for _ in range(50):
        words = nielsen_tuple(3, 5, rng)
        g = build_graph(words)
        product = concat(concat(words[0], words[1]), power(words[2], -2))
        assert contains(g, product)


# --- properties --------------------------------------------------------------

@pytest.mark.slow
def test_pair_criterion_rank2_up_to_length4():
    words = [u for u in enumerate_words(2, 4) if not u.is_identity()]
    for a, b in itertools.combinations(words, 2):
        assert is_free_basis([a, b]) == (not commute(a, b)), (a, b)


def test_nielsen_moves_keep_a_basis(rng):
    for trial in range(200):
        rank = 1 + trial % 4
        words = nielsen_tuple(rank, int(rng.integers(0, 11)), rng)
        assert is_free_basis(words), words


def test_planted_dependency_is_detected(rng):
    for trial in range(200):
        rank = 2 + trial % 3
        words = list(nielsen_tuple(rank, int(rng.integers(0, 11)), rng))
        i = int(rng.integers(rank))
        others = [u for k, u in enumerate(words) if k != i]
        if len(others) == 1:
            words[i] = power(others[0], 2)
        else:
            j, k = rng.choice(len(others), size=2, replace=False)
            words[i] = concat(others[int(j)], others[int(k)])
        assert not is_free_basis(words), words


def test_sub_tuples_of_a_basis_are_bases(rng):
    for _ in range(200):
        words = nielsen_tuple(4, int(rng.integers(0, 11)), rng)
        size = int(rng.integers(1, 5))
        picked = sorted(rng.choice(4, size=size, replace=False))
        assert is_free_basis([words[int(k)] for k in picked])


def _bound_for(size):
    return {1: 12, 2: 12, 3: 6}.get(size, 4)


def test_word_oracle_agrees_with_folding(rng):
    bounds = {1: 8, 2: 8, 3: 5, 4: 4}
    for trial in range(40):
        size = 1 + trial % 4
        words = nielsen_tuple(size, int(rng.integers(0, 6)), rng)
        assert is_free_basis(words)
        assert l_free_check(words, bounds[size]).free


@pytest.mark.slow
def test_word_oracle_agrees_with_folding_at_full_bound(rng):
    for trial in range(20):
        size = 1 + trial % 4
        words = nielsen_tuple(size, int(rng.integers(0, 6)), rng)
        assert is_free_basis(words)
        assert l_free_check(words, _bound_for(size)).free


def test_fold_order_does_not_matter(rng):
    for _ in range(100):
        rank = int(rng.integers(1, 4))
        count = int(rng.integers(1, 4))
        words = [random_word(rank, int(rng.integers(1, 8)), rng) for _ in range(count)]
        baseline = build_graph(words, rank)
        shuffled = build_graph(words, rank, fold_schedule=int(rng.integers(1 << 30)))
        assert baseline == shuffled


def test_networkx_agrees_on_isomorphism(rng):
    for _ in range(20):
        words = [random_word(2, int(rng.integers(1, 7)), rng) for _ in range(2)]
        a = to_networkx(build_graph(words, 2, fold_schedule=1))
        b = to_networkx(build_graph(list(reversed(words)), 2, fold_schedule=2))
        assert nx.is_isomorphic(a, b, edge_match=nx.algorithms.isomorphism.categorical_multiedge_match("label", None))
        assert a.number_of_edges() - a.number_of_nodes() + 1 == graph_rank(build_graph(words, 2))


def test_folded_graph_is_deterministic_per_label():
    g = build_graph([w("1 2 1"), w("1 -2"), w("2 2 -1")])
    outgoing, incoming = set(), set()
    for s, label, d in g.edges:
        assert (s, label) not in outgoing
        assert (d, label) not in incoming
        outgoing.add((s, label))
        incoming.add((d, label))


def test_shipped_basis_words():
    text = (Path(__file__).parent / "fixtures" / "basis_words.txt").read_text()
    words = parse_words(text)
    g = build_graph(words)
    assert (g.vertex_count, g.edge_count) == (4, 6)
    assert is_free_basis(words)
