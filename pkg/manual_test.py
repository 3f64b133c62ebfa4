import json

from errors import LibreDenseError
from freeword import commutator, format_word, parse_word, parse_words
from freetop import CosetNeighborhood, FiniteQuotient, fin_case_perturb, find_free_pair_in_kernel, quotient_apply
from harness import ExperimentConfig, dixon_sample, report_lines
from oracle import l_free_check, l_free_naive
from perm import FinPerm, evaluate_word
from product import DegreeProfile, ProductBox, dense_witnesses, prod1_witness, prod2_family, prod_main_family
from stallings import build_graph, contains, is_free_basis


def banner(name, description):
    print(f"\n===================================================")
    print(f"TEST SCENARIO: {name}")
    print(f"DESCRIPTION: {description}")
    print(f"===================================================")


def run_word_scenario():
    banner("Free words and folding", "Reduce, fold and test a few subgroups of F_2.")

    u = parse_word("1 2 -2 1 -1 2")
    print(f"Reduced form of '1 2 -2 1 -1 2': {format_word(u)}")
    c = commutator(parse_word("1", 2), parse_word("2", 2))
    print(f"Commutator [x1, x2]: {format_word(c)}")

    for text in ("1 2, 2 1", "1, 1 1", "1 2, 2 1 1, 3 -2"):
        words = parse_words(text)
        graph = build_graph(words)
        print(f"<{text}>: {graph.vertex_count} vertices, {graph.edge_count} edges, basis={is_free_basis(words)}")

    graph = build_graph(parse_words("1 1, 2"))
    for text in ("1 1 2 1 1", "1 2"):
        print(f"  '{text}' in <x1^2, x2>: {contains(graph, parse_word(text, 2))}")


def run_oracle_scenario():
    banner("Bounded freeness", "Compare the pruned and naive oracles on small permutation tuples.")

    cases = {
        "S2 involution": [FinPerm.from_cycles("(1 2)", 2)],
        "S3 generators": [FinPerm.from_cycles("(1 2 3)", 3), FinPerm.from_cycles("(1 2)", 3)],
        "two transpositions": [FinPerm.from_cycles("(1 2)", 3), FinPerm.from_cycles("(1 3)", 3)],
        "symbolic basis": list(parse_words("1 2, 2 1")),
    }
    for name, elements in cases.items():
        pruned = l_free_check(elements, 6)
        naive = l_free_naive(elements, 6)
        print(f"{name}: pruned={pruned} naive={naive}")
        if not pruned.free:
            value = evaluate_word(pruned.witness, elements)
            print(f"  witness evaluates to the identity: {value.is_identity()}")


def run_product_scenario():
    banner("Products of symmetric groups", "Single-word witnesses, planted families and the dense family.")

    for text in ("1", "1 2 -1 -2", "1 1 2"):
        w = parse_word(text, 2)
        degree, perms = prod1_witness(w)
        print(f"prod1 '{text}': degree {degree}, images {[str(p) for p in perms]}")

    profile = DegreeProfile.from_file("fixtures/profile_small.txt")
    family = prod2_family(profile, 2, 3)
    print(f"prod2 on 14 copies of S4: {len(family.used_coordinates())} coordinates planted")
    print(f"  free up to 3: {l_free_check(list(family), 3)}")

    dense = prod_main_family(DegreeProfile.for_dense_family((2, 3), 2), 2)
    print(f"dense family over visible (2, 3): {len(dense)} members")
    boxes = [
        ProductBox.of(dense.profile, {0: FinPerm.from_cycles("(1 2)", 2)}),
        ProductBox.of(dense.profile, {1: FinPerm.from_cycles("(1 2 3)", 3)}),
    ]
    try:
        witnesses = dense_witnesses(dense, boxes)
        print(f"  box witnesses free up to 2: {l_free_check(list(witnesses), 2)}")
    except LibreDenseError as e:
        print(f"\n⚠️ SYSTEM ERROR: {e}")


def run_profinite_scenario():
    banner("Profinite neighborhoods", "Perturb words into a free basis inside the S3 cosets they sit in.")

    q = FiniteQuotient((FinPerm.from_cycles("(1 2)", 3), FinPerm.from_cycles("(2 3)", 3)))
    y, z = find_free_pair_in_kernel(q, 6)
    print(f"Free pair in the kernel: y={format_word(y)}, z={format_word(z)}")

    targets = []
    for text in ("1", "2"):
        g = parse_word(text, 2)
        targets.append((g, CosetNeighborhood(q, quotient_apply(q, g))))
    basis = fin_case_perturb(targets, 4)
    for (g, u), f in zip(targets, basis):
        print(f"  {format_word(g)} -> {format_word(f)} (same coset: {u.contains(f)})")
    print(f"Perturbed words form a free basis: {is_free_basis(basis)}")


def run_harness_scenario():
    banner("Experiment harness", "A small Dixon sample in S8.")

    config = ExperimentConfig.from_mapping({
        "kind": "dixon-sample",
        "group": "sym:8",
        "tuple_size": "2",
        "word_bound": "4",
        "sample_count": "20",
        "seed": "11",
    })
    report = dixon_sample(config)
    aggregate = report.aggregate()
    print(f"free fraction: {aggregate['fraction']} ({aggregate['fraction_float']:.2f})")
    print("first trial record:")
    print(json.dumps(json.loads(report_lines(report)[0]), indent=2))


if __name__ == "__main__":
    run_word_scenario()
    run_oracle_scenario()
    run_product_scenario()
    run_profinite_scenario()
    run_harness_scenario()
