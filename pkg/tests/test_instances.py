import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from errors import (
    DuplicateEdgeError,
    EmptySubsetError,
    IndexOutOfRangeError,
    MalformedHeaderError,
    ParseError,
    SelfLoopError,
    UnsupportedError,
    UnterminatedClauseError,
)
from instances import (
    GKind,
    HKind,
    ProblemKind,
    all_assignments,
    complement,
    direct_evaluate,
    enumerate_solutions,
    evaluate_batch,
    evaluate_f,
    lower,
    parse_dimacs_cnf,
    parse_edge_list,
    parse_set_system,
    planted_3sat,
    random_instance,
    regularize,
    to_hypergraph,
)


# ---------- DIMACS ----------

def test_dimacs_keeps_literal_signs():
    instance = parse_dimacs_cnf("c comment\np cnf 3 2\n1 -2 0\n2 3 0\n")
    assert instance.n_variables == 3
    assert [(lit.variable, lit.negated) for lit in instance.clauses[0]] == [(0, False), (1, True)]
    assert len(instance.clauses) == 2


def test_dimacs_clause_may_span_lines():
    instance = parse_dimacs_cnf("p cnf 3 1\n1 -2\n3 0\n")
    assert len(instance.clauses[0]) == 3


@pytest.mark.parametrize("text, error, line", [
    ("p cnf 3 1\n1 2\n", UnterminatedClauseError, 2),
    ("p cnf 2 1\n1 3 0\n", IndexOutOfRangeError, 2),
    ("1 2 0\n", MalformedHeaderError, 1),
    ("p cnf x 1\n", MalformedHeaderError, 1),
    ("p cnf 2 1\n0\n", ParseError, 2),
])
def test_dimacs_errors_carry_line(text, error, line):
    with pytest.raises(error) as info:
        parse_dimacs_cnf(text)
    assert info.value.line == line


# ---------- Edge lists and set systems ----------

def test_edge_list_reads_header_threshold():
    instance = parse_edge_list("3 2\n0 1\n1 2\n", ProblemKind.MCP)
    assert instance.vertex_count == 3
    assert instance.k1 == 2
    assert instance.edges == ((0, 1), (1, 2))


@pytest.mark.parametrize("text, error", [
    ("3\n0 0\n", SelfLoopError),
    ("3\n0 1\n1 0\n", DuplicateEdgeError),
    ("3\n0 5\n", IndexOutOfRangeError),
    ("", MalformedHeaderError),
])
def test_edge_list_errors(text, error):
    with pytest.raises(error):
        parse_edge_list(text, ProblemKind.MIS)


def test_edge_list_rejects_set_kind():
    with pytest.raises(UnsupportedError):
        parse_edge_list("3\n0 1\n", ProblemKind.SCP)


def test_set_system_cover():
    instance = parse_set_system("k1 = 2\nn = 3\ne0: S0 S1\ne1: S2\n", ProblemKind.SCP)
    assert instance.memberships == ((0, 1), (2,))
    assert instance.k1 == 2


def test_set_system_empty_hitting_subset():
    with pytest.raises(EmptySubsetError):
        parse_set_system("k1 = 1\nA:\n", ProblemKind.HSP)


def test_set_system_uncovered_element_is_recorded():
    instance = parse_set_system("k1 = 1\nn = 2\ne0: 0\ne1:\n", ProblemKind.SCP)
    assert instance.uncovered == ("e1",)


def test_knapsack_items():
    instance = parse_set_system("k1 = 4\nk2 = 3\na: 2 3\nb: 3 1\n", ProblemKind.KSP)
    assert instance.items == ((2, 3), (3, 1))


# ---------- Transforms ----------

def test_complement_of_path():
    instance = complement(parse_edge_list("3 1\n0 1\n1 2\n", ProblemKind.MIS))
    assert instance.edges == ((0, 2),)


def test_complement_rejects_sat():
    with pytest.raises(UnsupportedError):
        complement(parse_dimacs_cnf("p cnf 1 1\n1 0\n"))


def test_regularize_pads_with_frozen_aux():
    instance = regularize(parse_dimacs_cnf("p cnf 3 2\n1 0\n1 2 3 0\n"))
    assert instance.n_variables == 5
    assert instance.frozen_variables == frozenset({3, 4})
    assert all(len(clause) == 3 for clause in instance.clauses)
    system = lower(instance)
    assert system.free_variables == [0, 1, 2]


def test_lower_mis_shape():
    system = lower(parse_edge_list("4 2\n0 1\n1 2\n2 3\n", ProblemKind.MIS))
    assert system.p == 3
    assert all(u.kind == GKind.NAND_PAIR for u in system.g_list)
    assert system.groups[0].h_list[0].kind == HKind.IDENTITY
    # IDENTITY units are elided from the checking pass
    assert system.N == 3


def test_lower_requires_k1():
    with pytest.raises(UnsupportedError):
        lower(parse_edge_list("3\n0 1\n", ProblemKind.MIS))


# ---------- Evaluation ----------

def test_max_cut_path_solutions():
    system = lower(parse_edge_list("3 2\n0 1\n1 2\n", ProblemKind.MCP))
    assert enumerate_solutions(system) == {(0, 1, 0), (1, 0, 1)}


def test_evaluate_f_rejects_wrong_length():
    system = lower(parse_dimacs_cnf("p cnf 2 1\n1 2 0\n"))
    with pytest.raises(ValueError):
        evaluate_f(system, [1])


def test_all_assignments_pins_frozen_variables():
    system = lower(regularize(parse_dimacs_cnf("p cnf 2 2\n1 0\n1 2 0\n")))
    z = all_assignments(system)
    assert z.shape == (4, 3)
    assert not z[:, 2].any()


def test_strict_heaviside_changes_boundary():
    instance = parse_edge_list("2 1\n", ProblemKind.MIS)
    inclusive = lower(instance)
    strict = lower(instance, strict=True)
    assert evaluate_f(inclusive, [1, 0]) == 1
    assert evaluate_f(strict, [1, 0]) == 0


def test_hamiltonian_cycle_on_square():
    instance = parse_edge_list("4\n0 1\n1 2\n2 3\n3 0\n0 2\n", ProblemKind.HCP)
    system = lower(instance)
    assert enumerate_solutions(system) == {(1, 1, 1, 1, 0)}


def test_two_triangles_are_not_a_cycle():
    # degree-2 everywhere but disconnected
    instance = parse_edge_list("6\n0 1\n1 2\n2 0\n3 4\n4 5\n5 3\n", ProblemKind.HCP)
    system = lower(instance)
    assert evaluate_f(system, [1] * 6) == 0


def test_number_partition_without_target():
    instance = parse_set_system("a: 1\nb: 2\nc: 3\n", ProblemKind.NPP)
    solutions = enumerate_solutions(lower(instance))
    assert (0, 0, 1) in solutions and (1, 1, 0) in solutions
    assert (1, 0, 0) not in solutions


@pytest.mark.parametrize("kind", list(ProblemKind))
def test_lowering_agrees_with_direct_evaluation(kind):
    rng = np.random.default_rng(11)
    for _ in range(3):
        base = random_instance(kind, 5, rng)
        system = lower(regularize(base))
        z = all_assignments(system)
        lowered = evaluate_batch(system, z)
        direct = [direct_evaluate(base, row[:base.n_variables]) for row in z]
        assert list(lowered) == direct


@given(st.integers(min_value=3, max_value=7), st.integers(min_value=1, max_value=10), st.integers(0, 2 ** 16))
def test_planted_sat_is_satisfiable(n, m, seed):
    instance = planted_3sat(n, m, np.random.default_rng(seed))
    assert len(instance.clauses) == m
    assert enumerate_solutions(lower(instance))


def test_hypergraph_skips_identity_units():
    system = lower(parse_edge_list("3 1\n0 1\n1 2\n", ProblemKind.MIS))
    assert to_hypergraph(system).edges == (frozenset({0, 1}), frozenset({1, 2}))


def test_three_coloring_triangle():
    instance = parse_edge_list("3 4\n0 1\n1 2\n0 2\n", ProblemKind.CCP)
    system = lower(instance)
    assert system.n == 6
    solutions = enumerate_solutions(system)
    # proper 4-colourings of a triangle
    assert len(solutions) == 4 * 3 * 2
    for bits in itertools.islice(solutions, 5):
        assert direct_evaluate(instance, bits)


def test_three_cliques_cannot_cover_k4():
    # colouring the complement graph: K4 needs four colours
    instance = parse_edge_list("4 3\n0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n", ProblemKind.CCP)
    assert enumerate_solutions(lower(instance)) == set()


def test_three_colourings_use_only_three_codes():
    instance = parse_edge_list("3 3\n0 1\n1 2\n0 2\n", ProblemKind.CCP)
    system = lower(instance)
    assert sum(u.kind == GKind.CODE_BELOW for u in system.g_list) == 3
    solutions = enumerate_solutions(system)
    assert len(solutions) == 3 * 2 * 1
    for bits in solutions:
        codes = [bits[2 * v] + 2 * bits[2 * v + 1] for v in range(3)]
        assert sorted(codes) == [0, 1, 2]
        assert direct_evaluate(instance, bits)


def test_power_of_two_palette_needs_no_range_units():
    system = lower(parse_edge_list("3 4\n0 1\n", ProblemKind.CCP))
    assert all(u.kind == GKind.REGISTER_NEQ for u in system.g_list)


@pytest.mark.parametrize("k1", [3, 5, 6, 7])
def test_colouring_agrees_with_direct_evaluation(k1):
    instance = parse_edge_list(f"3 {k1}\n0 1\n1 2\n", ProblemKind.CCP)
    system = lower(instance)
    z = all_assignments(system)
    assert list(evaluate_batch(system, z)) == [direct_evaluate(instance, row) for row in z]


# ---------- Regularization ----------

@pytest.mark.parametrize("kind", [ProblemKind.SAT, ProblemKind.SCP, ProblemKind.HSP, ProblemKind.ECP,
                                  ProblemKind.DSP])
def test_regularize_is_idempotent_and_keeps_solutions(kind):
    rng = np.random.default_rng(17)
    for _ in range(4):
        base = random_instance(kind, 5, rng)
        once = regularize(base)
        assert regularize(once) == once
        system = lower(once)
        kept = {row[:base.n_variables] for row in enumerate_solutions(system)}
        z = all_assignments(lower(base))
        assert kept == {tuple(int(b) for b in row) for row in z[evaluate_batch(lower(base), z)]}


def test_regularized_dominating_set_matches_direct_check():
    instance = parse_set_system("k1 = 1\nn = 3\n0: 1 2\n1: 0\n2: 0\n", ProblemKind.DSP)
    padded = regularize(instance)
    assert padded.vertex_count == 3
    system = lower(padded)
    z = all_assignments(system)
    assert list(evaluate_batch(system, z)) == [direct_evaluate(padded, row) for row in z]
    assert (1, 0, 0, 0) in enumerate_solutions(system)
