import math

import numpy as np
import pytest

from instances import Hypergraph, ProblemKind, lower, parse_edge_list, planted_3sat, random_instance, regularize
from layout import layout_qbt, layout_qra, partition_units, transpile
from metrics import (
    REGIMES,
    activation_qubits,
    l_scaling_experiment,
    predicted_qbt_depth,
    predicted_qra_depth,
    predicted_qubits,
    random_hypergraph,
    resource_report,
    section_counts,
    superconducting_estimate,
    swap_exponent,
)


def test_predicted_qubits_for_three_sat():
    system = lower(regularize(planted_3sat(8, 8, np.random.default_rng(1))))
    assert predicted_qubits(system) == 24


@pytest.mark.parametrize("system", [
    lower(parse_edge_list("5 2\n0 1\n1 2\n2 3\n3 4\n4 0\n", ProblemKind.MIS)),
    lower(regularize(random_instance(ProblemKind.SCP, 6, np.random.default_rng(2)))),
    lower(parse_edge_list("5\n0 1\n1 2\n2 3\n3 4\n4 0\n0 2\n", ProblemKind.HCP)),
], ids=["MIS", "SCP", "HCP"])
def test_predicted_qubits_cover_measured(system):
    report = resource_report(transpile(system, 1), system)
    assert report.measured.qubits <= report.predicted_qubits + 1


def test_threshold_prediction_counts_identity_inputs():
    system = lower(parse_edge_list("5 2\n0 1\n1 2\n2 3\n3 4\n4 0\n", ProblemKind.MIS))
    assert system.N == system.p == 5 and system.q == 5
    assert predicted_qubits(system) == 5 + 2 * 5 + 2 * 5


def test_activation_qubits_for_five_cycle_with_chord():
    system = lower(parse_edge_list("5\n0 1\n1 2\n2 3\n3 4\n4 0\n0 2\n", ProblemKind.HCP))
    # three banks of five, then 12 edge terms and 7 AND temps per round, then result and node
    assert activation_qubits(system.activation) == 15 + 19 + 2


def test_predicted_depths():
    assert predicted_qbt_depth(1024) == pytest.approx(40)
    assert predicted_qra_depth(1024) == pytest.approx(800)
    assert predicted_qbt_depth(1) == 0


def test_resource_report_for_three_sat():
    system = lower(regularize(planted_3sat(8, 8, np.random.default_rng(1))))
    report = resource_report(transpile(system, 1), system)
    assert report.merge_path == "qbt"
    assert report.predicted_qubits == 24
    # the kicked qubit is the only extra over n + 2N
    assert report.measured.qubits <= report.predicted_qubits + 1
    assert report.check_data_transports <= report.transport_bound
    assert {"check", "merge", "inverse", "diffusion"} <= {s.section for s in report.sections}


def test_resource_report_for_threshold_problem():
    system = lower(parse_edge_list("4 2\n0 1\n1 2\n2 3\n", ProblemKind.MIS))
    report = resource_report(transpile(system, 1), system)
    assert report.merge_path == "qra"
    assert report.oracle_calls == 1


@pytest.mark.parametrize("count", [2, 8, 64, 1024, 2 ** 14])
def test_qbt_merge_depth_within_prediction(count):
    schedule = layout_qbt(count)
    merge = next(s for s in section_counts(schedule) if s.section == "merge")
    assert merge.layers <= 4 * math.ceil(math.log2(count)) + 8


@pytest.mark.parametrize("count, width", [(2, 1), (4, 2), (8, 3), (16, 1), (64, 2), (256, 1), (1024, 1)])
def test_qra_depth_within_prediction(count, width):
    schedule = layout_qra(count, width)
    merge = next(s for s in section_counts(schedule) if s.section == "merge")
    levels = math.ceil(math.log2(count))
    # one ripple adder per level, each linear in the running sum width
    assert merge.layers <= 8 * levels * (levels + width) + 32


def test_disjoint_hyperedges_partition_once():
    h = Hypergraph(vertex_count=8, edges=tuple(frozenset((2 * i, 2 * i + 1)) for i in range(4)))
    assert partition_units(h).L == 1


def test_random_hypergraph_shape():
    h = random_hypergraph(10, 7, 3, np.random.default_rng(0))
    assert len(h.edges) == 7 and all(len(e) == 3 for e in h.edges)


def test_l_scaling_is_deterministic():
    first = l_scaling_experiment(2, [16, 32], REGIMES["4n"], trials=3, seed=9)
    second = l_scaling_experiment(2, [16, 32], REGIMES["4n"], trials=3, seed=9)
    assert first == second
    assert first[0].N == 64


@pytest.mark.parametrize("t", [2, 3, 4])
def test_normalized_l_is_flat_for_linear_edges(t):
    rows = l_scaling_experiment(t, [32, 64, 128, 256, 512], REGIMES["4n"], trials=20, seed=7)
    norms = [row.L_norm for row in rows]
    assert max(norms) / min(norms) <= 2


@pytest.mark.parametrize("t", [2, 3, 4])
def test_normalized_l_is_flat_for_quadratic_edges(t):
    rows = l_scaling_experiment(t, [16, 24, 32, 48], REGIMES["n2/4"], trials=20, seed=7)
    norms = [row.L_norm for row in rows]
    assert max(norms) / min(norms) <= 2


def test_adjacent_units_need_no_swaps():
    # on a 3 x 3 lattice, 0-1 and 3-4 are horizontal neighbours
    system = lower(parse_edge_list("9 1\n0 1\n3 4\n", ProblemKind.MIS))
    assert superconducting_estimate(system).swaps == 0


def test_distant_unit_costs_manhattan_minus_one():
    system = lower(parse_edge_list("9 1\n0 8\n", ProblemKind.MIS))
    assert superconducting_estimate(system).swaps == 3


def test_swap_estimate_grows_like_sqrt_n():
    # model-level check of the square-lattice estimate
    assert 0.4 <= swap_exponent() <= 0.6


def test_merge_depth_gap_grows():
    small = superconducting_estimate(lower(parse_edge_list(
        "16 1\n" + "\n".join(f"{i} {i + 1}" for i in range(15)) + "\n", ProblemKind.MIS)))
    large = superconducting_estimate(lower(parse_edge_list(
        "64 1\n" + "\n".join(f"{i} {i + 1}" for i in range(63)) + "\n", ProblemKind.MIS)))
    assert large.merge_depth / large.rydberg_merge_depth > small.merge_depth / small.rydberg_merge_depth
