import json
import logging
import math
from collections import Counter
from typing import Callable, Dict, List, Optional, Sequence

import networkx as nx
import numpy as np
from pydantic import BaseModel, Field

from circuit_ir import GateKind, MovePhase, QubitRole, ResourceCount, Schedule, count_resources
from instances import ActivationSpec, ConstraintSystem, Hypergraph, ProblemInstance, ProblemKind, lower, to_hypergraph
from layout import column_height, layout_qbt, layout_qra, partition_units, plan_qbt, qbt_height

logger = logging.getLogger(__name__)

# two-qubit and three-qubit entanglers take three native pulses each
NATIVE_WEIGHT = {GateKind.CX: 3, GateKind.CCX: 3, GateKind.CZ: 1, GateKind.CCZ: 1}

REGIMES: Dict[str, Callable[[int], int]] = {
    "4n": lambda n: 4 * n,
    "n2/4": lambda n: n * n // 4,
}


# ---------- Resource report ----------

class SectionCount(BaseModel):
    section: str
    layers: int = 0
    native_layers: int = 0
    transports: int = 0
    data_transports: int = 0


class ResourceReport(BaseModel):
    kind: Optional[str] = None
    n: int
    N: int
    t: int
    b: int
    merge_path: str = Field(..., description="qbt when no threshold group exists, qra otherwise")
    measured: ResourceCount
    native_depth: int
    predicted_qubits: int
    predicted_merge_depth: float
    merge_depth: int
    oracle_calls: int
    check_data_transports: int = Field(..., description="Data-qubit moves of one checking pass")
    check_ancilla_transports: int
    transport_bound: int = Field(..., description="t * N")
    sections: List[SectionCount] = []


def predicted_qbt_depth(N: int) -> float:
    return 4 * math.log2(N) if N > 1 else 0.0


def predicted_qra_depth(N: int) -> float:
    return 8 * math.log2(N) ** 2 if N > 1 else 0.0


def activation_qubits(spec: ActivationSpec) -> int:
    """
    Peak extra qubits of the connectivity check.

    One vertex bank per round plus the start bank stay allocated; the busiest
    moment is a propagation round (two edge terms per edge and the AND temps of
    each vertex) or the closing count, whichever is larger. Two more hold the
    result and its conjunction node.
    """
    degree = Counter(v for edge in spec.edges for v in edge)
    round_peak = 2 * len(spec.edges) + sum(max(0, degree[v] - 1) for v in range(spec.vertex_count))
    width = spec.vertex_count.bit_length()
    count_peak = spec.vertex_count - 1 + math.ceil(math.log2(spec.vertex_count)) + max(0, width - 2)
    return spec.vertex_count * (spec.rounds + 1) + max(round_peak, count_peak) + 2


def predicted_qubits(system: ConstraintSystem) -> int:
    """
    n data qubits, an output and a tree node per g unit, b + 1 per h unit when
    any threshold group merges (identity units included), plus the connectivity
    check when present.
    """
    if system.groups:
        total = system.n + 2 * system.p + (system.b + 1) * system.q
    else:
        total = system.n + 2 * system.N
    if system.activation is not None:
        total += activation_qubits(system.activation)
    return total


def native_depth(schedule: Schedule) -> int:
    return sum(NATIVE_WEIGHT.get(layer.kind, 1) for layer in schedule.layers)


def section_counts(schedule: Schedule) -> List[SectionCount]:
    roles = schedule.roles()
    counts: Dict[str, SectionCount] = {}
    for step, section in zip(schedule.steps, schedule.sections):
        entry = counts.setdefault(section, SectionCount(section=section))
        if isinstance(step, MovePhase):
            entry.transports += len(step.moves)
            entry.data_transports += sum(1 for m in step.moves if roles[m.qubit] == QubitRole.DATA)
        else:
            entry.layers += 1
            entry.native_layers += NATIVE_WEIGHT.get(step.kind, 1)
    return list(counts.values())


def resource_report(s: Schedule, system: ConstraintSystem) -> ResourceReport:
    """
    Measured schedule resources next to the closed-form predictions.

    Args:
        s (Schedule): transpiled schedule
        system (ConstraintSystem): the system it was built from

    Returns:
        ResourceReport: measured counts, predictions and a per-section breakdown
    """
    sections = section_counts(s)
    by_name = {entry.section: entry for entry in sections}
    calls = max(1, by_name["kick"].layers) if "kick" in by_name else 1
    check = by_name.get("check", SectionCount(section="check"))
    merge = by_name.get("merge", SectionCount(section="merge"))
    path = "qra" if system.groups else "qbt"
    report = ResourceReport(
        kind=system.kind.value if system.kind else None,
        n=system.n,
        N=system.N,
        t=system.t,
        b=system.b,
        merge_path=path,
        measured=count_resources(s),
        native_depth=native_depth(s),
        predicted_qubits=predicted_qubits(system),
        predicted_merge_depth=predicted_qra_depth(system.N) if path == "qra" else predicted_qbt_depth(system.N),
        merge_depth=merge.layers // calls,
        oracle_calls=calls,
        check_data_transports=check.data_transports // calls,
        check_ancilla_transports=(check.transports - check.data_transports) // calls,
        transport_bound=system.t * system.N,
        sections=sections,
    )
    logger.info("resource report: %d qubits (predicted %d), depth %d",
                report.measured.qubits, report.predicted_qubits, report.measured.depth)
    return report


# ---------- Partition scaling ----------

class LScalingRow(BaseModel):
    n: int
    N: int
    t: int
    L_mean: float
    L_std: float
    L_norm: float
    trials: int
    seed: int


def random_hypergraph(n: int, N: int, t: int, rng: np.random.Generator) -> Hypergraph:
    """N uniformly random t-subsets of n vertices; repeated edges are allowed."""
    edges = tuple(frozenset(int(v) for v in rng.choice(n, size=t, replace=False)) for _ in range(N))
    return Hypergraph(vertex_count=n, edges=edges)


def l_scaling_experiment(t: int, n_values: Sequence[int], edge_count: Callable[[int], int],
                         trials: int = 20, seed: int = 0) -> List[LScalingRow]:
    """
    Matching count L of the greedy partition over random hypergraphs.

    Args:
        t (int): hyperedge size
        n_values: vertex counts to sweep
        edge_count: N as a function of n
        trials (int): random hypergraphs per n
        seed (int): base seed; trial k of size n draws from (seed, n, k)

    Returns:
        List[LScalingRow]: one row per n with L statistics and L / (tN/n)
    """
    if t < 1 or trials < 1:
        raise ValueError("t and trials must be positive")
    rows = []
    for n in n_values:
        if n < t:
            raise ValueError(f"n={n} is smaller than the edge size {t}")
        N = edge_count(n)
        values = [
            partition_units(random_hypergraph(n, N, t, np.random.default_rng([seed, n, trial]))).L
            for trial in range(trials)
        ]
        mean = float(np.mean(values))
        rows.append(LScalingRow(n=n, N=N, t=t, L_mean=mean, L_std=float(np.std(values)),
                                L_norm=mean / (t * N / n) if N else 0.0, trials=trials, seed=seed))
        logger.debug("l scaling t=%d n=%d: L=%.2f", t, n, mean)
    return rows


# ---------- Superconducting comparison ----------

class ScEstimate(BaseModel):
    """Model estimate for a fixed square-lattice layout; order-of-magnitude only."""
    n: int
    N: int
    swaps: int
    merge_depth: float
    rydberg_merge_depth: int


def _lattice(v: int, s: int):
    return divmod(v, s)


def rydberg_merge_levels(N: int, n: int) -> int:
    """Layout-level AND-tree depth over N inputs."""
    if N < 2:
        return 0
    counter = iter(range(N, 4 * N))
    return len(plan_qbt(range(N), qbt_height(N, n), lambda: next(counter)).levels)


def superconducting_estimate(system: ConstraintSystem) -> ScEstimate:
    """
    SWAP count of the checking circuit on a row-major sqrt(n) x sqrt(n) lattice.

    Each unit's first variable is the hub; every other variable needs its
    Manhattan distance minus one swaps to reach it. Merge depth is sqrt(N).
    """
    s = column_height(system.n)
    swaps = 0
    for edge in to_hypergraph(system).edges:
        variables = sorted(edge)
        hx, hy = _lattice(variables[0], s)
        for v in variables[1:]:
            x, y = _lattice(v, s)
            swaps += max(0, abs(x - hx) + abs(y - hy) - 1)
    return ScEstimate(n=system.n, N=system.N, swaps=swaps, merge_depth=math.sqrt(system.N),
                      rydberg_merge_depth=rydberg_merge_levels(system.N, system.n))


def random_mis(n: int, edges: int, seed: int) -> ConstraintSystem:
    graph = nx.gnm_random_graph(n, edges, seed=seed)
    instance = ProblemInstance(kind=ProblemKind.MIS, n_variables=n, vertex_count=n,
                               edges=tuple(sorted(graph.edges())), k1=1)
    return lower(instance)


def sc_compare(n_values: Sequence[int], density: int = 4, seed: int = 0) -> List[ScEstimate]:
    """Estimates for random MIS graphs with density * n edges."""
    return [superconducting_estimate(random_mis(n, density * n, seed)) for n in n_values]


def swap_exponent(n_values: Sequence[int] = (256, 1024, 4096), density: int = 4, seed: int = 0) -> float:
    """Slope of log(swaps / N) against log(n) at fixed N / n."""
    estimates = sc_compare(n_values, density, seed)
    xs = np.log([e.n for e in estimates])
    ys = np.log([e.swaps / e.N for e in estimates])
    return float(np.polyfit(xs, ys, 1)[0])


# ---------- Merge depth ----------

class MergeDepthRow(BaseModel):
    N: int
    qbt_layers: int
    qbt_predicted: float
    qra_layers: int
    qra_predicted: float


def merge_layers(schedule: Schedule) -> int:
    return sum(c.layers for c in section_counts(schedule) if c.section == "merge")


def merge_depth_table(counts: Sequence[int], width: int = 1) -> List[MergeDepthRow]:
    """Placed tree and adder merge depth over N inputs next to the 4 log N and 8 log^2 N predictions."""
    rows = []
    for count in counts:
        rows.append(MergeDepthRow(
            N=count,
            qbt_layers=merge_layers(layout_qbt(count)),
            qbt_predicted=predicted_qbt_depth(count),
            qra_layers=merge_layers(layout_qra(count, width)),
            qra_predicted=predicted_qra_depth(count),
        ))
        logger.info("merge depth at N=%d: qbt %d, qra %d", count, rows[-1].qbt_layers, rows[-1].qra_layers)
    return rows


if __name__ == "__main__":
    rows = l_scaling_experiment(2, [32, 64, 128], REGIMES["4n"], trials=5, seed=7)
    print(json.dumps({
        "l_scaling": [row.model_dump() for row in rows],
        "sc_compare": [e.model_dump() for e in sc_compare([16, 32, 64])],
    }, indent=2))
