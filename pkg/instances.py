import json
import logging
import math
import re
from enum import Enum
from typing import Dict, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import ENUMERATION_LIMIT
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

logger = logging.getLogger(__name__)


class ProblemKind(str, Enum):
    SAT = "SAT"
    SCP = "SCP"
    NCP = "NCP"
    HSP = "HSP"
    CQP = "CQP"
    ECP = "ECP"
    MCP = "MCP"
    KSP = "KSP"
    MIS = "MIS"
    DSP = "DSP"
    NPP = "NPP"
    CCP = "CCP"
    HCP = "HCP"


GRAPH_KINDS = {ProblemKind.MIS, ProblemKind.MCP, ProblemKind.NCP, ProblemKind.CQP,
               ProblemKind.CCP, ProblemKind.HCP, ProblemKind.DSP}
SET_KINDS = {ProblemKind.SCP, ProblemKind.ECP, ProblemKind.HSP, ProblemKind.DSP,
             ProblemKind.KSP, ProblemKind.NPP}
REGULARIZABLE = {ProblemKind.SAT, ProblemKind.HSP, ProblemKind.SCP, ProblemKind.ECP, ProblemKind.DSP}
NEEDS_K1 = {ProblemKind.SCP, ProblemKind.NCP, ProblemKind.HSP, ProblemKind.CQP, ProblemKind.MCP,
            ProblemKind.KSP, ProblemKind.MIS, ProblemKind.DSP, ProblemKind.CCP}
NEEDS_K2 = {ProblemKind.KSP}


# ---------- Constraint vocabulary ----------

class Literal(BaseModel):
    model_config = ConfigDict(frozen=True)

    variable: int = Field(..., ge=0, description="Data-qubit index")
    negated: bool = False


class GKind(str, Enum):
    OR_CLAUSE = "OR_CLAUSE"
    NAND_PAIR = "NAND_PAIR"
    EXACT_ONE = "EXACT_ONE"
    EXACT_TWO = "EXACT_TWO"
    REGISTER_NEQ = "REGISTER_NEQ"
    CODE_BELOW = "CODE_BELOW"


class HKind(str, Enum):
    IDENTITY = "IDENTITY"
    XOR_PAIR = "XOR_PAIR"
    WEIGHTED = "WEIGHTED"


class Direction(str, Enum):
    GEQ = "GEQ"
    LEQ = "LEQ"
    EQ = "EQ"


class GConstraint(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: GKind
    literals: Tuple[Literal, ...] = Field(..., min_length=1)
    register_width: int = Field(1, ge=1, description="Bits per register (REGISTER_NEQ only)")
    bound: Optional[int] = Field(None, ge=1, description="Exclusive upper bound on the register value (CODE_BELOW only)")

    @model_validator(mode="after")
    def _check_arity(self):
        if self.kind == GKind.NAND_PAIR and len(self.literals) != 2:
            raise ValueError("NAND_PAIR takes exactly 2 literals")
        if self.kind == GKind.REGISTER_NEQ and len(self.literals) != 2 * self.register_width:
            raise ValueError("REGISTER_NEQ takes two registers of register_width bits")
        if self.kind == GKind.CODE_BELOW and (self.bound is None or self.bound > 2 ** len(self.literals)):
            raise ValueError("CODE_BELOW needs a bound no larger than 2^len(literals)")
        return self

    @property
    def variables(self) -> Tuple[int, ...]:
        return tuple(lit.variable for lit in self.literals)


class HConstraint(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: HKind
    literals: Tuple[Literal, ...] = Field(..., min_length=1)
    weight: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_arity(self):
        if self.kind == HKind.XOR_PAIR and len(self.literals) != 2:
            raise ValueError("XOR_PAIR takes exactly 2 literals")
        if self.kind in (HKind.IDENTITY, HKind.WEIGHTED) and len(self.literals) != 1:
            raise ValueError(f"{self.kind.value} takes exactly 1 literal")
        return self

    @property
    def bits(self) -> int:
        return self.weight.bit_length() if self.kind == HKind.WEIGHTED else 1

    @property
    def variables(self) -> Tuple[int, ...]:
        return tuple(lit.variable for lit in self.literals)


class ThresholdSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    direction: Direction
    bound: int = Field(..., ge=0)
    second_bound: Optional[int] = Field(None, ge=0, description="Kept for documents; dual bounds use two groups")


class HGroup(BaseModel):
    """One merged sum: the h constraints feeding a single QRA and its threshold."""
    model_config = ConfigDict(frozen=True)

    h_list: Tuple[HConstraint, ...] = ()
    threshold: ThresholdSpec

    @property
    def b(self) -> int:
        return max((h.bits for h in self.h_list), default=1)


class ActivationSpec(BaseModel):
    """Connectivity check for Hamiltonian cycles: edge variable k joins edges[k]."""
    model_config = ConfigDict(frozen=True)

    vertex_count: int = Field(..., ge=3)
    edges: Tuple[Tuple[int, int], ...]
    start: int = 0

    @property
    def rounds(self) -> int:
        return (self.vertex_count - 1) // 2

    @property
    def target(self) -> int:
        return self.vertex_count if self.vertex_count % 2 else self.vertex_count - 1


class ProblemInstance(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ProblemKind
    n_variables: int = Field(..., ge=0)
    vertex_count: Optional[int] = None
    clauses: Tuple[Tuple[Literal, ...], ...] = ()
    edges: Tuple[Tuple[int, int], ...] = ()
    memberships: Tuple[Tuple[int, ...], ...] = ()
    items: Tuple[Tuple[int, int], ...] = ()
    k1: Optional[int] = Field(None, ge=0)
    k2: Optional[int] = Field(None, ge=0)
    frozen_variables: frozenset = frozenset()
    uncovered: Tuple[str, ...] = Field((), description="Set-system elements no subset contains")

    @property
    def thresholds(self) -> List[ThresholdSpec]:
        return [group.threshold for group in _groups_for(self)]

    def with_thresholds(self, k1: Optional[int] = None, k2: Optional[int] = None) -> "ProblemInstance":
        update = {}
        if k1 is not None:
            update["k1"] = k1
        if k2 is not None:
            update["k2"] = k2
        updated = self.model_copy(update=update)
        if self.kind == ProblemKind.CCP and updated.k1 is not None and self.vertex_count is not None:
            updated = updated.model_copy(update={"n_variables": self.vertex_count * _ccp_bits(updated.k1)})
        return updated


class ConstraintSystem(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=0, description="Data-qubit count")
    g_list: Tuple[GConstraint, ...] = ()
    groups: Tuple[HGroup, ...] = ()
    activation: Optional[ActivationSpec] = None
    frozen: frozenset = frozenset()
    strict: bool = False
    kind: Optional[ProblemKind] = None

    @model_validator(mode="after")
    def _check_indices(self):
        for unit in list(self.g_list) + list(self.h_list):
            for var in unit.variables:
                if var >= self.n:
                    raise ValueError(f"literal variable {var} outside [0, {self.n})")
        return self

    @property
    def h_list(self) -> Tuple[HConstraint, ...]:
        return tuple(h for group in self.groups for h in group.h_list)

    @property
    def thresholds(self) -> List[ThresholdSpec]:
        return [group.threshold for group in self.groups]

    @property
    def retained_h(self) -> Tuple[HConstraint, ...]:
        return tuple(h for h in self.h_list if h.kind != HKind.IDENTITY)

    @property
    def p(self) -> int:
        return len(self.g_list)

    @property
    def q(self) -> int:
        return len(self.h_list)

    @property
    def N(self) -> int:
        return self.p + len(self.retained_h)

    @property
    def t(self) -> int:
        sizes = [len(u.literals) for u in self.g_list] + [len(h.literals) for h in self.retained_h]
        return max(sizes, default=0)

    @property
    def b(self) -> int:
        return max((group.b for group in self.groups), default=1)

    @property
    def free_variables(self) -> List[int]:
        return [v for v in range(self.n) if v not in self.frozen]


class Hypergraph(BaseModel):
    model_config = ConfigDict(frozen=True)

    vertex_count: int = Field(..., ge=0)
    edges: Tuple[frozenset, ...] = ()

    @model_validator(mode="after")
    def _check_edges(self):
        for edge in self.edges:
            if not edge:
                raise ValueError("hyperedges must be nonempty")
            if max(edge) >= self.vertex_count:
                raise ValueError("hyperedge vertex outside the vertex range")
        return self


# ---------- Parsers ----------

def _ccp_bits(k1: int) -> int:
    if k1 < 2:
        raise UnsupportedError("CCP needs k1 >= 2 subcliques")
    return math.ceil(math.log2(k1))


def _content_lines(text: str):
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield number, line


def parse_dimacs_cnf(text: str) -> ProblemInstance:
    """
    Parse a DIMACS CNF formula.

    Args:
        text (str): file contents with a "p cnf n m" header

    Returns:
        ProblemInstance: SAT instance with literal signs preserved
    """
    n_vars: Optional[int] = None
    clauses: List[Tuple[Literal, ...]] = []
    current: List[Literal] = []
    current_start = 0

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if n_vars is not None or len(parts) != 4 or parts[1] != "cnf":
                raise MalformedHeaderError("expected 'p cnf <variables> <clauses>'", number)
            try:
                n_vars, _ = int(parts[2]), int(parts[3])
            except ValueError:
                raise MalformedHeaderError("header counts must be integers", number)
            if n_vars < 0:
                raise MalformedHeaderError("negative variable count", number)
            continue
        if n_vars is None:
            raise MalformedHeaderError("clause before the 'p cnf' header", number)
        for token in line.split():
            try:
                value = int(token)
            except ValueError:
                raise ParseError(f"non-integer literal {token!r}", number)
            if value == 0:
                if not current:
                    raise ParseError("empty clause", number)
                clauses.append(tuple(current))
                current = []
                continue
            if abs(value) > n_vars:
                raise IndexOutOfRangeError(f"variable {abs(value)} exceeds n={n_vars}", number)
            if not current:
                current_start = number
            current.append(Literal(variable=abs(value) - 1, negated=value < 0))

    if n_vars is None:
        raise MalformedHeaderError("missing 'p cnf' header", 1)
    if current:
        raise UnterminatedClauseError("clause not terminated by 0", current_start)
    return ProblemInstance(kind=ProblemKind.SAT, n_variables=n_vars, clauses=tuple(clauses))


def _closed_neighbourhoods(vertex_count: int, edges: Sequence[Tuple[int, int]]) -> Tuple[Tuple[int, ...], ...]:
    graph = nx.Graph()
    graph.add_nodes_from(range(vertex_count))
    graph.add_edges_from(edges)
    return tuple(tuple([v] + sorted(graph.neighbors(v))) for v in range(vertex_count))


def _graph_instance(kind: ProblemKind, vertex_count: int, edges: Sequence[Tuple[int, int]],
                    k1: Optional[int]) -> ProblemInstance:
    edges = tuple(edges)
    if kind == ProblemKind.HCP:
        return ProblemInstance(kind=kind, n_variables=len(edges), vertex_count=vertex_count, edges=edges, k1=k1)
    if kind == ProblemKind.CCP:
        width = vertex_count * _ccp_bits(k1) if k1 is not None else vertex_count
        return ProblemInstance(kind=kind, n_variables=width, vertex_count=vertex_count, edges=edges, k1=k1)
    memberships = _closed_neighbourhoods(vertex_count, edges) if kind == ProblemKind.DSP else ()
    return ProblemInstance(kind=kind, n_variables=vertex_count, vertex_count=vertex_count,
                           edges=edges, memberships=memberships, k1=k1)


def parse_edge_list(text: str, kind: ProblemKind) -> ProblemInstance:
    """
    Parse a whitespace edge list: header "n [k1]", then one "u v" pair per line.

    Edges are stored verbatim; complement-graph problems take whatever graph is given.
    """
    kind = ProblemKind(kind)
    if kind not in GRAPH_KINDS:
        raise UnsupportedError(f"{kind.value} is not an edge-list problem")

    lines = list(_content_lines(text))
    if not lines:
        raise MalformedHeaderError("missing 'n [k1]' header", 1)
    number, header = lines[0]
    try:
        fields = [int(tok) for tok in header.split()]
    except ValueError:
        raise MalformedHeaderError("header must be integers 'n [k1]'", number)
    if not 1 <= len(fields) <= 2 or fields[0] < 0:
        raise MalformedHeaderError("header must be 'n' or 'n k1'", number)
    vertex_count = fields[0]
    k1 = fields[1] if len(fields) == 2 else None

    edges: List[Tuple[int, int]] = []
    seen: Set[frozenset] = set()
    for number, line in lines[1:]:
        parts = line.split()
        if len(parts) != 2:
            raise ParseError("expected 'u v'", number)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError("vertex indices must be integers", number)
        if u == v:
            raise SelfLoopError(f"self-loop on vertex {u}", number)
        if not (0 <= u < vertex_count and 0 <= v < vertex_count):
            raise IndexOutOfRangeError(f"edge ({u}, {v}) outside [0, {vertex_count})", number)
        key = frozenset((u, v))
        if key in seen:
            raise DuplicateEdgeError(f"duplicate edge ({u}, {v})", number)
        seen.add(key)
        edges.append((u, v))

    if kind == ProblemKind.HCP:
        covered = {v for edge in edges for v in edge}
        isolated = [v for v in range(vertex_count) if v not in covered]
        if isolated:
            logger.warning("HCP vertices without edges: %s", isolated)
    return _graph_instance(kind, vertex_count, edges, k1)


_SUBSET_TOKEN = re.compile(r"^[A-Za-z_]*(\d+)$")


def parse_set_system(text: str, kind: ProblemKind) -> ProblemInstance:
    """
    Parse the line-oriented set-system format.

    Args:
        text (str): "k1 = <int>", "k2 = <int>", "n = <int>" header lines, then
            "label: i j ..." lines (SCP/ECP: an element and the subsets holding it;
            HSP: a subset and its elements; DSP: a vertex and its neighbours) or
            "item: weight value" lines (KSP/NPP; NPP also accepts "item: value")
        kind (ProblemKind): one of SCP, ECP, HSP, DSP, KSP, NPP

    Returns:
        ProblemInstance: memberships hold, per checking unit, the variables it reads
    """
    kind = ProblemKind(kind)
    if kind not in SET_KINDS:
        raise UnsupportedError(f"{kind.value} is not a set-system problem")

    header: Dict[str, int] = {}
    rows: List[Tuple[int, str, List[str]]] = []
    for number, line in _content_lines(text):
        if "=" in line and ":" not in line:
            key, _, value = line.partition("=")
            key = key.strip().lower()
            if key not in ("k1", "k2", "n"):
                raise MalformedHeaderError(f"unknown header key {key!r}", number)
            try:
                header[key] = int(value.strip())
            except ValueError:
                raise MalformedHeaderError(f"{key} must be an integer", number)
            continue
        if ":" not in line:
            raise ParseError("expected 'label: values' or 'key = value'", number)
        label, _, rest = line.partition(":")
        rows.append((number, label.strip(), rest.split()))

    k1, k2 = header.get("k1"), header.get("k2")

    if kind in (ProblemKind.KSP, ProblemKind.NPP):
        items: List[Tuple[int, int]] = []
        for number, _, values in rows:
            try:
                numbers = [int(v) for v in values]
            except ValueError:
                raise ParseError("item weights and values must be integers", number)
            if any(v < 0 for v in numbers):
                raise ParseError("item weights and values must be nonnegative", number)
            if len(numbers) == 2:
                items.append((numbers[0], numbers[1]))
            elif len(numbers) == 1 and kind == ProblemKind.NPP:
                items.append((numbers[0], numbers[0]))
            else:
                raise ParseError("expected 'item: weight value'", number)
        return ProblemInstance(kind=kind, n_variables=len(items), items=tuple(items), k1=k1, k2=k2)

    units: List[Tuple[int, ...]] = []
    labels: List[str] = []
    for number, label, values in rows:
        indices = []
        for token in values:
            match = _SUBSET_TOKEN.match(token)
            if not match:
                raise ParseError(f"bad index {token!r}", number)
            indices.append(int(match.group(1)))
        if not indices and kind == ProblemKind.HSP:
            raise EmptySubsetError(f"subset {label!r} is empty", number)
        if kind == ProblemKind.DSP:
            if not label.isdigit():
                raise ParseError("DSP lines must be labelled by a vertex index", number)
            indices = [int(label)] + indices
        units.append(tuple(sorted(set(indices))))
        labels.append(label)

    declared = header.get("n")
    used = max((i for unit in units for i in unit), default=-1) + 1
    n_vars = declared if declared is not None else used
    if used > n_vars:
        raise IndexOutOfRangeError(f"index {used - 1} exceeds n={n_vars}")

    uncovered = tuple(label for label, unit in zip(labels, units) if not unit)
    if uncovered:
        logger.warning("elements covered by no subset (instance is unsatisfiable): %s", list(uncovered))

    if kind == ProblemKind.DSP:
        edges = sorted({tuple(sorted((int(label), u))) for label, unit in zip(labels, units)
                        for u in unit if u != int(label)})
        return _graph_instance(kind, n_vars, edges, k1)

    return ProblemInstance(kind=kind, n_variables=n_vars, memberships=tuple(units),
                           k1=k1, k2=k2, uncovered=uncovered)


def complement(instance: ProblemInstance) -> ProblemInstance:
    """Swap the stored graph for its complement (used by --complement)."""
    if instance.kind not in GRAPH_KINDS or instance.kind == ProblemKind.HCP:
        raise UnsupportedError(f"--complement does not apply to {instance.kind.value}")
    graph = nx.Graph()
    graph.add_nodes_from(range(instance.vertex_count))
    graph.add_edges_from(instance.edges)
    edges = sorted(tuple(sorted(edge)) for edge in nx.complement(graph).edges())
    return _graph_instance(instance.kind, instance.vertex_count, edges, instance.k1)


# ---------- Regularization and lowering ----------

def _normalized_clauses(clauses) -> List[Tuple[Literal, ...]]:
    normalized = []
    for clause in clauses:
        unique = list(dict.fromkeys(clause))
        variables = {lit.variable for lit in unique}
        if len(variables) < len(unique):
            continue  # tautology: x and not x
        normalized.append(tuple(unique))
    return normalized


def regularize(instance: ProblemInstance) -> ProblemInstance:
    """
    Pad non-uniform units with frozen auxiliary variables so every unit has d_max inputs.

    Auxiliaries are appended after the original variables and pinned to 0, so they never
    change a unit's value.
    """
    if instance.kind not in REGULARIZABLE:
        return instance
    if instance.kind == ProblemKind.SAT:
        units = _normalized_clauses(instance.clauses)
    else:
        units = list(instance.memberships)
    if not units:
        return instance
    sizes = [len(unit) for unit in units]
    d_max, d_min = max(sizes), min(sizes)
    if d_max == d_min:
        return instance

    d_aux = d_max - d_min
    aux = [instance.n_variables + i for i in range(d_aux)]
    logger.info("regularizing %s: %d auxiliary variables", instance.kind.value, d_aux)
    if instance.kind == ProblemKind.SAT:
        padded = tuple(
            tuple(clause) + tuple(Literal(variable=a) for a in aux[:d_max - len(clause)])
            for clause in units
        )
        update = {"clauses": padded}
    else:
        update = {"memberships": tuple(tuple(unit) + tuple(aux[:d_max - len(unit)]) for unit in units)}
    update["n_variables"] = instance.n_variables + d_aux
    update["frozen_variables"] = frozenset(instance.frozen_variables) | frozenset(aux)
    return instance.model_copy(update=update)


def _require(value: Optional[int], name: str, kind: ProblemKind) -> int:
    if value is None:
        raise UnsupportedError(f"{kind.value} needs {name}")
    return value


def _identity_group(instance: ProblemInstance, direction: Direction) -> HGroup:
    h_list = tuple(HConstraint(kind=HKind.IDENTITY, literals=(Literal(variable=v),))
                   for v in range(instance.n_variables))
    bound = _require(instance.k1, "k1", instance.kind)
    return HGroup(h_list=h_list, threshold=ThresholdSpec(direction=direction, bound=bound))


def _weighted_group(values: Sequence[int], direction: Direction, bound: int) -> HGroup:
    h_list = tuple(HConstraint(kind=HKind.WEIGHTED, literals=(Literal(variable=i),), weight=w)
                   for i, w in enumerate(values) if w > 0)
    return HGroup(h_list=h_list, threshold=ThresholdSpec(direction=direction, bound=bound))


def _groups_for(instance: ProblemInstance) -> List[HGroup]:
    kind = instance.kind
    if kind in (ProblemKind.SCP, ProblemKind.NCP, ProblemKind.HSP, ProblemKind.DSP):
        return [_identity_group(instance, Direction.LEQ)]
    if kind in (ProblemKind.CQP, ProblemKind.MIS):
        return [_identity_group(instance, Direction.GEQ)]
    if kind == ProblemKind.MCP:
        h_list = tuple(HConstraint(kind=HKind.XOR_PAIR, literals=(Literal(variable=u), Literal(variable=v)))
                       for u, v in instance.edges)
        bound = _require(instance.k1, "k1", kind)
        return [HGroup(h_list=h_list, threshold=ThresholdSpec(direction=Direction.GEQ, bound=bound))]
    if kind == ProblemKind.KSP:
        k1 = _require(instance.k1, "k1", kind)
        k2 = _require(instance.k2, "k2", kind)
        weights = [w for w, _ in instance.items]
        values = [v for _, v in instance.items]
        return [_weighted_group(weights, Direction.LEQ, k1), _weighted_group(values, Direction.GEQ, k2)]
    if kind == ProblemKind.NPP:
        values = [v for _, v in instance.items]
        if instance.k1 is not None:
            return [_weighted_group(values, Direction.EQ, instance.k1)]
        return [_weighted_group([2 * v for v in values], Direction.EQ, sum(values))]
    return []


def lower(instance: ProblemInstance, strict: bool = False) -> ConstraintSystem:
    """
    Lower a (regularized) instance to the unified constraint system.

    Args:
        instance (ProblemInstance): parsed instance, regularized when its kind needs it
        strict (bool): strict Heaviside, H(0)=0

    Returns:
        ConstraintSystem: g constraints, h groups with thresholds, and solver parameters
    """
    kind = instance.kind
    g_list: List[GConstraint] = []
    activation = None

    if kind == ProblemKind.SAT:
        g_list = [GConstraint(kind=GKind.OR_CLAUSE, literals=clause)
                  for clause in _normalized_clauses(instance.clauses)]
    elif kind in (ProblemKind.SCP, ProblemKind.HSP, ProblemKind.DSP, ProblemKind.ECP):
        unit_kind = GKind.EXACT_ONE if kind == ProblemKind.ECP else GKind.OR_CLAUSE
        for unit in instance.memberships:
            if not unit:
                raise UnsupportedError(f"{kind.value} unit with no variables; regularize first")
            g_list.append(GConstraint(kind=unit_kind, literals=tuple(Literal(variable=v) for v in unit)))
    elif kind == ProblemKind.NCP:
        g_list = [GConstraint(kind=GKind.OR_CLAUSE, literals=(Literal(variable=u), Literal(variable=v)))
                  for u, v in instance.edges]
    elif kind in (ProblemKind.CQP, ProblemKind.MIS):
        g_list = [GConstraint(kind=GKind.NAND_PAIR, literals=(Literal(variable=u), Literal(variable=v)))
                  for u, v in instance.edges]
    elif kind == ProblemKind.CCP:
        m = _ccp_bits(_require(instance.k1, "k1", kind))
        for u, v in instance.edges:
            bits = [Literal(variable=u * m + i) for i in range(m)] + [Literal(variable=v * m + i) for i in range(m)]
            g_list.append(GConstraint(kind=GKind.REGISTER_NEQ, literals=tuple(bits), register_width=m))
        if instance.k1 < 2 ** m:
            # only the first k1 codes name a clique
            for v in range(instance.vertex_count or 0):
                g_list.append(GConstraint(kind=GKind.CODE_BELOW, bound=instance.k1,
                                          literals=tuple(Literal(variable=v * m + i) for i in range(m))))
    elif kind == ProblemKind.HCP:
        vertex_count = instance.vertex_count or 0
        if vertex_count < 3:
            raise UnsupportedError("HCP needs at least 3 vertices")
        for vertex in range(vertex_count):
            incident = [k for k, edge in enumerate(instance.edges) if vertex in edge]
            if not incident:
                raise UnsupportedError(f"HCP vertex {vertex} has no edges; no Hamiltonian cycle exists")
            g_list.append(GConstraint(kind=GKind.EXACT_TWO, literals=tuple(Literal(variable=k) for k in incident)))
        activation = ActivationSpec(vertex_count=vertex_count, edges=instance.edges)

    n = instance.n_variables
    if kind == ProblemKind.CCP:
        n = (instance.vertex_count or 0) * _ccp_bits(instance.k1)

    system = ConstraintSystem(
        n=n,
        g_list=tuple(g_list),
        groups=tuple(_groups_for(instance)),
        activation=activation,
        frozen=frozenset(instance.frozen_variables),
        strict=strict,
        kind=kind,
    )
    logger.info("lowered %s: n=%d N=%d t=%d b=%d", kind.value, system.n, system.N, system.t, system.b)
    return system


# ---------- Classical evaluation ----------

def _literal_columns(z: np.ndarray, literals: Sequence[Literal]) -> np.ndarray:
    columns = z[:, [lit.variable for lit in literals]].astype(bool)
    negated = np.array([lit.negated for lit in literals], dtype=bool)
    return columns ^ negated


def threshold_holds(total, spec: ThresholdSpec, strict: bool = False):
    """H(total - k) for GEQ, H(k - total) for LEQ, delta for EQ."""
    if spec.direction == Direction.EQ:
        return total == spec.bound
    if spec.direction == Direction.GEQ:
        return total > spec.bound if strict else total >= spec.bound
    return total < spec.bound if strict else total <= spec.bound


def activation_count(spec: ActivationSpec, z: np.ndarray) -> np.ndarray:
    """Cumulative activation after spec.rounds propagation rounds, per assignment row."""
    rows = z.shape[0]
    bank = np.zeros((rows, spec.vertex_count), dtype=bool)
    bank[:, spec.start] = True
    for _ in range(spec.rounds):
        nxt = bank.copy()
        for k, (i, j) in enumerate(spec.edges):
            selected = z[:, k].astype(bool)
            nxt[:, j] |= selected & bank[:, i]
            nxt[:, i] |= selected & bank[:, j]
        bank = nxt
    return bank.sum(axis=1)


def evaluate_batch(system: ConstraintSystem, z: np.ndarray) -> np.ndarray:
    """Vectorized f over assignment rows (shape rows x n)."""
    z = np.asarray(z, dtype=np.int8)
    if z.ndim != 2 or z.shape[1] != system.n:
        raise ValueError(f"assignments must have {system.n} columns")
    ok = np.ones(z.shape[0], dtype=bool)

    for unit in system.g_list:
        values = _literal_columns(z, unit.literals)
        if unit.kind == GKind.OR_CLAUSE:
            ok &= values.any(axis=1)
        elif unit.kind == GKind.NAND_PAIR:
            ok &= ~values.all(axis=1)
        elif unit.kind == GKind.EXACT_ONE:
            ok &= values.sum(axis=1) == 1
        elif unit.kind == GKind.EXACT_TWO:
            ok &= values.sum(axis=1) == 2
        elif unit.kind == GKind.REGISTER_NEQ:
            m = unit.register_width
            ok &= (values[:, :m] != values[:, m:]).any(axis=1)
        elif unit.kind == GKind.CODE_BELOW:
            code = values.astype(np.int64) @ (1 << np.arange(values.shape[1], dtype=np.int64))
            ok &= code < unit.bound

    for group in system.groups:
        total = np.zeros(z.shape[0], dtype=np.int64)
        for h in group.h_list:
            values = _literal_columns(z, h.literals)
            if h.kind == HKind.XOR_PAIR:
                total += values[:, 0] ^ values[:, 1]
            else:
                total += values[:, 0].astype(np.int64) * h.weight
        ok &= threshold_holds(total, group.threshold, system.strict)

    if system.activation is not None:
        ok &= activation_count(system.activation, z) == system.activation.target
    return ok


def evaluate_f(system: ConstraintSystem, assignment: Sequence[int]) -> int:
    """
    Classical brute-force oracle f(z).

    Args:
        system (ConstraintSystem): lowered system
        assignment: bit vector of length n (index i is variable i)

    Returns:
        int: 1 when every g holds and every threshold accepts its sum
    """
    if len(assignment) != system.n:
        raise ValueError(f"assignment has length {len(assignment)}, expected {system.n}")
    return int(evaluate_batch(system, np.array([list(assignment)], dtype=np.int8).reshape(1, system.n))[0])


def all_assignments(system: ConstraintSystem) -> np.ndarray:
    """Every assignment with frozen variables at 0, in counting order over the free ones."""
    free = system.free_variables
    if len(free) > ENUMERATION_LIMIT:
        raise UnsupportedError(f"{len(free)} free variables exceed the enumeration limit {ENUMERATION_LIMIT}")
    index = np.arange(2 ** len(free), dtype=np.int64)
    z = np.zeros((index.size, system.n), dtype=np.int8)
    for j, var in enumerate(free):
        z[:, var] = (index >> j) & 1
    return z


def enumerate_solutions(system: ConstraintSystem) -> Set[Tuple[int, ...]]:
    z = all_assignments(system)
    return {tuple(int(b) for b in row) for row in z[evaluate_batch(system, z)]}


def to_hypergraph(system: ConstraintSystem) -> Hypergraph:
    """One hyperedge per retained checking unit; elided IDENTITY units are skipped."""
    units = list(system.g_list) + list(system.retained_h)
    return Hypergraph(vertex_count=system.n, edges=tuple(frozenset(u.variables) for u in units))


# ---------- Problem-native evaluators ----------

def _graph(instance: ProblemInstance) -> nx.Graph:
    graph = nx.Graph()
    graph.add_nodes_from(range(instance.vertex_count or 0))
    graph.add_edges_from(instance.edges)
    return graph


def direct_evaluate(instance: ProblemInstance, assignment: Sequence[int], strict: bool = False) -> bool:
    """
    Decide the instance for one assignment in the problem's own vocabulary.

    This never goes through the constraint system, so it cross-checks lower().
    """
    z = [int(b) for b in assignment]
    kind = instance.kind
    chosen = {i for i, bit in enumerate(z) if bit}

    def within(size: int, direction: Direction, bound: int) -> bool:
        return bool(threshold_holds(size, ThresholdSpec(direction=direction, bound=bound), strict))

    if kind == ProblemKind.SAT:
        return all(any(z[lit.variable] != lit.negated for lit in clause) for clause in instance.clauses)
    if kind in (ProblemKind.SCP, ProblemKind.HSP):
        hit = all(chosen & set(unit) for unit in instance.memberships)
        return hit and within(len(chosen), Direction.LEQ, instance.k1)
    if kind == ProblemKind.ECP:
        return all(sum(z[s] for s in unit) == 1 for unit in instance.memberships)
    if kind == ProblemKind.DSP:
        # padding variables are not vertices
        dominated = nx.is_dominating_set(_graph(instance), chosen & set(range(instance.vertex_count)))
        return dominated and within(len(chosen), Direction.LEQ, instance.k1)
    if kind == ProblemKind.NCP:
        covered = all(u in chosen or v in chosen for u, v in _graph(instance).edges())
        return covered and within(len(chosen), Direction.LEQ, instance.k1)
    if kind == ProblemKind.CQP:
        clique = nx.complement(_graph(instance)).subgraph(chosen)
        size = len(chosen)
        return clique.number_of_edges() == size * (size - 1) // 2 and within(size, Direction.GEQ, instance.k1)
    if kind == ProblemKind.MIS:
        independent = _graph(instance).subgraph(chosen).number_of_edges() == 0
        return independent and within(len(chosen), Direction.GEQ, instance.k1)
    if kind == ProblemKind.MCP:
        return within(nx.cut_size(_graph(instance), chosen), Direction.GEQ, instance.k1)
    if kind == ProblemKind.KSP:
        weight = sum(w for i, (w, _) in enumerate(instance.items) if z[i])
        value = sum(v for i, (_, v) in enumerate(instance.items) if z[i])
        return within(weight, Direction.LEQ, instance.k1) and within(value, Direction.GEQ, instance.k2)
    if kind == ProblemKind.NPP:
        picked = sum(v for i, (_, v) in enumerate(instance.items) if z[i])
        total = sum(v for _, v in instance.items)
        return picked == instance.k1 if instance.k1 is not None else 2 * picked == total
    if kind == ProblemKind.CCP:
        m = _ccp_bits(instance.k1)
        colour = [sum(z[v * m + i] << i for i in range(m)) for v in range(instance.vertex_count)]
        return all(c < instance.k1 for c in colour) and all(colour[u] != colour[v] for u, v in instance.edges)
    if kind == ProblemKind.HCP:
        cycle = nx.Graph()
        cycle.add_nodes_from(range(instance.vertex_count))
        cycle.add_edges_from(edge for k, edge in enumerate(instance.edges) if z[k])
        return all(d == 2 for _, d in cycle.degree()) and nx.is_connected(cycle)
    raise UnsupportedError(f"no evaluator for {kind.value}")


# ---------- Random desk instances ----------

def planted_3sat(n: int, m: int, rng: np.random.Generator, k: int = 3) -> ProblemInstance:
    """Uniform k-SAT with a hidden satisfying assignment."""
    k = min(k, n)
    planted = rng.integers(0, 2, size=n)
    clauses = []
    while len(clauses) < m:
        variables = rng.choice(n, size=k, replace=False)
        signs = rng.integers(0, 2, size=k).astype(bool)
        clause = tuple(Literal(variable=int(v), negated=bool(s)) for v, s in zip(variables, signs))
        if any(planted[lit.variable] != lit.negated for lit in clause):
            clauses.append(clause)
    return ProblemInstance(kind=ProblemKind.SAT, n_variables=n, clauses=tuple(clauses))


def _random_edges(n: int, density: float, rng: np.random.Generator) -> List[Tuple[int, int]]:
    graph = nx.gnp_random_graph(n, density, seed=int(rng.integers(0, 2 ** 31)))
    return sorted(tuple(sorted(edge)) for edge in graph.edges())


def random_instance(kind: ProblemKind, n: int, rng: np.random.Generator) -> ProblemInstance:
    """
    Seeded random instance of the given kind with roughly n data qubits.

    Args:
        kind (ProblemKind): problem kind
        n (int): target size (vertices, variables, items or subsets)
        rng (np.random.Generator): generator owning the randomness

    Returns:
        ProblemInstance: unregularized instance
    """
    kind = ProblemKind(kind)
    if kind == ProblemKind.SAT:
        return planted_3sat(n, int(rng.integers(n // 2 + 1, n + 2)), rng)
    if kind in (ProblemKind.MIS, ProblemKind.MCP, ProblemKind.NCP, ProblemKind.CQP, ProblemKind.DSP):
        edges = _random_edges(n, 0.45, rng) or [(0, 1)]
        k1 = int(rng.integers(1, max(2, n // 2 + 1)))
        return _graph_instance(kind, n, edges, k1)
    if kind == ProblemKind.CCP:
        vertices = max(2, min(n, 4))
        k1 = int(rng.choice([2, 3, 4])) if vertices <= 3 else 2
        edges = _random_edges(vertices, 0.5, rng) or [(0, 1)]
        return _graph_instance(kind, vertices, edges, k1)
    if kind == ProblemKind.HCP:
        # a shuffled cycle plus random chords; K5 caps this at 10 edge variables
        vertices = max(3, min(n, 5))
        order = [int(v) for v in rng.permutation(vertices)]
        edges = {tuple(sorted((order[i], order[(i + 1) % vertices]))) for i in range(vertices)}
        edges |= {tuple(sorted(edge)) for edge in _random_edges(vertices, 0.3, rng)}
        if rng.random() < 0.5 and len(edges) > vertices:
            edges.discard(sorted(edges)[0])
        covered = {v for edge in edges for v in edge}
        edges |= {tuple(sorted((v, (v + 1) % vertices))) for v in range(vertices) if v not in covered}
        return _graph_instance(kind, vertices, sorted(edges), None)
    if kind in (ProblemKind.SCP, ProblemKind.ECP):
        elements = max(2, n - 1)
        memberships = []
        for _ in range(elements):
            degree = int(rng.integers(1, min(3, n) + 1))
            memberships.append(tuple(sorted(int(s) for s in rng.choice(n, size=degree, replace=False))))
        k1 = int(rng.integers(1, n + 1)) if kind == ProblemKind.SCP else None
        return ProblemInstance(kind=kind, n_variables=n, memberships=tuple(memberships), k1=k1)
    if kind == ProblemKind.HSP:
        subsets = []
        for _ in range(max(2, n - 2)):
            size = int(rng.integers(1, min(3, n) + 1))
            subsets.append(tuple(sorted(int(e) for e in rng.choice(n, size=size, replace=False))))
        return ProblemInstance(kind=kind, n_variables=n, memberships=tuple(subsets),
                               k1=int(rng.integers(1, n + 1)))
    if kind == ProblemKind.KSP:
        items = tuple((int(rng.integers(1, 5)), int(rng.integers(0, 5))) for _ in range(n))
        return ProblemInstance(kind=kind, n_variables=n, items=items,
                               k1=int(rng.integers(1, 8)), k2=int(rng.integers(0, 8)))
    if kind == ProblemKind.NPP:
        items = tuple((v, v) for v in (int(x) for x in rng.integers(1, 6, size=n)))
        k1 = int(rng.integers(0, 10)) if rng.random() < 0.5 else None
        return ProblemInstance(kind=kind, n_variables=n, items=items, k1=k1)
    raise UnsupportedError(f"no generator for {kind.value}")


if __name__ == "__main__":
    sample = parse_edge_list("3 1\n0 1\n1 2\n", ProblemKind.MCP)
    system = lower(regularize(sample))
    print(json.dumps({
        "kind": system.kind.value,
        "n": system.n,
        "N": system.N,
        "t": system.t,
        "solutions": sorted("".join(map(str, z)) for z in enumerate_solutions(system)),
    }, indent=2))
