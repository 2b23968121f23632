import json
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from circuit_ir import (
    ARITY,
    GridPos,
    Layer,
    Move,
    MovePhase,
    PlacementHint,
    QubitId,
    QubitRole,
    Schedule,
    Step,
    layer_violation,
    lower_polarity,
)
from errors import PlacementError
from instances import ConstraintSystem, GConstraint, GKind, Hypergraph

if TYPE_CHECKING:
    from circuit_ir import Fragment
    from oracle import GroverProgram, MirrorBlock

logger = logging.getLogger(__name__)

Matching = Tuple[int, ...]


# ---------- Partitioning ----------

@dataclass(frozen=True)
class Partition:
    matchings: Tuple[Matching, ...] = ()

    @property
    def L(self) -> int:
        return len(self.matchings)


def greedy_maximal_matching(h: Hypergraph, candidates: Optional[Sequence[int]] = None) -> Matching:
    """
    Maximal set of pairwise vertex-disjoint hyperedges, scanned in ascending edge index.

    Args:
        h (Hypergraph): hypergraph
        candidates: edge indices to consider; all edges when omitted

    Returns:
        Matching: chosen edge indices, ascending
    """
    used = set()
    chosen = []
    for index in sorted(range(len(h.edges)) if candidates is None else candidates):
        edge = h.edges[index]
        if used.isdisjoint(edge):
            chosen.append(index)
            used |= edge
    return tuple(chosen)


def partition_units(h: Hypergraph) -> Partition:
    """Repeat maximal matching on the residual edges until every edge is placed."""
    remaining = list(range(len(h.edges)))
    matchings = []
    while remaining:
        matching = greedy_maximal_matching(h, remaining)
        matchings.append(matching)
        chosen = set(matching)
        remaining = [i for i in remaining if i not in chosen]
    return Partition(tuple(matchings))


def variant_packs(system: ConstraintSystem, size: Optional[int] = None) -> List[Tuple[int, ...]]:
    """g-unit indices in partition order, chunked into packs of at most `size` (default n)."""
    size = size or max(1, system.n)
    h = Hypergraph(vertex_count=system.n, edges=tuple(frozenset(u.variables) for u in system.g_list))
    order = [i for matching in partition_units(h).matchings for i in matching]
    return [tuple(order[i:i + size]) for i in range(0, len(order), size)]


# ---------- Checking-unit placement ----------

@dataclass(frozen=True)
class Placement:
    positions: Dict[int, GridPos]
    completing: Tuple[GridPos, ...] = ()
    rows: int = 0


def column_height(n: int) -> int:
    return math.ceil(math.sqrt(max(n, 1)))


def map_positions(units: Sequence[Sequence[int]], t: int, n: int, band: Optional[int] = None,
                  slots: Optional[Sequence[int]] = None) -> Placement:
    """
    Place each unit's qubits down one column of a (band)-row block.

    Unit mu (1-based) qubit tau goes to [band * floor((mu-1)/s) + tau - 1, (mu-1) mod s]
    with s = ceil(sqrt(n)); missing slots of a partial last block get completing atoms.

    Args:
        units: per unit, data qubits then ancillae (tau order)
        t (int): largest unit arity
        n (int): data-qubit count
        band (int): rows per block, t+1 by default
        slots: explicit mu per unit; consecutive from 1 when omitted

    Returns:
        Placement: positions, completing cells and block rows used
    """
    band = t + 1 if band is None else band
    s = column_height(n)
    slots = list(range(1, len(units) + 1)) if slots is None else list(slots)
    positions: Dict[int, GridPos] = {}
    for mu, qubits in zip(slots, units):
        if len(qubits) > band:
            raise PlacementError(f"unit with {len(qubits)} qubits does not fit a band of {band}")
        for tau, q in enumerate(qubits, start=1):
            if q in positions:
                raise PlacementError(f"qubit {q} appears in two units of one set")
            positions[q] = GridPos(band * ((mu - 1) // s) + tau - 1, (mu - 1) % s)
    top = max(slots, default=0)
    blocks = -(-top // s)
    completing = []
    if top > s:
        used = set(slots)
        for mu in range(1, blocks * s + 1):
            if mu not in used:
                completing += [GridPos(band * ((mu - 1) // s) + tau, (mu - 1) % s) for tau in range(band)]
    return Placement(positions, tuple(completing), band * blocks)


def negation_buckets(units: Sequence[GConstraint]) -> List[List[int]]:
    """Indices of clause units grouped by their count of negated literals; other sets stay whole."""
    if not units or any(getattr(u, "kind", None) != GKind.OR_CLAUSE for u in units):
        return [list(range(len(units)))] if units else []
    buckets: Dict[int, List[int]] = {}
    for i, u in enumerate(units):
        buckets.setdefault(sum(lit.negated for lit in u.literals), []).append(i)
    return [buckets[a] for a in sorted(buckets)]


def group_sat_negations(units: Sequence[GConstraint]) -> List[List[GConstraint]]:
    """
    Bucket clauses by negation count with negated literals first in each clause.

    Every clause of a bucket then needs its X conjugation on the same literal rows.
    """
    return [
        [u.model_copy(update={"literals": tuple(sorted(u.literals, key=lambda lit: not lit.negated))})
         for u in (units[i] for i in bucket)]
        for bucket in negation_buckets(units)
    ]


def bucket_slots(sizes: Sequence[int], n: int) -> List[int]:
    """Consecutive mu per bucket, each bucket starting on a fresh block of columns."""
    s = column_height(n)
    slots, mu = [], 1
    for size in sizes:
        if (mu - 1) % s:
            mu += s - (mu - 1) % s
        slots += list(range(mu, mu + size))
        mu += size
    return slots


# ---------- Tree and adder geometry ----------

@dataclass(frozen=True)
class QbtLevel:
    triples: Tuple[Tuple[int, int, int], ...]
    positions: Dict[int, GridPos]


@dataclass(frozen=True)
class QbtPlan:
    levels: Tuple[QbtLevel, ...]
    roots: Tuple[int, ...]
    rows: int


def qbt_height(count: int, n: int) -> int:
    """First-level column height: z * ceil(sqrt(n)) rounded up to a power of two, at least 2."""
    s = column_height(n)
    z = max(1, math.ceil(math.sqrt(max(count, 1)) / s))
    return 1 << max(1, (z * s - 1).bit_length())


def plan_qbt(inputs: Sequence[int], height: int, fresh: Callable[[], int], stop_at: int = 1) -> QbtPlan:
    """
    Binary AND tree laid out column-major with a fresh half-height band per level.

    Vertical neighbours (2j, 2j+1) merge into node j of the next band. An odd
    node out parks right of its band. A single-row level is folded in half
    (right half under left half) before it merges.

    Args:
        inputs: input qubits, in order
        height (int): first-level column height (a power of two)
        fresh: allocator for tree nodes
        stop_at (int): stop once this many nodes remain

    Returns:
        QbtPlan: per-level triples and relative positions, the surviving roots, rows spanned
    """
    live = list(inputs)
    h, base = max(1, height), 0
    levels = []
    while len(live) > max(1, stop_at):
        if h == 1:
            half = (len(live) + 1) // 2
            left, right = live[:half], live[half:]
            live = [q for pair in zip(left, right) for q in pair] + left[len(right):]
            h = 2
        positions = {q: GridPos(base + k % h, k // h) for k, q in enumerate(live)}
        columns = -(-len(live) // h)
        nh, nb = max(1, h // 2), base + h
        triples, nxt = [], []
        for j in range(len(live) // 2):
            node = fresh()
            triples.append((live[2 * j], live[2 * j + 1], node))
            positions[node] = GridPos(nb + j % nh, j // nh)
            nxt.append(node)
        if len(live) % 2:
            positions[live[-1]] = GridPos(base, columns)
            nxt.append(live[-1])
        levels.append(QbtLevel(tuple(triples), positions))
        live, base, h = nxt, nb, nh
    return QbtPlan(tuple(levels), tuple(live), base + h + 1)


def qra_positions(adders: Sequence[Tuple[Sequence[int], Sequence[int], int]]) -> Dict[int, GridPos]:
    """Adder k: preserved operand down column 2k with its carry below, target down column 2k+1."""
    positions = {}
    for k, (a, s, z) in enumerate(adders):
        for i, q in enumerate(a):
            positions[q] = GridPos(i, 2 * k)
        for i, q in enumerate(s):
            positions[q] = GridPos(i, 2 * k + 1)
        positions[z] = GridPos(len(a), 2 * k)
    return positions


# ---------- Moves ----------

def plan_moves(current: Mapping[int, GridPos], target: Mapping[int, GridPos],
               occupancy: Optional[Mapping[GridPos, int]] = None,
               staging_row: Optional[int] = None) -> List[MovePhase]:
    """
    Move phases taking every qubit in `target` from its current site.

    Each phase translates a group of atoms by one shared displacement. Cycles
    are broken through a staging row below everything in use.

    Args:
        current: qubit -> position for every atom on the grid
        target: qubit -> destination for the atoms to move
        occupancy: position -> qubit; derived from `current` when omitted
        staging_row (int): row for cycle breaking; one past the lowest atom when omitted

    Returns:
        List[MovePhase]: phases in execution order
    """
    if len(set(target.values())) != len(target):
        raise PlacementError("two qubits share a destination")
    occupancy = {p: q for q, p in current.items()} if occupancy is None else dict(occupancy)
    missing = [q for q in target if q not in current]
    if missing:
        raise PlacementError(f"qubits {missing} have no current position")
    position = {q: current[q] for q in target}
    pending = {q: dst for q, dst in target.items() if current[q] != dst}
    for q, dst in pending.items():
        occupant = occupancy.get(dst)
        if occupant is not None and occupant not in pending:
            raise PlacementError(f"destination ({dst.x}, {dst.y}) holds stationary qubit {occupant}")
    if staging_row is None:
        staging_row = max((p.x for p in occupancy), default=-1) + 1

    phases: List[MovePhase] = []

    def apply(moves: List[Move]) -> None:
        phases.append(MovePhase(tuple(moves)))
        for m in moves:
            del occupancy[m.src]
        for m in moves:
            occupancy[m.dst] = m.qubit
            position[m.qubit] = m.dst

    while pending:
        ready = sorted(q for q, dst in pending.items() if dst not in occupancy)
        if not ready:
            q = min(pending)
            col = 0
            while GridPos(staging_row, col) in occupancy:
                col += 1
            apply([Move(q, position[q], GridPos(staging_row, col))])
            continue
        groups: Dict[Tuple[int, int], List[Move]] = {}
        for q in ready:
            src, dst = position[q], pending.pop(q)
            groups.setdefault((dst.x - src.x, dst.y - src.y), []).append(Move(q, src, dst))
        for key in sorted(groups):
            apply(groups[key])
    return phases


@dataclass(frozen=True)
class StackResult:
    positions: Dict[int, GridPos]
    phases: List[MovePhase] = field(default_factory=list)


def stack_columns(columns: Sequence[Sequence[int]], height: int,
                  current: Optional[Mapping[int, GridPos]] = None,
                  origin: GridPos = GridPos(0, 0)) -> StackResult:
    """
    Fill partial columns from the rightmost partial ones until every column but one holds `height`.

    Column c is top-aligned at (origin.x, origin.y + c). Full columns never
    move. Each phase shifts one contiguous run from one donor column into the
    free rows of one receiver, so a stack needs fewer phases than columns.

    Args:
        columns: qubits per column, top to bottom
        height (int): full column height
        current: present positions; checked against the top-aligned layout when given
        origin (GridPos): top-left cell of column 0

    Returns:
        StackResult: final positions and the move phases reaching them
    """
    cells = [list(column) for column in columns]
    if height < 1 or any(len(column) > height for column in cells):
        raise PlacementError(f"columns must hold at most {height} qubits")
    if current is not None:
        for c, column in enumerate(cells):
            for i, q in enumerate(column):
                if current.get(q) != GridPos(origin.x + i, origin.y + c):
                    raise PlacementError(f"qubit {q} is not top-aligned in column {c}")
    partial = [c for c, column in enumerate(cells) if 0 < len(column) < height]
    total = sum(len(cells[c]) for c in partial)
    receivers = partial[:-(-total // height)]
    quota = {c: height for c in receivers}
    if receivers:
        quota[receivers[-1]] = total - height * (len(receivers) - 1)
    donors = [c for c in reversed(partial) if len(cells[c]) > quota.get(c, 0)]
    needy = [c for c in receivers if len(cells[c]) < quota[c]]

    phases: List[MovePhase] = []
    d = r = 0
    while d < len(donors) and r < len(needy):
        src, dst = donors[d], needy[r]
        count = min(len(cells[src]) - quota.get(src, 0), quota[dst] - len(cells[dst]))
        run = cells[src][-count:]
        del cells[src][-count:]
        top, free = len(cells[src]), len(cells[dst])
        phases.append(MovePhase(tuple(
            Move(q, GridPos(origin.x + top + i, origin.y + src), GridPos(origin.x + free + i, origin.y + dst))
            for i, q in enumerate(run))))
        cells[dst].extend(run)
        if len(cells[src]) == quota.get(src, 0):
            d += 1
        if len(cells[dst]) == quota[dst]:
            r += 1
    positions = {q: GridPos(origin.x + i, origin.y + c) for c, column in enumerate(cells) for i, q in enumerate(column)}
    return StackResult(positions, phases)


def stack_plan(groups: Sequence[Sequence[int]], height: int) -> Tuple[Tuple[Tuple[int, ...], ...], List[int]]:
    """
    Columns for a group of qubit runs and the column-major order they end in once stacked.

    Runs are cut into columns of at most `height`; full columns go first so the
    stacked result is a rectangle with only its last column short.
    """
    chunks = [tuple(group[i:i + height]) for group in groups for i in range(0, len(group), height)]
    columns = tuple(c for c in chunks if len(c) == height) + tuple(c for c in chunks if 0 < len(c) < height)
    stacked = stack_columns(columns, height).positions
    return columns, sorted(stacked, key=lambda q: (stacked[q].y, stacked[q].x))


# ---------- Schedule assembly ----------

class _Placer:
    """Tracks atom positions while emitting move phases and gate layers."""

    def __init__(self, qubits: Sequence[QubitId], initial: Dict[int, GridPos], first_row: int):
        self.roles: Dict[int, QubitRole] = {q.index: q.role for q in qubits}
        self.initial = dict(initial)
        self.positions = dict(initial)
        self.occupancy = {p: q for q, p in initial.items()}
        self.steps: List[Step] = []
        self.sections: List[str] = []
        self.cursor = first_row
        self.regions: Dict[str, int] = {}
        self.zones: Dict[int, int] = {}
        # shared rows; staging empties after every move, parking only fills
        self.staging: Optional[int] = None
        self.parking: Optional[int] = None
        self.applied: Optional[PlacementHint] = None
        self.completing: List[int] = []

    def _rows(self, count: int) -> int:
        start = self.cursor
        self.cursor += count
        return start

    def _append(self, step: Step, section: str) -> None:
        if isinstance(step, MovePhase):
            for m in step.moves:
                del self.occupancy[m.src]
            for m in step.moves:
                self.occupancy[m.dst] = m.qubit
                self.positions[m.qubit] = m.dst
        self.steps.append(step)
        self.sections.append(section)

    def _move(self, target: Mapping[int, GridPos], section: str) -> None:
        if self.staging is None:
            self.staging = self._rows(1)
        for phase in plan_moves(self.positions, target, self.occupancy, staging_row=self.staging):
            self._append(phase, section)

    def _evict(self, cells: Sequence[GridPos], keep: Mapping[int, GridPos], section: str) -> None:
        """Park every atom sitting on `cells` that is not in `keep`."""
        strangers = sorted({self.occupancy[p] for p in cells if p in self.occupancy and self.occupancy[p] not in keep})
        if not strangers:
            return
        if self.parking is None:
            self.parking = self._rows(1)
        free = [GridPos(self.parking, y) for y in range(len(self.occupancy) + len(strangers))
                if GridPos(self.parking, y) not in self.occupancy]
        self._move(dict(zip(strangers, free)), f"{section}:evict")

    def _complete(self, cell: GridPos) -> None:
        index = max(self.roles) + 1
        self.roles[index] = QubitRole.COMPLETING
        self.initial[index] = cell
        self.positions[index] = cell
        self.occupancy[cell] = index
        self.completing.append(index)

    def _stack(self, hint: PlacementHint, origin: int, section: str) -> None:
        # gather each run top-aligned in its own column, then fill the short columns
        height = hint.stack_height
        gather = {q: GridPos(origin + i, c) for c, column in enumerate(hint.stack) for i, q in enumerate(column)}
        self._evict([GridPos(origin + i, c) for c in range(len(hint.stack)) for i in range(height)],
                    gather, section)
        self._move(gather, f"{section}:stack")
        for phase in stack_columns(hint.stack, height, self.positions, GridPos(origin, 0)).phases:
            self._append(phase, f"{section}:stack")

    def apply_hint(self, hint: PlacementHint, section: str) -> None:
        origin = self.regions.get(hint.region)
        if origin is None:
            origin = self._rows(hint.height + 1)
            self.regions[hint.region] = origin
            for cell in hint.completing:
                self._complete(GridPos(origin + cell.x, cell.y))
        if hint.stack:
            self._stack(hint, origin, section)
        target = {q: GridPos(origin + p.x, p.y) for q, p in hint.positions.items()}
        self._evict(list(target.values()), target, section)
        self._move(target, section)

    def layer(self, layer: Layer, hint: Optional[PlacementHint], section: str) -> None:
        if hint is not None and hint is not self.applied:
            self.apply_hint(hint, section)
            self.applied = hint
        for part in lower_polarity(layer):
            self._gates(part, section)

    def _valid(self, layer: Layer) -> bool:
        return layer_violation(layer, self.positions, self.occupancy, self.roles) is None

    def _gates(self, layer: Layer, section: str) -> None:
        if self._valid(layer):
            self._append(layer, section)
            return
        arity = ARITY[layer.kind]
        if arity == 1:
            groups: List[List] = []
            for gate in layer.gates:
                for group in groups:
                    if self._valid(Layer(tuple(group + [gate]))):
                        group.append(gate)
                        break
                else:
                    groups.append([gate])
            for group in groups:
                self._append(Layer(tuple(group)), section)
            return
        # interaction zone, one per arity: operand j of gate g sits at (zone + j, g)
        if arity not in self.zones:
            self.zones[arity] = self._rows(arity + 1)
        zone = self.zones[arity]
        target = {q: GridPos(zone + j, g) for g, gate in enumerate(layer.gates) for j, q in enumerate(gate.qubits)}
        self._evict(list(target.values()), target, section)
        self._move(target, f"{section}:zone")
        self._append(layer, section)

    def fragment(self, fragment: "Fragment") -> None:
        for layer, hint, section in zip(fragment.layers, fragment.hints, fragment.sections):
            self.layer(layer, hint, section)

    def mirror(self, block: "MirrorBlock") -> None:
        start = len(self.steps)
        self.fragment(block.compute)
        end = len(self.steps)
        snapshot = {q: self.positions[q] for q in self.positions}
        self.fragment(block.pivot)
        drift = {q: p for q, p in snapshot.items() if self.positions[q] != p}
        if drift:
            self._move(drift, "restore")
        for index in range(end - 1, start - 1, -1):
            step, section = self.steps[index], self.sections[index]
            if block.inverse_section is not None:
                section = block.inverse_section + section[section.find(":"):] if ":" in section else block.inverse_section
            if isinstance(step, MovePhase):
                step = MovePhase(tuple(Move(m.qubit, m.dst, m.src) for m in step.moves))
            self._append(step, section)
        self.applied = None


def transpile_program(program: "GroverProgram") -> Schedule:
    """
    Place a block program on the grid.

    Free data sit on row 0, the kicked qubit at (1, 0), frozen data on row 2;
    ancillae start in a reservoir to the right of everything else and are
    moved in by the first placement hint that names them.
    """
    from oracle import MirrorBlock

    reservoir = len(program.qubits) + 2
    initial: Dict[int, GridPos] = {}
    spare = 0
    for q in program.qubits:
        if q.index < program.n:
            initial[q.index] = GridPos(2 if q.index in program.frozen else 0, q.index)
        elif q.index == program.kick:
            initial[q.index] = GridPos(1, 0)
        else:
            initial[q.index] = GridPos(0, reservoir + spare)
            spare += 1
    placer = _Placer(program.qubits, initial, first_row=3)
    for block in program.blocks:
        if isinstance(block, MirrorBlock):
            placer.mirror(block)
        else:
            placer.fragment(block)
    qubits = tuple(program.qubits) + tuple(QubitId(i, QubitRole.COMPLETING) for i in placer.completing)
    return Schedule(qubits, placer.initial, tuple(placer.steps), tuple(placer.sections))


def transpile(system: ConstraintSystem, iterations: int = 1, variant_threshold: Optional[float] = None) -> Schedule:
    """
    End-to-end placement of the Grover circuit for a lowered system.

    Args:
        system (ConstraintSystem): lowered system
        iterations (int): Grover rounds
        variant_threshold (float): pack-wise oracle trigger; configured default when omitted

    Returns:
        Schedule: move phases and broadcast layers simulating like build_grover
    """
    from oracle import grover_program

    schedule = transpile_program(grover_program(system, iterations, variant_threshold))
    logger.info("transpiled: %d steps, %d layers, %d transports",
                len(schedule.steps), len(schedule.layers), schedule.transport_count)
    return schedule


def layout_qbt(count: int, n: Optional[int] = None) -> Schedule:
    """Placed AND tree over `count` inputs on row 0, followed by its uncompute."""
    from oracle import qbt_program

    return transpile_program(qbt_program(count, n))


def layout_qra(count: int, width: int) -> Schedule:
    """Placed recursive adder over `count` registers of `width` bits, followed by its uncompute."""
    from oracle import qra_program

    return transpile_program(qra_program(count, width))


def geometry_dump(schedule: Schedule) -> List[dict]:
    """Positions of every atom after each step, for external plotting."""
    positions = dict(schedule.initial)
    frames = [{"step": -1, "section": "initial", "positions": {q: [p.x, p.y] for q, p in sorted(positions.items())}}]
    for index, (step, section) in enumerate(zip(schedule.steps, schedule.sections)):
        if isinstance(step, MovePhase):
            for m in step.moves:
                positions[m.qubit] = m.dst
        frames.append({"step": index, "section": section,
                       "positions": {q: [p.x, p.y] for q, p in sorted(positions.items())}})
    return frames


if __name__ == "__main__":
    from circuit_ir import count_resources, validate_schedule
    from instances import ProblemKind, lower, parse_edge_list, regularize

    system = lower(regularize(parse_edge_list("4 2\n0 1\n1 2\n2 3\n", ProblemKind.MIS)))
    schedule = transpile(system, 1)
    print(json.dumps({
        "partition": [list(m) for m in partition_units(Hypergraph(
            vertex_count=system.n, edges=tuple(frozenset(u.variables) for u in system.g_list))).matchings],
        "valid": validate_schedule(schedule).ok,
        "resources": count_resources(schedule).model_dump(),
    }, indent=2))
