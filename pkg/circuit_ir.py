import heapq
import json
import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Literal, Mapping, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field

from errors import CircuitError, LayerOverlapError, PlacementError, RoleConflictError

logger = logging.getLogger(__name__)


class GateKind(str, Enum):
    X = "X"
    H = "H"
    Z = "Z"
    CZ = "CZ"
    CCZ = "CCZ"
    CX = "CX"
    CCX = "CCX"


ARITY = {
    GateKind.X: 1, GateKind.H: 1, GateKind.Z: 1,
    GateKind.CZ: 2, GateKind.CX: 2,
    GateKind.CCZ: 3, GateKind.CCX: 3,
}
PHASE_KINDS = {GateKind.Z, GateKind.CZ, GateKind.CCZ}
FLIP_KINDS = {GateKind.X, GateKind.CX, GateKind.CCX}


class QubitRole(str, Enum):
    DATA = "DATA"
    ANCILLA_CHECK = "ANCILLA_CHECK"
    ANCILLA_MERGE = "ANCILLA_MERGE"
    ANCILLA_CARRY = "ANCILLA_CARRY"
    COMPLETING = "COMPLETING"


class LayerTag(str, Enum):
    SINGLE_QUBIT = "SINGLE_QUBIT"
    TWO_QUBIT = "TWO_QUBIT"
    THREE_QUBIT = "THREE_QUBIT"


@dataclass(frozen=True)
class QubitId:
    index: int
    role: QubitRole = QubitRole.DATA


@dataclass(frozen=True)
class Gate:
    """A gate on ordered operands; the last operand is the target, the rest are controls."""
    kind: GateKind
    qubits: Tuple[int, ...]
    polarity: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        qubits = tuple(int(q) for q in self.qubits)
        object.__setattr__(self, "qubits", qubits)
        arity = ARITY[self.kind]
        if len(qubits) != arity:
            raise CircuitError(f"{self.kind.value} takes {arity} operands, got {len(qubits)}")
        if len(set(qubits)) != arity:
            raise CircuitError(f"{self.kind.value} operands must be distinct: {qubits}")
        polarity = self.polarity if self.polarity is not None else (1,) * (arity - 1)
        polarity = tuple(int(p) for p in polarity)
        if len(polarity) != arity - 1 or any(p not in (0, 1) for p in polarity):
            raise CircuitError(f"bad control polarity {polarity} for {self.kind.value}")
        object.__setattr__(self, "polarity", polarity)

    @property
    def controls(self) -> Tuple[int, ...]:
        return self.qubits[:-1]

    @property
    def target(self) -> int:
        return self.qubits[-1]

    @property
    def plain(self) -> bool:
        return all(self.polarity)


@dataclass(frozen=True)
class Layer:
    """Gates of one kind on pairwise-disjoint qubits, executed as one broadcast."""
    gates: Tuple[Gate, ...]
    checked: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if not self.gates:
            raise CircuitError("a layer needs at least one gate")
        if not self.checked:
            return
        kinds = {gate.kind for gate in self.gates}
        if len(kinds) != 1:
            raise CircuitError(f"mixed gate kinds in one layer: {sorted(k.value for k in kinds)}")
        seen = set()
        for gate in self.gates:
            if seen.intersection(gate.qubits):
                raise LayerOverlapError(f"gate {gate.kind.value}{gate.qubits} overlaps its layer")
            seen.update(gate.qubits)

    @property
    def kind(self) -> GateKind:
        return self.gates[0].kind

    @property
    def tag(self) -> LayerTag:
        return {1: LayerTag.SINGLE_QUBIT, 2: LayerTag.TWO_QUBIT, 3: LayerTag.THREE_QUBIT}[ARITY[self.kind]]

    @property
    def qubits(self) -> Tuple[int, ...]:
        return tuple(q for gate in self.gates for q in gate.qubits)


@dataclass(frozen=True)
class Circuit:
    qubits: Tuple[QubitId, ...]
    layers: Tuple[Layer, ...] = ()

    def __post_init__(self):
        qubits = tuple(sorted(self.qubits, key=lambda q: q.index))
        object.__setattr__(self, "qubits", qubits)
        object.__setattr__(self, "layers", tuple(self.layers))
        indices = [q.index for q in qubits]
        if len(set(indices)) != len(indices):
            raise RoleConflictError("qubit index declared twice")
        declared = set(indices)
        for layer in self.layers:
            missing = set(layer.qubits) - declared
            if missing:
                raise CircuitError(f"undeclared qubits {sorted(missing)}")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def num_qubits(self) -> int:
        return len(self.qubits)

    @property
    def indices(self) -> Tuple[int, ...]:
        return tuple(q.index for q in self.qubits)

    def roles(self) -> Dict[int, QubitRole]:
        return {q.index: q.role for q in self.qubits}

    def gate_count(self) -> int:
        return sum(len(layer.gates) for layer in self.layers)


def compose(a: Circuit, b: Circuit) -> Circuit:
    """Layers of a followed by layers of b over the union of their qubits."""
    roles = a.roles()
    for index, role in b.roles().items():
        if roles.setdefault(index, role) != role:
            raise RoleConflictError(f"qubit {index} is {roles[index].value} in one circuit and {role.value} in the other")
    return Circuit(tuple(QubitId(i, r) for i, r in roles.items()), a.layers + b.layers)


def inverse(c: Circuit) -> Circuit:
    # every IR gate is self-inverse
    return Circuit(c.qubits, tuple(reversed(c.layers)))


def lower_polarity(layer: Layer) -> List[Layer]:
    """Rewrite on-0 controls as X conjugation so the entangling layer is plain."""
    flipped = [q for gate in layer.gates for q, p in zip(gate.controls, gate.polarity) if p == 0]
    if not flipped:
        return [layer]
    conjugation = Layer(tuple(Gate(GateKind.X, (q,)) for q in flipped))
    plain = Layer(tuple(Gate(gate.kind, gate.qubits) for gate in layer.gates))
    return [conjugation, plain, conjugation]


# ---------- Grid geometry ----------

@dataclass(frozen=True, order=True)
class GridPos:
    x: int
    y: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise PlacementError(f"grid positions are nonnegative, got ({self.x}, {self.y})")

    def shifted(self, dx: int, dy: int) -> "GridPos":
        return GridPos(self.x + dx, self.y + dy)

    def chebyshev(self, other: "GridPos") -> int:
        return max(abs(self.x - other.x), abs(self.y - other.y))


@dataclass(frozen=True)
class TensorGrid:
    rows: Tuple[int, ...]
    cols: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(sorted(set(self.rows))))
        object.__setattr__(self, "cols", tuple(sorted(set(self.cols))))

    @classmethod
    def spanned_by(cls, positions: Iterable[GridPos]) -> "TensorGrid":
        positions = list(positions)
        return cls(tuple(p.x for p in positions), tuple(p.y for p in positions))

    @classmethod
    def from_positions(cls, positions: Iterable[GridPos]) -> Optional["TensorGrid"]:
        """The grid R x C when the positions are exactly R x C, else None."""
        positions = set(positions)
        grid = cls.spanned_by(positions)
        return grid if len(positions) == len(grid.rows) * len(grid.cols) else None

    def cells(self) -> List[GridPos]:
        return [GridPos(x, y) for x in self.rows for y in self.cols]

    def __contains__(self, pos: GridPos) -> bool:
        return pos.x in self.rows and pos.y in self.cols


def _monotone(pairs: Iterable[Tuple[int, int]]) -> bool:
    image: Dict[int, int] = {}
    for src, dst in pairs:
        if image.setdefault(src, dst) != dst:
            return False
    ordered = [image[k] for k in sorted(image)]
    return all(a < b for a, b in zip(ordered, ordered[1:]))


def factorizes(pairs: Sequence[Tuple[GridPos, GridPos]]) -> bool:
    """True when the pairs extend to increasing row and column bijections f_r x f_c."""
    return _monotone((a.x, b.x) for a, b in pairs) and _monotone((a.y, b.y) for a, b in pairs)


def is_product_form(mapping: Mapping[GridPos, GridPos]) -> bool:
    """
    Decide whether a grid-to-grid map factors as F = f_r x f_c with increasing bijections.

    Args:
        mapping: total map on a tensor grid R x C

    Returns:
        bool: True for product-form maps
    """
    grid = TensorGrid.spanned_by(mapping)
    if len(mapping) != len(grid.rows) * len(grid.cols):
        raise PlacementError("mapping is not total on a tensor grid")
    return factorizes(list(mapping.items()))


# ---------- Schedules ----------

@dataclass(frozen=True)
class Move:
    qubit: int
    src: GridPos
    dst: GridPos

    @property
    def distance(self) -> int:
        return self.src.chebyshev(self.dst)


@dataclass(frozen=True)
class MovePhase:
    moves: Tuple[Move, ...]
    checked: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "moves", tuple(self.moves))
        if self.checked and len({m.dst for m in self.moves}) != len(self.moves):
            raise PlacementError("move destinations must be distinct")

    @property
    def time_units(self) -> float:
        # moves in a phase run in parallel; time grows as the square root of distance
        return max((math.sqrt(m.distance) for m in self.moves), default=0.0)


Step = Union[MovePhase, Layer]


@dataclass(frozen=True)
class PlacementHint:
    """Relative positions the layout engine should give the listed qubits before a layer."""
    region: str
    height: int
    positions: Mapping[int, GridPos]
    completing: Tuple[GridPos, ...] = ()
    # runs gathered as columns and stacked to stack_height before the move
    stack: Tuple[Tuple[int, ...], ...] = ()
    stack_height: int = 0


@dataclass(frozen=True)
class Schedule:
    qubits: Tuple[QubitId, ...]
    initial: Mapping[int, GridPos]
    steps: Tuple[Step, ...] = ()
    sections: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        sections = tuple(self.sections) or ("",) * len(self.steps)
        if len(sections) != len(self.steps):
            raise CircuitError("one section label per schedule step")
        object.__setattr__(self, "sections", sections)

    @property
    def transport_count(self) -> int:
        return sum(len(step.moves) for step in self.steps if isinstance(step, MovePhase))

    @property
    def layers(self) -> List[Layer]:
        return [step for step in self.steps if isinstance(step, Layer)]

    def roles(self) -> Dict[int, QubitRole]:
        return {q.index: q.role for q in self.qubits}

    def circuit(self) -> Circuit:
        """The gate content with move phases dropped and completing atoms removed."""
        computational = tuple(q for q in self.qubits if q.role != QubitRole.COMPLETING)
        return Circuit(computational, tuple(self.layers))

    def concat(self, other: "Schedule") -> "Schedule":
        roles = self.roles()
        roles.update(other.roles())
        initial = dict(other.initial)
        initial.update(self.initial)
        return Schedule(tuple(QubitId(i, r) for i, r in sorted(roles.items())), initial,
                        self.steps + other.steps, self.sections + other.sections)


class ValidationReport(BaseModel):
    ok: bool
    step: Optional[int] = None
    check: Optional[str] = None
    message: str = ""


def layer_violation(layer: Layer, positions: Mapping[int, GridPos], occupancy: Mapping[GridPos, int],
                    roles: Mapping[int, QubitRole]) -> Optional[Tuple[str, str]]:
    """
    Check one gate layer against the placement in force.

    Returns:
        (check, message) for the first failed check, or None
    """
    seen = set()
    for gate in layer.gates:
        for q in gate.qubits:
            if q not in positions:
                return "unplaced", f"qubit {q} has no position"
            if roles.get(q) == QubitRole.COMPLETING:
                return "completing", f"completing atom {q} cannot carry a gate"
        if seen.intersection(gate.qubits):
            return "disjointness", f"gate on {gate.qubits} shares qubits with its layer"
        seen.update(gate.qubits)

    arity = ARITY[layer.kind]
    for slot in range(arity):
        members = {gate.qubits[slot] for gate in layer.gates}
        grid = TensorGrid.spanned_by(positions[q] for q in members)
        for cell in grid.cells():
            occupant = occupancy.get(cell)
            if occupant is not None and occupant not in members and roles.get(occupant) != QubitRole.COMPLETING:
                return "tensor_grid", f"atom {occupant} at ({cell.x}, {cell.y}) sits inside operand grid {slot}"
    for slot in range(1, arity):
        pairs = [(positions[gate.qubits[0]], positions[gate.qubits[slot]]) for gate in layer.gates]
        if not factorizes(pairs):
            return "product_form", f"operand grid 0 -> {slot} map is not product-form"
    return None


def validate_schedule(s: Schedule) -> ValidationReport:
    """
    Replay a schedule and check every move phase and gate layer.

    Args:
        s (Schedule): schedule to check

    Returns:
        ValidationReport: ok, or the first violating step and the check it failed
    """
    roles = s.roles()
    positions = dict(s.initial)
    occupancy: Dict[GridPos, int] = {}
    for q, pos in positions.items():
        if pos in occupancy:
            return ValidationReport(ok=False, check="placement", message=f"qubits {occupancy[pos]} and {q} share a site")
        occupancy[pos] = q

    for index, step in enumerate(s.steps):
        if isinstance(step, MovePhase):
            moving = {m.qubit for m in step.moves}
            destinations = set()
            for m in step.moves:
                if positions.get(m.qubit) != m.src:
                    return ValidationReport(ok=False, step=index, check="move_source",
                                            message=f"qubit {m.qubit} is not at ({m.src.x}, {m.src.y})")
                occupant = occupancy.get(m.dst)
                if m.dst in destinations or (occupant is not None and occupant not in moving):
                    return ValidationReport(ok=False, step=index, check="move_collision",
                                            message=f"destination ({m.dst.x}, {m.dst.y}) is taken")
                destinations.add(m.dst)
            for m in step.moves:
                del occupancy[m.src]
            for m in step.moves:
                occupancy[m.dst] = m.qubit
                positions[m.qubit] = m.dst
            continue
        violation = layer_violation(step, positions, occupancy, roles)
        if violation is not None:
            check, message = violation
            return ValidationReport(ok=False, step=index, check=check, message=message)
    return ValidationReport(ok=True)


class ResourceCount(BaseModel):
    qubits: int
    depth: int
    transports: int
    transport_time_units: float


def count_resources(s: Schedule) -> ResourceCount:
    """Depth counts gate layers only; transports are counted separately."""
    return ResourceCount(
        qubits=sum(1 for q in s.qubits if q.role != QubitRole.COMPLETING),
        depth=len(s.layers),
        transports=s.transport_count,
        transport_time_units=sum(step.time_units for step in s.steps if isinstance(step, MovePhase)),
    )


# ---------- Builder ----------

class CircuitBuilder:
    """
    Accumulates gates into broadcast layers and hands out ancilla qubits.

    Released qubits only return to the pool at the next barrier(), so several units
    built side by side never share a scratch qubit while their gates are interleaved.
    """

    def __init__(self):
        self._roles: Dict[int, QubitRole] = {}
        self._layers: List[List[Gate]] = []
        self._layer_qubits: List[set] = []
        self._hints: List[Optional[PlacementHint]] = []
        self._sections: List[str] = []
        self._free: List[int] = []
        self._pending: List[int] = []
        self._section = ""

    # ---------- qubits ----------

    def declare(self, index: int, role: QubitRole = QubitRole.DATA) -> int:
        if self._roles.setdefault(index, role) != role:
            raise RoleConflictError(f"qubit {index} already declared as {self._roles[index].value}")
        return index

    def data(self, n: int) -> List[int]:
        return [self.declare(i, QubitRole.DATA) for i in range(n)]

    def fresh(self, role: QubitRole = QubitRole.ANCILLA_CHECK) -> int:
        if self._free:
            return heapq.heappop(self._free)
        index = max(self._roles, default=-1) + 1
        self._roles[index] = role
        return index

    def release(self, *qubits: int) -> None:
        """Mark qubits as back in |0>; they become reusable after the next barrier."""
        self._pending.extend(qubits)

    def barrier(self) -> None:
        for q in self._pending:
            heapq.heappush(self._free, q)
        self._pending.clear()

    def reset_pool(self, keep: Iterable[int]) -> None:
        """Every qubit outside `keep` is back in |0> and free for reuse."""
        keep = set(keep)
        self._pending.clear()
        self._free = sorted(q for q in self._roles if q not in keep)
        heapq.heapify(self._free)

    @property
    def width(self) -> int:
        return len(self._roles)

    # ---------- layers ----------

    @contextmanager
    def section(self, name: str):
        previous, self._section = self._section, name
        try:
            yield
        finally:
            self._section = previous

    def step(self, gates: Sequence[Gate], hint: Optional[PlacementHint] = None) -> None:
        """Append pairwise-disjoint gates that may run simultaneously."""
        gates = list(gates)
        used = set()
        for gate in gates:
            if used.intersection(gate.qubits):
                raise LayerOverlapError(f"gate {gate.kind.value}{gate.qubits} overlaps its step")
            used.update(gate.qubits)
            for q in gate.qubits:
                if q not in self._roles:
                    raise CircuitError(f"qubit {q} used before allocation")
        by_kind: Dict[GateKind, List[Gate]] = {}
        for gate in gates:
            by_kind.setdefault(gate.kind, []).append(gate)
        for kind, group in by_kind.items():
            qubits = {q for gate in group for q in gate.qubits}
            if (self._layers and self._layers[-1][0].kind == kind and self._hints[-1] is hint
                    and self._sections[-1] == self._section and not (self._layer_qubits[-1] & qubits)):
                self._layers[-1].extend(group)
                self._layer_qubits[-1] |= qubits
                continue
            self._layers.append(list(group))
            self._layer_qubits.append(qubits)
            self._hints.append(hint)
            self._sections.append(self._section)

    def steps(self, steps: Iterable[Sequence[Gate]], hint: Optional[PlacementHint] = None) -> None:
        for gates in steps:
            self.step(gates, hint)

    def mark(self) -> int:
        return len(self._layers)

    def replay_inverse(self, start: int, end: int, section: Optional[str] = None) -> None:
        """Append layers [start, end) in reverse order, keeping their hints."""
        for index in range(end - 1, start - 1, -1):
            self._layers.append(list(self._layers[index]))
            self._layer_qubits.append(set(self._layer_qubits[index]))
            self._hints.append(self._hints[index])
            self._sections.append(section if section is not None else self._sections[index])

    def fragment(self, start: int = 0, end: Optional[int] = None) -> "Fragment":
        end = self.mark() if end is None else end
        return Fragment(
            layers=tuple(Layer(tuple(g)) for g in self._layers[start:end]),
            hints=tuple(self._hints[start:end]),
            sections=tuple(self._sections[start:end]),
        )

    def qubit_ids(self) -> Tuple[QubitId, ...]:
        return tuple(QubitId(i, r) for i, r in sorted(self._roles.items()))

    def build(self) -> Circuit:
        return Circuit(self.qubit_ids(), self.fragment().layers)


@dataclass(frozen=True)
class Fragment:
    """A run of layers with the placement hints and section labels they were built with."""
    layers: Tuple[Layer, ...] = ()
    hints: Tuple[Optional[PlacementHint], ...] = ()
    sections: Tuple[str, ...] = ()

    def reversed(self, section: Optional[str] = None) -> "Fragment":
        sections = tuple(reversed(self.sections)) if section is None else (section,) * len(self.layers)
        return Fragment(tuple(reversed(self.layers)), tuple(reversed(self.hints)), sections)

    def __add__(self, other: "Fragment") -> "Fragment":
        return Fragment(self.layers + other.layers, self.hints + other.hints, self.sections + other.sections)


# ---------- Serialization ----------

SCHEDULE_FORMAT_VERSION = 1


class MoveRecord(BaseModel):
    qubit: int
    src: Tuple[int, int]
    dst: Tuple[int, int]


class GateRecord(BaseModel):
    qubits: List[int]
    polarity: List[int]
    positions: List[Tuple[int, int]]


class StepRecord(BaseModel):
    type: Literal["MOVE", "GATE"]
    section: str = ""
    kind: Optional[GateKind] = None
    moves: List[MoveRecord] = Field(default_factory=list)
    gates: List[GateRecord] = Field(default_factory=list)


class ScheduleDocument(BaseModel):
    version: int = SCHEDULE_FORMAT_VERSION
    qubits: List[Tuple[int, QubitRole]]
    initial: List[Tuple[int, int, int]]
    steps: List[StepRecord]


def schedule_to_document(s: Schedule) -> ScheduleDocument:
    positions = dict(s.initial)
    records = []
    for step, section in zip(s.steps, s.sections):
        if isinstance(step, MovePhase):
            records.append(StepRecord(type="MOVE", section=section, moves=[
                MoveRecord(qubit=m.qubit, src=(m.src.x, m.src.y), dst=(m.dst.x, m.dst.y)) for m in step.moves
            ]))
            for m in step.moves:
                positions[m.qubit] = m.dst
            continue
        records.append(StepRecord(type="GATE", section=section, kind=step.kind, gates=[
            GateRecord(
                qubits=list(gate.qubits),
                polarity=list(gate.polarity),
                positions=[(positions[q].x, positions[q].y) if q in positions else (-1, -1) for q in gate.qubits],
            )
            for gate in step.gates
        ]))
    return ScheduleDocument(
        qubits=[(q.index, q.role) for q in s.qubits],
        initial=[(q, pos.x, pos.y) for q, pos in sorted(s.initial.items())],
        steps=records,
    )


def schedule_from_document(doc: ScheduleDocument) -> Schedule:
    if doc.version != SCHEDULE_FORMAT_VERSION:
        raise CircuitError(f"unsupported schedule format version {doc.version}")
    steps: List[Step] = []
    for record in doc.steps:
        if record.type == "MOVE":
            steps.append(MovePhase(tuple(
                Move(m.qubit, GridPos(*m.src), GridPos(*m.dst)) for m in record.moves
            ), checked=False))
        else:
            steps.append(Layer(tuple(
                Gate(record.kind, tuple(g.qubits), tuple(g.polarity)) for g in record.gates
            ), checked=False))
    return Schedule(
        qubits=tuple(QubitId(i, role) for i, role in doc.qubits),
        initial={q: GridPos(x, y) for q, x, y in doc.initial},
        steps=tuple(steps),
        sections=tuple(record.section for record in doc.steps),
    )


def dump_schedule(s: Schedule) -> str:
    return json.dumps(schedule_to_document(s).model_dump(mode="json"), indent=2)


def load_schedule(text: str) -> Schedule:
    return schedule_from_document(ScheduleDocument.model_validate_json(text))


if __name__ == "__main__":
    # two CX gates on a 2 x 2 tensor grid, then one row moved down
    initial = {0: GridPos(0, 0), 1: GridPos(1, 0), 2: GridPos(0, 1), 3: GridPos(1, 1)}
    layer = Layer((Gate(GateKind.CX, (0, 1)), Gate(GateKind.CX, (2, 3))))
    move = MovePhase((Move(1, GridPos(1, 0), GridPos(2, 0)), Move(3, GridPos(1, 1), GridPos(2, 1))))
    sample = Schedule(tuple(QubitId(i) for i in range(4)), initial, (layer, move, layer), ("check",) * 3)
    print(json.dumps({
        "validation": validate_schedule(sample).model_dump(),
        "resources": count_resources(sample).model_dump(),
    }, indent=2))
