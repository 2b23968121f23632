import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from circuit_ir import (
    Circuit,
    CircuitBuilder,
    Fragment,
    Gate,
    GateKind,
    PlacementHint,
    QubitId,
    QubitRole,
)
from config import load_settings
from errors import CircuitError, UnsupportedError
from instances import (
    ActivationSpec,
    ConstraintSystem,
    Direction,
    GConstraint,
    GKind,
    HConstraint,
    HKind,
    Hypergraph,
    Literal,
    ProblemInstance,
    ProblemKind,
    ThresholdSpec,
    threshold_holds,
)
from layout import (
    bucket_slots,
    group_sat_negations,
    map_positions,
    negation_buckets,
    partition_units,
    plan_qbt,
    qbt_height,
    qra_positions,
    stack_plan,
    variant_packs,
)

logger = logging.getLogger(__name__)

CHECK = QubitRole.ANCILLA_CHECK
MERGE = QubitRole.ANCILLA_MERGE
CARRY = QubitRole.ANCILLA_CARRY


# ---------- Gate helpers ----------

def _x(q: int) -> Gate:
    return Gate(GateKind.X, (q,))


def _h(q: int) -> Gate:
    return Gate(GateKind.H, (q,))


def _z(q: int) -> Gate:
    return Gate(GateKind.Z, (q,))


def _cx(control: int, target: int, polarity: int = 1) -> Gate:
    return Gate(GateKind.CX, (control, target), (polarity,))


def _ccx(a: int, c: int, target: int, pa: int = 1, pc: int = 1) -> Gate:
    return Gate(GateKind.CCX, (a, c, target), (pa, pc))


def _fires_when_true(lit: Literal) -> int:
    return 0 if lit.negated else 1


def asap_steps(gates: Sequence[Gate]) -> List[List[Gate]]:
    """Pack a gate sequence into steps, each gate as early as its qubits allow."""
    steps: List[List[Gate]] = []
    ready: Dict[int, int] = {}
    for gate in gates:
        k = max((ready.get(q, 0) for q in gate.qubits), default=0)
        if k == len(steps):
            steps.append([])
        steps[k].append(gate)
        for q in gate.qubits:
            ready[q] = k + 1
    return steps


def _emit(b: CircuitBuilder, gates: Sequence[Gate], hint: Optional[PlacementHint] = None) -> None:
    b.steps(asap_steps(gates), hint)


def _touched(gates: Iterable[Gate], exclude: Iterable[int]) -> List[int]:
    exclude = set(exclude)
    seen: List[int] = []
    for gate in gates:
        for q in gate.qubits:
            if q not in exclude and q not in seen:
                seen.append(q)
    return seen


# ---------- Boolean building blocks ----------

def _and_gates(b: CircuitBuilder, controls: Sequence[Tuple[int, int]], out: int, temps: List[int],
               role: QubitRole = CHECK) -> List[Gate]:
    """
    Write AND of (qubit == polarity) over `controls` onto out.

    Three or more controls reduce pairwise through fresh temps, which are uncomputed.
    """
    controls = list(controls)
    if not controls:
        return [_x(out)]
    if len(controls) == 1:
        (q, p), = controls
        return [_cx(q, out, p)]
    compute: List[Gate] = []
    level = controls
    while len(level) > 2:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            (a, pa), (c, pc) = level[i], level[i + 1]
            t = b.fresh(role)
            temps.append(t)
            compute.append(_ccx(a, c, t, pa, pc))
            nxt.append((t, 1))
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    (a, pa), (c, pc) = level
    return compute + [_ccx(a, c, out, pa, pc)] + compute[::-1]


def _pad(b: CircuitBuilder, register: Sequence[int], width: int, pads: List[int]) -> List[int]:
    extra = [b.fresh(CARRY) for _ in range(width - len(register))]
    pads.extend(extra)
    return list(register) + extra


# ---------- Arithmetic ----------

def _ripple_adder_gates(a: Sequence[int], s: Sequence[int], z: int) -> List[Gate]:
    """In-place a + s: a is preserved, s receives the low bits and z the carry."""
    u = len(a)
    ext = list(a) + [z]
    gates = [_cx(a[i], s[i]) for i in range(1, u)]
    gates += [_cx(ext[i], ext[i + 1]) for i in range(u - 1, 0, -1)]
    gates += [_ccx(ext[i], s[i], ext[i + 1]) for i in range(u)]
    for i in range(u - 1, 0, -1):
        gates.append(_cx(ext[i], s[i]))
        gates.append(_ccx(ext[i - 1], s[i - 1], ext[i]))
    gates += [_cx(ext[i], ext[i + 1]) for i in range(1, u - 1)]
    gates += [_cx(a[i], s[i]) for i in range(u)]
    return gates


@dataclass
class QraLevel:
    adders: List[Tuple[List[int], List[int], int]]
    gates: List[Gate]


def _qra_levels(b: CircuitBuilder, registers: Sequence[Sequence[int]], pads: List[int]) -> Tuple[List[int], List[QraLevel]]:
    """
    Pairwise recursive addition; every level's adders run side by side.

    Returns the sum register (little-endian) and the levels. Zero pads on the
    preserved operands stay |0> and are listed in `pads`.
    """
    if not registers:
        return [], []
    width = max(len(r) for r in registers)
    regs = [_pad(b, r, width, []) for r in registers]
    levels: List[QraLevel] = []
    while len(regs) > 1:
        nxt, adders, gates = [], [], []
        for i in range(0, len(regs) - 1, 2):
            u = max(len(regs[i]), len(regs[i + 1]))
            a = _pad(b, regs[i], u, pads)
            s = _pad(b, regs[i + 1], u, [])
            z = b.fresh(CARRY)
            adders.append((a, s, z))
            gates += _ripple_adder_gates(a, s, z)
            nxt.append(s + [z])
        if len(regs) % 2:
            nxt.append(regs[-1])
        levels.append(QraLevel(adders, gates))
        regs = nxt
    return regs[0], levels


def _compare_gates(b: CircuitBuilder, register: Sequence[int], direction: Direction, k: int, out: int,
                   temps: List[int]) -> List[Gate]:
    """Compare a register against the constant k; GEQ and EQ need k < 2^w."""
    w = len(register)
    if direction == Direction.EQ:
        return _and_gates(b, [(q, (k >> i) & 1) for i, q in enumerate(register)], out, temps, CARRY)
    if direction == Direction.LEQ:
        if k + 1 >= 2 ** w:
            return [_x(out)]
        return _compare_gates(b, register, Direction.GEQ, k + 1, out, temps) + [_x(out)]
    if k == 0:
        return [_x(out)]
    # s >= k exactly when s + (2^w - k) carries out of w bits
    c = 2 ** w - k
    low = (c & -c).bit_length() - 1
    carry = register[low]
    compute: List[Gate] = []
    for i in range(low + 1, w):
        t = b.fresh(CARRY)
        temps.append(t)
        if (c >> i) & 1:
            compute += [_ccx(register[i], carry, t, 0, 0), _x(t)]
        else:
            compute.append(_ccx(register[i], carry, t))
        carry = t
    return compute + [_cx(carry, out)] + compute[::-1]


def _effective_bound(spec: ThresholdSpec, strict: bool) -> Optional[int]:
    """Bound after applying the strict Heaviside; None when the test can never pass."""
    k = spec.bound
    if strict and spec.direction == Direction.GEQ:
        return k + 1
    if strict and spec.direction == Direction.LEQ:
        return None if k == 0 else k - 1
    return k


def _threshold_gates(b: CircuitBuilder, register: Sequence[int], spec: ThresholdSpec, strict: bool, out: int,
                     temps: List[int]) -> List[Gate]:
    k = _effective_bound(spec, strict)
    if k is None:
        return []
    if spec.direction != Direction.LEQ:
        register = _pad(b, register, max(len(register), k.bit_length()), temps)
    return _compare_gates(b, register, spec.direction, k, out, temps)


# ---------- Checking units ----------

@dataclass
class Unit:
    outputs: List[int]
    qubits: List[int]
    gates: List[Gate]
    scratch: List[int] = field(default_factory=list)


def _unit(data: Sequence[int], outputs: List[int], gates: List[Gate]) -> Unit:
    scratch = _touched(gates, list(data) + outputs)
    return Unit(outputs, list(data) + outputs + scratch, gates, scratch)


def _g_unit(b: CircuitBuilder, c: GConstraint) -> Unit:
    if c.kind == GKind.OR_CLAUSE:
        out = b.fresh(CHECK)
        # de Morgan: the clause fails exactly when every literal is false
        controls = [(lit.variable, 1 if lit.negated else 0) for lit in c.literals]
        gates = _and_gates(b, controls, out, []) + [_x(out)]
        return _unit([lit.variable for lit in c.literals], [out], gates)

    if c.kind == GKind.NAND_PAIR:
        l0, l1 = c.literals
        out = b.fresh(CHECK)
        gates = [_ccx(l0.variable, l1.variable, out, _fires_when_true(l0), _fires_when_true(l1)), _x(out)]
        return _unit([l0.variable, l1.variable], [out], gates)

    if c.kind in (GKind.EXACT_ONE, GKind.EXACT_TWO):
        target = 1 if c.kind == GKind.EXACT_ONE else 2
        out = b.fresh(CHECK)
        flips = [_x(lit.variable) for lit in c.literals if lit.negated]
        total, levels = _qra_levels(b, [[lit.variable] for lit in c.literals], [])
        count = [gate for level in levels for gate in level.gates]
        compare = [] if target >= 2 ** len(total) else _compare_gates(b, total, Direction.EQ, target, out, [])
        gates = flips + count + compare + count[::-1] + flips
        return _unit(list(c.variables), [out], gates)

    if c.kind == GKind.REGISTER_NEQ:
        m = c.register_width
        left, right = c.literals[:m], c.literals[m:]
        out = b.fresh(CHECK)
        xor = [_cx(a.variable, r.variable) for a, r in zip(left, right)]
        equal = [(r.variable, int(a.negated != r.negated)) for a, r in zip(left, right)]
        gates = xor + _and_gates(b, equal, out, []) + [_x(out)] + xor
        return _unit(list(c.variables), [out], gates)

    if c.kind == GKind.CODE_BELOW:
        out = b.fresh(CHECK)
        flips = [_x(lit.variable) for lit in c.literals if lit.negated]
        compare = _compare_gates(b, list(c.variables), Direction.LEQ, c.bound - 1, out, [])
        return _unit(list(c.variables), [out], flips + compare + flips)

    raise UnsupportedError(f"no checking unit for {c.kind.value}")


def _h_unit(b: CircuitBuilder, h: HConstraint) -> Unit:
    if h.kind == HKind.XOR_PAIR:
        out = b.fresh(CHECK)
        gates = [_cx(lit.variable, out, _fires_when_true(lit)) for lit in h.literals]
        return _unit(list(h.variables), [out], gates)
    if h.kind == HKind.WEIGHTED:
        lit, = h.literals
        outs = [b.fresh(CHECK) for _ in range(h.bits)]
        gates = [_cx(lit.variable, q, _fires_when_true(lit)) for j, q in enumerate(outs) if (h.weight >> j) & 1]
        return _unit([lit.variable], outs, gates)
    lit, = h.literals
    if not lit.negated:
        return Unit([lit.variable], [lit.variable], [])
    out = b.fresh(CHECK)
    return _unit([lit.variable], [out], [_cx(lit.variable, out, 0)])


def _build_unit(b: CircuitBuilder, c: Union[GConstraint, HConstraint]) -> Unit:
    return _g_unit(b, c) if isinstance(c, GConstraint) else _h_unit(b, c)


def build_checking_unit(c: Union[GConstraint, HConstraint], n: Optional[int] = None) -> Circuit:
    """
    Standalone checking unit on data qubits 0..n-1.

    Args:
        c: g or h constraint
        n (int): data width; defaults to the largest literal variable + 1

    Returns:
        Circuit: the unit; its output register sits at indices n..n+b'-1
    """
    n = max(c.variables) + 1 if n is None else n
    b = CircuitBuilder()
    b.data(n)
    unit = _build_unit(b, c)
    _emit(b, unit.gates)
    return b.build()


# ---------- Merging ----------

def _emit_qbt(b: CircuitBuilder, inputs: Sequence[int], region: str, n: int, stop_at: int = 1,
              runs: Optional[Sequence[Sequence[int]]] = None) -> Tuple[List[int], List[int]]:
    """
    AND tree over inputs; returns (roots, fresh nodes).

    With `runs` (a partition of the inputs) the leaves are first stacked into
    full columns and the tree takes them in stacked order.
    """
    height = qbt_height(len(inputs), n)
    columns: Tuple[Tuple[int, ...], ...] = ()
    if runs is not None:
        columns, inputs = stack_plan(runs, height)
    plan = plan_qbt(inputs, height, lambda: b.fresh(MERGE), stop_at)
    nodes = []
    for index, level in enumerate(plan.levels):
        if index == 0 and columns:
            hint = PlacementHint(region, plan.rows, level.positions, stack=columns, stack_height=height)
        else:
            hint = PlacementHint(region, plan.rows, level.positions)
        b.step([_ccx(a, c, o) for a, c, o in level.triples], hint)
        nodes += [o for _, _, o in level.triples]
    return list(plan.roots), nodes


def build_qbt(count: int, n: Optional[int] = None) -> Tuple[Circuit, int]:
    """
    AND tree over `count` input qubits (indices 0..count-1).

    Returns:
        (circuit, root): the root holds the AND; interior nodes stay set until inverted
    """
    if count < 1:
        raise CircuitError("a binary tree needs at least one input")
    b = CircuitBuilder()
    inputs = b.data(count)
    roots, _ = _emit_qbt(b, inputs, "qbt", n or count)
    return b.build(), roots[0]


def build_ripple_adder(u: int) -> Circuit:
    """Adder on a = 0..u-1 (preserved), s = u..2u-1 (receives the sum) and carry 2u."""
    if u < 1:
        raise CircuitError("adder width must be at least 1")
    b = CircuitBuilder()
    b.data(2 * u + 1)
    _emit(b, _ripple_adder_gates(list(range(u)), list(range(u, 2 * u)), 2 * u))
    return b.build()


def _emit_qra(b: CircuitBuilder, registers: Sequence[Sequence[int]], region: str,
              pads: List[int]) -> List[int]:
    total, levels = _qra_levels(b, registers, pads)
    for index, level in enumerate(levels):
        positions = qra_positions(level.adders)
        height = max(len(a) for a, _, _ in level.adders) + 1
        _emit(b, level.gates, PlacementHint(f"{region}-l{index}", height, positions))
    return total


def build_qra(count: int, width: int) -> Tuple[Circuit, List[int]]:
    """
    Sum `count` registers of `width` bits; register r occupies r*width..(r+1)*width-1.

    Returns:
        (circuit, sum register, little-endian)
    """
    if count < 1 or width < 1:
        raise CircuitError("need at least one register of width >= 1")
    b = CircuitBuilder()
    b.data(count * width)
    registers = [list(range(r * width, (r + 1) * width)) for r in range(count)]
    total = _emit_qra(b, registers, "qra", [])
    return b.build(), total


def build_threshold_compare(width: int, spec: ThresholdSpec, strict: bool = False) -> Tuple[Circuit, int]:
    """
    Write the threshold decision for the register 0..width-1 onto a fresh qubit.

    Returns:
        (circuit, output qubit)
    """
    if spec.bound >= 2 ** width:
        raise CircuitError(f"bound {spec.bound} does not fit in {width} bits")
    b = CircuitBuilder()
    register = b.data(width)
    out = b.fresh(MERGE)
    _emit(b, _threshold_gates(b, register, spec, strict, out, []))
    return b.build(), out


def _activation_gates(b: CircuitBuilder, spec: ActivationSpec, edge_qubits: Sequence[int],
                      out: int) -> List[Gate]:
    """Activation propagation from the start vertex, then count the final bank against the target."""
    n = spec.vertex_count
    bank = [b.fresh(MERGE) for _ in range(n)]
    gates = [_x(bank[spec.start])]
    for _ in range(spec.rounds):
        nxt = [b.fresh(MERGE) for _ in range(n)]
        terms: Dict[int, List[int]] = {v: [] for v in range(n)}
        term_gates: List[Gate] = []
        for k, (i, j) in enumerate(spec.edges):
            for src, dst in ((i, j), (j, i)):
                t = b.fresh(MERGE)
                term_gates.append(_ccx(edge_qubits[k], bank[src], t))
                terms[dst].append(t)
        temps: List[int] = []
        spread: List[Gate] = []
        for v in range(n):
            controls = [(bank[v], 0)] + [(t, 0) for t in terms[v]]
            spread += _and_gates(b, controls, nxt[v], temps, MERGE) + [_x(nxt[v])]
        gates += term_gates + spread + term_gates[::-1]
        b.release(*[t for v in range(n) for t in terms[v]], *temps)
        b.barrier()
        bank = nxt
    pads: List[int] = []
    total, levels = _qra_levels(b, [[q] for q in bank], pads)
    gates += [gate for level in levels for gate in level.gates]
    total = _pad(b, total, max(len(total), spec.target.bit_length()), pads)
    gates += _compare_gates(b, total, Direction.EQ, spec.target, out, pads)
    return gates


def build_hcp_connectivity(instance: ProblemInstance) -> Tuple[Circuit, int]:
    """
    Connectivity check for a Hamiltonian-cycle instance; edge variable k is qubit k.

    Returns:
        (circuit, output qubit): output is 1 when the selected edges reach the target count
    """
    if instance.kind != ProblemKind.HCP:
        raise UnsupportedError("connectivity check is only defined for HCP")
    if (instance.vertex_count or 0) < 3:
        raise UnsupportedError("HCP needs at least 3 vertices")
    spec = ActivationSpec(vertex_count=instance.vertex_count, edges=instance.edges)
    b = CircuitBuilder()
    edges = b.data(len(instance.edges))
    out = b.fresh(MERGE)
    _emit(b, _activation_gates(b, spec, edges, out))
    return b.build(), out


# ---------- Oracle ----------

@dataclass(frozen=True)
class MirrorBlock:
    """compute, pivot, then compute replayed in reverse."""
    compute: Fragment
    pivot: Fragment
    inverse_section: Optional[str] = None

    def fragments(self) -> List[Fragment]:
        return [self.compute, self.pivot, self.compute.reversed(self.inverse_section)]


Block = Union[Fragment, MirrorBlock]


@dataclass(frozen=True)
class GroverProgram:
    qubits: Tuple[QubitId, ...]
    n: int
    kick: Optional[int]
    blocks: Tuple[Block, ...]
    frozen: frozenset = frozenset()

    def fragments(self) -> List[Fragment]:
        out: List[Fragment] = []
        for block in self.blocks:
            out += block.fragments() if isinstance(block, MirrorBlock) else [block]
        return out

    def circuit(self) -> Circuit:
        layers = tuple(layer for fragment in self.fragments() for layer in fragment.layers)
        return Circuit(self.qubits, layers)


def qbt_program(count: int, n: Optional[int] = None) -> GroverProgram:
    """AND tree over `count` inputs mirrored back to all-zero ancillae, for placement."""
    if count < 1:
        raise CircuitError("a binary tree needs at least one input")
    b = CircuitBuilder()
    inputs = b.data(count)
    with b.section("merge"):
        _emit_qbt(b, inputs, "qbt", n or count)
    block = MirrorBlock(b.fragment(), Fragment(), inverse_section="inverse")
    return GroverProgram(b.qubit_ids(), count, None, (block,))


def qra_program(count: int, width: int) -> GroverProgram:
    """Recursive adder over `count` registers mirrored back, for placement."""
    if count < 1 or width < 1:
        raise CircuitError("need at least one register of width >= 1")
    b = CircuitBuilder()
    b.data(count * width)
    registers = [list(range(r * width, (r + 1) * width)) for r in range(count)]
    with b.section("merge"):
        _emit_qra(b, registers, "qra", [])
    block = MirrorBlock(b.fragment(), Fragment(), inverse_section="inverse")
    return GroverProgram(b.qubit_ids(), count * width, None, (block,))


def _check_pass(b: CircuitBuilder, system: ConstraintSystem, units: Sequence[Union[GConstraint, HConstraint]],
                members: Sequence[int], tag: str,
                runs: Optional[List[List[int]]] = None) -> Dict[int, List[int]]:
    """Run the checking units in overlap-free sets; returns outputs per unit index, `runs` gets the sets."""
    outputs: Dict[int, List[int]] = {}
    if not members:
        return outputs
    hypergraph = Hypergraph(vertex_count=system.n, edges=tuple(frozenset(units[i].variables) for i in members))
    partition = partition_units(hypergraph)
    t = max(len(units[i].literals) for i in members)
    logger.info("check pass %r: %d units in %d sets", tag, len(members), partition.L)
    for index, matching in enumerate(partition.matchings):
        chosen = [members[j] for j in matching]
        buckets = negation_buckets([units[i] for i in chosen])
        ordered = [chosen[j] for bucket in buckets for j in bucket]
        slots = bucket_slots([len(bucket) for bucket in buckets], system.n)
        if all(getattr(units[i], "kind", None) == GKind.OR_CLAUSE for i in chosen):
            # negated literals first, so each bucket's X layer lands on shared rows
            prepared = [u for group in group_sat_negations([units[i] for i in chosen]) for u in group]
        else:
            prepared = [units[i] for i in ordered]
        built = [_build_unit(b, u) for u in prepared]
        band = max(t + 1, max(len(u.qubits) for u in built))
        placement = map_positions([u.qubits for u in built], t, system.n, band=band, slots=slots)
        hint = PlacementHint(f"check-{tag}{index}", placement.rows, placement.positions, placement.completing)
        _emit(b, [gate for u in built for gate in u.gates], hint)
        for i, u in zip(ordered, built):
            outputs[i] = u.outputs
            b.release(*u.scratch)
        if runs is not None:
            runs.append(ordered)
        b.barrier()
    return outputs


def _emit_group(b: CircuitBuilder, registers: Sequence[Sequence[int]], spec: ThresholdSpec, strict: bool,
                region: str) -> int:
    if not registers:
        out = b.fresh(MERGE)
        if threshold_holds(0, spec, strict):
            b.step([_x(out)])
        return out
    pads: List[int] = []
    total = _emit_qra(b, registers, region, pads)
    out = b.fresh(MERGE)
    _emit(b, _threshold_gates(b, total, spec, strict, out, pads))
    b.release(*pads)
    b.barrier()
    return out


def _use_packs(system: ConstraintSystem, variant_threshold: float) -> bool:
    return system.n > 0 and system.p > system.n and system.N > variant_threshold * system.n


def _oracle_block(b: CircuitBuilder, system: ConstraintSystem, kick: int, variant_threshold: float) -> MirrorBlock:
    """Check, merge and the phase-kick pivot; the mirror supplies the exact uncompute."""
    n = system.n
    g_units = list(system.g_list)
    h_units = list(system.retained_h)
    units: List[Union[GConstraint, HConstraint]] = g_units + h_units
    h_members = list(range(len(g_units), len(units)))
    conjunction: List[int] = []

    start = b.mark()
    if _use_packs(system, variant_threshold):
        packs = variant_packs(system, n)
        logger.info("pack-wise oracle: %d packs of at most %d units", len(packs), n)
        for index, pack in enumerate(packs):
            # held across the inverse replay, so it must not come from this pack's pool
            bit = b.fresh(MERGE)
            pack_start = b.mark()
            sets: List[List[int]] = []
            with b.section("check"):
                outs = _check_pass(b, system, units, list(pack), f"p{index}-", sets)
            with b.section("merge"):
                roots, nodes = _emit_qbt(b, [outs[i][0] for i in pack], f"pack-{index}", n,
                                         runs=[[outs[i][0] for i in s] for s in sets])
            pack_end = b.mark()
            with b.section("merge"):
                b.step([_cx(roots[0], bit)])
            b.replay_inverse(pack_start, pack_end, section="pack-inverse")
            b.release(*[outs[i][0] for i in pack], *nodes)
            b.barrier()
            conjunction.append(bit)
        with b.section("check"):
            outputs = _check_pass(b, system, units, h_members, "h")
    else:
        sets = []
        with b.section("check"):
            outputs = _check_pass(b, system, units, list(range(len(units))), "", sets)
        if g_units:
            runs = [[outputs[i][0] for i in s if i < len(g_units)] for s in sets]
            with b.section("merge"):
                roots, _ = _emit_qbt(b, [outputs[i][0] for i in range(len(g_units))], "merge-g", n,
                                     runs=[run for run in runs if run])
            conjunction += roots

    with b.section("merge"):
        if system.activation is not None:
            out = b.fresh(MERGE)
            _emit(b, _activation_gates(b, system.activation, list(range(n)), out))
            conjunction.append(out)
        retained = iter(h_members)
        for index, group in enumerate(system.groups):
            registers = []
            for h in group.h_list:
                if h.kind == HKind.IDENTITY:
                    unit = _h_unit(b, h)
                    _emit(b, unit.gates)
                    registers.append(unit.outputs)
                else:
                    registers.append(outputs[next(retained)])
            conjunction.append(_emit_group(b, registers, group.threshold, system.strict, f"qra-{index}"))
        root = None
        if len(conjunction) > 1:
            roots, _ = _emit_qbt(b, conjunction, "merge-final", n)
            root = roots[0]
        elif conjunction:
            root = conjunction[0]

    mid = b.mark()
    with b.section("kick"):
        b.step([_cx(root, kick)] if root is not None else [_x(kick)])
    return MirrorBlock(b.fragment(start, mid), b.fragment(mid), inverse_section="inverse")


def _diffusion_block(b: CircuitBuilder, data: Sequence[int], n: int) -> MirrorBlock:
    """Reflection 2|psi><psi| - I over `data`, exact including the global phase."""
    data = list(data)
    start = b.mark()
    if not data:
        return MirrorBlock(Fragment(), Fragment(), "diffusion")
    if len(data) == 1:
        with b.section("diffusion-pivot"):
            b.step([_x(data[0])])
        return MirrorBlock(Fragment(), b.fragment(start), "diffusion")

    roots: List[int] = []
    with b.section("diffusion"):
        b.step([_h(q) for q in data])
        b.step([_x(q) for q in data])
        if len(data) >= 4:
            roots, _ = _emit_qbt(b, data[:-1], "diffusion-qbt", n, stop_at=2)
    mid = b.mark()
    with b.section("diffusion-pivot"):
        if len(data) == 2:
            b.step([Gate(GateKind.CZ, tuple(data))])
        elif len(data) == 3:
            b.step([Gate(GateKind.CCZ, tuple(data))])
        else:
            b.step([Gate(GateKind.CCZ, (roots[0], roots[1], data[-1]))])
        # Z X Z X = -I turns X C^{n-1}Z X into the exact reflection
        for gate in (_z(data[0]), _x(data[0]), _z(data[0]), _x(data[0])):
            b.step([gate])
    return MirrorBlock(b.fragment(start, mid), b.fragment(mid), "diffusion")


def _new_builder(system: ConstraintSystem) -> Tuple[CircuitBuilder, int]:
    b = CircuitBuilder()
    b.data(system.n)
    kick = b.declare(system.n, MERGE)
    return b, kick


def _kick_fragment(b: CircuitBuilder, gates: Sequence[Gate], section: str) -> Fragment:
    start = b.mark()
    with b.section(section):
        for gate in gates:
            b.step([gate])
    return b.fragment(start)


def grover_program(system: ConstraintSystem, iterations: int,
                   variant_threshold: Optional[float] = None) -> GroverProgram:
    """
    Grover search as blocks: init, `iterations` x (oracle, diffusion), then kick reset.

    The oracle and diffusion are built once and repeated with identical qubit ids.
    """
    if iterations < 0:
        raise CircuitError("iterations must be nonnegative")
    if variant_threshold is None:
        variant_threshold = load_settings().variant_threshold
    b, kick = _new_builder(system)
    free = system.free_variables

    start = b.mark()
    with b.section("init"):
        b.step([_h(q) for q in free])
        b.step([_x(kick)])
        b.step([_h(kick)])
    init = b.fragment(start)
    oracle = _oracle_block(b, system, kick, variant_threshold)
    b.reset_pool(keep=list(range(system.n)) + [kick])
    diffusion = _diffusion_block(b, free, system.n)
    final = _kick_fragment(b, [_h(kick), _x(kick)], "final")

    blocks: List[Block] = [init]
    for _ in range(iterations):
        blocks += [oracle, diffusion]
    blocks.append(final)
    logger.info("grover program: %d qubits, %d iterations", b.width, iterations)
    return GroverProgram(b.qubit_ids(), system.n, kick, tuple(blocks), system.frozen)


def build_grover(system: ConstraintSystem, iterations: int, variant_threshold: Optional[float] = None) -> Circuit:
    """
    Full Grover circuit.

    Args:
        system (ConstraintSystem): lowered system
        iterations (int): oracle + diffusion rounds
        variant_threshold (float): pack-wise oracle when N/n exceeds it; configured default when omitted

    Returns:
        Circuit: every ancilla, the kicked qubit included, ends in |0>
    """
    return grover_program(system, iterations, variant_threshold).circuit()


def oracle_program(system: ConstraintSystem, variant_threshold: Optional[float] = None) -> GroverProgram:
    if variant_threshold is None:
        variant_threshold = load_settings().variant_threshold
    b, kick = _new_builder(system)
    prepare = _kick_fragment(b, [_x(kick), _h(kick)], "init")
    block = _oracle_block(b, system, kick, variant_threshold)
    release = _kick_fragment(b, [_h(kick), _x(kick)], "final")
    return GroverProgram(b.qubit_ids(), system.n, kick, (prepare, block, release), system.frozen)


def build_oracle(system: ConstraintSystem, variant_threshold: Optional[float] = None) -> Circuit:
    """Phase oracle |z> -> (-1)^f(z) |z> on data qubits 0..n-1, every ancilla restored to |0>."""
    return oracle_program(system, variant_threshold).circuit()


def build_diffusion(n: int) -> Circuit:
    """2|psi><psi| - I on qubits 0..n-1, ancillae after them."""
    if n < 1:
        raise CircuitError("diffusion needs at least one qubit")
    b = CircuitBuilder()
    data = b.data(n)
    block = _diffusion_block(b, data, n)
    layers = tuple(layer for fragment in block.fragments() for layer in fragment.layers)
    return Circuit(b.qubit_ids(), layers)


if __name__ == "__main__":
    from instances import lower, parse_dimacs_cnf, regularize

    system = lower(regularize(parse_dimacs_cnf("p cnf 4 3\n1 -2 3 0\n-1 4 0\n2 3 -4 0\n")))
    circuit = build_grover(system, 1)
    print(json.dumps({
        "n": system.n,
        "N": system.N,
        "qubits": circuit.num_qubits,
        "depth": circuit.depth,
        "gates": circuit.gate_count(),
    }, indent=2))
