import pytest
from hypothesis import given, strategies as st

from circuit_ir import (
    Circuit,
    CircuitBuilder,
    Gate,
    GateKind,
    GridPos,
    Layer,
    Move,
    MovePhase,
    QubitId,
    QubitRole,
    Schedule,
    TensorGrid,
    compose,
    count_resources,
    dump_schedule,
    inverse,
    is_product_form,
    load_schedule,
    lower_polarity,
    validate_schedule,
)
from errors import CircuitError, LayerOverlapError, PlacementError, RoleConflictError


def qubits(*indices, role=QubitRole.DATA):
    return tuple(QubitId(i, role) for i in indices)


# ---------- Gates and layers ----------

def test_gate_checks_arity_and_distinct_operands():
    with pytest.raises(CircuitError):
        Gate(GateKind.CX, (0,))
    with pytest.raises(CircuitError):
        Gate(GateKind.CCX, (0, 0, 1))
    with pytest.raises(CircuitError):
        Gate(GateKind.CX, (0, 1), (2,))


def test_gate_defaults_to_plain_controls():
    gate = Gate(GateKind.CCX, (0, 1, 2))
    assert gate.polarity == (1, 1)
    assert gate.controls == (0, 1) and gate.target == 2


def test_layer_rejects_overlap_and_mixed_kinds():
    with pytest.raises(LayerOverlapError):
        Layer((Gate(GateKind.CX, (0, 1)), Gate(GateKind.CX, (1, 2))))
    with pytest.raises(CircuitError):
        Layer((Gate(GateKind.X, (0,)), Gate(GateKind.H, (1,))))


def test_lower_polarity_conjugates_zero_controls():
    layer = Layer((Gate(GateKind.CCX, (0, 1, 2), (0, 1)),))
    parts = lower_polarity(layer)
    assert [p.kind for p in parts] == [GateKind.X, GateKind.CCX, GateKind.X]
    assert parts[0].qubits == (0,)
    assert parts[1].gates[0].plain


def test_circuit_rejects_undeclared_qubit():
    with pytest.raises(CircuitError):
        Circuit(qubits(0), (Layer((Gate(GateKind.CX, (0, 1)),)),))


def test_compose_detects_role_conflict():
    a = Circuit(qubits(0, 1))
    b = Circuit(qubits(1, role=QubitRole.ANCILLA_MERGE))
    with pytest.raises(RoleConflictError):
        compose(a, b)


def test_inverse_reverses_layers():
    layers = (Layer((Gate(GateKind.H, (0,)),)), Layer((Gate(GateKind.CX, (0, 1)),)))
    c = Circuit(qubits(0, 1), layers)
    assert inverse(c).layers == tuple(reversed(layers))


# ---------- Builder ----------

def test_builder_merges_disjoint_steps_of_one_kind():
    b = CircuitBuilder()
    b.data(4)
    b.step([Gate(GateKind.CX, (0, 1))])
    b.step([Gate(GateKind.CX, (2, 3))])
    assert b.build().depth == 1
    b.step([Gate(GateKind.CX, (1, 2))])
    assert b.build().depth == 2


def test_builder_does_not_merge_across_sections():
    b = CircuitBuilder()
    b.data(2)
    with b.section("a"):
        b.step([Gate(GateKind.X, (0,))])
    with b.section("b"):
        b.step([Gate(GateKind.X, (1,))])
    assert b.fragment().sections == ("a", "b")


def test_released_qubits_wait_for_barrier():
    b = CircuitBuilder()
    b.data(1)
    first = b.fresh()
    b.release(first)
    assert b.fresh() != first
    b.barrier()
    assert b.fresh() == first


def test_replay_inverse_appends_mirror():
    b = CircuitBuilder()
    b.data(3)
    b.step([Gate(GateKind.CX, (0, 1))])
    b.step([Gate(GateKind.CCX, (0, 1, 2))])
    b.replay_inverse(0, 2, section="inverse")
    kinds = [layer.kind for layer in b.build().layers]
    assert kinds == [GateKind.CX, GateKind.CCX, GateKind.CCX, GateKind.CX]
    assert b.fragment().sections[-1] == "inverse"


def test_step_rejects_unallocated_qubit():
    b = CircuitBuilder()
    b.data(1)
    with pytest.raises(CircuitError):
        b.step([Gate(GateKind.CX, (0, 5))])


# ---------- Grid geometry ----------

def test_tensor_grid_from_positions():
    full = [GridPos(x, y) for x in (0, 2) for y in (1, 3)]
    assert TensorGrid.from_positions(full).rows == (0, 2)
    assert TensorGrid.from_positions(full[:3]) is None


def test_product_form_accepts_monotone_maps():
    mapping = {GridPos(x, y): GridPos(2 * x + 1, y + 4) for x in range(2) for y in range(3)}
    assert is_product_form(mapping)


def test_product_form_rejects_crossing():
    mapping = {GridPos(0, 0): GridPos(0, 1), GridPos(0, 1): GridPos(0, 0)}
    assert not is_product_form(mapping)


def test_product_form_needs_total_map():
    with pytest.raises(PlacementError):
        is_product_form({GridPos(0, 0): GridPos(0, 0), GridPos(1, 1): GridPos(1, 1)})


def test_grid_positions_are_nonnegative():
    with pytest.raises(PlacementError):
        GridPos(-1, 0)


def test_move_phase_time_is_slowest_move():
    phase = MovePhase((Move(0, GridPos(0, 0), GridPos(4, 0)), Move(1, GridPos(0, 1), GridPos(1, 1))))
    assert phase.time_units == pytest.approx(2.0)


# ---------- Validation ----------

def _pair_schedule(extra_steps=(), initial=None):
    initial = initial or {0: GridPos(0, 0), 1: GridPos(1, 0), 2: GridPos(0, 1), 3: GridPos(1, 1)}
    layer = Layer((Gate(GateKind.CX, (0, 1)), Gate(GateKind.CX, (2, 3))))
    return Schedule(qubits(0, 1, 2, 3), initial, tuple(extra_steps) + (layer,))


def test_valid_broadcast_passes():
    assert validate_schedule(_pair_schedule()).ok


def test_bystander_inside_grid_fails():
    initial = {0: GridPos(0, 0), 1: GridPos(0, 3), 2: GridPos(1, 1), 3: GridPos(1, 4), 4: GridPos(0, 1)}
    s = Schedule(qubits(0, 1, 2, 3, 4), initial, _pair_schedule().steps)
    report = validate_schedule(s)
    assert not report.ok and report.check == "tensor_grid"


def test_completing_atom_is_not_a_bystander():
    initial = {0: GridPos(0, 0), 1: GridPos(0, 3), 2: GridPos(1, 1), 3: GridPos(1, 4), 4: GridPos(0, 1)}
    s = Schedule(qubits(0, 1, 2, 3) + qubits(4, role=QubitRole.COMPLETING), initial, _pair_schedule().steps)
    assert validate_schedule(s).ok


def test_crossing_pairs_fail_product_form():
    initial = {0: GridPos(0, 0), 1: GridPos(1, 1), 2: GridPos(0, 1), 3: GridPos(1, 0)}
    report = validate_schedule(_pair_schedule(initial=initial))
    assert not report.ok and report.check == "product_form"


def test_gate_on_completing_atom_fails():
    s = Schedule(qubits(0) + qubits(1, role=QubitRole.COMPLETING), {0: GridPos(0, 0), 1: GridPos(1, 0)},
                 (Layer((Gate(GateKind.CX, (0, 1)),)),))
    assert validate_schedule(s).check == "completing"


def test_move_onto_stationary_atom_fails():
    move = MovePhase((Move(0, GridPos(0, 0), GridPos(1, 0)),))
    report = validate_schedule(_pair_schedule([move]))
    assert not report.ok and report.check == "move_collision" and report.step == 0


def test_move_from_wrong_source_fails():
    move = MovePhase((Move(0, GridPos(5, 5), GridPos(6, 6)),))
    assert validate_schedule(_pair_schedule([move])).check == "move_source"


def test_swap_inside_one_phase_is_allowed():
    move = MovePhase((Move(0, GridPos(0, 0), GridPos(0, 1)), Move(2, GridPos(0, 1), GridPos(0, 0))))
    s = Schedule(qubits(0, 2), {0: GridPos(0, 0), 2: GridPos(0, 1)}, (move,))
    assert validate_schedule(s).ok


def test_duplicate_initial_site_fails():
    s = Schedule(qubits(0, 1), {0: GridPos(0, 0), 1: GridPos(0, 0)})
    assert validate_schedule(s).check == "placement"


@given(st.integers(min_value=2, max_value=6), st.integers(min_value=0, max_value=5))
def test_injected_bystander_always_caught(width, row):
    # diagonal controls leave empty cells inside their grid; an atom moved into one must be caught
    initial = {}
    gates = []
    for i in range(width):
        initial[2 * i] = GridPos(i, i)
        initial[2 * i + 1] = GridPos(i, width + i)
        gates.append(Gate(GateKind.CX, (2 * i, 2 * i + 1)))
    intruder = 2 * width
    initial[intruder] = GridPos(width + 5, 0)
    layer = Layer(tuple(gates))
    s = Schedule(qubits(*range(2 * width + 1)), initial, (layer,))
    assert validate_schedule(s).ok
    r = row % width
    cell = GridPos(r, (r + 1) % width)
    moved = MovePhase((Move(intruder, initial[intruder], cell),))
    report = validate_schedule(Schedule(s.qubits, initial, (moved, layer)))
    assert not report.ok and report.step == 1 and report.check == "tensor_grid"


def _column_pairs(width):
    # control i at (i, 0), target i at (i, 1): one monotone broadcast
    initial = {}
    gates = []
    for i in range(width):
        initial[2 * i] = GridPos(i, 0)
        initial[2 * i + 1] = GridPos(i, 1)
        gates.append(Gate(GateKind.CX, (2 * i, 2 * i + 1)))
    return initial, gates


@given(st.integers(min_value=2, max_value=8), st.data())
def test_injected_overlap_always_caught(width, data):
    initial, gates = _column_pairs(width)
    assert validate_schedule(Schedule(qubits(*range(2 * width)), initial, (Layer(tuple(gates)),))).ok
    i = data.draw(st.integers(0, width - 1))
    j = data.draw(st.integers(0, width - 1).filter(lambda k: k != i))
    gates[j] = Gate(GateKind.CX, (gates[j].qubits[0], gates[i].qubits[0]))
    with pytest.raises(LayerOverlapError):
        Layer(tuple(gates))


@given(st.integers(min_value=2, max_value=8), st.data())
def test_injected_crossing_always_caught(width, data):
    initial, gates = _column_pairs(width)
    i = data.draw(st.integers(0, width - 2))
    j = data.draw(st.integers(i + 1, width - 1))
    # swap two targets so the control -> target map turns back on itself
    gates[i], gates[j] = (Gate(GateKind.CX, (2 * i, 2 * j + 1)), Gate(GateKind.CX, (2 * j, 2 * i + 1)))
    report = validate_schedule(Schedule(qubits(*range(2 * width)), initial, (Layer(tuple(gates)),)))
    assert not report.ok and report.step == 0 and report.check == "product_form"


# ---------- Resources and serialization ----------

def test_count_resources_skips_completing_atoms():
    move = MovePhase((Move(0, GridPos(0, 0), GridPos(3, 0)),))
    s = Schedule(qubits(0) + qubits(1, role=QubitRole.COMPLETING), {0: GridPos(0, 0), 1: GridPos(5, 5)},
                 (move, Layer((Gate(GateKind.H, (0,)),))))
    count = count_resources(s)
    assert (count.qubits, count.depth, count.transports) == (1, 1, 1)


def test_schedule_document_preserves_steps():
    move = MovePhase((Move(0, GridPos(0, 0), GridPos(0, 2)),))
    layer = Layer((Gate(GateKind.CCX, (0, 1, 2), (0, 1)),))
    s = Schedule(qubits(0, 1, 2), {0: GridPos(0, 0), 1: GridPos(1, 2), 2: GridPos(2, 2)},
                 (move, layer), ("check", "check"))
    loaded = load_schedule(dump_schedule(s))
    assert loaded.steps == s.steps
    assert loaded.sections == s.sections
    assert dict(loaded.initial) == dict(s.initial)
