import json
import logging
import math
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from circuit_ir import FLIP_KINDS, Circuit, Gate, GateKind, Schedule
from config import DENSE_BACKEND_LIMIT, load_settings
from errors import CircuitError, NormDriftError, SimulationCapError
from instances import ConstraintSystem, all_assignments, evaluate_batch
from oracle import build_grover

logger = logging.getLogger(__name__)

_SQRT2_INV = 1 / math.sqrt(2)
NORM_TOLERANCE = 1e-9
DROP_TOLERANCE = 1e-14
DENSE_UNITARY_LIMIT = 10


def _little_endian(values: np.ndarray, width: int) -> np.ndarray:
    return (values[:, None] >> np.arange(width)) & 1


# ---------- Dense backend ----------

class StateVector:
    """
    Dense amplitudes over an ordered set of qubits.

    Basis index bit p is the value of qubit order[p] (little-endian).
    """

    def __init__(self, order: Sequence[int], amplitudes: np.ndarray):
        self.order = tuple(order)
        self.amplitudes = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if self.amplitudes.size != 2 ** len(self.order):
            raise CircuitError(f"{self.amplitudes.size} amplitudes for {len(self.order)} qubits")

    @classmethod
    def basis(cls, order: Sequence[int], values: Optional[Mapping[int, int]] = None) -> "StateVector":
        order = tuple(order)
        values = values or {}
        amplitudes = np.zeros(2 ** len(order), dtype=complex)
        amplitudes[sum(int(values.get(q, 0)) << p for p, q in enumerate(order))] = 1.0
        return cls(order, amplitudes)

    @property
    def width(self) -> int:
        return len(self.order)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def amplitudes_on(self, qubits: Sequence[int]) -> np.ndarray:
        """Amplitudes over the listed qubits (little-endian) with every other qubit at 0."""
        position = {q: p for p, q in enumerate(self.order)}
        q = self.width
        tensor = self.amplitudes.reshape([2] * q) if q else self.amplitudes
        keep = [q - 1 - position[x] for x in qubits]
        index = tuple(slice(None) if axis in keep else 0 for axis in range(q))
        sub = tensor[index]
        # remaining axes are in increasing axis order; put the most significant listed qubit first
        remaining = sorted(keep)
        sub = np.transpose(sub, [remaining.index(axis) for axis in reversed(keep)]) if keep else sub
        return np.asarray(sub).reshape(-1)

    def amplitude(self, values: Mapping[int, int]) -> complex:
        return complex(self.amplitudes[sum(int(values.get(q, 0)) << p for p, q in enumerate(self.order))])

    def nonzero(self, tolerance: float = DROP_TOLERANCE) -> Iterable[Tuple[int, complex]]:
        for index in np.flatnonzero(np.abs(self.amplitudes) > tolerance):
            yield int(index), complex(self.amplitudes[index])


def _index(width: int, fixed: Mapping[int, int]) -> tuple:
    index = [slice(None)] * width
    for axis, value in fixed.items():
        index[axis] = value
    return tuple(index)


def _apply_dense(tensor: np.ndarray, gate: Gate, axis_of: Mapping[int, int]) -> None:
    width = tensor.ndim
    controls = {axis_of[c]: p for c, p in zip(gate.controls, gate.polarity)}
    target = axis_of[gate.target]
    if gate.kind == GateKind.H:
        i0, i1 = _index(width, {target: 0}), _index(width, {target: 1})
        a0, a1 = tensor[i0].copy(), tensor[i1].copy()
        tensor[i0] = (a0 + a1) * _SQRT2_INV
        tensor[i1] = (a0 - a1) * _SQRT2_INV
    elif gate.kind in FLIP_KINDS:
        i0, i1 = _index(width, {**controls, target: 0}), _index(width, {**controls, target: 1})
        tensor[i0], tensor[i1] = tensor[i1].copy(), tensor[i0].copy()
    else:
        tensor[_index(width, {**controls, target: 1})] *= -1


def _run_dense(circuit: Circuit, state: StateVector) -> StateVector:
    q = state.width
    axis_of = {x: q - 1 - p for p, x in enumerate(state.order)}
    tensor = state.amplitudes.copy().reshape([2] * q) if q else state.amplitudes.copy()
    for layer in circuit.layers:
        for gate in layer.gates:
            _apply_dense(tensor, gate, axis_of)
    return StateVector(state.order, tensor.reshape(-1))


# ---------- Support backend ----------

class SupportState:
    """
    Exact sparse state: one row of basis bits per nonzero amplitude.

    Wide ancilla-heavy circuits stay cheap because only the superposed qubits branch.
    """

    def __init__(self, order: Sequence[int], bits: np.ndarray, amplitudes: np.ndarray):
        self.order = tuple(order)
        self.bits = np.asarray(bits, dtype=bool).reshape(-1, len(self.order))
        self.amplitudes = np.asarray(amplitudes, dtype=complex).reshape(-1)

    @classmethod
    def basis(cls, order: Sequence[int], values: Optional[Mapping[int, int]] = None) -> "SupportState":
        order = tuple(order)
        values = values or {}
        row = np.array([[bool(values.get(q, 0)) for q in order]], dtype=bool)
        return cls(order, row, np.ones(1, dtype=complex))

    @classmethod
    def from_rows(cls, order: Sequence[int], qubits: Sequence[int], rows: np.ndarray,
                  amplitudes: np.ndarray) -> "SupportState":
        """Rows give values of `qubits`; every other qubit starts at 0."""
        order = tuple(order)
        rows = np.asarray(rows, dtype=bool)
        bits = np.zeros((rows.shape[0], len(order)), dtype=bool)
        position = {q: p for p, q in enumerate(order)}
        for j, q in enumerate(qubits):
            bits[:, position[q]] = rows[:, j]
        return cls(order, bits, amplitudes)

    @property
    def width(self) -> int:
        return len(self.order)

    @property
    def rows(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def amplitudes_on(self, qubits: Sequence[int]) -> np.ndarray:
        position = {q: p for p, q in enumerate(self.order)}
        listed = [position[q] for q in qubits]
        others = [p for p in range(self.width) if p not in set(listed)]
        keep = ~self.bits[:, others].any(axis=1) if others else np.ones(self.rows, dtype=bool)
        weights = 1 << np.arange(len(listed), dtype=np.int64)
        index = self.bits[keep][:, listed].astype(np.int64) @ weights if listed else np.zeros(int(keep.sum()), np.int64)
        out = np.zeros(2 ** len(listed), dtype=complex)
        np.add.at(out, index, self.amplitudes[keep])
        return out

    def amplitude(self, values: Mapping[int, int]) -> complex:
        target = np.array([bool(values.get(q, 0)) for q in self.order], dtype=bool)
        match = (self.bits == target).all(axis=1)
        return complex(self.amplitudes[match].sum())

    def nonzero(self, tolerance: float = DROP_TOLERANCE) -> Iterable[Tuple[int, complex]]:
        for row, amp in zip(self.bits, self.amplitudes):
            if abs(amp) > tolerance:
                yield sum(1 << int(p) for p in np.flatnonzero(row)), complex(amp)

    def to_dense(self) -> StateVector:
        return StateVector(self.order, self.amplitudes_on(self.order))


def _controls_match(bits: np.ndarray, gate: Gate, position: Mapping[int, int]) -> np.ndarray:
    mask = np.ones(bits.shape[0], dtype=bool)
    for c, p in zip(gate.controls, gate.polarity):
        mask &= bits[:, position[c]] == bool(p)
    return mask


def _merge(bits: np.ndarray, amplitudes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    unique, inverse = np.unique(bits, axis=0, return_inverse=True)
    summed = np.zeros(unique.shape[0], dtype=complex)
    np.add.at(summed, inverse.reshape(-1), amplitudes)
    keep = np.abs(summed) > DROP_TOLERANCE
    return unique[keep], summed[keep]


def _run_support(circuit: Circuit, state: SupportState, cap: int) -> SupportState:
    position = {q: p for p, q in enumerate(state.order)}
    bits, amplitudes = state.bits.copy(), state.amplitudes.copy()
    for layer in circuit.layers:
        for gate in layer.gates:
            t = position[gate.target]
            if gate.kind == GateKind.H:
                low, high = bits.copy(), bits.copy()
                low[:, t] = False
                high[:, t] = True
                sign = np.where(bits[:, t], -1.0, 1.0)
                bits, amplitudes = _merge(np.vstack([low, high]),
                                          np.concatenate([amplitudes, amplitudes * sign]) * _SQRT2_INV)
                if amplitudes.size > 2 ** cap:
                    raise SimulationCapError(math.ceil(math.log2(amplitudes.size)), cap)
            elif gate.kind in FLIP_KINDS:
                mask = _controls_match(bits, gate, position)
                bits[mask, t] = ~bits[mask, t]
            else:
                mask = _controls_match(bits, gate, position) & bits[:, t]
                amplitudes[mask] *= -1
    return SupportState(state.order, bits, amplitudes)


# ---------- Entry points ----------

State = Union[StateVector, SupportState]


def _superposed_width(circuit: Circuit) -> int:
    return len({gate.target for layer in circuit.layers if layer.kind == GateKind.H for gate in layer.gates})


def simulate(c: Union[Circuit, Schedule], initial: Optional[State] = None, cap: Optional[int] = None,
             backend: str = "auto") -> State:
    """
    Apply every layer of a circuit or schedule to a state.

    Args:
        c: circuit, or schedule whose move phases act as identity
        initial: starting state over the circuit's qubits; |0...0> when omitted
        cap (int): simulation cap in qubits; configured default when omitted
        backend (str): "dense", "support" or "auto"

    Returns:
        StateVector or SupportState, matching the backend used
    """
    circuit = c.circuit() if isinstance(c, Schedule) else c
    cap = load_settings().max_sim_qubits if cap is None else cap
    order = circuit.indices
    if initial is not None and set(initial.order) != set(order):
        raise CircuitError("initial state does not cover the circuit's qubits")

    if backend == "auto":
        if initial is not None:
            backend = "dense" if isinstance(initial, StateVector) else "support"
        else:
            backend = "dense" if len(order) <= DENSE_BACKEND_LIMIT else "support"
    logger.info("simulating %d qubits, %d layers on the %s backend", len(order), circuit.depth, backend)

    if backend == "dense":
        if len(order) > cap:
            raise SimulationCapError(len(order), cap)
        state = initial if isinstance(initial, StateVector) else StateVector.basis(order)
        if isinstance(initial, SupportState):
            state = initial.to_dense()
        result = _run_dense(circuit, state)
    elif backend == "support":
        superposed = _superposed_width(circuit)
        if superposed > cap:
            raise SimulationCapError(superposed, cap)
        state = initial if isinstance(initial, SupportState) else SupportState.basis(order)
        if isinstance(initial, StateVector):
            rows = np.flatnonzero(np.abs(initial.amplitudes) > 0)
            state = SupportState(initial.order, _little_endian(rows, initial.width).astype(bool),
                                 initial.amplitudes[rows])
        result = _run_support(circuit, state, cap)
    else:
        raise CircuitError(f"unknown backend {backend!r}")

    drift = abs(result.norm() - (initial.norm() if initial is not None else 1.0))
    if drift > NORM_TOLERANCE:
        raise NormDriftError(f"norm drifted by {drift:.3e}")
    return result


def dense_unitary(c: Circuit, qubits: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Matrix of c restricted to `qubits`, every other qubit prepared and projected at |0>.

    Column j is the simulated image of basis state j (little-endian over `qubits`).
    """
    qubits = list(c.indices if qubits is None else qubits)
    if len(qubits) > DENSE_UNITARY_LIMIT:
        raise SimulationCapError(len(qubits), DENSE_UNITARY_LIMIT)
    dim = 2 ** len(qubits)
    matrix = np.zeros((dim, dim), dtype=complex)
    for j in range(dim):
        values = {q: (j >> p) & 1 for p, q in enumerate(qubits)}
        state = SupportState.basis(c.indices, values)
        matrix[:, j] = simulate(c, state, cap=len(c.indices) or 1).amplitudes_on(qubits)
    return matrix


def classical_run(c: Circuit, rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Run a circuit without H gates on many basis states at once.

    Args:
        c (Circuit): circuit made of X/CX/CCX and Z-type gates
        rows (np.ndarray): inputs, one row per basis state, columns in c.indices order

    Returns:
        (outputs, signs): output bits per row and the accumulated phase sign (+1/-1)
    """
    position = {q: p for p, q in enumerate(c.indices)}
    bits = np.array(rows, dtype=bool).reshape(-1, len(position))
    signs = np.ones(bits.shape[0], dtype=np.int8)
    for layer in c.layers:
        if layer.kind == GateKind.H:
            raise CircuitError("classical_run cannot apply H")
        for gate in layer.gates:
            t = position[gate.target]
            mask = _controls_match(bits, gate, position)
            if gate.kind in FLIP_KINDS:
                bits[mask, t] = ~bits[mask, t]
            else:
                signs[mask & bits[:, t]] *= -1
    return bits.astype(np.int8), signs


def grover_success_probability(system: ConstraintSystem, iterations: int, cap: Optional[int] = None,
                               circuit: Optional[Union[Circuit, Schedule]] = None) -> float:
    """
    Probability of measuring a solution after `iterations` Grover rounds.

    Args:
        system (ConstraintSystem): lowered system
        iterations (int): Grover rounds
        cap (int): simulation cap override
        circuit: prebuilt Grover circuit or transpiled schedule for the same system

    Returns:
        float: sum of |amplitude(z, ancillae=0)|^2 over satisfying z
    """
    circuit = build_grover(system, iterations) if circuit is None else circuit
    state = simulate(circuit, cap=cap)
    data = list(range(system.n))
    amplitudes = state.amplitudes_on(data)
    z = all_assignments(system)
    solutions = z[evaluate_batch(system, z)]
    if not solutions.size:
        return 0.0
    index = solutions.astype(np.int64) @ (1 << np.arange(system.n, dtype=np.int64))
    return float(np.sum(np.abs(amplitudes[index]) ** 2))


def closed_form_probability(n_free: int, solutions: int, iterations: int) -> float:
    """sin^2((2r+1) theta) with sin(theta) = sqrt(M / 2^n)."""
    if solutions == 0:
        return 0.0
    theta = math.asin(math.sqrt(solutions / 2 ** n_free))
    return math.sin((2 * iterations + 1) * theta) ** 2


def optimal_iterations(n_free: int, solutions: int) -> int:
    return math.floor(math.pi / 4 * math.sqrt(2 ** n_free / max(solutions, 1)))


def amplitude_dump(state: State, tolerance: float = DROP_TOLERANCE) -> str:
    """Nonzero amplitudes as 'index real imag' lines, sorted by index."""
    rows = sorted(state.nonzero(tolerance))
    return "\n".join(f"{index} {amp.real:.12e} {amp.imag:.12e}" for index, amp in rows)


if __name__ == "__main__":
    from instances import ProblemKind, enumerate_solutions, lower, parse_edge_list, regularize

    system = lower(regularize(parse_edge_list("3 2\n0 1\n1 2\n", ProblemKind.MCP)))
    solutions = len(enumerate_solutions(system))
    rounds = optimal_iterations(len(system.free_variables), solutions)
    print(json.dumps({
        "n": system.n,
        "solutions": solutions,
        "iterations": rounds,
        "probability": grover_success_probability(system, rounds),
        "closed_form": closed_form_probability(len(system.free_variables), solutions, rounds),
    }, indent=2))
