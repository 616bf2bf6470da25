"""Circuit-to-Hamiltonian compilation with a unary clock.

Register layout of every compiled Hamiltonian: data qubits ``1..ell``
(ancillas are the last ``ancillas`` of them, the output is qubit ``ell``),
followed by clock qubits ``ell+1..ell+T``.  Time ``t`` is encoded as
``1^t 0^(T-t)`` on the clock.

The clock-penalty sum runs over adjacent clock pairs ``j = 1..T-1`` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from qiparg.errors import DimensionMismatch, RangeError, TooFewGates, UnsupportedGate
from qiparg.pauli import (
    IDENTITY1,
    PAULI_X,
    PROJ0,
    PROJ1,
    Hamiltonian,
    canonicalize,
    local_product,
)
from qiparg.sim import GATE_ARITY, QuantumCircuit, RealStateVector, run_gates

MIN_GATES = 2
MAX_LOCALITY = 6
# per pre-expansion term, Σ|c| <= 2^7
TERM_ONE_NORM_BOUND = 2.0 ** 7


def unary_clock(t: int, T: int) -> str:
    if not 0 <= t <= T:
        raise RangeError(f"clock time {t} outside 0..{T}")
    return "1" * t + "0" * (T - t)


def unary_index(t: int, T: int) -> int:
    return int(unary_clock(t, T), 2) if T else 0


def clock_operator(kind: str, j: int, T: int) -> Hamiltonian:
    """Y-free decomposition of a clock operator on ``T`` clock qubits.

    ``kind="diag"`` gives ``clock(|j><j|)`` for ``0 <= j <= T``;
    ``kind="hop"`` gives ``clock(|j><j-1|) + clock(|j-1><j|)`` for ``1 <= j <= T``.
    """
    if T < 2:
        raise RangeError("clock operators need T >= 2")
    if kind == "diag":
        if not 0 <= j <= T:
            raise RangeError(f"diag index {j} outside 0..{T}")
        if j == 0:
            factors = {1: PROJ0}
        elif j == T:
            factors = {T: PROJ1}
        else:
            factors = {j: PROJ1, j + 1: PROJ0}
    elif kind == "hop":
        if not 1 <= j <= T:
            raise RangeError(f"hop index {j} outside 1..{T}")
        if j == 1:
            factors = {1: PAULI_X, 2: PROJ0}
        elif j == T:
            factors = {T - 1: PROJ1, T: PAULI_X}
        else:
            factors = {j - 1: PROJ1, j: PAULI_X, j + 1: PROJ0}
    else:
        raise ValueError(f"unknown clock operator kind {kind!r}")
    return canonicalize(local_product(T, factors))


@dataclass(frozen=True)
class ClockBundle:
    circuit: QuantumCircuit
    h_init: Hamiltonian
    h_clock: Hamiltonian
    h_prop: Hamiltonian
    h_final: Hamiltonian
    h_total: Hamiltonian
    prop_terms: tuple[Hamiltonian, ...]
    init_terms: tuple[Hamiltonian, ...]
    clock_terms: tuple[Hamiltonian, ...]
    one_norm_bound: float

    @property
    def data_qubits(self) -> int:
        return self.circuit.num_qubits

    @property
    def ancilla_count(self) -> int:
        return self.circuit.ancilla_count

    @property
    def clock_qubits(self) -> int:
        return len(self.circuit.gates)

    @property
    def num_qubits(self) -> int:
        return self.data_qubits + self.clock_qubits

    @property
    def term_count(self) -> int:
        """Number of terms before Pauli expansion."""
        return len(self.init_terms) + len(self.clock_terms) + len(self.prop_terms) + 1

    def components(self) -> dict[str, Hamiltonian]:
        return {"init": self.h_init, "clock": self.h_clock, "prop": self.h_prop,
                "final": self.h_final, "total": self.h_total}


def _concat(num_qubits: int, parts: Iterable[Hamiltonian]) -> Hamiltonian:
    terms = []
    for p in parts:
        terms.extend(p.terms)
    return Hamiltonian(num_qubits, tuple(terms))


def prop_term(circuit: QuantumCircuit, j: int) -> Hamiltonian:
    """``H_prop,j`` on ``ell + T`` qubits, using ``U_j = U_j^dagger``."""
    ell, T = circuit.num_qubits, len(circuit.gates)
    n = ell + T
    gate = circuit.gates[j - 1]
    diag = clock_operator("diag", j, T) + clock_operator("diag", j - 1, T)
    diag = diag.embed(n, offset=ell)
    positions = {k + 1: q for k, q in enumerate(gate.qubits)}
    unitary = gate.decomposition.embed(ell, positions)
    hop = unitary.kron(clock_operator("hop", j, T))
    return canonicalize((diag - hop) * 0.5)


def compile_circuit(circuit: QuantumCircuit) -> ClockBundle:
    """Compile ``circuit`` into init/clock/prop/final Hamiltonians.

    Each pre-expansion term is expanded into unique Pauli words, but words
    shared between different terms are kept as separate entries.
    """
    T = len(circuit.gates)
    if T < MIN_GATES:
        raise TooFewGates(
            f"need at least {MIN_GATES} gates, got {T}; pad with a self-inverse pair such as "
            "'X 1' twice")
    for g in circuit.gates:
        if g.kind not in GATE_ARITY:
            raise UnsupportedGate(g.kind)
    ell, nq = circuit.num_qubits, circuit.ancilla_count
    n = ell + T

    clock0 = {ell + 1: PROJ0}
    init_terms = tuple(
        canonicalize(local_product(n, {ell - nq + i: PROJ1, **clock0}))
        for i in range(1, nq + 1))
    clock_terms = tuple(
        canonicalize(local_product(n, {ell + j: PROJ0, ell + j + 1: PROJ1}))
        for j in range(1, T))
    prop_terms = tuple(prop_term(circuit, j) for j in range(1, T + 1))
    final = canonicalize(local_product(n, {ell: PROJ0, ell + T: PROJ1}))

    h_init = _concat(n, init_terms)
    h_clock = _concat(n, clock_terms)
    h_prop = _concat(n, prop_terms)
    h_total = _concat(n, (h_prop, h_init, h_clock, final))
    n_terms = len(init_terms) + len(clock_terms) + len(prop_terms) + 1
    return ClockBundle(
        circuit=circuit, h_init=h_init, h_clock=h_clock, h_prop=h_prop, h_final=final,
        h_total=h_total, prop_terms=prop_terms, init_terms=init_terms,
        clock_terms=clock_terms, one_norm_bound=TERM_ONE_NORM_BOUND * n_terms)


@dataclass(frozen=True)
class HistoryState:
    state: RealStateVector
    source_circuit: QuantumCircuit
    input_label: str = ""


def partial_states(circuit: QuantumCircuit, state: RealStateVector) -> list[np.ndarray]:
    """``[U_{<=0} psi, U_{<=1} psi, ..., U_{<=T} psi]`` as amplitude arrays."""
    if state.num_qubits != circuit.num_qubits:
        raise DimensionMismatch(
            f"input has {state.num_qubits} qubits, circuit has {circuit.num_qubits}")
    out = [state.amplitudes]
    for g in circuit.gates:
        out.append(run_gates(out[-1], circuit.num_qubits, (g,)))
    return out


def history_state(circuit: QuantumCircuit, state: RealStateVector, label: str = "") -> HistoryState:
    T = len(circuit.gates)
    amps = np.zeros(1 << (circuit.num_qubits + T))
    for t, psi_t in enumerate(partial_states(circuit, state)):
        e_t = np.zeros(1 << T)
        e_t[unary_index(t, T)] = 1.0
        amps += np.kron(psi_t, e_t)
    amps /= math.sqrt(T + 1)
    return HistoryState(RealStateVector(circuit.num_qubits + T, amps), circuit, label)


def history_isometry(circuit: QuantumCircuit) -> np.ndarray:
    """Dense ``W = Σ_t U_{<=t} ⊗ |t><t|`` on ``ell + T`` qubits (small instances only)."""
    ell, T = circuit.num_qubits, len(circuit.gates)
    dim_d = 1 << ell
    u = np.eye(dim_d)
    w = np.zeros((dim_d << T, dim_d << T))
    for t in range(T + 1):
        if t:
            g = circuit.gates[t - 1]
            u = np.stack([run_gates(u[:, c], ell, (g,)) for c in range(dim_d)], axis=1)
        proj = np.zeros((1 << T, 1 << T))
        k = unary_index(t, T)
        proj[k, k] = 1.0
        w += np.kron(u, proj)
    return w


def hopping_matrix(T: int, j: int | None = None) -> np.ndarray:
    """``E_j`` (or ``E = Σ_j E_j``) on the ``2^T``-dim clock space, zero off the unary states."""
    e = np.zeros((1 << T, 1 << T))
    for jj in ([j] if j is not None else range(1, T + 1)):
        a, b = unary_index(jj - 1, T), unary_index(jj, T)
        e[a, a] += 0.5
        e[b, b] += 0.5
        e[a, b] -= 0.5
        e[b, a] -= 0.5
    return e
