"""Shared factories for random circuits, Hamiltonians and toy QIPs."""

import itertools

import numpy as np
import pytest

from qiparg.flatten import PublicCoinQIP
from qiparg.pauli import Hamiltonian, PauliWord
from qiparg.sim import GATE_ARITY, Gate, QuantumCircuit

GATE_KINDS = tuple(GATE_ARITY)


def random_gate(rng, num_qubits, kinds=GATE_KINDS):
    kinds = [k for k in kinds if GATE_ARITY[k] <= num_qubits]
    kind = kinds[rng.integers(len(kinds))]
    qubits = rng.choice(num_qubits, size=GATE_ARITY[kind], replace=False) + 1
    return Gate(kind, tuple(int(q) for q in qubits))


def random_circuit(rng, num_qubits, num_gates, ancillas=0, kinds=GATE_KINDS):
    gates = tuple(random_gate(rng, num_qubits, kinds) for _ in range(num_gates))
    return QuantumCircuit(num_qubits, gates, ancillas)


def random_yfree_matrix(rng, num_qubits, density=0.6):
    """Real symmetric matrix assembled from random I/X/Z words.

    Symmetric real matrices can still carry even numbers of Y letters, so the
    matrix is built from Y-free words directly.
    """
    terms = []
    for label in map("".join, itertools.product("IXZ", repeat=num_qubits)):
        if rng.random() < density:
            terms.append((float(rng.normal()), PauliWord.from_label(label)))
    if not terms:
        terms.append((1.0, PauliWord.from_label("Z" * num_qubits)))
    return Hamiltonian(num_qubits, tuple(terms)).to_matrix()


def random_symmetric(rng, num_qubits):
    a = rng.normal(size=(1 << num_qubits, 1 << num_qubits))
    return (a + a.T) / 2


def random_hamiltonian(rng, num_qubits, num_terms, max_locality=None):
    """Distinct random Y-free words with normal coefficients."""
    words = set()
    terms = []
    while len(terms) < num_terms:
        letters = rng.choice(["I", "X", "Z"], size=num_qubits)
        if max_locality is not None:
            keep = rng.choice(num_qubits, size=min(max_locality, num_qubits), replace=False)
            letters = ["I" if i not in keep else l for i, l in enumerate(letters)]
        label = "".join(letters)
        if label in words:
            if len(words) >= 3 ** num_qubits:
                break
            continue
        words.add(label)
        coeff = float(rng.normal())
        terms.append((coeff if coeff else 1.0, PauliWord.from_label(label)))
    return Hamiltonian(num_qubits, tuple(terms))


def random_toy_qip(rng, rand_len=None):
    """Random public-coin QIP whose coin register is used only as a control.

    Registers: A and B with one qubit each, C empty, D empty.
    """
    r = int(rng.integers(1, 5)) if rand_len is None else rand_len
    a, b, c, d = 1, 1, 0, 0
    data_kinds = ("H", "X", "Z", "CNOT", "CZ")
    u1 = random_circuit(rng, a + b + c, int(rng.integers(0, 4)), kinds=data_kinds)

    def coin_controlled(total, data_qubits, count):
        gates = []
        for _ in range(count):
            if rng.random() < 0.5:
                gates.append(random_gate(rng, total - r, data_kinds).remap(
                    {q: q + r for q in range(1, total - r + 1)}))
            else:
                ctrl = int(rng.integers(1, r + 1))
                tgt = int(rng.choice(data_qubits))
                gates.append(Gate("CNOT" if rng.random() < 0.5 else "CZ", (ctrl, tgt)))
        return gates

    u2 = QuantumCircuit(r + b + c, tuple(coin_controlled(r + b + c, range(r + 1, r + b + c + 1),
                                                         int(rng.integers(0, 4)))))
    n_v2 = r + a + b + d + 1
    v2_gates = coin_controlled(n_v2 - 1, range(r + 1, n_v2), int(rng.integers(0, 3)))
    src = int(rng.integers(r + 1, n_v2))
    v2_gates.append(Gate("CNOT", (src, n_v2)))
    if rng.random() < 0.5:
        v2_gates.append(Gate("CCX", (int(rng.integers(1, r + 1)), src, n_v2)))
    v2 = QuantumCircuit(n_v2, tuple(v2_gates), ancilla_count=d + 1)
    return PublicCoinQIP(a, b, c, r, d, u1, u2, v2)


@pytest.fixture
def rng():
    return np.random.default_rng(20241019)

