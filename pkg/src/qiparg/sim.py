"""Dense real statevector simulation over the gate set {H, X, Z, CNOT, CZ, CCX, CCZ}.

Conventions used throughout the package:

* qubits are 1-based; qubit 1 is the most significant bit of a basis index
  (big-endian), so ``|q1 q2 ... qn>`` has index ``int("q1q2...qn", 2)``;
* a basis string is a tuple over ``{0, 1, None}`` where 0 is Z, 1 is X and
  ``None`` (printed ``⊥``) leaves the qubit unmeasured;
* a measurement record is a tuple over ``{0, 1, None}`` with ``None`` exactly
  where the basis is ``None``.

Mixed states are never stored: where an experiment needs one it is passed
as a list of ``(probability, RealStateVector)`` pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from qiparg.errors import DimensionMismatch, IndexOutOfRange, ParseError, TooLarge, UnsupportedGate
from qiparg.pauli import Hamiltonian, decompose_yfree

MAX_QUBITS = 20
MAX_MEASURED = 20
NORM_TOL = 1e-10
BOTTOM = "⊥"

_S = 1 / math.sqrt(2)

GATE_ARITY = {"H": 1, "X": 1, "Z": 1, "CNOT": 2, "CZ": 2, "CCX": 3, "CCZ": 3}


def _controlled(target: np.ndarray, controls: int) -> np.ndarray:
    dim = 2 ** (controls + 1)
    m = np.eye(dim)
    m[-2:, -2:] = target
    return m


GATE_MATRICES = {
    "H": np.array([[_S, _S], [_S, -_S]]),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
}
GATE_MATRICES["CNOT"] = _controlled(GATE_MATRICES["X"], 1)
GATE_MATRICES["CZ"] = _controlled(GATE_MATRICES["Z"], 1)
GATE_MATRICES["CCX"] = _controlled(GATE_MATRICES["X"], 2)
GATE_MATRICES["CCZ"] = _controlled(GATE_MATRICES["Z"], 2)


def _register_gates() -> dict[str, Hamiltonian]:
    decomps = {}
    for kind, m in GATE_MATRICES.items():
        if not np.allclose(m, m.T, atol=1e-15):
            raise AssertionError(f"{kind} is not Hermitian")
        if not np.allclose(m @ m.T, np.eye(m.shape[0]), atol=1e-15):
            raise AssertionError(f"{kind} is not unitary")
        decomps[kind] = decompose_yfree(m)
    return decomps


# every gate is checked real, Hermitian, unitary and Y-free at import
GATE_DECOMPOSITIONS = _register_gates()


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in GATE_ARITY:
            raise UnsupportedGate(f"unsupported gate {self.kind!r}")
        qubits = tuple(int(q) for q in self.qubits)
        if len(qubits) != GATE_ARITY[kind]:
            raise ValueError(f"{kind} takes {GATE_ARITY[kind]} qubits, got {len(qubits)}")
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"{kind} qubits must be distinct: {qubits}")
        if min(qubits) < 1:
            raise IndexOutOfRange("qubit indices are 1-based")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "qubits", qubits)

    @property
    def matrix(self) -> np.ndarray:
        return GATE_MATRICES[self.kind]

    @property
    def decomposition(self) -> Hamiltonian:
        """Y-free decomposition on the gate's own ``arity`` qubits."""
        return GATE_DECOMPOSITIONS[self.kind]

    def remap(self, mapping) -> "Gate":
        return Gate(self.kind, tuple(mapping[q] for q in self.qubits))

    def __str__(self):
        return " ".join([self.kind, *map(str, self.qubits)])


@dataclass(frozen=True)
class QuantumCircuit:
    """Gate list on ``num_qubits`` data qubits.

    The last ``ancilla_count`` qubits are ancillas expected in ``|0>``; the
    last qubit is the output qubit.
    """

    num_qubits: int
    gates: tuple[Gate, ...] = ()
    ancilla_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.num_qubits < 1:
            raise ValueError("a circuit needs at least one qubit")
        if not 0 <= self.ancilla_count <= self.num_qubits:
            raise ValueError("ancilla_count must lie in [0, num_qubits]")
        for g in self.gates:
            if max(g.qubits) > self.num_qubits:
                raise IndexOutOfRange(f"gate {g} exceeds {self.num_qubits} qubits")

    @property
    def output_qubit(self) -> int:
        return self.num_qubits

    @property
    def witness_qubits(self) -> int:
        return self.num_qubits - self.ancilla_count

    def __len__(self):
        return len(self.gates)

    def prefix(self, t: int) -> "QuantumCircuit":
        return QuantumCircuit(self.num_qubits, self.gates[:t], self.ancilla_count)


@dataclass(frozen=True, eq=False)
class RealStateVector:
    num_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = int(self.num_qubits)
        if n > MAX_QUBITS:
            raise TooLarge(f"at most {MAX_QUBITS} qubits are simulated, got {n}")
        amps = np.asarray(self.amplitudes)
        if np.iscomplexobj(amps):
            if np.max(np.abs(amps.imag), initial=0.0) > 0:
                raise ValueError("amplitudes must be real")
            amps = amps.real
        amps = np.array(amps, dtype=np.float64).reshape(-1)
        if amps.shape[0] != 1 << n:
            raise DimensionMismatch(f"expected {1 << n} amplitudes, got {amps.shape[0]}")
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm {norm!r})")
        amps.flags.writeable = False
        object.__setattr__(self, "num_qubits", n)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes, normalize: bool = False) -> "RealStateVector":
        amps = np.asarray(amplitudes, dtype=np.float64).reshape(-1)
        n = amps.shape[0].bit_length() - 1
        if (1 << n) != amps.shape[0]:
            raise DimensionMismatch("length is not a power of two")
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(n, amps)

    @classmethod
    def basis(cls, bits: str) -> "RealStateVector":
        """``basis("10")`` is ``|10>``."""
        n = len(bits)
        amps = np.zeros(1 << n)
        amps[int(bits, 2) if bits else 0] = 1.0
        return cls(n, amps)

    @classmethod
    def zero(cls, num_qubits: int) -> "RealStateVector":
        return cls.basis("0" * num_qubits)

    @classmethod
    def plus(cls, num_qubits: int = 1) -> "RealStateVector":
        return cls(num_qubits, np.full(1 << num_qubits, 2 ** (-num_qubits / 2)))

    @classmethod
    def random(cls, num_qubits: int, rng=None) -> "RealStateVector":
        rng = np.random.default_rng(rng)
        return cls.from_amplitudes(rng.standard_normal(1 << num_qubits), normalize=True)

    def tensor(self, other: "RealStateVector") -> "RealStateVector":
        return RealStateVector(self.num_qubits + other.num_qubits,
                               np.kron(self.amplitudes, other.amplitudes))

    def allclose(self, other: "RealStateVector", atol: float = 1e-12) -> bool:
        return (self.num_qubits == other.num_qubits
                and np.allclose(self.amplitudes, other.amplitudes, atol=atol, rtol=0))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


# --- gate application -------------------------------------------------------

def _apply_matrix(amps: np.ndarray, n: int, matrix: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    k = len(qubits)
    psi = amps.reshape((2,) * n)
    axes = [q - 1 for q in qubits]
    op = matrix.reshape((2,) * (2 * k))
    out = np.tensordot(op, psi, axes=(list(range(k, 2 * k)), axes))
    out = np.moveaxis(out, list(range(k)), axes)
    return out.reshape(-1)


def _apply_gate_array(amps: np.ndarray, n: int, gate: Gate) -> np.ndarray:
    if max(gate.qubits) > n:
        raise IndexOutOfRange(f"gate {gate} exceeds {n} qubits")
    return _apply_matrix(amps, n, gate.matrix, gate.qubits)


def apply_gate(state: RealStateVector, gate: Gate) -> RealStateVector:
    return RealStateVector(state.num_qubits,
                           _apply_gate_array(state.amplitudes, state.num_qubits, gate))


def run_gates(amps: np.ndarray, n: int, gates: Iterable[Gate]) -> np.ndarray:
    for g in gates:
        amps = _apply_gate_array(amps, n, g)
    return amps


def run_circuit(circuit: QuantumCircuit, state: RealStateVector) -> RealStateVector:
    if state.num_qubits != circuit.num_qubits:
        raise DimensionMismatch(
            f"circuit acts on {circuit.num_qubits} qubits, state has {state.num_qubits}")
    return RealStateVector(state.num_qubits, run_gates(state.amplitudes, state.num_qubits,
                                                       circuit.gates))


def acceptance_probability(circuit: QuantumCircuit, state: RealStateVector) -> float:
    """Probability that the output qubit reads 1 after running ``circuit``."""
    out = run_circuit(circuit, state)
    return float(marginal_one(out.amplitudes, out.num_qubits, circuit.output_qubit))


def marginal_one(amps: np.ndarray, n: int, qubit: int) -> float:
    probs = (amps * amps).reshape((2,) * n)
    return float(np.take(probs, 1, axis=qubit - 1).sum())


# --- measurement ----------------------------------------------------------

def parse_basis(text: str) -> tuple:
    """``"10⊥"`` -> ``(1, 0, None)``; ``_`` is accepted for ``⊥``."""
    out = []
    for ch in text:
        if ch in "01":
            out.append(int(ch))
        elif ch in (BOTTOM, "_"):
            out.append(None)
        else:
            raise ValueError(f"bad basis character {ch!r}")
    return tuple(out)


def format_record(record: Sequence) -> str:
    return "".join(BOTTOM if v is None else str(v) for v in record)


def _hadamard(amps: np.ndarray, n: int, qubit: int) -> np.ndarray:
    v = amps.reshape(1 << (qubit - 1), 2, 1 << (n - qubit))
    a, b = v[:, 0], v[:, 1]
    return (np.stack((a + b, a - b), axis=1) * _S).reshape(-1)


def _rotate_x(amps: np.ndarray, n: int, basis: Sequence) -> np.ndarray:
    for i, b in enumerate(basis):
        if b == 1:
            amps = _hadamard(amps, n, i + 1)
    return amps


def _check_basis(basis: Sequence, n: int) -> tuple[int, ...]:
    if len(basis) != n:
        raise DimensionMismatch(f"basis has length {len(basis)}, state has {n} qubits")
    for b in basis:
        if b not in (0, 1, None):
            raise ValueError(f"basis entries must be 0, 1 or None, got {b!r}")
    return tuple(i for i, b in enumerate(basis) if b is not None)


def _rotated_probs(basis: Sequence, state: RealStateVector):
    n = state.num_qubits
    measured = _check_basis(basis, n)
    if len(measured) > MAX_MEASURED:
        raise TooLarge(f"at most {MAX_MEASURED} measured qubits, got {len(measured)}")
    amps = _rotate_x(state.amplitudes, n, basis)
    probs = (amps * amps).reshape((2,) * n)
    unmeasured = tuple(i for i in range(n) if basis[i] is None)
    if unmeasured:
        probs = probs.sum(axis=unmeasured)
    probs = np.asarray(probs).reshape(-1)
    return measured, probs / probs.sum(), amps


def outcome_probabilities(basis: Sequence, state: RealStateVector) -> tuple[tuple[int, ...], np.ndarray]:
    """Joint outcome distribution over the measured positions.

    Returns ``(positions, probs)`` where ``positions`` are 0-based measured
    qubit positions and ``probs[j]`` is the probability of the outcome whose
    bits, read big-endian over ``positions``, spell ``j``.
    """
    measured, probs, _ = _rotated_probs(basis, state)
    return measured, probs


def _record(basis: Sequence, measured: Sequence[int], j: int) -> tuple:
    rec = [None] * len(basis)
    m = len(measured)
    for pos_i, pos in enumerate(measured):
        rec[pos] = (j >> (m - 1 - pos_i)) & 1
    return tuple(rec)


def outcome_distribution(basis: Sequence, state: RealStateVector) -> dict[tuple, float]:
    """Map each measurement record to its exact Born probability."""
    measured, probs = outcome_probabilities(basis, state)
    return {_record(basis, measured, j): float(p) for j, p in enumerate(probs)}


def measure(basis: Sequence, state: RealStateVector, rng_seed=None) -> tuple[tuple, RealStateVector]:
    """Sample a measurement record and return it with the collapsed state."""
    n = state.num_qubits
    measured, probs, rotated = _rotated_probs(basis, state)
    rng = np.random.default_rng(rng_seed)
    j = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    j = min(j, probs.shape[0] - 1)
    while probs[j] == 0.0:  # guard against landing on a zero-mass bin at a cumsum edge
        j -= 1
    record = _record(basis, measured, j)

    amps = rotated.reshape((2,) * n).copy()
    for pos in measured:
        sl = [slice(None)] * n
        sl[pos] = 1 - record[pos]
        amps[tuple(sl)] = 0.0
    amps = amps.reshape(-1)
    amps /= np.linalg.norm(amps)
    amps = _rotate_x(amps, n, basis)
    return record, RealStateVector(n, amps)


def sample_records(basis: Sequence, state: RealStateVector, shots: int, rng=None) -> list[tuple]:
    """Draw ``shots`` independent records (no collapse bookkeeping)."""
    measured, probs = outcome_probabilities(basis, state)
    rng = np.random.default_rng(rng)
    js = rng.choice(probs.shape[0], size=shots, p=probs)
    return [_record(basis, measured, int(j)) for j in js]


def expectation(state: RealStateVector, hamiltonian: Hamiltonian) -> float:
    if hamiltonian.num_qubits != state.num_qubits:
        raise DimensionMismatch(
            f"Hamiltonian on {hamiltonian.num_qubits} qubits, state on {state.num_qubits}")
    return hamiltonian.expectation(state.amplitudes)


def mixture_outcome_distribution(mixture: Iterable[tuple[float, RealStateVector]],
                                 basis: Sequence) -> dict[tuple, float]:
    out: dict[tuple, float] = {}
    for p, st in mixture:
        for rec, q in outcome_distribution(basis, st).items():
            out[rec] = out.get(rec, 0.0) + p * q
    return out


# --- text formats -------------------------------------------------------------

def dumps_circuit(circuit: QuantumCircuit) -> str:
    lines = [f"qubits {circuit.num_qubits}", f"ancillas {circuit.ancilla_count}"]
    lines += [str(g) for g in circuit.gates]
    return "\n".join(lines) + "\n"


def loads_circuit(text: str, path=None) -> QuantumCircuit:
    num_qubits = None
    ancillas = 0
    gates = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, *args = line.split()
        if head.lower() in ("qubits", "ancillas"):
            if len(args) != 1 or not args[0].isdigit():
                raise ParseError(f"malformed header {line!r}", path, lineno)
            if head.lower() == "qubits":
                num_qubits = int(args[0])
            else:
                ancillas = int(args[0])
            continue
        try:
            gates.append((lineno, Gate(head, tuple(int(a) for a in args))))
        except (ValueError, UnsupportedGate, IndexOutOfRange) as exc:
            raise ParseError(str(exc), path, lineno) from None
    if num_qubits is None:
        raise ParseError("missing 'qubits' header", path)
    for lineno, g in gates:
        if max(g.qubits) > num_qubits:
            raise ParseError(f"gate {g} exceeds {num_qubits} qubits", path, lineno)
    try:
        return QuantumCircuit(num_qubits, tuple(g for _, g in gates), ancillas)
    except ValueError as exc:
        raise ParseError(str(exc), path) from None


def dumps_state(state: RealStateVector) -> str:
    header = f"# {state.num_qubits} qubits, big-endian index order (qubit 1 = most significant bit)\n"
    return header + "".join(f"{a!r}\n" for a in state.amplitudes.tolist())


def loads_state(text: str, path=None) -> RealStateVector:
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ParseError(f"not a real number: {line!r}", path, lineno) from None
    try:
        return RealStateVector.from_amplitudes(values)
    except ValueError as exc:
        raise ParseError(str(exc), path) from None
