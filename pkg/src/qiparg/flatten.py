"""Flattening a three-message public-coin QIP into one verifier circuit.

A :class:`PublicCoinQIP` is described by three circuits, each in its own
local qubit order:

* ``u1`` on ``(A, B, C)``: the prover's first move, applied to the aux state;
* ``u2`` on ``(R, B, C)``: the prover's answer, coherently controlled on ``R``;
* ``v2`` on ``(R, A, B, D, O)``: the verifier's decision, output on ``O``.

:func:`flatten` lays the registers out as ``A, B, C, R, D, O`` so that the
ancillas ``R, D, O`` trail the witness ``A, B, C`` and the output qubit is
last.  It puts ``R`` in uniform superposition with Hadamards and then runs
``u1``, ``u2`` and ``v2``.

Circuits touching ``R`` may only use it as a classical control: as a control
of CNOT/CCX, or in the diagonal gates Z/CZ/CCZ.  Such circuits are block
diagonal in the computational basis of ``R``, which is what lets the coin
register stand in for classically sampled coins.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from qiparg.errors import (
    DimensionMismatch,
    GapNonpositive,
    LayoutError,
    RangeError,
    TooLarge,
    TooManyCoins,
)
from qiparg.sim import (
    Gate,
    QuantumCircuit,
    RealStateVector,
    acceptance_probability,
    dumps_circuit,
    loads_circuit,
    marginal_one,
    run_gates,
)

MAX_COINS = 12
MAX_WITNESS_EIGEN = 4
MAX_REPEAT = 4
MAX_EIGEN_WITNESS_DENSE = 10

_DIAGONAL = {"Z", "CZ", "CCZ"}
_TARGET_LAST = {"CNOT", "CCX"}


def _control_only(circuit: QuantumCircuit, coin_qubits: set[int]) -> bool:
    for g in circuit.gates:
        touched = coin_qubits.intersection(g.qubits)
        if not touched or g.kind in _DIAGONAL:
            continue
        if g.kind in _TARGET_LAST and g.qubits[-1] not in touched:
            continue
        return False
    return True


@dataclass(frozen=True)
class PublicCoinQIP:
    reg_a: int
    reg_b: int
    reg_c: int
    rand_len: int
    reg_d: int
    u1: QuantumCircuit
    u2: QuantumCircuit
    v2: QuantumCircuit

    def __post_init__(self):
        sizes = (self.reg_a, self.reg_b, self.reg_c, self.rand_len, self.reg_d)
        if min(sizes) < 0:
            raise LayoutError("register sizes must be non-negative")
        if self.witness_qubits < 1:
            raise LayoutError("A, B and C together must hold at least one qubit")
        expect = {
            "u1": (self.u1, self.witness_qubits),
            "u2": (self.u2, self.rand_len + self.reg_b + self.reg_c),
            "v2": (self.v2, self.rand_len + self.reg_a + self.reg_b + self.reg_d + 1),
        }
        for name, (circ, n) in expect.items():
            if circ.num_qubits != n:
                raise LayoutError(f"{name} acts on {circ.num_qubits} qubits, layout needs {n}")
        if self.v2.ancilla_count != self.reg_d + 1:
            raise LayoutError(f"v2 must declare {self.reg_d + 1} ancillas (D and O)")
        coins = set(range(1, self.rand_len + 1))
        for name in ("u2", "v2"):
            if not _control_only(getattr(self, name), coins):
                raise LayoutError(f"{name} may use the coin register only as a control")

    @property
    def witness_qubits(self) -> int:
        return self.reg_a + self.reg_b + self.reg_c

    @property
    def total_qubits(self) -> int:
        return self.witness_qubits + self.rand_len + self.reg_d + 1

    def registers(self) -> dict[str, int]:
        return {"A": self.reg_a, "B": self.reg_b, "C": self.reg_c,
                "R": self.rand_len, "D": self.reg_d}


@dataclass(frozen=True)
class FlattenedVerifier:
    circuit: QuantumCircuit
    qip: PublicCoinQIP

    @property
    def witness_qubits(self) -> tuple[int, ...]:
        return tuple(range(1, self.qip.witness_qubits + 1))

    @property
    def ancilla_qubits(self) -> tuple[int, ...]:
        return tuple(range(self.qip.witness_qubits + 1, self.circuit.num_qubits + 1))

    @property
    def output_qubit(self) -> int:
        return self.circuit.output_qubit

    def acceptance(self, aux: RealStateVector) -> float:
        return acceptance_probability(self.circuit, pad_ancillas(aux, self.circuit))


def pad_ancillas(witness: RealStateVector, circuit: QuantumCircuit) -> RealStateVector:
    """``witness ⊗ |0...0>`` on the circuit's ancillas."""
    if witness.num_qubits != circuit.witness_qubits:
        raise DimensionMismatch(
            f"witness has {witness.num_qubits} qubits, circuit expects {circuit.witness_qubits}")
    if not circuit.ancilla_count:
        return witness
    return witness.tensor(RealStateVector.zero(circuit.ancilla_count))


def _mapping(offsets: dict[str, int], order: str, sizes: dict[str, int]) -> dict[int, int]:
    out, local = {}, 1
    for reg in order:
        for i in range(sizes[reg]):
            out[local] = offsets[reg] + i + 1
            local += 1
    return out


def _layout(qip: PublicCoinQIP, order: str) -> tuple[dict[str, int], int]:
    sizes = {**qip.registers(), "O": 1}
    offsets, pos = {}, 0
    for reg in order:
        offsets[reg] = pos
        pos += sizes[reg]
    return offsets, pos


def _remapped(qip: PublicCoinQIP, offsets: dict[str, int]) -> list[Gate]:
    sizes = {**qip.registers(), "O": 1}
    gates = []
    for circ, order in ((qip.u1, "ABC"), (qip.u2, "RBC"), (qip.v2, "RABDO")):
        mapping = _mapping(offsets, order, sizes)
        gates.extend(g.remap(mapping) for g in circ.gates)
    return gates


def flatten(qip: PublicCoinQIP) -> FlattenedVerifier:
    offsets, n = _layout(qip, "ABCRDO")
    if n != qip.total_qubits or offsets["O"] != n - 1:
        raise LayoutError("inconsistent register layout")
    coins = [Gate("H", (offsets["R"] + i + 1,)) for i in range(qip.rand_len)]
    circuit = QuantumCircuit(n, coins + _remapped(qip, offsets),
                             ancilla_count=qip.rand_len + qip.reg_d + 1)
    return FlattenedVerifier(circuit, qip)


def interactive_accept_prob(qip: PublicCoinQIP, aux: RealStateVector) -> float:
    """Average verdict probability over every coin string, simulated round by round."""
    if qip.rand_len > MAX_COINS:
        raise TooManyCoins(f"at most {MAX_COINS} coins are enumerated, got {qip.rand_len}")
    if aux.num_qubits != qip.witness_qubits:
        raise DimensionMismatch(
            f"aux has {aux.num_qubits} qubits, the QIP needs {qip.witness_qubits}")
    # round 1 on the witness alone, then a separate layout R, A, B, C, D, O
    first = run_gates(aux.amplitudes, qip.witness_qubits, qip.u1.gates)
    offsets, n = _layout(qip, "RABCDO")
    sizes = {**qip.registers(), "O": 1}
    later = []
    for circ, order in ((qip.u2, "RBC"), (qip.v2, "RABDO")):
        mapping = _mapping(offsets, order, sizes)
        later.extend(g.remap(mapping) for g in circ.gates)
    tail = np.zeros(1 << (qip.reg_d + 1))
    tail[0] = 1.0
    total = 0.0
    for r in range(1 << qip.rand_len):
        coin = np.zeros(1 << qip.rand_len)
        coin[r] = 1.0
        amps = np.kron(np.kron(coin, first), tail)
        out = run_gates(amps, n, later)
        total += marginal_one(out, n, n)
    return total / (1 << qip.rand_len)


# --- accept operator and witnesses ---------------------------------------------

def accept_operator(circuit: QuantumCircuit) -> np.ndarray:
    """``Π = <0_anc| U^T P_out U |0_anc>`` on the witness space of a verifier circuit."""
    w = circuit.witness_qubits
    if w > MAX_EIGEN_WITNESS_DENSE:
        raise TooLarge(f"accept operator limited to {MAX_EIGEN_WITNESS_DENSE} witness qubits")
    n = circuit.num_qubits
    cols = []
    for i in range(1 << w):
        amps = np.zeros(1 << n)
        amps[i << circuit.ancilla_count] = 1.0
        out = run_gates(amps, n, circuit.gates).reshape(-1, 2)
        cols.append(out[:, 1])
    v = np.stack(cols, axis=1)
    pi = v.T @ v
    return (pi + pi.T) / 2


def best_witness(circuit: QuantumCircuit) -> tuple[RealStateVector, float]:
    """Top eigenvector of the accept operator and its acceptance probability."""
    if circuit.witness_qubits > MAX_WITNESS_EIGEN:
        raise TooLarge(f"brute-force witness search limited to {MAX_WITNESS_EIGEN} qubits")
    if circuit.witness_qubits == 0:
        raise DimensionMismatch("the circuit has no witness qubits")
    vals, vecs = np.linalg.eigh(accept_operator(circuit))
    vec = vecs[:, -1]
    pivot = int(np.argmax(np.abs(vec)))
    vec = vec * np.sign(vec[pivot])
    return (RealStateVector.from_amplitudes(vec, normalize=True),
            float(min(max(vals[-1], 0.0), 1.0)))


def _sphere_points(angles: np.ndarray) -> np.ndarray:
    """Hyperspherical coordinates: rows of angles -> rows of unit vectors."""
    m, d1 = angles.shape
    out = np.ones((m, d1 + 1))
    sin_prod = np.ones(m)
    for i in range(d1):
        out[:, i] = sin_prod * np.cos(angles[:, i])
        sin_prod = sin_prod * np.sin(angles[:, i])
    out[:, d1] = sin_prod
    return out


def grid_witness_search(pi: np.ndarray, points: int = 41, rounds: int = 25) -> tuple[np.ndarray, float]:
    """Maximize ``ψ^T Π ψ`` over zooming angular grids on the unit sphere.

    Independent of any eigensolver.  Dimension up to 4 uses a full product
    grid per round; larger dimensions sweep one angle at a time, which
    suffices because the Rayleigh quotient has no spurious local maxima on
    the sphere.
    """
    d = pi.shape[0]
    if d == 1:
        return np.ones(1), float(pi[0, 0])
    if d > 4:
        return _coordinate_grid_search(pi, points, rounds)
    centre = np.full(d - 1, math.pi / 2)
    width = math.pi
    best_vec, best_val = None, -math.inf
    for _ in range(rounds):
        axes = [np.linspace(c - width, c + width, points) for c in centre]
        grid = np.stack([g.reshape(-1) for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        vecs = _sphere_points(grid)
        vals = np.einsum("ij,jk,ik->i", vecs, pi, vecs)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val, best_vec, centre = float(vals[j]), vecs[j], grid[j]
        width *= 4.0 / (points - 1)
    return best_vec, best_val


def _coordinate_grid_search(pi: np.ndarray, points: int, rounds: int,
                            sweeps_per_width: int = 6) -> tuple[np.ndarray, float]:
    d = pi.shape[0]
    angles = np.full(d - 1, math.pi / 2)
    best_vec = _sphere_points(angles[None, :])[0]
    best_val = float(best_vec @ pi @ best_vec)
    width = math.pi
    for _ in range(rounds):
        for _ in range(sweeps_per_width):
            for i in range(d - 1):
                trial = np.repeat(angles[None, :], points, axis=0)
                trial[:, i] = np.linspace(angles[i] - width, angles[i] + width, points)
                vecs = _sphere_points(trial)
                vals = np.einsum("ij,jk,ik->i", vecs, pi, vecs)
                j = int(np.argmax(vals))
                if vals[j] >= best_val:
                    best_val, best_vec, angles = float(vals[j]), vecs[j], trial[j]
        width *= 0.5
    return best_vec, best_val


# --- product construction ---------------------------------------------------------

def _multi_controlled_x(pattern: dict[int, int], target: int, work: list[int]) -> list[Gate]:
    """Flip ``target`` iff every control qubit ``q`` equals ``pattern[q]``."""
    ctrls = sorted(pattern)
    flips = [Gate("X", (q,)) for q in ctrls if pattern[q] == 0]
    if len(ctrls) == 1:
        core = [Gate("CNOT", (ctrls[0], target))]
    elif len(ctrls) == 2:
        core = [Gate("CCX", (ctrls[0], ctrls[1], target))]
    else:
        need = len(ctrls) - 2
        if len(work) < need:
            raise LayoutError("not enough work qubits for the threshold test")
        chain = [Gate("CCX", (ctrls[0], ctrls[1], work[0]))]
        for i in range(1, need):
            chain.append(Gate("CCX", (work[i - 1], ctrls[i + 1], work[i])))
        core = chain + [Gate("CCX", (work[need - 1], ctrls[-1], target))] + chain[::-1]
    return flips + core + flips


def threshold_count(k: int, threshold: float) -> int:
    return math.ceil(threshold * k - 1e-9)


def repeat_qip(qip: PublicCoinQIP, k: int, threshold: float) -> PublicCoinQIP:
    """``k``-fold parallel product with a threshold verdict, for ``k <= 4``.

    Register blowup: ``A, B, C, R`` grow ``k``-fold; ``D`` becomes ``k`` copies
    of ``D``, ``k`` per-copy verdict qubits and ``max(k-2, 0)`` work qubits.
    """
    if not 1 <= k <= MAX_REPEAT:
        raise RangeError(f"repetition count must lie in 1..{MAX_REPEAT}")
    t = threshold_count(k, threshold)
    a, b, c, r, d = qip.reg_a, qip.reg_b, qip.reg_c, qip.rand_len, qip.reg_d
    work = max(k - 2, 0)
    big_d = k * d + k + work

    def u1_map(i):  # local (A, B, C) of copy i -> (A', B', C')
        m = {}
        for j in range(a):
            m[j + 1] = i * a + j + 1
        for j in range(b):
            m[a + j + 1] = k * a + i * b + j + 1
        for j in range(c):
            m[a + b + j + 1] = k * (a + b) + i * c + j + 1
        return m

    def u2_map(i):  # (R, B, C) -> (R', B', C')
        m = {}
        for j in range(r):
            m[j + 1] = i * r + j + 1
        for j in range(b):
            m[r + j + 1] = k * r + i * b + j + 1
        for j in range(c):
            m[r + b + j + 1] = k * (r + b) + i * c + j + 1
        return m

    verdict0 = k * (r + a + b + d)

    def v2_map(i):  # (R, A, B, D, O) -> (R', A', B', D' = [D copies, verdicts, work], O')
        m = {}
        for j in range(r):
            m[j + 1] = i * r + j + 1
        base = k * r
        for j in range(a):
            m[r + j + 1] = base + i * a + j + 1
        base += k * a
        for j in range(b):
            m[r + a + j + 1] = base + i * b + j + 1
        base += k * b
        for j in range(d):
            m[r + a + b + j + 1] = base + i * d + j + 1
        m[r + a + b + d + 1] = verdict0 + i + 1
        return m

    u1 = [g.remap(u1_map(i)) for i in range(k) for g in qip.u1.gates]
    u2 = [g.remap(u2_map(i)) for i in range(k) for g in qip.u2.gates]
    v2 = [g.remap(v2_map(i)) for i in range(k) for g in qip.v2.gates]
    verdicts = [verdict0 + i + 1 for i in range(k)]
    work_qubits = [verdict0 + k + i + 1 for i in range(work)]
    out = verdict0 + k + work + 1
    for bits in itertools.product((0, 1), repeat=k):
        if sum(bits) >= t:
            v2.extend(_multi_controlled_x(dict(zip(verdicts, bits)), out, work_qubits))
    return PublicCoinQIP(
        reg_a=k * a, reg_b=k * b, reg_c=k * c, rand_len=k * r, reg_d=big_d,
        u1=QuantumCircuit(k * (a + b + c), u1),
        u2=QuantumCircuit(k * (r + b + c), u2),
        v2=QuantumCircuit(out, v2, ancilla_count=big_d + 1))


def product_aux(qip: PublicCoinQIP, aux: RealStateVector, k: int) -> RealStateVector:
    """``aux^{⊗k}`` reordered from ``(ABC)^k`` into the ``A' B' C'`` layout of :func:`repeat_qip`."""
    a, b, c = qip.reg_a, qip.reg_b, qip.reg_c
    w = a + b + c
    amps = aux.amplitudes
    for _ in range(k - 1):
        amps = np.kron(amps, aux.amplitudes)
    tensor = amps.reshape((2,) * (k * w)) if k * w else amps
    order = [i * w + j for i in range(k) for j in range(a)]
    order += [i * w + a + j for i in range(k) for j in range(b)]
    order += [i * w + a + b + j for i in range(k) for j in range(c)]
    return RealStateVector(k * w, np.transpose(tensor, order).reshape(-1))


# --- amplification and Chernoff ------------------------------------------------------

def binomial_tail(p: float, k: int, t: int) -> float:
    """``Pr[Bin(k, p) >= t]``."""
    return float(sum(math.comb(k, j) * p ** j * (1 - p) ** (k - j) for j in range(max(t, 0), k + 1)))


@dataclass(frozen=True)
class AmplificationReport:
    c: float
    s: float
    k: int
    threshold: float
    completeness_bound: float
    soundness_bound: float
    exact_yes: float
    exact_no: float

    @property
    def completeness_ok(self) -> bool:
        return self.exact_yes >= self.completeness_bound - 1e-12

    @property
    def soundness_ok(self) -> bool:
        return self.exact_no <= self.soundness_bound + 1e-12


def threshold_amplify(c: float, s: float, k: int, p_yes: float | None = None,
                      p_no: float | None = None) -> AmplificationReport:
    """Threshold-``(c+s)/2`` repetition bounds with exact binomial values.

    ``p_yes`` (default ``c``) and ``p_no`` (default ``s``) are the per-copy
    acceptance probabilities of the product witnesses being evaluated.
    """
    if not c > s:
        raise GapNonpositive(f"need c > s, got c={c}, s={s}")
    if k < 1:
        raise RangeError("k must be positive")
    p_yes = c if p_yes is None else p_yes
    p_no = s if p_no is None else p_no
    tau = (c + s) / 2
    t = threshold_count(k, tau)
    tail = math.exp(-k * (c - s) ** 2 / 2)
    return AmplificationReport(c, s, k, tau, 1 - tail, tail,
                               binomial_tail(p_yes, k, t), binomial_tail(p_no, k, t))


def chernoff(p: float, eps: float, n: int) -> float:
    """Tail bound ``e^{-2 eps^2 n}`` on a Bernoulli(p) mean deviating by ``eps``."""
    if not 0 <= p <= 1:
        raise RangeError(f"p must lie in [0, 1], got {p}")
    if not eps > 0:
        raise RangeError(f"eps must be positive, got {eps}")
    if n < 0:
        raise RangeError(f"n must be non-negative, got {n}")
    return math.exp(-2 * eps * eps * n)


def simulate_threshold(p: float, k: int, threshold: float, trials: int, seed=None) -> float:
    """Monte Carlo rate of ``>= ceil(threshold k)`` successes among ``k`` Bernoulli(p) draws."""
    rng = np.random.default_rng(seed)
    counts = (rng.random((trials, k)) < p).sum(axis=1)
    return float(np.mean(counts >= threshold_count(k, threshold)))


# --- bundle I/O ---------------------------------------------------------------------

MANIFEST = "manifest.json"


def save_qip(qip: PublicCoinQIP, directory, extra: dict | None = None) -> Path:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    for name in ("u1", "u2", "v2"):
        (path / f"{name}.circ").write_text(dumps_circuit(getattr(qip, name)))
    manifest = dict(extra or {})
    manifest["kind"] = "qip"
    manifest["registers"] = {"A": qip.reg_a, "B": qip.reg_b, "C": qip.reg_c,
                             "R": qip.rand_len, "D": qip.reg_d}
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_qip(directory) -> PublicCoinQIP:
    path = Path(directory)
    manifest = json.loads((path / MANIFEST).read_text())
    regs = manifest["registers"]
    circuits = {name: loads_circuit((path / f"{name}.circ").read_text(), path / f"{name}.circ")
                for name in ("u1", "u2", "v2")}
    return PublicCoinQIP(regs["A"], regs["B"], regs["C"], regs["R"], regs["D"],
                         circuits["u1"], circuits["u2"], circuits["v2"])
