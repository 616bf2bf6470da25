"""Instance bundles and the built-in toy instances.

An instance bundle is a directory holding ``manifest.json`` plus either
``circuit.circ`` (``"kind": "circuit"``) or the QIP files read by
:func:`qiparg.flatten.load_qip` (``"kind": "qip"``).  Manifest fields:

``kind``, ``label`` (``YES``/``NO``), ``c``, ``s`` (per-copy MF-wrapper
acceptance targets), ``witness`` (``"brute-force"`` or a state file name
relative to the bundle) and, for QIPs, ``registers``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from qiparg.clock import ClockBundle, compile_circuit, history_state
from qiparg.errors import ParseError, TooLarge
from qiparg.flatten import (
    MAX_WITNESS_EIGEN,
    PublicCoinQIP,
    best_witness,
    flatten,
    load_qip,
    save_qip,
)
from qiparg.mf import MFSampler, vmf_law, vmf_law_from_energy
from qiparg.sim import Gate, QuantumCircuit, RealStateVector, dumps_circuit, loads_circuit, loads_state

MANIFEST = "manifest.json"
REQUIRED = ("kind", "label", "c", "s", "witness")


def yes_toy_circuit() -> QuantumCircuit:
    """Copies the witness bit to the output; witness ``|1>`` is accepted with certainty."""
    return QuantumCircuit(2, (Gate("CNOT", (1, 2)), Gate("Z", (1,)), Gate("Z", (1,)),
                              Gate("X", (1,))), ancilla_count=1)


def no_toy_circuit() -> QuantumCircuit:
    """Never touches the output; every witness is rejected."""
    return QuantumCircuit(2, (Gate("X", (1,)), Gate("X", (1,)), Gate("Z", (2,)),
                              Gate("Z", (2,))), ancilla_count=1)


def toy_qip(honest: bool = True) -> PublicCoinQIP:
    """One coin, one message qubit; accepts iff the prover echoes the coin into B."""
    u1 = QuantumCircuit(1, ())
    u2 = QuantumCircuit(2, (Gate("CNOT", (1, 2)),) if honest else ())
    v2 = QuantumCircuit(3, (Gate("CNOT", (1, 2)), Gate("X", (2,)), Gate("CNOT", (2, 3))),
                        ancilla_count=1)
    return PublicCoinQIP(0, 1, 0, 1, 0, u1, u2, v2)


@dataclass(frozen=True)
class Instance:
    path: Path
    manifest: dict
    verifier: QuantumCircuit
    qip: PublicCoinQIP | None = None

    @property
    def label(self) -> str:
        return self.manifest["label"]

    @property
    def c(self) -> float:
        return float(self.manifest["c"])

    @property
    def s(self) -> float:
        return float(self.manifest["s"])

    def witness(self) -> tuple[RealStateVector, float | None]:
        src = self.manifest["witness"]
        if src == "brute-force":
            if self.verifier.witness_qubits > MAX_WITNESS_EIGEN:
                raise TooLarge("brute-force witnesses need at most "
                               f"{MAX_WITNESS_EIGEN} witness qubits")
            return best_witness(self.verifier)
        f = self.path / src
        return loads_state(f.read_text(), f), None

    def compile(self) -> ClockBundle:
        return compile_circuit(self.verifier)

    def history(self, witness: RealStateVector | None = None) -> RealStateVector:
        if witness is None:
            witness, _ = self.witness()
        padded = witness
        if self.verifier.ancilla_count:
            padded = witness.tensor(RealStateVector.zero(self.verifier.ancilla_count))
        return history_state(self.verifier, padded).state

    def sampler(self, locality: int | None = None) -> MFSampler:
        bundle = self.compile()
        return MFSampler(bundle.h_total) if locality is None else MFSampler(bundle.h_total, locality)


def load_instance(directory) -> Instance:
    path = Path(directory)
    mpath = path / MANIFEST
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, mpath, exc.lineno) from exc
    missing = [k for k in REQUIRED if k not in manifest]
    if missing:
        raise ParseError(f"manifest is missing {', '.join(missing)}", mpath)
    if manifest["label"] not in ("YES", "NO"):
        raise ParseError("label must be YES or NO", mpath)
    if manifest["kind"] == "circuit":
        cpath = path / "circuit.circ"
        return Instance(path, manifest, loads_circuit(cpath.read_text(), cpath))
    if manifest["kind"] == "qip":
        qip = load_qip(path)
        return Instance(path, manifest, flatten(qip).circuit, qip)
    raise ParseError(f"unknown instance kind {manifest['kind']!r}", mpath)


def save_circuit_instance(directory, circuit: QuantumCircuit, label: str, c: float, s: float,
                          witness: str = "brute-force") -> Path:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    (path / "circuit.circ").write_text(dumps_circuit(circuit))
    manifest = {"kind": "circuit", "label": label, "c": c, "s": s, "witness": witness}
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def save_qip_instance(directory, qip: PublicCoinQIP, label: str, c: float, s: float,
                      witness: str = "brute-force") -> Path:
    return save_qip(qip, directory, {"label": label, "c": c, "s": s, "witness": witness})


def toy_targets() -> tuple[float, float]:
    """``(c, s)`` for the toy pair: the YES honest wrapper law and the NO optimum."""
    yes = Instance(Path("."), {"witness": "brute-force"}, yes_toy_circuit())
    no = Instance(Path("."), {"witness": "brute-force"}, no_toy_circuit())
    c = vmf_law(yes.sampler().hamiltonian, yes.history())
    h_no = no.sampler().hamiltonian
    ground = float(np.linalg.eigvalsh(h_no.to_matrix())[0])
    return c, vmf_law_from_energy(ground, h_no.one_norm)


def write_toy_instances(root) -> dict[str, Path]:
    root = Path(root)
    c, s = toy_targets()
    return {
        "yes": save_circuit_instance(root / "yes", yes_toy_circuit(), "YES", c, s),
        "no": save_circuit_instance(root / "no", no_toy_circuit(), "NO", c, s),
        "qip": save_qip_instance(root / "qip", toy_qip(), "YES", 1.0, 0.5),
    }
