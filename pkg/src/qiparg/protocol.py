"""The classical argument: committed history states checked by MF verdicts.

One session of the protocol, with ``V`` the verifier and ``P`` the prover:

1. ``V -> P``: public key ``pk``.
2. ``P -> V``: commitment string ``y`` to ``k`` copies of the history state.
3. ``V -> P``: challenge bit ``b``.
4. ``b = 0`` (test round): ``V`` sends ``h``; ``P`` opens every qubit in
   basis ``h``; ``V`` accepts iff the opening verifies.
5. ``b = 1`` (measurement round): ``V`` sends seeds ``s1, s2``; ``P`` opens
   in bases ``PRG(s1)[:ell]``; ``V`` accepts iff the opening verifies and at
   least ``ceil(tau k)`` copies pass the MF wrapper with tapes cut from
   ``PRG(s2)``.

PRG: AES-256 in counter mode, key ``SHA256(b"qiparg-prg" || seed)``, initial
counter block all zeros, keystream of encrypted zero bytes read most
significant bit first.  Seeds are ``ceil(lambda / 8)`` bytes with the unused
low bits of the last byte cleared.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from qiparg import commit as cm
from qiparg.errors import ProtocolViolation, RangeError
from qiparg.flatten import binomial_tail
from qiparg.mf import MFSampler, RandomnessTape, threshold_vmf, vmf, vmf_law
from qiparg.sim import RealStateVector

MAX_COPIES = 64
MAX_REPS = 16


# --- PRG ----------------------------------------------------------------------

def prg_bytes(seed: bytes, nbytes: int) -> bytes:
    key = hashlib.sha256(b"qiparg-prg" + bytes(seed)).digest()
    enc = Cipher(algorithms.AES(key), modes.CTR(bytes(16))).encryptor()
    return enc.update(bytes(nbytes)) + enc.finalize()


def prg_expand(seed: bytes, out_len: int) -> str:
    """Deterministic expansion of ``seed`` into ``out_len`` bits (as a '0'/'1' string)."""
    if out_len < 1:
        raise RangeError("out_len must be at least 1")
    data = prg_bytes(seed, (out_len + 7) // 8)
    return format(int.from_bytes(data, "big"), f"0{8 * len(data)}b")[:out_len]


def seed_bytes(lam: int) -> int:
    return (lam + 7) // 8


def draw_seed(lam: int, rng: np.random.Generator) -> bytes:
    raw = bytearray(rng.bytes(seed_bytes(lam)))
    spare = 8 * len(raw) - lam
    if spare:
        raw[-1] &= (0xFF << spare) & 0xFF
    return bytes(raw)


# --- configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class SessionConfig:
    """Protocol parameters.

    ``c`` and ``s`` are the per-copy MF-wrapper acceptance levels for YES and
    NO instances; ``p = ceil(1 / (c - s))`` and ``k = min(lambda^2 p^2, max_copies)``.
    """

    lam: int
    c: float
    s: float
    per_copy_qubits: int
    tape_len: int
    max_copies: int = MAX_COPIES

    def __post_init__(self):
        if self.lam < 1:
            raise RangeError("lambda must be positive")
        if not self.c > self.s:
            raise RangeError(f"need c > s, got c={self.c}, s={self.s}")
        if not 1 <= self.max_copies <= MAX_COPIES:
            raise RangeError(f"max_copies must lie in 1..{MAX_COPIES}")

    @classmethod
    def for_sampler(cls, lam: int, c: float, s: float, sampler: MFSampler,
                    max_copies: int = MAX_COPIES) -> "SessionConfig":
        return cls(lam, c, s, sampler.num_qubits, sampler.tape_length, max_copies)

    @property
    def p(self) -> int:
        return math.ceil(1.0 / (self.c - self.s) - 1e-9)

    @property
    def copies(self) -> int:
        return max(1, min(self.lam ** 2 * self.p ** 2, self.max_copies))

    @property
    def threshold(self) -> float:
        return (self.c + self.s) / 2

    @property
    def ell(self) -> int:
        return self.copies * self.per_copy_qubits

    @property
    def prg_output_lens(self) -> tuple[int, int]:
        return self.ell, self.copies * self.tape_len

    @property
    def commitment_lambda(self) -> int:
        return max(self.lam, cm.MIN_LAMBDA)

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "c": self.c, "s": self.s, "p": self.p,
                "copies": self.copies, "threshold": self.threshold, "ell": self.ell,
                "per_copy_qubits": self.per_copy_qubits, "tape_len": self.tape_len}


# --- provers -------------------------------------------------------------------------

@dataclass(frozen=True)
class ProverStrategy:
    """``copy_state`` is what the prover would commit per copy; ``committer`` does the rest."""

    name: str
    copy_state: RealStateVector
    committer: cm.CommitterStrategy

    def blocks(self, copies: int) -> tuple[RealStateVector, ...]:
        return (self.copy_state,) * copies

    @classmethod
    def honest(cls, history: RealStateVector, name: str = "honest") -> "ProverStrategy":
        return cls(name, history, cm.honest())

    @classmethod
    def adversary(cls, name: str, history: RealStateVector) -> "ProverStrategy":
        factories: dict[str, Callable[[], cm.CommitterStrategy]] = dict(cm.STRATEGIES)
        if name not in factories:
            raise ValueError(f"unknown adversary {name!r}; choose from {sorted(factories)}")
        return cls(name, history, factories[name]())


# --- transcripts ------------------------------------------------------------------------

PREFIX = (("V", "pk"), ("P", "y"), ("V", "challenge"))
BRANCHES = {
    0: (("V", "h"), ("P", "opening"), ("V", "verdict"), ("V", "accept")),
    1: (("V", "s1"), ("V", "s2"), ("P", "opening"), ("V", "verdict"), ("V", "accept")),
}


@dataclass(frozen=True)
class Message:
    sender: str
    round_tag: str
    payload: bytes

    def record(self) -> dict:
        return {"sender": self.sender, "round_tag": self.round_tag,
                "payload_hex": self.payload.hex()}


@dataclass
class Transcript:
    messages: list[Message] = field(default_factory=list)

    def send(self, sender: str, round_tag: str, payload: bytes) -> None:
        if not isinstance(payload, (bytes, bytearray)):
            raise ProtocolViolation(f"{round_tag} payload must be bytes")
        expected = expected_order(self.messages)
        pos = len(self.messages)
        if pos >= len(expected) or expected[pos] != (sender, round_tag):
            raise ProtocolViolation(f"unexpected message {sender}:{round_tag} at position {pos}")
        self.messages.append(Message(sender, round_tag, bytes(payload)))

    @property
    def challenge(self) -> int | None:
        return self.messages[2].payload[0] if len(self.messages) > 2 else None

    @property
    def accept(self) -> int:
        if not self.messages or self.messages[-1].round_tag != "accept":
            raise ProtocolViolation("transcript is incomplete")
        return self.messages[-1].payload[0]

    def payload(self, round_tag: str) -> bytes:
        for m in self.messages:
            if m.round_tag == round_tag:
                return m.payload
        raise KeyError(round_tag)

    def dumps(self) -> str:
        return "".join(json.dumps(m.record(), sort_keys=True) + "\n" for m in self.messages)

    @classmethod
    def loads(cls, text: str) -> "Transcript":
        t = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                t.send(rec["sender"], rec["round_tag"], bytes.fromhex(rec["payload_hex"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ProtocolViolation(f"line {lineno}: {exc}") from exc
        validate(t)
        return t


def expected_order(messages: Sequence[Message]) -> tuple[tuple[str, str], ...]:
    if len(messages) < 3:
        return PREFIX
    bit = messages[2].payload
    if len(bit) != 1 or bit[0] not in BRANCHES:
        raise ProtocolViolation("challenge must be a single 0/1 byte")
    return PREFIX + BRANCHES[bit[0]]


def validate(t: Transcript) -> None:
    """Raise ProtocolViolation unless the transcript is a complete session in order."""
    order = expected_order(t.messages)
    got = tuple((m.sender, m.round_tag) for m in t.messages)
    if got != order:
        raise ProtocolViolation(f"message order {got} does not match {order}")
    if len(t.messages[-1].payload) != 1 or t.messages[-1].payload[0] not in (0, 1):
        raise ProtocolViolation("accept must be a single 0/1 byte")


# --- sessions ----------------------------------------------------------------------------

def _split_openings(payload: bytes) -> tuple[bytes, ...]:
    if len(payload) % cm.Z_BYTES:
        return ()
    return tuple(payload[i:i + cm.Z_BYTES] for i in range(0, len(payload), cm.Z_BYTES))


def _bits(text: str) -> tuple[int, ...]:
    return tuple(1 if ch == "1" else 0 for ch in text)


def measurement_verdict(config: SessionConfig, sampler: MFSampler, bases: Sequence[int],
                        outcomes: Sequence[int], tape_bits: str) -> int:
    """Threshold over copies of the MF wrapper, copy ``i`` on its own slice of bases/outcomes/tape."""
    q, tl = config.per_copy_qubits, config.tape_len
    verdicts = []
    for i in range(config.copies):
        b = bases[i * q:(i + 1) * q]
        m = outcomes[i * q:(i + 1) * q]
        tape = RandomnessTape(tl, int(tape_bits[i * tl:(i + 1) * tl], 2))
        verdicts.append(vmf(sampler, tape, b, m))
    return threshold_vmf(config.copies, config.threshold, verdicts)


def run_session(config: SessionConfig, sampler: MFSampler, prover: ProverStrategy,
                verifier_seed=None, prover_seed=None, challenge: int | None = None,
                s1: bytes | None = None, randomness: str = "prg") -> Transcript:
    """One session; ``challenge`` and ``s1`` pin the verifier's choices when given.

    ``randomness="true"`` replaces both PRG expansions by fresh verifier coins.
    """
    if sampler.num_qubits != config.per_copy_qubits or sampler.tape_length != config.tape_len:
        raise ProtocolViolation("configuration does not match the sampler")
    if prover.copy_state.num_qubits != config.per_copy_qubits:
        raise ProtocolViolation("prover copy state does not match the configuration")
    if randomness not in ("prg", "true"):
        raise ValueError("randomness must be 'prg' or 'true'")
    v_rng = np.random.default_rng(cm.seed_sequence(verifier_seed))
    p_rng = np.random.default_rng(cm.seed_sequence(prover_seed))
    t = Transcript()
    ell = config.ell

    keys = cm.gen(config.commitment_lambda, v_rng)
    t.send("V", "pk", keys.pk)

    y, handle = prover.committer.commit_fn(keys.pk, prover.blocks(config.copies), p_rng)
    t.send("P", "y", y)

    b = int(v_rng.integers(2)) if challenge is None else int(challenge)
    if b not in (0, 1):
        raise ProtocolViolation("challenge must be 0 or 1")
    t.send("V", "challenge", bytes([b]))
    J = tuple(range(1, ell + 1))

    if b == 0:
        h = int(v_rng.integers(2))
        t.send("V", "h", bytes([h]))
        bases = (h,) * ell
        opening = prover.committer.open_fn(handle, J, bases, p_rng)
        t.send("P", "opening", b"".join(opening.z))
        z = _split_openings(t.payload("opening"))
        verdict = cm.verify(keys.sk, y, J, bases, z)
        t.send("V", "verdict", bytes([verdict]))
        t.send("V", "accept", bytes([verdict]))
        return t

    seed1 = draw_seed(config.lam, v_rng) if s1 is None else bytes(s1)
    seed2 = draw_seed(config.lam, v_rng)
    t.send("V", "s1", seed1)
    t.send("V", "s2", seed2)
    basis_len, tape_len = config.prg_output_lens
    if randomness == "prg":
        bases = _bits(prg_expand(seed1, basis_len))
        tape_bits = prg_expand(seed2, tape_len)
    else:
        bases = tuple(int(x) for x in v_rng.integers(0, 2, size=basis_len))
        tape_bits = "".join(map(str, v_rng.integers(0, 2, size=tape_len)))
    opening = prover.committer.open_fn(handle, J, bases, p_rng)
    t.send("P", "opening", b"".join(opening.z))
    z = _split_openings(t.payload("opening"))
    u = cm.verify(keys.sk, y, J, bases, z)
    accept = 0
    if u:
        outcomes = cm.out(keys.sk, y, J, bases, z)
        accept = measurement_verdict(config, sampler, bases, outcomes, tape_bits)
    t.send("V", "verdict", bytes([u]))
    t.send("V", "accept", bytes([accept]))
    return t


def run_repeated(config: SessionConfig, sampler: MFSampler, prover: ProverStrategy,
                 n_reps: int, verifier_seed=None, prover_seed=None,
                 max_reps: int = MAX_REPS) -> tuple[list[Transcript], int]:
    """Sequential sessions with fresh keys; every session runs, the verdict is their conjunction."""
    if not 1 <= n_reps <= max_reps:
        raise RangeError(f"n_reps must lie in 1..{max_reps}")
    v_seeds = cm.seed_sequence(verifier_seed).spawn(n_reps)
    p_seeds = cm.seed_sequence(prover_seed).spawn(n_reps)
    transcripts = [run_session(config, sampler, prover, vs, ps)
                   for vs, ps in zip(v_seeds, p_seeds)]
    return transcripts, int(all(t.accept for t in transcripts))


# --- analytic predictions --------------------------------------------------------------------

@dataclass(frozen=True)
class Prediction:
    per_copy: float
    measurement_round: float
    test_round: float

    @property
    def session(self) -> float:
        return 0.5 * self.test_round + 0.5 * self.measurement_round


def predict(config: SessionConfig, sampler: MFSampler, state: RealStateVector,
            test_pass: float = 1.0) -> Prediction:
    """Composed acceptance: exact commitment correctness, the MF wrapper law, a binomial threshold."""
    per_copy = vmf_law(sampler.hamiltonian, state, sampler.locality)
    t = math.ceil(config.threshold * config.copies - 1e-9)
    return Prediction(per_copy, binomial_tail(per_copy, config.copies, t), test_pass)


# --- Good-set experiment ---------------------------------------------------------------------

@dataclass(frozen=True)
class GoodSetReport:
    lam: int
    delta_hat: float
    delta_used: float
    good_threshold: float
    seeds: tuple[bytes, ...]
    rates: tuple[float, ...]
    intervals: tuple[tuple[float, float], ...]
    good: tuple[bool, ...]

    @property
    def good_fraction(self) -> float:
        return sum(self.good) / len(self.good)

    @property
    def markov_bound(self) -> float:
        return 1 - 2 / self.lam

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "delta_hat": self.delta_hat, "delta_used": self.delta_used,
                "good_threshold": self.good_threshold, "good_fraction": self.good_fraction,
                "markov_bound": self.markov_bound,
                "per_seed": [{"s1": s.hex(), "rate": r, "wilson": list(iv), "good": g}
                             for s, r, iv, g in zip(self.seeds, self.rates,
                                                    self.intervals, self.good)]}


def good_set_experiment(config: SessionConfig, sampler: MFSampler, prover: ProverStrategy,
                        n_seeds: int = 16, s2_samples: int = 50, delta_sessions: int = 200,
                        seed=None) -> GoodSetReport:
    """Conditional acceptance over ``s2`` for a grid of ``s1`` seeds.

    ``delta_hat`` is the prover's overall rejection rate.  The analysis only
    covers ``delta < 1/lambda^2``, so ``delta_used = min(delta_hat, 1/lambda^2)``
    sets the Good threshold ``1 - lambda * delta_used``.  A seed counts as Good
    when the Wilson upper limit of its rate reaches that threshold.
    """
    root = cm.seed_sequence(seed)
    d_seq, g_seq, s_seq = root.spawn(3)
    rejects = 0
    for child in d_seq.spawn(delta_sessions):
        vs, ps = child.spawn(2)
        rejects += 1 - run_session(config, sampler, prover, vs, ps).accept
    delta_hat = rejects / delta_sessions
    delta_used = min(delta_hat, 1 / config.lam ** 2)
    threshold = 1 - config.lam * delta_used

    space = 1 << config.lam
    grid_rng = np.random.default_rng(g_seq)
    if space <= n_seeds:
        values = list(range(space))
    else:
        values = sorted(int(v) for v in grid_rng.choice(space, size=n_seeds, replace=False))
    nb = seed_bytes(config.lam)
    shift = 8 * nb - config.lam
    seeds = tuple((v << shift).to_bytes(nb, "big") for v in values)

    rates, intervals, good = [], [], []
    for s1, child in zip(seeds, s_seq.spawn(len(seeds))):
        acc = 0
        for sub in child.spawn(s2_samples):
            vs, ps = sub.spawn(2)
            acc += run_session(config, sampler, prover, vs, ps, challenge=1, s1=s1).accept
        lo, hi = cm.wilson_interval(acc, s2_samples)
        rates.append(acc / s2_samples)
        intervals.append((lo, hi))
        good.append(hi >= threshold)
    return GoodSetReport(config.lam, delta_hat, delta_used, threshold, seeds,
                         tuple(rates), tuple(intervals), tuple(good))
