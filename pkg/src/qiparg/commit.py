"""Classical commitments to quantum states: a transparent reference scheme.

The committer-held residual literally stores the state (or a product of
blocks, so that many copies of a small state can be committed at once).
Opening measures the stored qubits and authenticates every outcome with a
keyed hash.

Byte layouts (all integers big-endian)::

    sk  = 32 bytes drawn from the key seed
    pk  = SHA256(b"qiparg-pk" || sk)                              32 bytes
    y   = nonce (16) || ell (4) || HMAC(pk, b"commit" || ell || nonce)[:16]
    z_j = outcome (1) || HMAC(pk, nonce || j (4) || basis (1) || outcome (1))[:16]

Tags are keyed with the public key, so they catch tampering by a committer
that reuses stale tags but are not unforgeable.  That is enough for the
named adversaries shipped here; cryptographic binding is out of reach for a
transparent scheme anyway.
"""

from __future__ import annotations

import hashlib
import hmac
import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from qiparg.errors import ExtractorUnavailable, InvalidIndex, RangeError, TooLarge
from qiparg.sim import BOTTOM, MAX_QUBITS, RealStateVector, measure, outcome_probabilities

MIN_LAMBDA = 16
SK_BYTES = 32
NONCE_BYTES = 16
TAG_BYTES = 16
Y_BYTES = NONCE_BYTES + 4 + TAG_BYTES
Z_BYTES = 1 + TAG_BYTES
# TV(Real, Ideal) <= CALIBRATED_C * sqrt(delta) for every shipped strategy
CALIBRATED_C = 1.0


@dataclass(frozen=True)
class KeyPair:
    pk: bytes
    sk: bytes


def _pk_from_sk(sk: bytes) -> bytes:
    return hashlib.sha256(b"qiparg-pk" + sk).digest()


def _mac(key: bytes, *parts: bytes) -> bytes:
    return hmac.new(key, b"".join(parts), hashlib.sha256).digest()[:TAG_BYTES]


def gen(lam: int, seed=None) -> KeyPair:
    if lam < MIN_LAMBDA:
        raise RangeError(f"security parameter must be at least {MIN_LAMBDA}, got {lam}")
    rng = np.random.default_rng(seed)
    sk = rng.bytes(SK_BYTES)
    return KeyPair(_pk_from_sk(sk), sk)


def as_blocks(sigma) -> tuple[RealStateVector, ...]:
    if isinstance(sigma, RealStateVector):
        return (sigma,)
    blocks = tuple(sigma)
    if not blocks or not all(isinstance(b, RealStateVector) for b in blocks):
        raise TypeError("expected a RealStateVector or a non-empty sequence of them")
    return blocks


class CommittedState:
    """Committer-side handle: the (product) state still to be opened.

    ``committed`` keeps the state as it was at commit time; the reference
    extractor reads it.
    """

    def __init__(self, pk: bytes, nonce: bytes, blocks: Sequence[RealStateVector],
                 committed: Sequence[RealStateVector] | None = None):
        self.pk = pk
        self.nonce = nonce
        self.blocks = list(blocks)
        self.committed = tuple(blocks) if committed is None else tuple(committed)
        self.opened: set[int] = set()
        self._starts = list(itertools.accumulate([0] + [b.num_qubits for b in self.blocks]))

    @property
    def num_qubits(self) -> int:
        return self._starts[-1]

    def locate(self, j: int) -> tuple[int, int]:
        """1-based global index -> (block, 0-based local position)."""
        blk = int(np.searchsorted(self._starts, j - 1, side="right")) - 1
        return blk, j - 1 - self._starts[blk]


@dataclass(frozen=True)
class Commitment:
    y: bytes
    residual: CommittedState = field(repr=False)


@dataclass(frozen=True)
class Opening:
    indices: tuple[int, ...]
    bases: tuple[int, ...]
    z: tuple[bytes, ...]


def _check_request(num_qubits: int, J: Sequence[int], b_J: Sequence[int]) -> tuple[tuple, tuple]:
    J, b_J = tuple(int(j) for j in J), tuple(int(b) for b in b_J)
    if len(J) != len(b_J):
        raise InvalidIndex("index and basis lists differ in length")
    if len(set(J)) != len(J):
        raise InvalidIndex("indices must be distinct")
    for j in J:
        if not 1 <= j <= num_qubits:
            raise InvalidIndex(f"index {j} outside 1..{num_qubits}")
    if any(b not in (0, 1) for b in b_J):
        raise InvalidIndex("bases must be 0 (Z) or 1 (X)")
    return J, b_J


def commit_ref(pk: bytes, sigma, seed=None) -> Commitment:
    blocks = as_blocks(sigma)
    for b in blocks:
        if b.num_qubits > MAX_QUBITS:
            raise TooLarge(f"blocks are limited to {MAX_QUBITS} qubits")
    rng = np.random.default_rng(seed)
    nonce = rng.bytes(NONCE_BYTES)
    ell = sum(b.num_qubits for b in blocks)
    ell_bytes = ell.to_bytes(4, "big")
    y = nonce + ell_bytes + _mac(pk, b"commit", ell_bytes, nonce)
    return Commitment(y, CommittedState(pk, nonce, blocks))


def tag_opening(pk: bytes, nonce: bytes, j: int, basis: int, outcome: int) -> bytes:
    """The opening string ``z_j`` for a given outcome."""
    return bytes([outcome]) + _mac(pk, nonce, j.to_bytes(4, "big"), bytes([basis]),
                                   bytes([outcome]))


def _measure_blocks(handle: CommittedState, J, b_J, rng) -> dict[int, int]:
    by_block: dict[int, list[tuple[int, int, int]]] = {}
    for j, b in zip(J, b_J):
        blk, pos = handle.locate(j)
        by_block.setdefault(blk, []).append((j, pos, b))
    outcomes = {}
    for blk in sorted(by_block):
        state = handle.blocks[blk]
        basis: list = [None] * state.num_qubits
        for _, pos, b in by_block[blk]:
            basis[pos] = b
        record, collapsed = measure(basis, state, rng)
        handle.blocks[blk] = collapsed
        for j, pos, _ in by_block[blk]:
            outcomes[j] = record[pos]
    return outcomes


def open_ref(residual: CommittedState, J: Sequence[int], b_J: Sequence[int], seed=None) -> Opening:
    """Measure the stored qubits ``J`` in bases ``b_J`` and tag each outcome."""
    J, b_J = _check_request(residual.num_qubits, J, b_J)
    again = residual.opened.intersection(J)
    if again:
        raise InvalidIndex(f"indices already opened: {sorted(again)}")
    outcomes = _measure_blocks(residual, J, b_J, np.random.default_rng(seed))
    residual.opened.update(J)
    z = tuple(tag_opening(residual.pk, residual.nonce, j, b, outcomes[j]) for j, b in zip(J, b_J))
    return Opening(J, b_J, z)


def _parse_y(pk: bytes, y: bytes) -> tuple[bytes, int] | None:
    if not isinstance(y, (bytes, bytearray)) or len(y) != Y_BYTES:
        return None
    nonce, ell_bytes, tag = y[:NONCE_BYTES], y[NONCE_BYTES:NONCE_BYTES + 4], y[NONCE_BYTES + 4:]
    if not hmac.compare_digest(tag, _mac(pk, b"commit", ell_bytes, nonce)):
        return None
    return bytes(nonce), int.from_bytes(ell_bytes, "big")


def verify(sk: bytes, y: bytes, J: Sequence[int], b_J: Sequence[int], z: Sequence[bytes]) -> int:
    """1 iff every ``z_j`` is a valid opening of index ``j`` in basis ``b_j``."""
    pk = _pk_from_sk(sk)
    parsed = _parse_y(pk, y)
    if parsed is None:
        return 0
    nonce, ell = parsed
    if len(J) != len(b_J) or len(z) != len(J):
        return 0
    for j, b, zj in zip(J, b_J, z):
        if not 1 <= j <= ell or b not in (0, 1):
            return 0
        if not isinstance(zj, (bytes, bytearray)) or len(zj) != Z_BYTES or zj[0] not in (0, 1):
            return 0
        if not hmac.compare_digest(bytes(zj), tag_opening(pk, nonce, j, b, zj[0])):
            return 0
    return 1


def out(sk: bytes, y: bytes, J: Sequence[int], b_J: Sequence[int], z: Sequence[bytes]) -> tuple[int, ...]:
    """Decoded outcome bits, in the order of ``J``."""
    return tuple(zj[0] & 1 if len(zj) else 0 for zj in z)


# --- committer strategies --------------------------------------------------------

CommitFn = Callable[[bytes, object, np.random.Generator], tuple[bytes, object]]
OpenFn = Callable[[object, Sequence[int], Sequence[int], np.random.Generator], Opening]


@dataclass(frozen=True)
class CommitterStrategy:
    name: str
    commit_fn: CommitFn
    open_fn: OpenFn


def _honest_commit(pk, sigma, rng):
    c = commit_ref(pk, sigma, rng)
    return c.y, c.residual


def _honest_open(handle, J, b_J, rng):
    return open_ref(handle, J, b_J, rng)


def honest() -> CommitterStrategy:
    return CommitterStrategy("honest", _honest_commit, _honest_open)


def honest_wrong_state(state) -> CommitterStrategy:
    """Follows the scheme faithfully but commits to ``state`` instead of the given one."""
    def commit_fn(pk, sigma, rng):
        return _honest_commit(pk, state, rng)
    return CommitterStrategy("honest-wrong-state", commit_fn, _honest_open)


def refuse_to_open() -> CommitterStrategy:
    def open_fn(handle, J, b_J, rng):
        return Opening(tuple(J), tuple(b_J), ())
    return CommitterStrategy("refuse-to-open", _honest_commit, open_fn)


def basis_dependent_flipper() -> CommitterStrategy:
    """Flips every outcome it is asked to reveal in the X basis, keeping the original tag."""
    def open_fn(handle, J, b_J, rng):
        op = open_ref(handle, J, b_J, rng)
        z = tuple(bytes([zj[0] ^ 1]) + zj[1:] if b == 1 else zj for zj, b in zip(op.z, op.bases))
        return Opening(op.indices, op.bases, z)
    return CommitterStrategy("basis-flipper", _honest_commit, open_fn)


def partially_refusing(refuse_prob: float) -> CommitterStrategy:
    """Opens honestly except that, with probability ``refuse_prob``, it sends nothing."""
    if not 0 <= refuse_prob <= 1:
        raise RangeError("refuse_prob must lie in [0, 1]")

    def open_fn(handle, J, b_J, rng):
        if rng.random() < refuse_prob:
            return Opening(tuple(J), tuple(b_J), ())
        return open_ref(handle, J, b_J, rng)
    return CommitterStrategy(f"partial-refuse-{refuse_prob:g}", _honest_commit, open_fn)


STRATEGIES = {
    "honest": honest,
    "refuse-to-open": refuse_to_open,
    "basis-flipper": basis_dependent_flipper,
}


# --- experiments -------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentOutcome:
    """``(pk, y, b, m)``, or the rejection symbol when ``m`` is None."""

    pk: bytes
    y: bytes
    b: tuple[int, ...]
    m: tuple[int, ...] | None

    @property
    def rejected(self) -> bool:
        return self.m is None

    def key(self):
        return BOTTOM if self.m is None else self.m


def seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _seeds(seed) -> list[np.random.Generator]:
    """Key, commit and opening/measurement generators.

    ``seed`` is anything ``SeedSequence`` accepts, or an explicit triple of
    seed sequences (used to pair Real and Ideal runs on the same keys).
    """
    if isinstance(seed, tuple) and len(seed) == 3:
        children = seed
    else:
        children = seed_sequence(seed).spawn(3)
    return [np.random.default_rng(s) for s in children]


def _sigma_qubits(sigma) -> int:
    return sum(b.num_qubits for b in as_blocks(sigma))


def real_experiment(strategy: CommitterStrategy, lam: int, b: Sequence[int], sigma,
                    seed=None) -> ExperimentOutcome:
    b = tuple(int(x) for x in b)
    ell = _sigma_qubits(sigma)
    if len(b) != ell:
        raise InvalidIndex(f"basis length {len(b)} does not match {ell} committed qubits")
    g_key, g_commit, g_open = _seeds(seed)
    keys = gen(lam, g_key)
    y, handle = strategy.commit_fn(keys.pk, sigma, g_commit)
    J = tuple(range(1, ell + 1))
    op = strategy.open_fn(handle, J, b, g_open)
    if not verify(keys.sk, y, J, b, op.z):
        return ExperimentOutcome(keys.pk, y, b, None)
    return ExperimentOutcome(keys.pk, y, b, out(keys.sk, y, J, b, op.z))


Extractor = Callable[[bytes, bytes, object, OpenFn], Sequence[RealStateVector]]


def reference_extractor(sk: bytes, y: bytes, handle, open_fn: OpenFn) -> tuple[RealStateVector, ...]:
    committed = getattr(handle, "committed", None)
    if committed is None:
        raise ExtractorUnavailable("handle does not expose a recorded committed state")
    return tuple(committed)


def _measure_product(blocks: Sequence[RealStateVector], b: Sequence[int], rng) -> tuple[int, ...]:
    m, pos = [], 0
    for blk in blocks:
        record, _ = measure(b[pos:pos + blk.num_qubits], blk, rng)
        m.extend(record)
        pos += blk.num_qubits
    return tuple(m)


def ideal_experiment(strategy: CommitterStrategy, extractor: Extractor | None, lam: int,
                     b: Sequence[int], sigma, seed=None) -> ExperimentOutcome:
    b = tuple(int(x) for x in b)
    g_key, g_commit, g_meas = _seeds(seed)
    keys = gen(lam, g_key)
    y, handle = strategy.commit_fn(keys.pk, sigma, g_commit)
    tau = (extractor or reference_extractor)(keys.sk, y, handle, strategy.open_fn)
    if sum(t.num_qubits for t in tau) != len(b):
        raise InvalidIndex("basis length does not match the extracted state")
    return ExperimentOutcome(keys.pk, y, b, _measure_product(tau, b, g_meas))


def product_distribution(blocks: Sequence[RealStateVector], b: Sequence[int]) -> dict[tuple, float]:
    """Exact ``σ(b)`` for a product state."""
    dist: dict[tuple, float] = {(): 1.0}
    pos = 0
    for blk in blocks:
        basis = tuple(b[pos:pos + blk.num_qubits])
        _, probs = outcome_probabilities(basis, blk)
        n = blk.num_qubits
        new = {}
        for prefix, p in dist.items():
            for j, q in enumerate(probs):
                if q:
                    bits = tuple((j >> (n - 1 - i)) & 1 for i in range(n))
                    new[prefix + bits] = p * float(q)
        dist = new
        pos += n
    return dist


def real_distribution(lam: int, b: Sequence[int], sigma, seed=None) -> dict:
    """Exact output law of the Real experiment for the honest reference committer.

    Each outcome string is weighted by its Born probability, turned into the
    opening the reference committer would send, and pushed through Ver/Out.
    """
    b = tuple(int(x) for x in b)
    blocks = as_blocks(sigma)
    g_key, g_commit, _ = _seeds(seed)
    keys = gen(lam, g_key)
    com = commit_ref(keys.pk, blocks, g_commit)
    J = tuple(range(1, len(b) + 1))
    law: dict = {}
    for outcome, p in product_distribution(blocks, b).items():
        z = tuple(tag_opening(keys.pk, com.residual.nonce, j, bj, o)
                  for j, bj, o in zip(J, b, outcome))
        key = out(keys.sk, com.y, J, b, z) if verify(keys.sk, com.y, J, b, z) else BOTTOM
        law[key] = law.get(key, 0.0) + p
    return law


def tv_distance(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    # clamp summation round-off; TV never exceeds 1
    return min(1.0, 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys))


def empirical(samples: Iterable) -> dict:
    counts = Counter(samples)
    n = sum(counts.values())
    return {k: v / n for k, v in counts.items()}


def wilson_interval(successes: int, trials: int, alpha: float = 0.05) -> tuple[float, float]:
    from statsmodels.stats.proportion import proportion_confint
    lo, hi = proportion_confint(successes, trials, alpha=alpha, method="wilson")
    return float(lo), float(hi)


@dataclass(frozen=True)
class DeltaReport:
    bases: tuple[tuple[int, ...], ...]
    rejects: tuple[int, ...]
    samples: int
    intervals: tuple[tuple[float, float], ...]

    @property
    def rates(self) -> tuple[float, ...]:
        return tuple(r / self.samples for r in self.rejects)

    @property
    def delta_hat(self) -> float:
        return max(self.rates)


def estimate_delta(strategy: CommitterStrategy, lam: int, b: Sequence[int], sigma,
                   samples: int = 10_000, seed=None) -> DeltaReport:
    """Rejection rate of Ver for each ``b'`` in ``{b, 0...0, 1...1}``; ``delta_hat`` is the max."""
    b = tuple(int(x) for x in b)
    ell = len(b)
    candidates = []
    for cand in (b, (0,) * ell, (1,) * ell):
        if cand not in candidates:
            candidates.append(cand)
    root = seed_sequence(seed)
    rejects = []
    for cand, child in zip(candidates, root.spawn(len(candidates))):
        bad = 0
        for s in child.spawn(samples):
            bad += real_experiment(strategy, lam, cand, sigma, s).rejected
        rejects.append(bad)
    return DeltaReport(tuple(candidates), tuple(rejects), samples,
                       tuple(wilson_interval(r, samples) for r in rejects))


@dataclass(frozen=True)
class BindingReport:
    strategy: str
    runs: int
    tv: float
    delta: DeltaReport
    constant: float = CALIBRATED_C

    @property
    def bound(self) -> float:
        return self.constant * math.sqrt(self.delta.delta_hat)

    @property
    def within_bound(self) -> bool:
        return self.tv <= self.bound + 1e-12 if self.delta.delta_hat > 0 else True

    def as_dict(self) -> dict:
        return {"strategy": self.strategy, "runs": self.runs, "tv": self.tv,
                "delta_hat": self.delta.delta_hat, "bound": self.bound,
                "within_bound": self.within_bound,
                "delta_rates": list(self.delta.rates),
                "delta_intervals": [list(iv) for iv in self.delta.intervals]}


def binding_experiment(strategy: CommitterStrategy, lam: int, b: Sequence[int], sigma,
                       runs: int = 100_000, delta_samples: int = 10_000, seed=None,
                       extractor: Extractor | None = None) -> BindingReport:
    """Paired Real/Ideal runs (shared key and commit seeds) and the δ estimate."""
    root = seed_sequence(seed)
    pair_seq, delta_seq = root.spawn(2)
    real, ideal = [], []
    for s in pair_seq.spawn(runs):
        key_s, commit_s, real_s, ideal_s = s.spawn(4)
        real.append(real_experiment(strategy, lam, b, sigma, (key_s, commit_s, real_s)).key())
        ideal.append(ideal_experiment(strategy, extractor, lam, b, sigma,
                                      (key_s, commit_s, ideal_s)).key())
    tv = tv_distance(empirical(real), empirical(ideal))
    delta = estimate_delta(strategy, lam, b, sigma, delta_samples, delta_seq)
    return BindingReport(strategy.name, runs, tv, delta)


# --- session log -----------------------------------------------------------------------

@dataclass
class SessionLog:
    records: list[dict] = field(default_factory=list)

    def add(self, sender: str, round_tag: str, payload: bytes) -> None:
        self.records.append({"sender": sender, "round_tag": round_tag,
                             "payload_hex": bytes(payload).hex()})

    def dumps(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    @classmethod
    def loads(cls, text: str) -> "SessionLog":
        return cls([json.loads(line) for line in text.splitlines() if line.strip()])
